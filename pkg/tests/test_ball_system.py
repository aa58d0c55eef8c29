import numpy as np
import pytest
from scipy.spatial.distance import cdist

from cantorproj.ball_system import (
    Ball,
    BallTree,
    BallTreeError,
    CodedEmbedding,
    ReglueError,
    balanced_code,
    hausdorff_between,
    merge_cylinders,
    reglue_embedding,
    rho,
    standard_cantor_in_ball,
)
from cantorproj.geom_core import hausdorff_distance, make_rng


def test_depth_zero_is_the_ball():
    T = standard_cantor_in_ball(Ball([1.0, 2.0], 0.5), 0)
    assert T.n_leaves == 1 and T.leaf_radius == 0.5
    assert np.allclose(T.leaf_centers, [[1.0, 2.0]])


def test_depth_d_leaves():
    B = Ball(np.zeros(3), 2.0)
    T = standard_cantor_in_ball(B, 5, seed=1)
    assert T.n_leaves == 32
    assert np.allclose(T.leaf_radii, 2.0 / 4**5)
    D = cdist(T.leaf_centers, T.leaf_centers)
    np.fill_diagonal(D, np.inf)
    assert np.all(D > 2 * T.leaf_radii.max())
    assert hausdorff_distance(T.leaf_centers, [B.center]) <= B.radius
    assert T.check() == []


def test_checker_catches_violations():
    c = [np.zeros((1, 2)), np.array([[-0.5, 0], [0.5, 0]])]
    with pytest.raises(BallTreeError, match="inside"):
        BallTree(c, [[1.0], [0.5, 0.5]], [[0, 0]])
    with pytest.raises(BallTreeError, match="intersect"):
        BallTree([np.zeros((1, 2)), np.array([[-0.1, 0], [0.1, 0]])], [[1.0], [0.3, 0.3]], [[0, 0]])
    with pytest.raises(BallTreeError, match="two children"):
        BallTree([np.zeros((1, 2)), np.array([[0.1, 0]])], [[1.0], [0.3]], [[0]])
    with pytest.raises(BallTreeError, match="half"):
        BallTree([np.zeros((1, 1)), np.array([[-0.3], [0.3]])], [[1.0], [0.6, 0.01]], [[0, 0]])


def test_json_roundtrip():
    T = standard_cantor_in_ball(Ball([0.0, 0.0], 1.0), 3, seed=2)
    U = BallTree.from_json(T.to_json())
    assert np.array_equal(U.leaf_centers, T.leaf_centers)
    assert [p.tolist() for p in U.parents] == [p.tolist() for p in T.parents]


def test_hausdorff_between_self():
    T = standard_cantor_in_ball(Ball([0.0, 0.0], 1.0), 4, seed=3)
    iv = hausdorff_between(T, T)
    assert iv.contains(0.0) and iv.width <= 4 * T.leaf_radius


def test_hausdorff_between_translate():
    T = standard_cantor_in_ball(Ball([0.0, 0.0], 1.0), 5, seed=4)
    v = np.array([3.0, 4.0])
    S = BallTree([c + v for c in T.centers], T.radii, T.parents)
    iv = hausdorff_between(T, S)
    assert iv.contains(5.0)
    assert iv.width <= 2 * (T.leaf_radius + S.leaf_radius) + 1e-15
    assert iv.lb <= hausdorff_distance(T.leaf_centers, S.leaf_centers) <= iv.ub


def test_union_requires_disjoint_roots():
    a = standard_cantor_in_ball(Ball([0.0, 0.0], 1.0), 2, seed=0)
    b = standard_cantor_in_ball(Ball([1.5, 0.0], 1.0), 2, seed=0)
    with pytest.raises(BallTreeError):
        BallTree.union([a, b])


# codes

@pytest.mark.parametrize("m", [1, 2, 3, 5, 8, 13])
def test_balanced_code_complete(m):
    words = balanced_code(m)
    assert len(words) == m
    assert len(set(words)) == m
    assert max(map(len, words)) - min(map(len, words)) <= 1
    assert sum(2.0 ** -len(w) for w in words) == 1.0


def test_merge_cylinders():
    assert merge_cylinders(["00", "01", "1"]) == [""]
    assert merge_cylinders(["000", "001", "01"]) == ["0"]
    assert merge_cylinders(["00", "10"]) == ["00", "10"]


def test_from_tree_is_valid():
    T = standard_cantor_in_ball(Ball([0.0, 0.0], 1.0), 4, seed=5)
    f = CodedEmbedding.from_tree(T)
    assert f.check() == []
    assert all(len(w) == 4 for w in f.words)


# regluing

def _random_tree(rng, depth=6, N=2):
    return standard_cantor_in_ball(Ball(rng.uniform(-1, 1, N), 1.0), depth, direction=rng.standard_normal(N))


def cluster_oracle(f, g, eps):
    """Brute-force check: every word of g extends or is extended by a word of f whose ball is within eps."""
    errs = []
    for w, j in g.code.items():
        near = [i for v, i in f.code.items() if v.startswith(w) or w.startswith(v)]
        if not near:
            errs.append(f"word {w} has no related word in f")
            continue
        d = max(np.linalg.norm(f.tree.leaf_centers[i] - g.tree.leaf_centers[j]) + f.tree.leaf_radii[i]
                + g.tree.leaf_radii[j] for i in near)
        if not d < eps:
            errs.append(f"word {w} moves by {d}")
    if sorted(g.code.values()) != list(range(g.tree.n_leaves)):
        errs.append("image differs from target leaves")
    return errs


def test_reglue_identity():
    T = _random_tree(make_rng(0))
    f = CodedEmbedding.from_tree(T)
    g = reglue_embedding(f, T, 0.1)
    assert g.code == f.code and rho(f, g, with_radii=False) == 0.0


def test_reglue_jittered_target():
    rng = make_rng(1)
    T = _random_tree(rng)
    f = CodedEmbedding.from_tree(T)
    eps = 0.2
    # the failing call on a far target reports delta for this eps
    far = BallTree([c + 10.0 for c in T.centers], T.radii, T.parents)
    with pytest.raises(ReglueError) as e:
        reglue_embedding(f, far, eps)
    delta = e.value.delta
    assert delta is not None and delta > 0
    jit = rng.standard_normal(T.leaf_centers.shape)
    jit *= (0.49 * delta - 2 * T.leaf_radius) / np.linalg.norm(jit, axis=1, keepdims=True)
    centers = list(T.centers[:-1]) + [T.leaf_centers + jit]
    K = BallTree(centers, T.radii, T.parents, check=False)
    g = reglue_embedding(f, K, eps)
    assert g.check() == []
    assert rho(f, g) < eps
    assert cluster_oracle(f, g, eps) == []


def test_reglue_fresh_pieces_per_cluster():
    rng = make_rng(2)
    done = 0
    for _ in range(20):
        T = _random_tree(rng)
        f = CodedEmbedding.from_tree(T)
        eps = float(rng.uniform(0.2, 0.6))
        far = BallTree([c + 10.0 for c in T.centers], T.radii, T.parents)
        with pytest.raises(ReglueError) as e:
            reglue_embedding(f, far, eps)
        delta, level = e.value.delta, None
        # a fresh depth-3 Cantor piece at the centroid of each cluster
        anc = None
        for j in range(T.depth + 1):
            a = T.ancestors(j)
            diam = max((cdist(T.leaf_centers[a == u], T.leaf_centers[a == u]).max() + 2 * T.leaf_radius)
                       for u in np.unique(a))
            if diam < eps / 3:
                level, anc = j, a
                break
        pieces = []
        for u in np.unique(anc):
            c = T.leaf_centers[anc == u].mean(axis=0)
            pieces.append(standard_cantor_in_ball(Ball(c, 0.2 * delta), 3, direction=rng.standard_normal(2)))
        K = BallTree.union(pieces)
        if not hausdorff_between(T, K).ub < delta:
            continue
        g = reglue_embedding(f, K, eps)
        assert g.meta["level"] == level
        assert rho(f, g) < eps
        assert cluster_oracle(f, g, eps) == []
        done += 1
    assert done >= 10


def test_reglue_precondition_error_carries_delta():
    T = _random_tree(make_rng(3))
    f = CodedEmbedding.from_tree(T)
    far = BallTree([c + 1.0 for c in T.centers], T.radii, T.parents)
    with pytest.raises(ReglueError, match="delta"):
        reglue_embedding(f, far, 0.1)
