import numpy as np
import pytest

from cantorproj.ball_system import Ball, BallTree, hausdorff_between, standard_cantor_in_ball
from cantorproj.constructions import (
    BudgetError,
    audit_isolated,
    audit_one_point,
    avoid_isolated_projections,
    avoid_one_point_projections,
    bisection_codes,
    cluster_audit,
    densify_for_L,
    graph_surjection_cantor,
    into_Zk,
    jitter_leaves,
    projection_defect,
    regular_simplex,
    typical_cantor,
    verify_bundle,
)
from cantorproj.geom_core import GeometryError, general_position_margin, make_rng, stability_radius
from cantorproj.grassmann import Subspace, random_subspace
from cantorproj.projection_cert import verify_Zk


def cantor(N=2, depth=5, seed=0, radius=1.0, center=None):
    rng = make_rng(seed)
    c = np.zeros(N) if center is None else center
    return standard_cantor_in_ball(Ball(c, radius), depth, direction=rng.standard_normal(N))


# one-point projections

def test_one_point_contract():
    X = cantor(seed=1)
    cert = avoid_one_point_projections(X, 0.1, seed=2)
    assert cert.K.check() == []
    assert len(cert.centers) >= 3
    m = general_position_margin(cert.centers).value
    assert cert.r < stability_radius(m, 2)
    assert cert.delta > 0
    assert hausdorff_between(X, cert.K).ub < 0.1


def test_one_point_rank_audit():
    cert = avoid_one_point_projections(cantor(seed=3), 0.2, seed=4)
    rng = make_rng(5)
    for _ in range(500):
        Y = jitter_leaves(cert.K, cert.delta / 2, rng)
        rep = audit_one_point(cert, Y, rng)
        assert rep["ok"] and rep["rank"] == 2


def test_one_point_n1():
    X = cantor(N=1, seed=6)
    cert = avoid_one_point_projections(X, 0.1, seed=7)
    rng = make_rng(8)
    for _ in range(50):
        Y = jitter_leaves(cert.K, cert.delta / 2, rng)
        assert audit_one_point(cert, Y, rng)["ok"]
        assert len(np.unique(Y[:, 0])) >= 2


def test_one_point_in_place():
    A = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    X = BallTree.union([standard_cantor_in_ball(Ball(a, 1e-3), 3, seed=i) for i, a in enumerate(A)])
    cert = avoid_one_point_projections(X, 0.1)
    assert cert.in_place and cert.K is X


# isolated projected points

def test_regular_simplex():
    for N in (2, 3, 4):
        S = regular_simplex(N)
        D = np.linalg.norm(S[:, None] - S[None], axis=-1)
        off = D[~np.eye(N + 1, dtype=bool)]
        assert np.allclose(off, off[0]) and np.allclose(np.linalg.norm(S, axis=1), 1.0)
        assert np.allclose(S.sum(axis=0), 0.0)


def test_isolated_structure():
    X = cantor(seed=9)
    cert = avoid_isolated_projections(X, 0.2, 2, seed=10)
    t, m, N = cert.sub_centers.shape
    assert m == N + 1 and cert.K.n_leaves == t * (N + 1) * 2 ** 4
    assert 2 * cert.r < 1 / 2
    for cluster in cert.sub_centers:
        assert cert.rho < stability_radius(general_position_margin(cluster).value, N)
    assert cluster_audit(cert, cert.K.leaf_centers)["ok"]
    assert hausdorff_between(X, cert.K).ub < 0.2


def test_isolated_cluster_projection_diameter():
    cert = avoid_isolated_projections(cantor(N=3, seed=11), 0.3, 3, seed=12)
    rng = make_rng(13)
    anc = np.argmin(np.linalg.norm(cert.K.leaf_centers[:, None] - cert.centers[None], axis=-1), axis=1)
    for _ in range(50):
        L = random_subspace(int(rng.integers(1, 3)), 3, rng)
        P = L.coords(cert.K.leaf_centers)
        for c in np.unique(anc):
            Q = P[anc == c]
            assert np.linalg.norm(Q[:, None] - Q[None], axis=-1).max() <= 2 * cert.r < 1 / 3


def test_isolated_nearest_neighbour_audit():
    k = 2
    cert = avoid_isolated_projections(cantor(seed=14), 0.2, k, seed=15)
    rng = make_rng(16)
    for _ in range(500):
        Y = jitter_leaves(cert.K, cert.delta / 2, rng)
        assert cluster_audit(cert, Y)["ok"]
        assert audit_isolated(cert, Y, random_subspace(1, 2, rng), k)["ok"]


def test_isolated_n1_rejected():
    with pytest.raises(GeometryError):
        avoid_isolated_projections(cantor(N=1), 0.1, 1)


def test_isolated_audit_detects_isolation():
    cert = avoid_isolated_projections(cantor(seed=17), 0.2, 1, seed=18)
    Y = np.array([[0.0, 0.0], [5.0, 0.0]])
    assert not audit_isolated(cert, Y, Subspace(np.array([[1.0, 0.0]])), 1)["ok"]


# Z_k

def test_into_zk_bounds_and_pass():
    X = cantor(seed=19)
    K, cert, bounds = into_Zk(X, 0.1, 2, seed=20)
    assert cert.delta < min(bounds.values())
    assert set(bounds) == {"half_min_distance", "lambda", "eps_half", "scale"}
    assert verify_Zk(cert, K).passed
    assert hausdorff_between(X, K).ub < 0.1


def test_into_zk_random_inputs():
    rng = make_rng(21)
    for _ in range(15):
        X = cantor(depth=int(rng.integers(2, 6)), seed=rng, radius=float(rng.uniform(0.2, 1)))
        eps, k = float(rng.uniform(0.05, 0.3)), int(rng.integers(1, 4))
        K, cert, _ = into_Zk(X, eps, k, seed=rng)
        assert verify_Zk(cert, K).passed
        assert hausdorff_between(X, K).ub < eps


def test_into_zk_n1():
    X = cantor(N=1, seed=22)
    K, cert, bounds = into_Zk(X, 0.1, 3, seed=23)
    assert "lambda" not in bounds
    assert verify_Zk(cert, K).passed


def test_into_zk_too_coarse_input():
    X = standard_cantor_in_ball(Ball([0.0, 0.0], 1.0), 0)
    with pytest.raises(GeometryError, match="coarse"):
        into_Zk(X, 0.1, 1)


# composition

def test_typical_single_stage_matches_composition():
    X = cantor(seed=24)
    K, bundle = typical_cantor(X, 0.2, 1, seed=25, depth=4)
    rng = make_rng(25)
    K1, zk, _ = into_Zk(X, 0.2 / 6, 1, rng, 4)
    assert np.array_equal(bundle.stages[0]["zk"].centers, zk.centers)
    one = avoid_one_point_projections(K1, bundle.ledger[1]["budget"], rng, 4)
    iso = avoid_isolated_projections(one.K, bundle.ledger[2]["budget"], 1, rng, 4)
    assert np.array_equal(iso.K.leaf_centers, K.leaf_centers)


def test_typical_bundle_verifies():
    X = cantor(seed=26, depth=6)
    K, bundle = typical_cantor(X, 0.2, 3, seed=27, depth=6)
    rep = verify_bundle(bundle, K, X)
    assert rep["passed"], rep
    assert hausdorff_between(X, K).ub < 0.2
    assert K.check() == []
    # every later set stays inside every earlier robustness radius
    for entry in bundle.ledger[:-1]:
        assert all(s > 0 for s in entry["slack"].values())


@pytest.mark.slow
def test_typical_without_reuse_reports_honestly():
    X = cantor(seed=28, depth=6)
    try:
        K, bundle = typical_cantor(X, 0.2, 2, seed=29, depth=6, reuse=False)
    except BudgetError as e:
        assert e.ledger
    else:
        assert verify_bundle(bundle, K, X)["passed"]


def test_typical_n1():
    X = cantor(N=1, seed=30, depth=5)
    K, bundle = typical_cantor(X, 0.2, 2, seed=31, depth=5)
    assert all(s["isolated"] is None for s in bundle.stages)
    assert verify_bundle(bundle, K, X)["passed"]


def test_typical_deterministic():
    X = cantor(seed=32, depth=4)
    K1, b1 = typical_cantor(X, 0.2, 2, seed=33)
    K2, b2 = typical_cantor(X, 0.2, 2, seed=33)
    assert K1.to_json() == K2.to_json()
    assert b1.to_dict() == b2.to_dict()


# graph surjection and densification

def test_bisection_codes_prefix_free():
    Y = np.random.default_rng(0).random((37, 2))
    w = bisection_codes(Y)
    assert len(set(w)) == 37
    assert sum(2.0 ** -len(x) for x in w) == pytest.approx(1.0)
    s = sorted(w)
    assert all(not b.startswith(a) for a, b in zip(s, s[1:]))


def test_surjection_single_point():
    L = Subspace(np.array([[1.0, 0.0, 0.0]]))
    X = graph_surjection_cantor([[0.5]], L, depth=4)
    P = L.coords(X.leaf_centers)
    assert np.all(np.abs(P - 0.5) <= X.leaf_radius)
    assert X.check() == []


def test_surjection_segment_net():
    L = random_subspace(1, 2, 3)
    depth = 5
    Y = np.linspace(0, 1, 2 ** depth)[:, None] @ L.frame
    X = graph_surjection_cantor(Y, L, depth)
    assert projection_defect(X, L, Y) <= X.leaf_radius


def test_surjection_random_net():
    L = random_subspace(2, 3, 4)
    Y = np.random.default_rng(5).random((37, 2))
    X = graph_surjection_cantor(Y, L, 4)
    proj = L.coords(X.leaf_centers)
    d = np.linalg.norm(Y[:, None] - proj[None], axis=-1).min(axis=1)
    assert np.all(d <= X.leaf_radius)


def test_surjection_bad_subspace():
    with pytest.raises(GeometryError):
        graph_surjection_cantor([[0.0, 0.0]], Subspace.full(2))
    with pytest.raises(GeometryError, match="lie in L"):
        graph_surjection_cantor([[0.0, 1.0]], Subspace(np.array([[1.0, 0.0]])))


def test_densify_full_space():
    X = cantor(seed=6)
    K = densify_for_L(X, 0.1, Subspace.full(2), depth=3, seed=7)
    assert np.allclose(Subspace.full(2).coords(K.leaf_centers), K.leaf_centers)
    assert hausdorff_between(X, K).ub < 0.1


def test_densify_linear_pattern():
    X = cantor(N=3, seed=8)
    L = random_subspace(2, 3, 9)
    K = densify_for_L(X, 0.2, L, depth=3, seed=10)
    roots = K.centers[0]
    s = K.radii[0][0]
    anc = K.ancestors(0)
    P = L.coords(K.leaf_centers)
    for i, c in enumerate(L.coords(roots)):
        Q = P[anc == i] - c
        u = Q[-1] / np.linalg.norm(Q[-1])
        t = np.sort(Q @ u)
        expected = np.sort([a * s / 2 + b * s / 8 + e * s / 32 for a in (-1, 1) for b in (-1, 1) for e in (-1, 1)])
        assert np.allclose(np.abs(t), np.abs(expected)) or np.allclose(t, expected)
        assert np.allclose(Q - np.outer(Q @ u, u), 0, atol=1e-12)
    # projected pieces are disjoint
    D = np.linalg.norm(L.coords(roots)[:, None] - L.coords(roots)[None], axis=-1)
    np.fill_diagonal(D, np.inf)
    assert D.min() > 2 * s


def test_densify_random_inputs():
    rng = make_rng(11)
    for _ in range(10):
        N = int(rng.integers(1, 4))
        X = cantor(N=N, seed=rng, depth=4)
        L = random_subspace(int(rng.integers(1, N + 1)), N, rng)
        eps = float(rng.uniform(0.05, 0.3))
        assert hausdorff_between(X, densify_for_L(X, eps, L, seed=rng)).ub < eps
