import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cantorproj.geom_core import (
    GeometryError,
    finite_general_position_approx,
    general_position_margin,
    hausdorff_distance,
    make_rng,
    perturb_to_general_position,
    stability_radius,
)


def hausdorff_oracle(P, Q):
    # plain double loop
    def directed(X, Y):
        return max(min(np.sqrt(sum((a - b) ** 2 for a, b in zip(x, y))) for y in Y) for x in X)
    return max(directed(P, Q), directed(Q, P))


def margin_oracle(A):
    # independent enumeration, one SVD per subset
    n, N = A.shape
    best = np.inf
    for size in range(2, min(n, N + 1) + 1):
        for S in itertools.combinations(range(n), size):
            M = np.array([A[j] - A[S[0]] for j in S[1:]])
            best = min(best, np.linalg.svd(M, compute_uv=False)[-1])
    return best


# hausdorff_distance

def test_hausdorff_identity():
    assert hausdorff_distance([[0.0, 0.0]], [[0.0, 0.0]]) == 0.0


def test_hausdorff_singletons():
    assert hausdorff_distance(np.array([[0.0]]), np.array([[3.0]])) == 3.0


def test_hausdorff_translate_matches_oracle():
    rng = np.random.default_rng(0)
    P = rng.random((50, 3))
    v = np.array([0.3, -0.2, 0.1])
    d = hausdorff_distance(P, P + v)
    assert d == pytest.approx(hausdorff_oracle(P.tolist(), (P + v).tolist()), abs=1e-12)
    assert d <= np.linalg.norm(v) + 1e-12


def test_hausdorff_empty_rejected():
    with pytest.raises(GeometryError):
        hausdorff_distance(np.zeros((0, 2)), [[0.0, 0.0]])


def test_hausdorff_dimension_mismatch():
    with pytest.raises(GeometryError):
        hausdorff_distance([[0.0, 0.0]], [[0.0, 0.0, 0.0]])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hausdorff_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    P, Q, R = (rng.random((rng.integers(1, 12), 2)) for _ in range(3))
    assert hausdorff_distance(P, Q) == hausdorff_distance(Q, P)
    assert hausdorff_distance(P, R) <= hausdorff_distance(P, Q) + hausdorff_distance(Q, R) + 1e-12


# general_position_margin

def test_margin_collinear_is_zero():
    assert general_position_margin([[0, 0], [1, 1], [2, 2]]).value == 0.0


def test_margin_repeated_point_is_zero():
    assert general_position_margin([[0, 0], [1, 0], [1, 0]]).value == 0.0


def test_margin_triangle_matches_svd_oracle():
    A = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    m = general_position_margin(A)
    assert m.value == pytest.approx(margin_oracle(A), rel=1e-12)
    assert m.value == pytest.approx(1.0)


def test_margin_random_against_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        N = int(rng.integers(1, 4))
        A = rng.random((int(rng.integers(2, 8)), N))
        assert general_position_margin(A).value == pytest.approx(margin_oracle(A), rel=1e-10)


def test_margin_scale_equivariant():
    A = np.random.default_rng(2).random((6, 3))
    assert general_position_margin(2.5 * A).value == pytest.approx(2.5 * general_position_margin(A).value)


def test_margin_single_point():
    assert general_position_margin([[1.0, 2.0]]).value == np.inf


# perturbation

def test_perturb_general_input_unchanged():
    A = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert np.array_equal(perturb_to_general_position(A, 0.5, seed=3), A)


def test_perturb_collinear():
    A = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    B = perturb_to_general_position(A, 1e-3, seed=4)
    assert general_position_margin(B).value > 0
    assert np.all(np.linalg.norm(B - A, axis=1) < 1e-3)


def test_perturb_grid():
    g = np.stack(np.meshgrid(np.arange(5.0), np.arange(5.0)), -1).reshape(-1, 2)
    B = perturb_to_general_position(g, 1e-2, seed=5)
    assert margin_oracle(B) > 0
    assert np.all(np.linalg.norm(B - g, axis=1) < 1e-2)


def test_perturb_deterministic():
    A = np.zeros((4, 2))
    assert np.array_equal(perturb_to_general_position(A, 0.1, 9), perturb_to_general_position(A, 0.1, 9))


def test_stability_radius_jitter():
    # moving each point by less than margin/2 keeps general position (random jitter)
    rng = np.random.default_rng(6)
    for _ in range(200):
        N = int(rng.integers(1, 4))
        A = perturb_to_general_position(rng.random((int(rng.integers(2, 7)), N)), 0.1, rng)
        m = general_position_margin(A).value
        dirs = rng.standard_normal(A.shape)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        B = A + dirs * (0.4999 * m * rng.random((len(A), 1)))
        assert general_position_margin(B).value > 0


def test_stability_radius_is_provable_bound():
    # worst-case spectral perturbation of each difference matrix stays below the margin
    rng = np.random.default_rng(7)
    A = rng.random((5, 3))
    m = general_position_margin(A).value
    eta = stability_radius(m, 3)
    for _ in range(200):
        B = A + eta * 0.999 * np.sign(rng.standard_normal(A.shape)) / np.sqrt(3)
        assert general_position_margin(B).value > 0


# finite approximation

def test_approx_single_point():
    A = finite_general_position_approx([[0.0, 0.0]], 0.1, seed=1)
    assert len(A) >= 3
    assert hausdorff_distance(A, [[0.0, 0.0]]) < 0.1
    assert general_position_margin(A).value > 0


def test_approx_circle():
    t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    K = np.c_[np.cos(t), np.sin(t)]
    A = finite_general_position_approx(K, 0.05, seed=2)
    assert hausdorff_distance(K, A) < 0.05
    assert general_position_margin(A).value > 0


def test_approx_postconditions_many():
    rng = make_rng(8)
    for _ in range(1000):
        N = int(rng.integers(1, 4))
        K = rng.random((int(rng.integers(1, 15)), N))
        eps = float(rng.uniform(0.05, 1.0))
        A = finite_general_position_approx(K, eps, rng, tries=2)
        assert len(A) >= N + 1
        assert hausdorff_distance(K, A) < eps
        assert general_position_margin(A).value > 0
