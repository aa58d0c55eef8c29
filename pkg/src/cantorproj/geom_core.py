"""Finite point sets in R^N: Hausdorff distance, general-position margins, nets.

Point sets are plain ``(n, N)`` float arrays throughout the package.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

# margins below this fraction of the set diameter are treated as degenerate
DEGENERACY_RTOL = 1e-12


class GeometryError(ValueError):
    pass


def as_points(P, dim=None) -> np.ndarray:
    """Coerce to a nonempty finite ``(n, N)`` array."""
    arr = np.asarray(P, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None] if dim == 1 else arr[None, :]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise GeometryError("point set must be a nonempty (n, N) array")
    if dim is not None and arr.shape[1] != dim:
        raise GeometryError(f"expected ambient dimension {dim}, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("point coordinates must be finite")
    return arr


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF))


def diameter(P) -> float:
    P = as_points(P)
    if len(P) < 2:
        return 0.0
    return float(cdist(P, P).max())


def min_pairwise_distance(P) -> float:
    P = as_points(P)
    if len(P) < 2:
        return np.inf
    D = cdist(P, P)
    np.fill_diagonal(D, np.inf)
    return float(D.min())


def directed_hausdorff(P, Q) -> float:
    """max over p in P of the distance from p to Q."""
    P, Q = as_points(P), as_points(Q)
    out = 0.0
    # chunk so that large leaf sets stay within memory
    for start in range(0, len(P), 4096):
        D = cdist(P[start:start + 4096], Q)
        out = max(out, float(D.min(axis=1).max()))
    return out


def hausdorff_distance(P, Q) -> float:
    P, Q = as_points(P), as_points(Q)
    if P.shape[1] != Q.shape[1]:
        raise GeometryError("point sets live in different ambient dimensions")
    return max(directed_hausdorff(P, Q), directed_hausdorff(Q, P))


@dataclass(frozen=True)
class Margin:
    """General-position margin with the subset that attains it."""

    value: float
    subset: tuple = field(default=())

    def __float__(self):
        return self.value

    def __bool__(self):
        return self.value > 0

    def to_dict(self):
        return {"value": self.value, "subset": list(self.subset)}


def _subset_min_sv(A, idx):
    # idx: (B, k+1) index array; rows are xi_j - xi_0
    M = A[idx[:, 1:]] - A[idx[:, :1]]
    sv = np.linalg.svd(M, compute_uv=False)
    return sv[:, -1]


def general_position_margin(A) -> Margin:
    """Smallest singular value of ``xi_j - xi_0`` over all subsystems of at most N+1 points.

    The value is zero exactly when some subsystem is affinely dependent
    (up to a relative tolerance of ``DEGENERACY_RTOL`` times the diameter).
    """
    A = as_points(A)
    n, N = A.shape
    if n == 1:
        return Margin(np.inf, (0,))
    best, best_subset = np.inf, ()
    for size in range(2, min(n, N + 1) + 1):
        combos = itertools.combinations(range(n), size)
        while True:
            chunk = np.array(list(itertools.islice(combos, 50_000)), dtype=np.intp)
            if chunk.size == 0:
                break
            sv = _subset_min_sv(A, chunk)
            j = int(np.argmin(sv))
            if sv[j] < best:
                best, best_subset = float(sv[j]), tuple(int(i) for i in chunk[j])
    if best <= DEGENERACY_RTOL * diameter(A):
        best = 0.0
    return Margin(best, best_subset)


def stability_radius(margin, N: int) -> float:
    """Displacement below which every subsystem stays in general position.

    Moving each point by less than ``eta`` perturbs each difference matrix by
    less than ``2 * eta * sqrt(N)`` in spectral norm, so ``eta = margin / (2 sqrt N)``.
    """
    m = float(margin)
    if not np.isfinite(m):
        return np.inf
    return m / (2.0 * np.sqrt(N))


def sample_in_ball(rng, n, N, radius) -> np.ndarray:
    """``n`` points uniform in the open ball of the given radius about the origin."""
    g = rng.standard_normal((n, N))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    u = rng.random(n) ** (1.0 / N)
    return g * (radius * u)[:, None]


def perturb_to_general_position(A, bound: float, seed=0, max_retries: int = 64) -> np.ndarray:
    if not bound > 0:
        raise GeometryError("perturbation bound must be positive")
    A = as_points(A)
    if general_position_margin(A).value > 0:
        return A.copy()
    rng = make_rng(seed)
    for _ in range(max_retries):
        B = A + sample_in_ball(rng, len(A), A.shape[1], bound)
        if general_position_margin(B).value > 0:
            return B
    raise GeometryError(f"no general-position displacement found in {max_retries} draws")


def greedy_net(K, radius: float) -> np.ndarray:
    """Indices of a farthest-point net whose covering radius is < ``radius``."""
    K = as_points(K)
    chosen = [0]
    dist = np.linalg.norm(K - K[0], axis=1)
    while dist.max() >= radius:
        j = int(np.argmax(dist))
        chosen.append(j)
        dist = np.minimum(dist, np.linalg.norm(K - K[j], axis=1))
    return np.array(chosen, dtype=np.intp)


def finite_general_position_approx(K, eps: float, seed=0, tries: int = 8) -> np.ndarray:
    """A finite set in general position with at least N+1 points and ``d_H(K, A) < eps``.

    The set is a greedy ``eps/2``-net of ``K``, padded by repetition to N+1
    points, then displaced by less than ``eps/4``; among ``tries`` displacements
    the one with the largest margin is kept.
    """
    if not eps > 0:
        raise GeometryError("eps must be positive")
    K = as_points(K)
    N = K.shape[1]
    F = K[greedy_net(K, eps / 2)]
    if len(F) < N + 1:
        F = F[np.arange(N + 1) % len(F)]
    rng = make_rng(seed)
    best, best_margin = None, 0.0
    for _ in range(max(1, tries)):
        A = F + sample_in_ball(rng, len(F), N, eps / 4)
        m = general_position_margin(A).value
        if m > best_margin:
            best, best_margin = A, m
    if best is None:
        best = perturb_to_general_position(F, eps / 4, rng)
    return best


def points_to_json(P) -> str:
    return json.dumps(as_points(P).tolist())


def points_from_json(text: str) -> np.ndarray:
    return as_points(json.loads(text))
