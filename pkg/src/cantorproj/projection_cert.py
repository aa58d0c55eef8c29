"""Components of projected ball unions, chains, the lambda functional and Z_k checks.

``lambda(A)`` is the smallest total length of a path through N+1 distinct
points of ``A`` after projecting onto a subspace of dimension strictly between
0 and N.  Projecting further onto a line inside a subspace can only shorten
every distance, so the infimum is always attained among lines; the certified
search therefore runs over lines only.
"""

from __future__ import annotations

import heapq
import itertools
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from . import grassmann as gr
from .ball_system import BallTree
from .geom_core import GeometryError, as_points, diameter, general_position_margin, make_rng


class ChainError(GeometryError):
    pass


class LambdaError(GeometryError):
    pass


class ZkError(GeometryError):
    pass


# ---------------------------------------------------------------------------
# components

class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: int, y: int) -> None:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return
        if self.rank[rx] < self.rank[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        if self.rank[rx] == self.rank[ry]:
            self.rank[rx] += 1

    def groups(self) -> list:
        out = {}
        for i in range(len(self.parent)):
            out.setdefault(self.find(i), []).append(i)
        return sorted(out.values())


@dataclass
class ComponentPartition:
    centers: np.ndarray
    delta: float
    blocks: list
    diameters: list

    @property
    def max_diameter(self) -> float:
        return max(self.diameters)


def touching_pairs(centers, delta):
    """Index pairs whose closed delta-balls meet (center distance <= 2 delta)."""
    C = np.asarray(centers, dtype=float)
    n = len(C)
    if C.shape[1] == 0:
        return [(i, j) for i in range(n) for j in range(i + 1, n)]
    cand = cKDTree(C).query_pairs(2 * delta * (1 + 1e-9) + 1e-300, output_type="ndarray")
    if len(cand) == 0:
        return []
    d = np.linalg.norm(C[cand[:, 0]] - C[cand[:, 1]], axis=1)
    return [tuple(p) for p in cand[d <= 2 * delta].tolist()]


def components_of_ball_union(centers, delta: float) -> ComponentPartition:
    if not delta > 0:
        raise GeometryError("delta must be positive")
    C = np.asarray(centers, dtype=float)
    if C.ndim != 2 or len(C) == 0:
        raise GeometryError("centers must be a nonempty (n, l) array")
    uf = UnionFind(len(C))
    for i, j in touching_pairs(C, delta):
        uf.union(i, j)
    blocks = uf.groups()
    diams = []
    for b in blocks:
        spread = cdist(C[b], C[b]).max() if len(b) > 1 and C.shape[1] else 0.0
        diams.append(float(spread) + 2 * delta)
    return ComponentPartition(C, delta, blocks, diams)


def extract_chain(centers, delta: float, N: int) -> list:
    """Indices ``i_1..i_s`` (s >= N+1) of distinct centers with consecutive gaps <= 2 delta.

    Starts at one end of a diametral pair and descends the breadth-first
    layers grown from the other end, so the chain is a shortest path.
    """
    C = as_points(centers)
    if not delta > 0:
        raise ChainError("delta must be positive")
    n = len(C)
    nbrs = [[] for _ in range(n)]
    for i, j in touching_pairs(C, delta):
        nbrs[i].append(j)
        nbrs[j].append(i)
    D = cdist(C, C)
    start, alpha = np.unravel_index(int(np.argmax(D)), D.shape)
    if not D[start, alpha] + 2 * delta >= 2 * delta * (N + 1):
        raise ChainError("diameter of the ball union is below 2*delta*(N+1)")
    level = [-1] * n
    level[alpha] = 0
    queue = deque([alpha])
    while queue:
        i = queue.popleft()
        for j in nbrs[i]:
            if level[j] < 0:
                level[j] = level[i] + 1
                queue.append(j)
    if min(level) < 0:
        raise ChainError("ball union is not connected")
    chain = [int(start)]
    while chain[-1] != alpha:
        cur = chain[-1]
        chain.append(min(j for j in nbrs[cur] if level[j] == level[cur] - 1))
    return chain


# ---------------------------------------------------------------------------
# lambda

def path_tuples(n: int, m: int) -> np.ndarray:
    """Ordered m-tuples of distinct indices, one of each reversal pair."""
    out = [p for p in itertools.permutations(range(n), m) if p[0] < p[-1]]
    return np.array(out, dtype=np.int64).reshape(-1, m)


def _check_lambda_input(A):
    A = as_points(A)
    n, N = A.shape
    if N == 1:
        raise LambdaError("lambda undefined: no admissible subspaces when N = 1")
    if n < N + 1:
        raise LambdaError(f"lambda needs at least N+1 = {N + 1} points, got {n}")
    return A, n, N


def _cube_grid(step):
    g = np.arange(-1.0, 1.0 + 1e-12, step)
    if g[-1] < 1.0 - 1e-12:
        g = np.append(g, 1.0)
    f, u, v = np.meshgrid(np.arange(3), g, g, indexing="ij")
    return gr.cube_directions(f.ravel(), u.ravel(), v.ravel())


def lambda_bruteforce(A, grid_step: float, return_witness: bool = False):
    """Grid minimum of the path sum over every admissible subspace dimension.

    N = 2 samples line angles ``0, h, 2h, ... < pi``; N = 3 samples lines and
    planes (by their normals) on a cube-face grid of step ``h``.  Halving the
    step refines the grid, so the value can only decrease.
    """
    from ._kernels import min_path_over_directions

    A, n, N = _check_lambda_input(A)
    if not grid_step > 0:
        raise LambdaError("grid step must be positive")
    tuples = path_tuples(n, N + 1)
    if N == 2:
        dirs = gr.angle_directions(np.arange(0.0, np.pi, grid_step))
        families = [(dirs, False)]
    elif N == 3:
        dirs = _cube_grid(grid_step)
        families = [(dirs, False), (dirs, True)]
    else:
        raise LambdaError("certified grids exist only for N <= 3")
    best, witness = np.inf, None
    for dirs, planes in families:
        v, g, t = min_path_over_directions(A, np.ascontiguousarray(dirs), tuples, planes)
        if v < best:
            L = gr.Subspace(dirs[g][None, :])
            best, witness = v, (L.complement() if planes else L, tuple(int(i) for i in tuples[t]))
    return (float(best), witness) if return_witness else float(best)


@dataclass
class LambdaBracket:
    lb: float
    ub: float
    tol: float
    best: float  # smallest path sum actually attained
    tuple: tuple
    subspace: gr.Subspace
    cells: int

    def contains(self, x) -> bool:
        return self.lb <= x <= self.ub

    def to_dict(self):
        return {
            "lb": self.lb, "ub": self.ub, "tol": self.tol, "best": self.best,
            "tuple": list(self.tuple), "subspace": self.subspace.frame.tolist(), "cells": self.cells,
        }


def _window_min(A, U, N):
    # exact min over (N+1)-subsets of projected span = min path through N+1 points on a line
    s = np.sort(U @ A.T, axis=1)
    spans = s[:, N:] - s[:, :-N]
    j = spans.argmin(axis=1)
    return spans[np.arange(len(U)), j], j


def _path_lower_bound(A, U, r, N):
    # per-edge bound |<d,v>| >= |<d,u>| - |d| * dist(u, v), then shortest simple N-edge path
    n = len(A)
    P = U @ A.T
    Dp = np.abs(P[:, :, None] - P[:, None, :])
    Dfull = cdist(A, A)
    W = np.maximum(Dp - Dfull[None] * r[:, None, None], 0.0)
    idx = np.arange(n)
    W[:, idx, idx] = np.inf
    if N == 2:
        two = np.partition(W, 1, axis=2)[:, :, :2].sum(axis=2)
        return two.min(axis=1)
    # N == 3: middle edge (j, k), ends chosen among the three cheapest neighbours
    order = np.argsort(W, axis=2)[:, :, :3]
    vals = np.take_along_axis(W, order, axis=2)
    best = np.full(len(U), np.inf)
    C = len(U)
    cells = np.arange(C)[:, None, None]
    jj, kk = np.meshgrid(idx, idx, indexing="ij")
    mid = W  # W[c, j, k]
    for a in range(3):
        i = order[:, :, a]  # (C, n) neighbour of j
        wi = vals[:, :, a]
        for b in range(3):
            l = order[:, :, b]
            wl = vals[:, :, b]
            i_j = i[:, :, None]  # i for each j, broadcast over k
            l_k = l[:, None, :]  # l for each k
            ok = (i_j != kk[None]) & (l_k != jj[None]) & (l_k != i_j)
            tot = wi[:, :, None] + mid + wl[:, None, :]
            tot = np.where(ok, tot, np.inf)
            best = np.minimum(best, tot.reshape(C, -1).min(axis=1))
    return best


class _LineCells:
    """Cells of the line chart: angle intervals (N = 2) or gnomonic squares (N = 3)."""

    def __init__(self, N):
        self.N = N
        if N == 2:
            k = 16
            self.a = np.arange(k) * np.pi / k
            self.w = np.full(k, np.pi / k)
        else:
            s = 4
            f, u0, u1, v0, v1 = gr._cube_grid_cells(s)
            self.f, self.u0, self.u1, self.v0, self.v1 = f, u0, u1, v0, v1

    def __len__(self):
        return len(self.a) if self.N == 2 else len(self.f)

    def geometry(self):
        if self.N == 2:
            return gr.angle_directions(self.a + self.w / 2), gr.angle_cell_radius(self.w)
        r, c = gr.square_cell_radius(self.f, self.u0, self.u1, self.v0, self.v1)
        return c, r

    def select(self, mask):
        out = object.__new__(_LineCells)
        out.N = self.N
        names = ("a", "w") if self.N == 2 else ("f", "u0", "u1", "v0", "v1")
        for nm in names:
            setattr(out, nm, getattr(self, nm)[mask])
        return out

    def split(self):
        out = object.__new__(_LineCells)
        out.N = self.N
        if self.N == 2:
            h = self.w / 2
            out.a = np.concatenate([self.a, self.a + h])
            out.w = np.concatenate([h, h])
        else:
            um, vm = (self.u0 + self.u1) / 2, (self.v0 + self.v1) / 2
            out.f = np.tile(self.f, 4)
            out.u0 = np.concatenate([self.u0, self.u0, um, um])
            out.u1 = np.concatenate([um, um, self.u1, self.u1])
            out.v0 = np.concatenate([self.v0, vm, self.v0, vm])
            out.v1 = np.concatenate([vm, self.v1, vm, self.v1])
        return out


def lambda_certified(A, tol: float, budget: int = 1_000_000, gap_fraction: float = 0.05) -> LambdaBracket:
    """Certified bracket ``[lb, ub]`` for lambda(A) with ``lb > 0`` and ``ub - lb <= tol``.

    Branch and bound over the line chart.  A cell is closed once its lower
    bound is positive and within ``gap_fraction * tol`` of the best attained
    value; ``ub`` is reported as ``lb + tol``, which is a valid upper bound
    because the attained value never exceeds it.
    """
    A, n, N = _check_lambda_input(A)
    if N > 3:
        raise LambdaError("certified lambda is available for N <= 3")
    if not tol > 0:
        raise LambdaError("tol must be positive")
    if general_position_margin(A).value <= 0:
        raise LambdaError("points are not in general position (margin 0)")
    target = gap_fraction * tol
    cells = _LineCells(N)
    best, best_u, best_win = np.inf, None, None
    closed_min = np.inf
    evaluated = 0
    chunk = max(1, 400_000 // (n * n * (9 if N == 3 else 1)))
    while len(cells):
        evaluated += len(cells)
        if evaluated > budget:
            raise LambdaError(
                f"cell budget {budget} exhausted: lb so far {min(closed_min, 0.0):.3g}, best {best:.6g}"
            )
        U, r = cells.geometry()
        f = np.empty(len(U))
        win = np.empty(len(U), dtype=np.intp)
        lb = np.empty(len(U))
        for s in range(0, len(U), chunk):
            sl = slice(s, s + chunk)
            f[sl], win[sl] = _window_min(A, U[sl], N)
            lb[sl] = _path_lower_bound(A, U[sl], r[sl], N)
        lb = np.minimum(lb, f)
        i = int(np.argmin(f))
        if f[i] < best:
            best, best_u, best_win = float(f[i]), U[i], int(win[i])
        done = (lb > 0) & (lb >= best - target)
        if done.any():
            closed_min = min(closed_min, float(lb[done].min()))
        cells = cells.select(~done).split()
    order = np.argsort(A @ best_u)
    tup = tuple(int(k) for k in order[best_win:best_win + N + 1])
    return LambdaBracket(closed_min, closed_min + tol, tol, best, tup, gr.Subspace(best_u[None, :]), evaluated)


# ---------------------------------------------------------------------------
# component bound

def _workers() -> int:
    try:
        return max(1, int(os.environ.get("CANTOR_PROJ_THREADS", "1")))
    except ValueError:
        return 1


def batch_max_component_diameter(coords, radii):
    """Largest component diameter of a union of balls, for a batch of projections.

    ``coords`` has shape ``(B, n, l)``; balls ``i`` and ``j`` touch when the
    center distance is at most ``r_i + r_j``, and a component's diameter is the
    largest ``d_ij + r_i + r_j`` over its members.  Returns the diameters and,
    per batch entry, the pair attaining them.
    """
    Bn, n, _ = coords.shape
    D = np.sqrt(np.maximum(np.sum((coords[:, :, None, :] - coords[:, None, :, :]) ** 2, axis=-1), 0.0))
    Rsum = radii[:, None] + radii[None, :]
    reach = D <= Rsum[None]
    R = reach.astype(np.float32)
    for _ in range(max(1, int(np.ceil(np.log2(max(n, 2)))) + 1)):
        R2 = (np.matmul(R, R) > 0).astype(np.float32)
        if np.array_equal(R2, R):
            break
        R = R2
    span = np.where(R > 0, D + Rsum[None], -np.inf)
    flat = span.reshape(Bn, -1)
    k = flat.argmax(axis=1)
    return flat[np.arange(Bn), k], np.stack(np.unravel_index(k, (n, n)), axis=1), R > 0


@dataclass
class ComponentReport:
    passed: bool
    mode: str
    N: int
    delta: float
    bound: float
    checked: int = 0
    max_ratio: float = 0.0
    lam_lb: float | None = None
    witnesses: list = field(default_factory=list)
    samples: list = field(default_factory=list)  # (l, max diameter) rows for CSV

    def to_dict(self):
        return {
            "status": "PASS" if self.passed else "FAIL", "mode": self.mode, "N": self.N,
            "delta": self.delta, "bound": self.bound, "checked": self.checked,
            "max_ratio": self.max_ratio, "lambda_lb": self.lam_lb, "witnesses": self.witnesses,
        }

    def to_csv(self) -> str:
        return "l,max_component_diameter\n" + "".join(f"{l},{d!r}\n" for l, d in self.samples)


def sampled_component_audit(centers, radii, bound, samples, seed=0, dims=None, keep_samples=False,
                            max_witnesses=5, batch=2048):
    """Sample subspaces of each dimension and flag components of diameter >= bound."""
    C = as_points(centers)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(C),)).copy()
    N = C.shape[1]
    rng = make_rng(seed)
    dims = range(1, N + 1) if dims is None else dims
    witnesses, rows = [], []
    worst, checked = 0.0, 0
    for l in dims:
        if l == N:
            jobs = [np.eye(N)[None]]
        else:
            jobs = [gr.random_frames(rng, min(batch, samples - s), l, N) for s in range(0, samples, batch)]

        def run(F):
            coords = np.einsum("nj,bij->bni", C, F)
            return F, batch_max_component_diameter(coords, radii)

        if _workers() > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(_workers()) as ex:
                results = list(ex.map(run, jobs))
        else:
            results = map(run, jobs)
        for F, (diam, pair, reach) in results:
            checked += len(F)
            worst = max(worst, float(diam.max()) / bound)
            if keep_samples:
                rows.extend((l, float(d)) for d in diam)
            for b in np.flatnonzero(diam >= bound)[: max(0, max_witnesses - len(witnesses))]:
                block = np.flatnonzero(reach[b, pair[b, 0]]).tolist()
                witnesses.append({"l": l, "frame": F[b].tolist(), "diameter": float(diam[b]), "block": block})
    return witnesses, worst, checked, rows


def verify_component_bound(A, delta: float, mode: str = "certified", samples: int = 10_000, seed=0,
                           bracket: LambdaBracket | None = None, tol: float | None = None,
                           keep_samples=False) -> ComponentReport:
    """Check that every projected component of the delta-balls has diameter < 2 delta (N+1)."""
    A = as_points(A)
    n, N = A.shape
    if not delta > 0:
        raise GeometryError("delta must be positive")
    if general_position_margin(A).value <= 0:
        raise GeometryError("points are not in general position")
    bound = 2 * delta * (N + 1)
    if mode == "certified":
        # fewer than N+1 balls cannot contain a chain of N+1 distinct balls
        if n <= N:
            return ComponentReport(True, mode, N, delta, bound)
        if bracket is None:
            bracket = lambda_certified(A, tol if tol is not None else 1e-3 * diameter(A))
        ok = delta < bracket.lb / (2 * (n - 1))
        return ComponentReport(ok, mode, N, delta, bound, lam_lb=bracket.lb,
                               max_ratio=delta * 2 * (n - 1) / bracket.lb)
    if mode != "sampled":
        raise GeometryError(f"unknown mode {mode!r}")
    wit, worst, checked, rows = sampled_component_audit(A, delta, bound, samples, seed, keep_samples=keep_samples)
    return ComponentReport(not wit, mode, N, delta, bound, checked, worst, witnesses=wit, samples=rows)


# ---------------------------------------------------------------------------
# Z_k

@dataclass
class ZkCertificate:
    k: int
    centers: np.ndarray  # ball centers (the generating set A)
    radii: np.ndarray
    bracket: LambdaBracket | None = None

    @property
    def N(self):
        return self.centers.shape[1]

    @property
    def delta(self):
        return float(self.radii.max())

    @property
    def diameters(self):
        return 2 * self.radii

    def with_k(self, k):
        return ZkCertificate(k, self.centers, self.radii, self.bracket)

    def to_dict(self):
        return {
            "k": self.k, "centers": self.centers.tolist(), "radii": self.radii.tolist(),
            "diameters": self.diameters.tolist(), "delta": self.delta,
            "lambda": None if self.bracket is None else self.bracket.to_dict(),
        }


@dataclass
class ZkReport:
    passed: bool
    mode: str
    conditions: dict
    details: dict = field(default_factory=dict)

    def failed(self):
        return [c for c, ok in self.conditions.items() if not ok]

    def to_dict(self):
        return {"status": "PASS" if self.passed else "FAIL", "mode": self.mode,
                "conditions": self.conditions, "details": self.details}


def zk_clearance(cert: ZkCertificate, X: BallTree) -> float:
    """Smallest depth of a leaf ball inside the certificate ball that contains it."""
    D = cdist(X.leaf_centers, cert.centers)
    depth = cert.radii[None, :] - D - X.leaf_radii[:, None]
    return float(depth.max(axis=1).min())


def verify_Zk(cert: ZkCertificate, X: BallTree, mode: str = "certified", samples: int = 2000,
              seed=0) -> ZkReport:
    if cert.N != X.dim:
        raise ZkError("certificate and set live in different dimensions")
    C, r, k, N = cert.centers, np.asarray(cert.radii, float), cert.k, cert.N
    if mode == "certified" and not np.allclose(r, r[0], rtol=0, atol=0):
        raise ZkError("certified mode needs balls of one common radius")
    s = len(C)
    cond, det = {}, {}
    if s > 1:
        D = cdist(C, C)
        np.fill_diagonal(D, np.inf)
        cond["disjoint"] = bool(np.all(D > r[:, None] + r[None, :]))
    else:
        cond["disjoint"] = True
    inner = r[None, :] - cdist(X.leaf_centers, C) - X.leaf_radii[:, None]  # > 0: leaf inside Int B_i
    cond["1_cover"] = bool(np.all(inner.max(axis=1) > 0))
    cond["2_meets"] = bool(np.all((inner > 0).any(axis=0)))
    cond["3_diameter"] = bool(np.all(2 * r < 1.0 / k))
    det["clearance"] = float(inner.max(axis=1).min())
    if mode == "certified":
        delta = float(r[0])
        # L = R^N: disjoint balls are their own components; L = {0} is a point
        ok = cond["disjoint"] and 2 * delta < 1.0 / k
        if N >= 2 and s > N:
            lb = cert.bracket.lb if cert.bracket is not None else lambda_certified(C, 1e-3 * diameter(C)).lb
            det["lambda_lb"] = lb
            ok = ok and delta < lb / (2 * (s - 1)) and 2 * delta * (N + 1) < 1.0 / k
        elif N >= 2:
            ok = ok and 2 * delta * (N + 1) < 1.0 / k
        cond["4_components"] = bool(ok)
    elif mode == "sampled":
        dims = [l for l in range(1, N + 1)]
        wit, worst, checked, _ = sampled_component_audit(C, r, 1.0 / k, samples, seed, dims=dims)
        cond["4_components"] = not wit
        det.update(checked=checked, max_ratio=worst, witnesses=wit)
    else:
        raise ZkError(f"unknown mode {mode!r}")
    return ZkReport(all(cond.values()), mode, cond, det)
