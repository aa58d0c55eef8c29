"""Perturbation constructions producing Cantor sets with certified projection behaviour.

Each construction takes a :class:`BallTree` ``X`` and a budget ``eps`` and
returns a nearby tree ``K`` together with a certificate that stays valid for
every compactum within a robustness radius ``delta`` of ``K``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from . import grassmann as gr
from .ball_system import Ball, BallTree, hausdorff_between, standard_cantor_in_ball
from .geom_core import (
    GeometryError,
    as_points,
    diameter,
    finite_general_position_approx,
    general_position_margin,
    greedy_net,
    make_rng,
    min_pairwise_distance,
    sample_in_ball,
    stability_radius,
)
from .projection_cert import ZkCertificate, lambda_certified, verify_Zk, zk_clearance

# root radius of a generated Cantor piece relative to the ball it must live in
PIECE_FRACTION = 0.2
SHRINK = 0.999


class BudgetError(GeometryError):
    def __init__(self, message, ledger=None):
        super().__init__(message)
        self.ledger = ledger or []


def _pieces(centers, root_radius, depth, rng) -> BallTree:
    C = as_points(centers)
    radii = np.broadcast_to(np.asarray(root_radius, dtype=float), (len(C),))
    # leaf gaps must stay well above the spacing of doubles near the centers
    resolution = 64 * np.finfo(float).eps * max(1.0, float(np.abs(C).max()))
    if not radii.min() * 4.0 ** -depth > resolution:
        raise GeometryError(
            f"piece radius {radii.min():.3g} at depth {depth} is below floating resolution"
        )
    trees = [
        standard_cantor_in_ball(Ball(c, r), depth, direction=rng.standard_normal(C.shape[1]))
        for c, r in zip(C, radii)
    ]
    return BallTree.union(trees)


def _check_move(X, K, eps, what):
    ub = hausdorff_between(X, K).ub
    if not ub < eps:
        raise GeometryError(
            f"{what}: Hausdorff bound {ub:.3g} is not below eps = {eps:.3g}; "
            f"the input leaf radius {X.leaf_radius:.3g} is too coarse for this eps"
        )
    return ub


def _best_clearance(points, radii, centers, r):
    """Per ball: the largest depth of a leaf ball inside ``B(center, r)`` (negative if none fits)."""
    depth = np.asarray(r)[None, :] - cdist(points, centers) - np.asarray(radii)[:, None]
    return depth.max(axis=0)


# ---------------------------------------------------------------------------
# certificates

@dataclass
class RobustnessCertificate:
    kind: str  # "no-point-projection" | "no-isolated-point"
    K: BallTree
    delta: float
    centers: np.ndarray
    r: float
    k: int | None = None
    sub_centers: np.ndarray | None = None  # (t, N+1, N) for isolated-point clusters
    rho: float | None = None
    in_place: bool = False
    meta: dict = field(default_factory=dict)

    def holds_for(self, k) -> bool:
        return self.kind == "no-point-projection" or 2 * self.r < 1.0 / k

    def to_dict(self):
        d = {
            "kind": self.kind, "delta": self.delta, "r": self.r, "k": self.k,
            "centers": self.centers.tolist(), "in_place": self.in_place, "meta": self.meta,
        }
        if self.sub_centers is not None:
            d["sub_centers"] = self.sub_centers.tolist()
            d["rho"] = self.rho
        return d


def audit_one_point(cert: RobustnessCertificate, Y, rng=None) -> dict:
    """Pick one point of ``Y`` in every certificate ball and check their affine rank is N."""
    Y = as_points(Y)
    rng = make_rng(0 if rng is None else rng)
    inside = cdist(Y, cert.centers) < cert.r
    missing = np.flatnonzero(~inside.any(axis=0))
    if len(missing):
        return {"ok": False, "reason": "ball not met", "balls": missing.tolist()}
    picks = np.array([rng.choice(np.flatnonzero(inside[:, i])) for i in range(len(cert.centers))])
    B = Y[picks]
    N = Y.shape[1]
    rank = int(np.linalg.matrix_rank(B[1:] - B[0])) if len(B) > 1 else 0
    return {"ok": rank == N and len(B) >= N + 1, "rank": rank, "t": len(B), "picks": picks.tolist()}


def audit_isolated(cert: RobustnessCertificate, Y, L: gr.Subspace, k: int) -> dict:
    """Every projected point of ``Y`` must have a distinct projected point closer than 1/k."""
    Y = as_points(Y)
    P = L.coords(Y)
    tree = cKDTree(P)
    m = len(P)
    d, _ = tree.query(P, k=min(m, 2))
    d = d.reshape(m, -1)
    near = d[:, -1] if m > 1 else np.full(m, np.inf)
    for i in np.flatnonzero(near == 0):
        # coincident projections: look for the nearest distinct one
        dd = np.linalg.norm(P - P[i], axis=1)
        dd = dd[dd > 0]
        near[i] = dd.min() if len(dd) else np.inf
    bad = np.flatnonzero(~(near < 1.0 / k))
    return {"ok": len(bad) == 0, "isolated": bad[:10].tolist(), "max_gap": float(near.max())}


def jitter_leaves(K: BallTree, bound: float, rng) -> np.ndarray:
    """A finite compactum within ``bound + leaf_radius`` of the set represented by ``K``."""
    return K.leaf_centers + sample_in_ball(make_rng(rng), K.n_leaves, K.dim, bound)


# ---------------------------------------------------------------------------
# no single-point projections

def _one_point_in_place(X: BallTree):
    if len(X.radii[0]) < X.dim + 1:
        return None
    A = X.centers[0]
    m = general_position_margin(A).value
    if m <= 0:
        return None
    r = SHRINK * min(stability_radius(m, X.dim), 0.5 * min_pairwise_distance(A))
    clear = _best_clearance(X.leaf_centers, X.leaf_radii, A, np.full(len(A), r))
    if np.all(clear > 0):
        return A, r, float(SHRINK * clear.min()), m
    return None


def avoid_one_point_projections(X: BallTree, eps: float, seed=0, depth: int = 4) -> RobustnessCertificate:
    """Perturb ``X`` so that no nearby compactum projects to a single point on any nonzero L.

    ``K`` has a piece in each ball ``O(a_i, r)`` around a general-position set
    ``a_1..a_t``; ``r`` is below the stability radius of the margin, so any
    choice of one point per ball still spans R^N affinely.
    """
    if not eps > 0:
        raise GeometryError("eps must be positive")
    rng = make_rng(seed)
    hit = _one_point_in_place(X)
    if hit is not None:
        A, r, delta, m = hit
        return RobustnessCertificate("no-point-projection", X, delta, A, r, in_place=True,
                                     meta={"margin": m, "dH_ub": hausdorff_between(X, X).ub})
    N = X.dim
    A = finite_general_position_approx(X.leaf_centers, eps / 2, rng)
    m = general_position_margin(A).value
    r = SHRINK * min(stability_radius(m, N), 0.5 * min_pairwise_distance(A), eps / 4)
    K = _pieces(A, PIECE_FRACTION * r, depth, rng)
    ub = _check_move(X, K, eps, "avoid_one_point_projections")
    clear = _best_clearance(K.leaf_centers, K.leaf_radii, A, np.full(len(A), r))
    return RobustnessCertificate("no-point-projection", K, float(SHRINK * clear.min()), A, r,
                                 meta={"margin": m, "dH_ub": ub})


# ---------------------------------------------------------------------------
# no 1/k-isolated projected points

def regular_simplex(N: int) -> np.ndarray:
    """Vertices of a regular simplex in R^N with circumradius 1, centred at the origin."""
    E = np.eye(N + 1) - 1.0 / (N + 1)
    _, _, Vt = np.linalg.svd(E)
    V = E @ Vt[:N].T
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def avoid_isolated_projections(X: BallTree, eps: float, k: int, seed=0, depth: int = 4) -> RobustnessCertificate:
    """Perturb ``X`` so no nearby compactum has a 1/k-isolated point in any projection with 0 < dim L < N.

    ``K`` is a union of clusters, each made of N+1 pieces in general-position
    sub-balls of a ball of radius ``r < 1/(2k)``.  An affine fiber of ``p_L``
    misses at least one sub-ball, which supplies a second projected point.
    """
    N = X.dim
    if N < 2:
        raise GeometryError("no subspace L with 0 < dim L < N exists when N = 1")
    if not eps > 0 or k < 1:
        raise GeometryError("need eps > 0 and k >= 1")
    rng = make_rng(seed)
    A = X.leaf_centers[greedy_net(X.leaf_centers, eps / 2)]
    spread = 0.5 * min_pairwise_distance(A) if len(A) > 1 else np.inf
    r = SHRINK * min(1.0 / (2 * k), spread, eps / 4)
    S = regular_simplex(N) * (r / 2)
    sm = general_position_margin(S).value
    rho = SHRINK * min(stability_radius(sm, N), 0.5 * min_pairwise_distance(S), r / 2)
    sub = A[:, None, :] + S[None, :, :]
    K = _pieces(sub.reshape(-1, N), 0.5 * rho, depth, rng)
    ub = _check_move(X, K, eps, "avoid_isolated_projections")
    # every point of a nearby Y must stay in some cluster ball and meet every sub-ball
    cover = (r - cdist(K.leaf_centers, A) - K.leaf_radii[:, None]).max(axis=1).min()
    meet = _best_clearance(K.leaf_centers, K.leaf_radii, sub.reshape(-1, N), np.full(sub.shape[0] * sub.shape[1], rho))
    delta = SHRINK * min(float(cover), float(meet.min()))
    return RobustnessCertificate("no-isolated-point", K, delta, A, r, k=k, sub_centers=sub, rho=rho,
                                 meta={"cluster_margin": sm, "dH_ub": ub})


def cluster_audit(cert: RobustnessCertificate, Y) -> dict:
    """Structural check of an isolated-point certificate against a finite compactum ``Y``."""
    Y = as_points(Y)
    N = Y.shape[1]
    in_cluster = (cdist(Y, cert.centers) < cert.r).any(axis=1)
    sub = cert.sub_centers.reshape(-1, N)
    met = (cdist(Y, sub) < cert.rho).any(axis=0)
    gp = all(general_position_margin(c).value > 0 for c in cert.sub_centers)
    return {"ok": bool(in_cluster.all() and met.all() and gp), "uncovered": int((~in_cluster).sum()),
            "unmet_sub_balls": int((~met).sum()), "clusters_general": gp}


# ---------------------------------------------------------------------------
# Z_k

def _zk_bounds(A, k, eps, lambda_tol):
    N = A.shape[1]
    bounds = {
        "half_min_distance": 0.5 * min_pairwise_distance(A),
        "eps_half": eps / 2,
        "scale": 1.0 / (2 * k * (N + 1)),
    }
    bracket = None
    if N >= 2 and len(A) > N:
        if lambda_tol is None:
            # a coarse pass locates lambda, a second pass brackets it to 20 percent
            rough = lambda_certified(A, 1e-2 * diameter(A))
            lambda_tol = 0.2 * rough.best
        bracket = lambda_certified(A, lambda_tol)
        bounds["lambda"] = bracket.lb / (2 * (len(A) - 1))
    return bounds, bracket


def into_Zk(X: BallTree, eps: float, k: int, seed=0, depth: int = 4, lambda_tol=None, candidates: int = 4):
    """A nearby tree in Z_k with its certificate; see :func:`verify_Zk`.

    Among ``candidates`` general-position approximations the one allowing the
    largest ball radius is kept.
    """
    if not eps > 0 or k < 1:
        raise GeometryError("need eps > 0 and k >= 1")
    rng = make_rng(seed)
    best = None
    for _ in range(max(1, candidates)):
        A = finite_general_position_approx(X.leaf_centers, eps / 2, rng)
        bounds, bracket = _zk_bounds(A, k, eps, lambda_tol)
        if best is None or min(bounds.values()) > min(best[1].values()):
            best = (A, bounds, bracket)
    A, bounds, bracket = best
    delta = SHRINK * min(bounds.values())
    K = _pieces(A, PIECE_FRACTION * delta, depth, rng)
    _check_move(X, K, eps, "into_Zk")
    cert = ZkCertificate(k, A, np.full(len(A), delta), bracket)
    return K, cert, bounds


# ---------------------------------------------------------------------------
# composition

@dataclass
class CertificateBundle:
    eps: float
    k_max: int
    seed: int
    stages: list  # per k: {"k", "zk", "one_point", "isolated", "reused": {...}}
    ledger: list  # one entry per executed or reused step
    certificates: list  # (name, delta, K) in creation order

    def to_dict(self):
        out = {"eps": self.eps, "k_max": self.k_max, "seed": self.seed, "ledger": self.ledger, "stages": []}
        for s in self.stages:
            out["stages"].append({
                "k": s["k"],
                "zk": s["zk"].to_dict(),
                "zk_delta": s["zk_delta"],
                "one_point": s["one_point"].to_dict(),
                "isolated": None if s["isolated"] is None else s["isolated"].to_dict(),
                "reused": s["reused"],
            })
        return out


def _remaining(certs, K):
    if not certs:
        return np.inf
    return min(d - hausdorff_between(T, K).ub for _, d, T in certs)


def _zk_reusable(cert: ZkCertificate, K: BallTree, k: int) -> bool:
    delta = cert.delta
    if not (2 * delta < 1.0 / k and 2 * delta * (cert.N + 1) < 1.0 / k):
        return False
    return verify_Zk(cert.with_k(k), K).conditions["1_cover"] and zk_clearance(cert, K) > 0


def typical_cantor(X0: BallTree, eps: float, k_max: int, seed=0, depth: int = 4, reuse: bool = True):
    """Compose the three constructions for k = 1..k_max inside the budget ``eps``.

    Step budgets are ``eps * 2**-k / 3`` capped by 0.9 of the robustness left
    in every earlier certificate.  A certificate from an earlier stage is
    reused when it already satisfies the stage-k constraints and the current
    set is still inside its robustness radius.
    """
    if not eps > 0 or k_max < 1:
        raise GeometryError("need eps > 0 and k_max >= 1")
    rng = make_rng(seed)
    N = X0.dim
    K = X0
    certs, ledger, stages = [], [], []
    last = {"zk": None, "one_point": None, "isolated": None}

    def settle(name, k, new_K, delta, reused, budget):
        nonlocal K
        entry = {"k": k, "step": name, "reused": reused, "budget": budget,
                 "dH_ub": hausdorff_between(K, new_K).ub if not reused else 0.0}
        K = new_K
        if not reused:
            certs.append((f"{name}@{k}", delta, K))
        slack = [(nm, d - hausdorff_between(T, K).ub) for nm, d, T in certs]
        entry["slack"] = {nm: s for nm, s in slack}
        ledger.append(entry)
        bad = [nm for nm, s in slack if not s > 0]
        if bad:
            raise BudgetError(f"stage {k} {name}: left the robustness radius of {', '.join(bad)}", ledger)

    def _run(op, *args):
        try:
            return op(*args)
        except BudgetError:
            raise
        except GeometryError as e:
            raise BudgetError(f"stage {k} {op.__name__}: {e}", ledger) from e

    for k in range(1, k_max + 1):
        share = eps * 2.0 ** -k / 3
        reused = {}

        def budget():
            b = min(share, 0.9 * _remaining(certs, K))
            if not b > 0:
                raise BudgetError(f"stage {k}: no robustness budget left", ledger)
            return b

        # Z_k
        prev = last["zk"]
        if reuse and prev is not None and _zk_reusable(prev[0], K, k):
            zk, zk_delta = prev[0].with_k(k), prev[1]
            reused["zk"] = True
            settle("zk", k, K, zk_delta, True, 0.0)
        else:
            b = budget()
            newK, zk, _ = _run(into_Zk, K, b, k, rng, depth)
            zk_delta = SHRINK * zk_clearance(zk, newK)
            reused["zk"] = False
            settle("zk", k, newK, zk_delta, False, b)
        last["zk"] = (zk, zk_delta)

        # single-point projections
        prev = last["one_point"]
        if reuse and prev is not None and hausdorff_between(prev.K, K).ub < prev.delta:
            one = prev
            reused["one_point"] = True
            settle("one_point", k, K, one.delta, True, 0.0)
        else:
            b = budget()
            one = _run(avoid_one_point_projections, K, b, rng, depth)
            reused["one_point"] = False
            settle("one_point", k, one.K, one.delta, False, b)
        last["one_point"] = one

        # isolated projected points
        iso = None
        if N >= 2:
            prev = last["isolated"]
            if reuse and prev is not None and prev.holds_for(k) and hausdorff_between(prev.K, K).ub < prev.delta:
                iso = prev
                reused["isolated"] = True
                settle("isolated", k, K, iso.delta, True, 0.0)
            else:
                b = budget()
                iso = _run(avoid_isolated_projections, K, b, k, rng, depth)
                reused["isolated"] = False
                settle("isolated", k, iso.K, iso.delta, False, b)
            last["isolated"] = iso
        stages.append({"k": k, "zk": zk, "zk_delta": zk_delta, "one_point": one, "isolated": iso, "reused": reused})

    total = hausdorff_between(X0, K).ub
    if not total < eps:
        raise BudgetError(f"final Hausdorff bound {total:.3g} is not below eps", ledger)
    bundle = CertificateBundle(eps, k_max, int(seed) if not isinstance(seed, np.random.Generator) else -1,
                               stages, ledger, [(nm, d) for nm, d, _ in certs])
    bundle.ledger.append({"final_dH_ub": total})
    bundle._trees = {nm: T for nm, _, T in certs}
    return K, bundle


def verify_bundle(bundle: CertificateBundle, K: BallTree, X0: BallTree | None = None, seed=0,
                  subspaces: int = 20) -> dict:
    """Re-check every stage certificate against the final tree ``K``."""
    rng = make_rng(seed)
    N = K.dim
    out = {"stages": [], "passed": True}
    for s in bundle.stages:
        k = s["k"]
        rep = {"k": k}
        z = verify_Zk(s["zk"].with_k(k), K)
        rep["zk"] = z.to_dict()
        one = s["one_point"]
        rep["one_point"] = {
            "inside_delta": bool(hausdorff_between(one.K, K).ub < one.delta),
            **audit_one_point(one, K.leaf_centers, rng),
        }
        ok = z.passed and rep["one_point"]["inside_delta"] and rep["one_point"]["ok"]
        iso = s["isolated"]
        if iso is not None:
            res = [audit_isolated(iso, K.leaf_centers, gr.random_subspace(int(rng.integers(1, N)), N, rng), k)
                   for _ in range(subspaces)]
            rep["isolated"] = {
                "inside_delta": bool(hausdorff_between(iso.K, K).ub < iso.delta),
                "holds_for_k": iso.holds_for(k),
                "structure": cluster_audit(iso, K.leaf_centers),
                "projection_failures": sum(not r["ok"] for r in res),
            }
            ok = ok and rep["isolated"]["inside_delta"] and rep["isolated"]["holds_for_k"] \
                and rep["isolated"]["structure"]["ok"] and rep["isolated"]["projection_failures"] == 0
        rep["passed"] = bool(ok)
        out["passed"] &= rep["passed"]
        out["stages"].append(rep)
    if X0 is not None:
        ub = hausdorff_between(X0, K).ub
        out["dH_ub"] = ub
        out["passed"] &= bool(ub < bundle.eps)
    out["passed"] = bool(out["passed"])
    return out


# ---------------------------------------------------------------------------
# graph surjection and densification

def bisection_codes(Y) -> list:
    """Binary words for the points of ``Y`` from repeated median splits along the widest axis."""
    Y = as_points(Y)
    codes = [""] * len(Y)

    def split(idx, prefix):
        if len(idx) == 1:
            codes[idx[0]] = prefix
            return
        P = Y[idx]
        axis = int(np.argmax(P.max(axis=0) - P.min(axis=0)))
        order = idx[np.argsort(P[:, axis], kind="stable")]
        h = len(order) // 2
        split(order[:h], prefix + "0")
        split(order[h:], prefix + "1")

    split(np.arange(len(Y)), "")
    return codes


def _word_interval(w, H):
    # middle-thirds cylinder of the word: left end and width
    left = sum(2 * int(b) * 3.0 ** -(j + 1) for j, b in enumerate(w)) * H
    return left, H * 3.0 ** -len(w)


def graph_surjection_cantor(Ynet, L: gr.Subspace, depth: int = 4, seed=0) -> BallTree:
    """A Cantor set whose projection to ``L`` is the net ``Ynet`` up to leaf resolution.

    The net is coded by a bisection tree; the point with word ``w`` carries a
    Cantor piece along a line ``V`` orthogonal to ``L`` placed over the
    middle-thirds cylinder of ``w``, so the set is the graph of a map from a
    Cantor set onto the net.
    """
    N, l = L.ambient, L.dim
    if l in (0, N):
        raise GeometryError("graph construction needs 0 < dim L < N")
    Y = np.asarray(Ynet, dtype=float)
    Y = Y.reshape(-1, l) @ L.frame if Y.ndim == 1 or Y.shape[-1] == l else as_points(Y, N)
    off = Y - gr.project(L, Y)
    if np.abs(off).max() > 1e-9 * max(1.0, np.abs(Y).max()):
        raise GeometryError("net points do not lie in L")
    Y = gr.project(L, Y)
    v = L.complement().frame[0]
    H = diameter(Y) if len(Y) > 1 else 1.0
    H = H if H > 0 else 1.0
    trees = []
    for y, w in zip(Y, bisection_codes(Y)):
        left, width = _word_interval(w, H)
        B = Ball(y + (left + width / 2) * v, SHRINK * width / 2)
        trees.append(standard_cantor_in_ball(B, depth, direction=v))
    return BallTree.union(trees)


def projection_defect(X: BallTree, L: gr.Subspace, Ynet) -> float:
    """Hausdorff distance between the projected leaves of ``X`` and the net (ambient coordinates)."""
    from .geom_core import hausdorff_distance

    return hausdorff_distance(gr.project(L, X.leaf_centers), as_points(Ynet, L.ambient))


def densify_for_L(X: BallTree, eps: float, L: gr.Subspace, depth: int = 4, seed=0, tries: int = 16) -> BallTree:
    """A tree within ``eps`` of ``X`` made of Cantor pieces on segments parallel to ``L``.

    Pieces sit around a finite general-position approximation and run along a
    direction ``u`` in ``L``; their projections to ``L`` are pairwise disjoint
    copies of the ratio-1/4 linear Cantor pattern.
    """
    if L.dim < 1:
        raise GeometryError("L must be nonzero")
    if not eps > 0:
        raise GeometryError("eps must be positive")
    rng = make_rng(seed)
    for _ in range(tries):
        A = finite_general_position_approx(X.leaf_centers, eps / 2, rng)
        u = L.frame.T @ rng.standard_normal(L.dim)
        u /= np.linalg.norm(u)
        r = SHRINK * min(eps / 4, 0.5 * min_pairwise_distance(A))
        P = L.coords(A)
        sep = 0.5 * min_pairwise_distance(P) if len(P) > 1 else np.inf
        if not sep > 0:
            continue
        s = 0.9 * min(r, sep)
        trees = [standard_cantor_in_ball(Ball(a, s), depth, direction=u) for a in A]
        K = BallTree.union(trees)
        _check_move(X, K, eps, "densify_for_L")
        return K
    raise GeometryError(f"projections of the approximating points kept coinciding in {tries} draws")
