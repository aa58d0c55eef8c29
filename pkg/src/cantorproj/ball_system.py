"""Cantor sets at finite resolution: nested ball trees and coded embeddings.

A :class:`BallTree` with pairwise disjoint siblings, children strictly inside
their parents, branching at least two and radii shrinking at least by half per
level determines a Cantor set as its infinite-depth limit; every statement
made from the leaves holds up to ``leaf_radius``.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .geom_core import GeometryError, as_points, hausdorff_distance, make_rng


class BallTreeError(GeometryError):
    pass


class ReglueError(GeometryError):
    def __init__(self, message, delta=None):
        super().__init__(message if delta is None else f"{message} (delta = {delta:.6g})")
        self.delta = delta


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).ravel())
        if not self.radius > 0:
            raise BallTreeError("ball radius must be positive")


@dataclass(frozen=True)
class Interval:
    lb: float
    ub: float

    def contains(self, x, slack=0.0) -> bool:
        return self.lb - slack <= x <= self.ub + slack

    @property
    def width(self):
        return self.ub - self.lb

    def to_dict(self):
        return {"lb": self.lb, "ub": self.ub}


class BallTree:
    """Levels ``0..depth`` of closed balls; ``parents[j][i]`` indexes level ``j-1``.

    Level 0 may hold several pairwise disjoint roots (a finite union of Cantor
    sets is again a Cantor set).  All leaves sit at the deepest level.
    """

    def __init__(self, centers, radii, parents, check=True):
        self.centers = [np.ascontiguousarray(as_points(c)) for c in centers]
        self.radii = [np.asarray(r, dtype=float).ravel() for r in radii]
        self.parents = [np.asarray(p, dtype=np.intp).ravel() for p in parents]
        if len(self.parents) == len(self.centers) - 1:
            self.parents.insert(0, np.zeros(0, dtype=np.intp))
        self.dim = self.centers[0].shape[1]
        for c, r in zip(self.centers, self.radii):
            c.setflags(write=False)
            r.setflags(write=False)
        if check:
            problems = self.check()
            if problems:
                raise BallTreeError("; ".join(problems[:5]))

    # -- structure -------------------------------------------------------
    @property
    def depth(self) -> int:
        return len(self.centers) - 1

    @property
    def leaf_centers(self) -> np.ndarray:
        return self.centers[-1]

    @property
    def leaf_radii(self) -> np.ndarray:
        return self.radii[-1]

    @property
    def leaf_radius(self) -> float:
        return float(self.radii[-1].max())

    @property
    def n_leaves(self) -> int:
        return len(self.radii[-1])

    def ancestors(self, level: int) -> np.ndarray:
        """Index at ``level`` of the ancestor of every leaf."""
        idx = np.arange(self.n_leaves)
        for j in range(self.depth, level, -1):
            idx = self.parents[j][idx]
        return idx

    def check(self) -> list:
        """Return a list of invariant violations (empty when the tree is valid)."""
        out = []
        if len(self.centers) != len(self.radii) or len(self.parents) != len(self.centers):
            return ["levels, radii and parents have different lengths"]
        for j, (c, r) in enumerate(zip(self.centers, self.radii)):
            if c.shape[1] != self.dim or len(c) != len(r):
                out.append(f"level {j}: malformed arrays")
            if not np.all(r > 0):
                out.append(f"level {j}: nonpositive radius")
        if out:
            return out
        out += _disjointness(self.centers[0], self.radii[0], np.zeros(len(self.radii[0]), dtype=np.intp), "roots")
        for j in range(1, len(self.centers)):
            p = self.parents[j]
            c, r = self.centers[j], self.radii[j]
            pc, pr = self.centers[j - 1], self.radii[j - 1]
            if len(p) != len(c) or (len(p) and (p.min() < 0 or p.max() >= len(pc))):
                out.append(f"level {j}: bad parent indices")
                continue
            counts = np.bincount(p, minlength=len(pc))
            if np.any(counts < 2):
                out.append(f"level {j - 1}: node with fewer than two children")
            if np.any(r > 0.5 * pr[p] * (1 + 1e-12)):
                out.append(f"level {j}: radius not at most half the parent radius")
            inside = np.linalg.norm(c - pc[p], axis=1) + r < pr[p]
            if not np.all(inside):
                out.append(f"level {j}: child not inside the open parent ball")
            out += _disjointness(c, r, p, f"level {j}")
        return out

    # -- constructors ----------------------------------------------------
    @classmethod
    def union(cls, trees):
        """Disjoint union of trees of equal depth (their roots become level 0)."""
        trees = list(trees)
        if not trees:
            raise BallTreeError("empty union")
        depth = trees[0].depth
        if any(t.depth != depth for t in trees):
            raise BallTreeError("union requires trees of equal depth")
        centers, radii, parents = [], [], []
        for j in range(depth + 1):
            centers.append(np.concatenate([t.centers[j] for t in trees]))
            radii.append(np.concatenate([t.radii[j] for t in trees]))
            if j == 0:
                parents.append(np.zeros(0, dtype=np.intp))
            else:
                offs = np.cumsum([0] + [len(t.centers[j - 1]) for t in trees[:-1]])
                parents.append(np.concatenate([t.parents[j] + o for t, o in zip(trees, offs)]))
        return cls(centers, radii, parents)

    def to_dict(self):
        return {
            "dim": self.dim,
            "levels": [
                [{"c": c.tolist(), "r": float(r)} for c, r in zip(C, R)]
                for C, R in zip(self.centers, self.radii)
            ],
            "parents": [p.tolist() for p in self.parents],
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        dim = d["dim"]
        centers = [np.array([b["c"] for b in lvl], dtype=float).reshape(-1, dim) for lvl in d["levels"]]
        radii = [np.array([b["r"] for b in lvl], dtype=float) for lvl in d["levels"]]
        return cls(centers, radii, d["parents"])

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return f"BallTree(dim={self.dim}, depth={self.depth}, leaves={self.n_leaves}, leaf_radius={self.leaf_radius:.3g})"


def _disjointness(c, r, groups, label):
    # siblings (same group) must be disjoint closed balls
    out = []
    order = np.argsort(groups, kind="stable")
    g = groups[order]
    bounds = np.flatnonzero(np.diff(g)) + 1
    for block in np.split(order, bounds):
        if len(block) < 2:
            continue
        D = cdist(c[block], c[block])
        R = r[block][:, None] + r[block][None, :]
        np.fill_diagonal(D, np.inf)
        if np.any(D <= R):
            out.append(f"{label}: sibling balls intersect")
            break
    return out


def standard_cantor_in_ball(B: Ball, depth: int, seed=0, direction=None) -> BallTree:
    """Binary Cantor system: children at ``+-r/2`` along one direction, radius ``r/4``."""
    if depth < 0:
        raise BallTreeError("depth must be nonnegative")
    N = len(B.center)
    if direction is None:
        u = make_rng(seed).standard_normal(N)
    else:
        u = np.asarray(direction, dtype=float).ravel()
    u = u / np.linalg.norm(u)
    centers, radii, parents = [B.center[None, :]], [np.array([B.radius])], [np.zeros(0, dtype=np.intp)]
    for _ in range(depth):
        c, r = centers[-1], radii[-1]
        off = (r / 2)[:, None] * u[None, :]
        centers.append(np.stack([c - off, c + off], axis=1).reshape(-1, N))
        radii.append(np.repeat(r / 4, 2))
        parents.append(np.repeat(np.arange(len(c)), 2))
    return BallTree(centers, radii, parents)


def hausdorff_between(T1: BallTree, T2: BallTree) -> Interval:
    """Interval containing the Hausdorff distance between the represented Cantor sets."""
    if T1.dim != T2.dim:
        raise BallTreeError("trees live in different ambient dimensions")
    m = hausdorff_distance(T1.leaf_centers, T2.leaf_centers)
    slack = T1.leaf_radius + T2.leaf_radius
    return Interval(max(0.0, m - slack), m + slack)


# ---------------------------------------------------------------------------
# coded embeddings

def balanced_code(m: int) -> list:
    """A complete binary prefix code with ``m`` words of nearly equal length."""
    if m < 1:
        raise ValueError("need at least one word")
    if m == 1:
        return [""]
    a = (m + 1) // 2
    return ["0" + w for w in balanced_code(a)] + ["1" + w for w in balanced_code(m - a)]


def _kraft_complete(words) -> bool:
    if not words:
        return False
    L = max(len(w) for w in words)
    return sum(1 << (L - len(w)) for w in words) == 1 << L


def _prefix_free(words) -> bool:
    s = sorted(words)
    return all(not b.startswith(a) for a, b in zip(s, s[1:]))


def merge_cylinders(words) -> list:
    """Merge sibling cylinders ``w0, w1`` into ``w`` until none remain."""
    cur = set(words)
    changed = True
    while changed:
        changed = False
        for w in sorted(cur, key=len, reverse=True):
            if w and w in cur:
                sib = w[:-1] + ("1" if w[-1] == "0" else "0")
                if sib in cur:
                    cur -= {w, sib}
                    cur.add(w[:-1])
                    changed = True
    return sorted(cur)


@dataclass
class CodedEmbedding:
    """Finite-resolution embedding of the Cantor set ``{0,1}^N``.

    ``code`` maps the words of a complete prefix code to leaf indices of
    ``tree``; the cylinder of each word is sent into that leaf ball.
    """

    tree: BallTree
    code: dict
    meta: dict = field(default_factory=dict)

    def check(self) -> list:
        out = []
        words = list(self.code)
        if not _prefix_free(words):
            out.append("code is not prefix-free")
        if not _kraft_complete(words):
            out.append("code does not cover the Cantor set")
        leaves = sorted(self.code.values())
        if leaves != list(range(self.tree.n_leaves)):
            out.append("code is not a bijection onto the leaves")
        return out

    @classmethod
    def from_tree(cls, tree: BallTree):
        """Code each node's children with a balanced code, roots included."""
        prefixes = dict(zip(range(len(tree.radii[0])), balanced_code(len(tree.radii[0]))))
        for j in range(1, tree.depth + 1):
            p = tree.parents[j]
            nxt = {}
            for parent in np.unique(p):
                kids = np.flatnonzero(p == parent)
                for k, w in zip(kids, balanced_code(len(kids))):
                    nxt[int(k)] = prefixes[int(parent)] + w
            prefixes = nxt
        return cls(tree, {w: i for i, w in prefixes.items()})

    @property
    def words(self):
        return list(self.code)

    def image_leaves(self) -> set:
        return set(self.code.values())


def _overlapping_pairs(code_f, code_g):
    g_sorted = sorted(code_g)
    for w, i in code_f.items():
        for k in range(len(w) + 1):
            j = code_g.get(w[:k])
            if j is not None:
                yield i, j
        lo = bisect.bisect_right(g_sorted, w)
        hi = bisect.bisect_left(g_sorted, w + "2")
        for v in g_sorted[lo:hi]:
            yield i, code_g[v]


def rho(f: CodedEmbedding, g: CodedEmbedding, with_radii=True) -> float:
    """Upper bound on the sup distance between two coded embeddings."""
    pairs = np.array(list(_overlapping_pairs(f.code, g.code)), dtype=np.intp)
    cf, cg = f.tree.leaf_centers[pairs[:, 0]], g.tree.leaf_centers[pairs[:, 1]]
    d = np.linalg.norm(cf - cg, axis=1)
    if with_radii:
        d = d + f.tree.leaf_radii[pairs[:, 0]] + g.tree.leaf_radii[pairs[:, 1]]
    return float(d.max())


def reglue_embedding(f: CodedEmbedding, K: BallTree, eps: float) -> CodedEmbedding:
    """An embedding ``g`` with image the leaves of ``K`` and ``rho(f, g) < eps``."""
    if not eps > 0:
        raise ReglueError("eps must be positive")
    T = f.tree
    if T.dim != K.dim:
        raise ReglueError("embedding and target live in different dimensions")
    same = (T.n_leaves == K.n_leaves and np.array_equal(T.leaf_centers, K.leaf_centers)
            and np.array_equal(T.leaf_radii, K.leaf_radii))
    if same:
        return CodedEmbedding(K, dict(f.code), {"delta": None, "clusters": None, "identity": True})

    # shallowest level whose subtrees all have diameter < eps/3
    level = None
    for j in range(T.depth + 1):
        anc = T.ancestors(j)
        ok = True
        for a in np.unique(anc):
            leaves = np.flatnonzero(anc == a)
            c = T.leaf_centers[leaves]
            diam = (cdist(c, c).max() if len(c) > 1 else 0.0) + 2 * T.leaf_radii[leaves].max()
            if diam >= eps / 3:
                ok = False
                break
        if ok:
            level = j
            break
    if level is None:
        raise ReglueError("leaves of the embedding are too coarse for this eps")
    anc = T.ancestors(level)
    clusters = np.unique(anc)
    label = np.searchsorted(clusters, anc)

    gap = np.inf
    if len(clusters) > 1:
        D = cdist(T.leaf_centers, T.leaf_centers) - T.leaf_radii[:, None] - T.leaf_radii[None, :]
        D[label[:, None] == label[None, :]] = np.inf
        gap = float(D.min())
    delta = 0.999 * min(eps / 3, gap / 3)
    ub = hausdorff_between(T, K).ub
    if not ub < delta:
        raise ReglueError(f"target is not within delta of the image (Hausdorff bound {ub:.6g})", delta)

    D = cdist(K.leaf_centers, T.leaf_centers)
    nearest = D.argmin(axis=1)
    if np.any(D[np.arange(K.n_leaves), nearest] >= delta):
        raise ReglueError("a target leaf lies outside every cluster neighbourhood", delta)
    k_label = label[nearest]

    inv = {}
    for w, i in f.code.items():
        inv.setdefault(label[i], []).append(w)
    code = {}
    for c in range(len(clusters)):
        targets = np.flatnonzero(k_label == c)
        if len(targets) == 0:
            raise ReglueError(f"cluster {c} has no target leaves", delta)
        cyl = merge_cylinders(inv[c])
        if len(targets) < len(cyl):
            raise ReglueError(f"cluster {c} needs at least {len(cyl)} target leaves", delta)
        counts = np.full(len(cyl), len(targets) // len(cyl))
        counts[: len(targets) % len(cyl)] += 1
        start = 0
        for w, m in zip(cyl, counts):
            for v, leaf in zip(balanced_code(int(m)), targets[start:start + m]):
                code[w + v] = int(leaf)
            start += m
    g = CodedEmbedding(K, code, {"delta": delta, "level": level, "clusters": len(clusters), "identity": False})
    problems = g.check()
    if problems:
        raise ReglueError("; ".join(problems), delta)
    return g
