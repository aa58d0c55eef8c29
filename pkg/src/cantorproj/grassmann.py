"""Linear subspaces of R^N, orthogonal projections and the Grassmann metric.

The distance between two subspaces of equal dimension is the Hausdorff
distance between their unit spheres, which equals ``2 sin(theta_max / 2)``
for the largest principal angle ``theta_max``.  Certified covering nets are
available for N <= 3: an angle grid for lines in the plane and a gnomonic
cube-face grid (three faces, modulo antipodes) for lines and planes in R^3.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .geom_core import GeometryError, make_rng

ORTHONORMAL_TOL = 1e-10
EQUALITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Subspace:
    frame: np.ndarray  # (l, N), orthonormal rows

    def __post_init__(self):
        F = np.asarray(self.frame, dtype=float)
        if F.ndim != 2:
            raise GeometryError("frame must be an (l, N) array")
        if F.shape[0] > F.shape[1]:
            raise GeometryError("subspace dimension exceeds ambient dimension")
        resid = np.abs(F @ F.T - np.eye(F.shape[0])).max() if F.shape[0] else 0.0
        if resid > ORTHONORMAL_TOL:
            raise GeometryError(f"frame rows are not orthonormal (residual {resid:.2e})")
        F.setflags(write=False)
        object.__setattr__(self, "frame", F)

    @classmethod
    def span(cls, vectors, ambient=None):
        """Orthonormalize the given spanning vectors (rows)."""
        V = np.atleast_2d(np.asarray(vectors, dtype=float))
        if V.size == 0:
            if ambient is None:
                raise GeometryError("ambient dimension needed for the zero subspace")
            return cls(np.zeros((0, ambient)))
        U, s, Vt = np.linalg.svd(V, full_matrices=False)
        rank = int(np.sum(s > 1e-12 * max(1.0, s.max())))
        return cls(Vt[:rank])

    @classmethod
    def zero(cls, N):
        return cls(np.zeros((0, N)))

    @classmethod
    def full(cls, N):
        return cls(np.eye(N))

    @property
    def dim(self) -> int:
        return self.frame.shape[0]

    @property
    def ambient(self) -> int:
        return self.frame.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.frame.T @ self.frame

    def coords(self, X) -> np.ndarray:
        """Coordinates of the projections in the frame basis, shape ``(n, l)``."""
        return np.atleast_2d(np.asarray(X, dtype=float)) @ self.frame.T

    def complement(self) -> "Subspace":
        N = self.ambient
        if self.dim == 0:
            return Subspace.full(N)
        if self.dim == N:
            return Subspace.zero(N)
        _, _, Vt = np.linalg.svd(self.frame, full_matrices=True)
        return Subspace(Vt[self.dim:])

    def to_dict(self):
        return {"ambient": self.ambient, "dim": self.dim, "frame": self.frame.tolist()}

    @classmethod
    def from_dict(cls, d):
        F = np.asarray(d["frame"], dtype=float).reshape(-1, d["ambient"]) if d.get("frame") else np.zeros((0, d["ambient"]))
        return cls(F)

    def __repr__(self):
        return f"Subspace(dim={self.dim}, ambient={self.ambient})"


def project(L: Subspace, x) -> np.ndarray:
    """Orthogonal projection into ``L``, returned in ambient coordinates."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != L.ambient:
        raise GeometryError("point and subspace have different ambient dimensions")
    return (x @ L.frame.T) @ L.frame


def _half_chord(sin_t, cos_t):
    # 2 sin(theta/2) from sin and cos without cancellation at either end
    sin_t, cos_t = np.asarray(sin_t), np.asarray(cos_t)
    small = sin_t < 0.7
    a = sin_t / np.sqrt(np.maximum((1.0 + cos_t) / 2.0, 1e-300))
    b = np.sqrt(np.maximum(2.0 * (1.0 - cos_t), 0.0))
    return np.where(small, a, b)


def gr_distance(L1: Subspace, L2: Subspace) -> float:
    if L1.ambient != L2.ambient:
        raise GeometryError("subspaces live in different ambient spaces")
    if L1.dim != L2.dim:
        raise GeometryError(f"Grassmann distance needs equal dimensions, got {L1.dim} and {L2.dim}")
    if L1.dim == 0:
        raise GeometryError("the unit sphere of the zero subspace is empty")
    cos_t = float(np.clip(np.linalg.svd(L1.frame @ L2.frame.T, compute_uv=False).min(), 0.0, 1.0))
    resid = L1.frame - (L1.frame @ L2.frame.T) @ L2.frame
    sin_t = float(min(np.linalg.norm(resid, 2), 1.0))
    d = float(_half_chord(sin_t, cos_t))
    return 0.0 if d < EQUALITY_TOL else d


def line_distance(u, v) -> np.ndarray:
    """Vectorized Grassmann distance between lines spanned by unit vectors."""
    c = np.clip(np.abs(np.sum(np.asarray(u) * np.asarray(v), axis=-1)), 0.0, 1.0)
    s = np.linalg.norm(np.cross(u, v), axis=-1) if np.shape(u)[-1] == 3 else np.sqrt(np.maximum(1 - c * c, 0))
    return _half_chord(np.minimum(s, 1.0), c)


def random_subspace(l: int, N: int, seed=0) -> Subspace:
    if not 0 <= l <= N:
        raise GeometryError("need 0 <= l <= N")
    if l == 0:
        return Subspace.zero(N)
    return Subspace(random_frames(make_rng(seed), 1, l, N)[0])


def random_frames(rng, count: int, l: int, N: int) -> np.ndarray:
    """``count`` Haar-distributed orthonormal frames, shape ``(count, l, N)``."""
    G = rng.standard_normal((count, N, l))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.0
    return np.swapaxes(Q * signs[:, None, :], -1, -2)


# ---------------------------------------------------------------------------
# charts used by nets and by branch and bound

def angle_directions(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def angle_cell_radius(width) -> np.ndarray:
    """Covering radius of an angle interval of the given width about its midpoint."""
    return 2.0 * np.sin(np.minimum(np.asarray(width, dtype=float), np.pi) / 4.0)


def cube_directions(face, u, v) -> np.ndarray:
    """Unit vectors for gnomonic coordinates ``(u, v)`` in ``[-1, 1]^2`` on a cube face.

    Face ``f`` is the plane ``x_f = 1``; three faces cover every line through
    the origin.
    """
    face = np.asarray(face)
    u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
    face = np.broadcast_to(face, u.shape)
    out = np.empty(u.shape + (3,))
    ones = np.ones_like(u)
    for f in range(3):
        m = face == f
        out[m, f] = ones[m]
        out[m, (f + 1) % 3] = u[m]
        out[m, (f + 2) % 3] = v[m]
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def square_cell_radius(face, u0, u1, v0, v1):
    """Certified Grassmann covering radius of a gnomonic square about its center.

    The square maps to a geodesically convex spherical quadrilateral, so the
    largest angle from the center direction is attained at a corner.
    """
    c = cube_directions(face, (u0 + u1) / 2, (v0 + v1) / 2)
    cos_min = np.ones(np.shape(u0))
    for uu, vv in ((u0, v0), (u0, v1), (u1, v0), (u1, v1)):
        cos_min = np.minimum(cos_min, np.sum(c * cube_directions(face, uu, vv), axis=-1))
    cos_min = np.clip(cos_min, 0.0, 1.0)
    return np.sqrt(2.0 * (1.0 - cos_min)), c


def _cube_grid_cells(s):
    edges = np.linspace(-1.0, 1.0, s + 1)
    f, i, j = np.meshgrid(np.arange(3), np.arange(s), np.arange(s), indexing="ij")
    f, i, j = f.ravel(), i.ravel(), j.ravel()
    return f, edges[i], edges[i + 1], edges[j], edges[j + 1]


@dataclass
class GrassmannNet:
    l: int
    N: int
    subspaces: list
    covering_radius: float
    mode: str  # "certified" | "sampled"

    def to_dict(self):
        return {
            "l": self.l,
            "N": self.N,
            "mode": self.mode,
            "covering_radius": self.covering_radius,
            "frames": [S.frame.tolist() for S in self.subspaces],
        }

    def to_json(self):
        return json.dumps(self.to_dict())


def gr_net(l: int, N: int, covering_radius: float, mode: str = "certified", seed=0,
           max_size: int = 20_000, probes: int = 2_000) -> GrassmannNet:
    if not 0 <= l <= N:
        raise GeometryError("need 0 <= l <= N")
    if not covering_radius > 0:
        raise GeometryError("covering radius must be positive")
    if l in (0, N):
        return GrassmannNet(l, N, [Subspace.zero(N) if l == 0 else Subspace.full(N)], 0.0, "certified")
    if mode == "certified":
        if N == 2:
            m = max(1, math.ceil(math.pi / (4.0 * math.asin(min(covering_radius / 2.0, 1.0)))))
            thetas = np.arange(m) * math.pi / m
            subs = [Subspace(d[None, :]) for d in angle_directions(thetas)]
            return GrassmannNet(l, N, subs, float(angle_cell_radius(math.pi / m)), "certified")
        if N == 3:
            s = 1
            while True:
                f, u0, u1, v0, v1 = _cube_grid_cells(s)
                rad, centers = square_cell_radius(f, u0, u1, v0, v1)
                if rad.max() <= covering_radius:
                    break
                s *= 2
            if l == 1:
                subs = [Subspace(c[None, :]) for c in centers]
            else:
                subs = [Subspace(c[None, :]).complement() for c in centers]
            return GrassmannNet(l, N, subs, float(rad.max()), "certified")
        raise GeometryError("certified nets exist only for N <= 3; use mode='sampled'")
    if mode != "sampled":
        raise GeometryError(f"unknown net mode {mode!r}")
    rng = make_rng(seed)
    probe = random_frames(rng, probes, l, N)
    frames = random_frames(rng, 64, l, N)
    while True:
        disp = _sampled_dispersion(frames, probe)
        if disp <= covering_radius or len(frames) >= max_size:
            break
        frames = np.concatenate([frames, random_frames(rng, len(frames), l, N)])
    return GrassmannNet(l, N, [Subspace(F) for F in frames], float(disp), "sampled")


def _sampled_dispersion(frames, probe):
    # largest distance from a probe subspace to its nearest net element
    best = np.full(len(probe), np.inf)
    for F in frames:
        M = np.einsum("pij,kj->pik", probe, F)
        cos_t = np.clip(np.linalg.svd(M, compute_uv=False).min(axis=-1), 0.0, 1.0)
        best = np.minimum(best, np.sqrt(2.0 * (1.0 - cos_t)))
    return float(best.max())


def batch_gr_distance(F1, F2) -> np.ndarray:
    """Grassmann distances between stacks of equal-dimensional frames."""
    M = np.einsum("...ij,...kj->...ik", F1, F2)
    cos_t = np.clip(np.linalg.svd(M, compute_uv=False).min(axis=-1), 0.0, 1.0)
    resid = F1 - np.einsum("...ik,...kj->...ij", M, F2)
    sin_t = np.minimum(np.linalg.norm(resid, ord=2, axis=(-2, -1)), 1.0)
    return _half_chord(sin_t, cos_t)
