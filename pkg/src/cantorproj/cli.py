"""Command-line driver.

Exit codes: 0 success or PASS, 1 a FAIL report was written, 2 usage error,
3 internal or budget error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import constructions as cons
from . import grassmann as gr
from .ball_system import Ball, BallTree, CodedEmbedding, ReglueError, hausdorff_between, reglue_embedding, rho, standard_cantor_in_ball
from .geom_core import GeometryError, as_points, make_rng
from .projection_cert import lambda_certified, verify_component_bound, verify_Zk
from .svg import leaves_svg

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ERROR = 0, 1, 2, 3

COMMANDS = ("gen", "typical", "zk", "avoid-point", "avoid-isolated", "lambda", "project",
            "surjection", "densify", "reglue", "distance", "audit")


@dataclass
class RunConfig:
    command: str
    dim: int | None = None
    depth: int = 4
    eps: float | None = None
    k: int = 1
    kmax: int = 1
    seed: int = 0
    tol: float = 1e-3
    samples: int = 10_000
    mode: str = "certified"
    inputs: dict = field(default_factory=dict)
    out: str | None = None
    csv: str | None = None
    svg: str | None = None
    extra: dict = field(default_factory=dict)


def _positive(kind):
    def conv(s):
        v = kind(s)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v
    return conv


def _build_parser():
    p = argparse.ArgumentParser(prog="cantorproj", description="Certified Cantor-set projection toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, eps=False, k=False, inp=True):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--depth", type=int, default=4)
        sp.add_argument("--out")
        sp.add_argument("--svg")
        if inp:
            sp.add_argument("--in", dest="inp", required=True, help="BallTree JSON")
        if eps:
            sp.add_argument("--eps", type=_positive(float), required=True)
        if k:
            sp.add_argument("--k", type=_positive(int), default=1)

    sp = sub.add_parser("gen", help="standard Cantor system in a ball")
    common(sp, inp=False)
    sp.add_argument("--dim", type=_positive(int), required=True)
    sp.add_argument("--radius", type=_positive(float), default=1.0)

    sp = sub.add_parser("typical", help="compose all constructions for k = 1..kmax")
    common(sp, eps=True, inp=False)
    sp.add_argument("--in", dest="inp")
    sp.add_argument("--dim", type=_positive(int), default=2)
    sp.add_argument("--kmax", type=_positive(int), default=1)
    sp.add_argument("--no-reuse", action="store_true")

    sp = sub.add_parser("zk", help="perturb into Z_k and certify")
    common(sp, eps=True, k=True)
    sp.add_argument("--mode", choices=("certified", "sampled"), default="certified")

    sp = sub.add_parser("avoid-point", help="no single-point projections")
    common(sp, eps=True)

    sp = sub.add_parser("avoid-isolated", help="no 1/k-isolated projected points")
    common(sp, eps=True, k=True)

    sp = sub.add_parser("lambda", help="certified bracket for lambda(A)")
    sp.add_argument("--points", required=True)
    sp.add_argument("--tol", type=_positive(float), default=1e-3)
    sp.add_argument("--budget", type=_positive(int), default=1_000_000)
    sp.add_argument("--out")

    sp = sub.add_parser("project", help="project leaves to a subspace")
    common(sp)
    _subspace_args(sp)

    sp = sub.add_parser("surjection", help="Cantor set projecting onto a net")
    common(sp, inp=False)
    sp.add_argument("--points", required=True, help="net points (frame or ambient coordinates)")
    _subspace_args(sp)

    sp = sub.add_parser("densify", help="pieces parallel to a subspace")
    common(sp, eps=True)
    _subspace_args(sp)

    sp = sub.add_parser("reglue", help="recode an embedding onto a nearby target")
    common(sp, eps=True)
    sp.add_argument("--target", required=True)

    sp = sub.add_parser("distance", help="Hausdorff interval between two trees")
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--out")

    sp = sub.add_parser("audit", help="component bound for delta-balls around points")
    sp.add_argument("--points", required=True)
    sp.add_argument("--delta", type=_positive(float), required=True)
    sp.add_argument("--mode", choices=("certified", "sampled"), default="certified")
    sp.add_argument("--samples", type=_positive(int), default=10_000)
    sp.add_argument("--tol", dest="audit_tol", type=_positive(float))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.add_argument("--csv")
    return p


def _subspace_args(sp):
    sp.add_argument("--frame", help="JSON file with an orthonormal frame (rows)")
    sp.add_argument("--dim", type=_positive(int), help="ambient dimension for a random subspace")
    sp.add_argument("--ldim", type=int, help="dimension of a random subspace")


def parse_config(argv) -> RunConfig:
    """Parse and validate; raises SystemExit(2) on usage errors."""
    parser = _build_parser()
    ns = parser.parse_args(argv)
    d = vars(ns).copy()
    cfg = RunConfig(command=d.pop("command"))
    for name in ("dim", "depth", "eps", "k", "kmax", "seed", "tol", "samples", "mode", "out", "csv", "svg"):
        if name in d:
            v = d.pop(name)
            if v is not None:
                setattr(cfg, name, v)
    for name in ("inp", "points", "target", "a", "b", "frame"):
        if d.get(name) is not None:
            path = Path(d[name])
            if not path.is_file():
                parser.error(f"file not found: {path}")
            cfg.inputs[name] = str(path)
        d.pop(name, None)
    if cfg.depth < 0:
        parser.error("--depth must be nonnegative")
    cfg.extra = d
    return cfg


# ---------------------------------------------------------------------------

def _load_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _load_tree(path) -> BallTree:
    d = _load_json(path)
    return BallTree.from_dict(d["tree"] if "tree" in d else d)


def _subspace(cfg, N=None) -> gr.Subspace:
    if "frame" in cfg.inputs:
        d = _load_json(cfg.inputs["frame"])
        return gr.Subspace(np.asarray(d["frame"] if isinstance(d, dict) else d, dtype=float))
    N = N or cfg.dim
    l = cfg.extra.get("ldim")
    if N is None or l is None:
        raise GeometryError("give --frame, or --ldim (and --dim when there is no input tree)")
    return gr.random_subspace(l, N, cfg.seed)


def _emit(cfg, payload):
    s = json.dumps(payload, sort_keys=True, indent=1) + "\n"
    if cfg.out:
        Path(cfg.out).write_text(s, encoding="utf-8")
    else:
        sys.stdout.write(s)


def _svg(cfg, centers, radii=None):
    if cfg.svg:
        Path(cfg.svg).write_text(leaves_svg(centers, radii), encoding="utf-8")


def _tree_svg(cfg, T: BallTree):
    if not cfg.svg:
        return
    C, r = T.leaf_centers, T.leaf_radii
    if T.dim == 3:
        C = C[:, :2]  # view along the last axis
    if T.dim <= 3:
        _svg(cfg, C, r)


def execute(cfg: RunConfig) -> int:
    try:
        return _HANDLERS[cfg.command](cfg)
    except cons.BudgetError as e:
        _emit(cfg, {"status": "ERROR", "error": str(e), "ledger": e.ledger})
        return EXIT_ERROR
    except (GeometryError, ValueError, KeyError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_ERROR


def _gen(cfg):
    rng = make_rng(cfg.seed)
    T = standard_cantor_in_ball(Ball(np.zeros(cfg.dim), cfg.extra["radius"]), cfg.depth,
                                direction=rng.standard_normal(cfg.dim))
    _emit(cfg, {"tree": T.to_dict()})
    _tree_svg(cfg, T)
    return EXIT_OK


def _typical(cfg):
    if "inp" in cfg.inputs:
        X0 = _load_tree(cfg.inputs["inp"])
    else:
        X0 = standard_cantor_in_ball(Ball(np.zeros(cfg.dim), 1.0), cfg.depth, seed=cfg.seed)
    K, bundle = cons.typical_cantor(X0, cfg.eps, cfg.kmax, cfg.seed, cfg.depth, reuse=not cfg.extra["no_reuse"])
    rep = cons.verify_bundle(bundle, K, X0, seed=cfg.seed)
    _emit(cfg, {"status": "PASS" if rep["passed"] else "FAIL", "bundle": bundle.to_dict(),
                "verification": rep, "tree": K.to_dict()})
    _tree_svg(cfg, K)
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def _zk(cfg):
    X = _load_tree(cfg.inputs["inp"])
    K, cert, bounds = cons.into_Zk(X, cfg.eps, cfg.k, cfg.seed, cfg.depth)
    rep = verify_Zk(cert, K, mode=cfg.mode, seed=cfg.seed)
    _emit(cfg, {"status": "PASS" if rep.passed else "FAIL", "certificate": cert.to_dict(), "delta_bounds": bounds,
                "report": rep.to_dict(), "dH": hausdorff_between(X, K).to_dict(), "tree": K.to_dict()})
    _tree_svg(cfg, K)
    return EXIT_OK if rep.passed else EXIT_FAIL


def _robust(cfg, cert):
    rng = make_rng(cfg.seed)
    Y = cons.jitter_leaves(cert.K, cert.delta / 2, rng)
    checks = {"one_point": cons.audit_one_point(cert, Y, rng)} if cert.kind == "no-point-projection" \
        else {"structure": cons.cluster_audit(cert, Y)}
    ok = all(c["ok"] for c in checks.values())
    _emit(cfg, {"status": "PASS" if ok else "FAIL", "certificate": cert.to_dict(), "jitter_audit": checks,
                "tree": cert.K.to_dict()})
    _tree_svg(cfg, cert.K)
    return EXIT_OK if ok else EXIT_FAIL


def _avoid_point(cfg):
    X = _load_tree(cfg.inputs["inp"])
    return _robust(cfg, cons.avoid_one_point_projections(X, cfg.eps, cfg.seed, cfg.depth))


def _avoid_isolated(cfg):
    X = _load_tree(cfg.inputs["inp"])
    return _robust(cfg, cons.avoid_isolated_projections(X, cfg.eps, cfg.k, cfg.seed, cfg.depth))


def _lambda(cfg):
    A = as_points(_load_json(cfg.inputs["points"]))
    b = lambda_certified(A, cfg.tol, cfg.extra["budget"])
    _emit(cfg, {"status": "PASS", **b.to_dict()})
    return EXIT_OK


def _project(cfg):
    X = _load_tree(cfg.inputs["inp"])
    L = _subspace(cfg, X.dim)
    P = L.coords(X.leaf_centers)
    _emit(cfg, {"subspace": L.to_dict(), "points": P.tolist(), "leaf_radius": X.leaf_radius})
    if cfg.svg and L.dim <= 2:
        _svg(cfg, P, X.leaf_radii)
    return EXIT_OK


def _surjection(cfg):
    L = _subspace(cfg)
    Y = np.asarray(_load_json(cfg.inputs["points"]), dtype=float)
    if Y.ndim == 2 and Y.shape[1] == L.dim and L.dim != L.ambient:
        Y = Y @ L.frame
    X = cons.graph_surjection_cantor(Y, L, cfg.depth, cfg.seed)
    defect = cons.projection_defect(X, L, Y)
    ok = defect <= X.leaf_radius
    _emit(cfg, {"status": "PASS" if ok else "FAIL", "defect": defect, "leaf_radius": X.leaf_radius,
                "subspace": L.to_dict(), "tree": X.to_dict()})
    _tree_svg(cfg, X)
    return EXIT_OK if ok else EXIT_FAIL


def _densify(cfg):
    X = _load_tree(cfg.inputs["inp"])
    L = _subspace(cfg, X.dim)
    K = cons.densify_for_L(X, cfg.eps, L, cfg.depth, cfg.seed)
    _emit(cfg, {"status": "PASS", "dH": hausdorff_between(X, K).to_dict(), "subspace": L.to_dict(),
                "tree": K.to_dict()})
    _tree_svg(cfg, K)
    return EXIT_OK


def _reglue(cfg):
    f = CodedEmbedding.from_tree(_load_tree(cfg.inputs["inp"]))
    K = _load_tree(cfg.inputs["target"])
    try:
        g = reglue_embedding(f, K, cfg.eps)
    except ReglueError as e:
        _emit(cfg, {"status": "FAIL", "error": str(e), "delta": e.delta})
        return EXIT_FAIL
    d = rho(f, g)
    ok = d < cfg.eps
    _emit(cfg, {"status": "PASS" if ok else "FAIL", "rho": d, "code": g.code, "meta": g.meta})
    return EXIT_OK if ok else EXIT_FAIL


def _distance(cfg):
    iv = hausdorff_between(_load_tree(cfg.inputs["a"]), _load_tree(cfg.inputs["b"]))
    _emit(cfg, iv.to_dict())
    return EXIT_OK


def _audit(cfg):
    A = as_points(_load_json(cfg.inputs["points"]))
    rep = verify_component_bound(A, cfg.extra["delta"], cfg.mode, cfg.samples, cfg.seed,
                                 tol=cfg.extra["audit_tol"], keep_samples=bool(cfg.csv))
    _emit(cfg, rep.to_dict())
    if cfg.csv:
        Path(cfg.csv).write_text(rep.to_csv(), encoding="utf-8")
    return EXIT_OK if rep.passed else EXIT_FAIL


_HANDLERS = {
    "gen": _gen, "typical": _typical, "zk": _zk, "avoid-point": _avoid_point, "avoid-isolated": _avoid_isolated,
    "lambda": _lambda, "project": _project, "surjection": _surjection, "densify": _densify,
    "reglue": _reglue, "distance": _distance, "audit": _audit,
}


def main(argv=None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    return execute(cfg)


if __name__ == "__main__":
    sys.exit(main())
