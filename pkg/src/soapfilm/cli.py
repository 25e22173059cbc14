"""
Command-line front end.

Every subcommand writes a JSON report (to ``--out`` or stdout) that embeds
the configuration and seed it ran with. Exit status: 0 on success, 1 when
the analysis ran but failed (not certified, invalid cone, audit violations),
2 on input or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .cones import construct_reference_cone, load_graph, save_graph, validate_cone_structure
from .geometry import GeometryError, LocalWindow
from .measure import (GaugeFunction, SampledSet, density_profile, monotonicity_audit, read_obj,
                      read_points_csv, write_obj, write_points_csv)

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
SEED_ENV = "SOAPFILM_SEED"


class InputError(Exception):
    pass


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, (set, tuple)):
        return sorted(o) if isinstance(o, set) else list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _load_set(path, gap, dim=2) -> SampledSet:
    if path is None:
        raise InputError("--input is required")
    if not os.path.exists(path):
        raise InputError(f"{path}: no such file")
    if path.lower().endswith(".obj"):
        return read_obj(path, gap)
    if gap is None:
        raise InputError("--gap is required for point samples")
    return read_points_csv(path, gap, dim)


def _gauge(args) -> GaugeFunction:
    if args.gauge == "zero":
        return GaugeFunction()
    if args.gauge == "power":
        return GaugeFunction("power", args.gauge_C, args.gauge_alpha)
    raise InputError(f"unknown gauge {args.gauge!r}")


def _positive(name, v):
    if v is None or not v > 0:
        raise InputError(f"{name} must be positive (got {v})")


def _budget(args):
    from .fitting import FitBudget
    return FitBudget(n_starts=args.n_starts, n_sub=args.n_sub, seed=args.seed)


# --------------------------------------------------------------------------
# subcommands; each returns (result dict, exit status)


def cmd_density(args):
    E = _load_set(args.input, args.gap)
    if args.radii:
        radii = np.asarray(args.radii, dtype=float)
    else:
        _positive("--rmin", args.rmin)
        radii = np.geomspace(args.rmin, args.rmax, args.n_radii)
    _positive("--lam", args.lam)
    prof = density_profile(E, args.center, radii, _gauge(args), args.lam)
    viol = monotonicity_audit(prof, args.slack)
    if args.csv:
        prof.to_csv(args.csv)
    rel = np.flatnonzero(prof.reliable)
    theta0 = float(prof.corrected[rel[0]]) if len(rel) else None
    res = {"profile": prof.to_json(), "violations": viol, "theta_estimate": theta0}
    return res, EXIT_FAIL if viol else EXIT_OK


def cmd_fit(args):
    from .fitting import FAMILY_1D, FAMILY_2D, beta_fit
    E = _load_set(args.input, args.gap, 1 if args.family == "1d" else 2)
    _positive("--radius", args.radius)
    fam = FAMILY_1D if args.family == "1d" else FAMILY_2D
    rep = beta_fit(E, LocalWindow(args.center, args.radius), fam, _budget(args), args.seed)
    return rep.to_json(), EXIT_OK if rep.certified else EXIT_FAIL


def cmd_classify(args):
    from .fitting import ClassificationUnavailable, classify_point
    E = _load_set(args.input, args.gap)
    _positive("--lam", args.lam)
    pts = np.asarray(args.at, dtype=float).reshape(-1, 3)
    out, status = [], EXIT_OK
    for x in pts:
        try:
            out.append(classify_point(E, x, _gauge(args), args.lam).to_json() | {"x": x.tolist()})
        except ClassificationUnavailable as exc:
            out.append({"x": x.tolist(), "label": None, "error": str(exc)})
            status = EXIT_FAIL
    return {"labels": out}, status


def cmd_certify(args):
    from .fitting import biholder_certificate
    E = _load_set(args.input, args.gap)
    _positive("--radius", args.radius)
    _positive("--eps", args.eps)
    rep = biholder_certificate(E, args.center, args.radius, args.eps, budget=_budget(args), seed=args.seed)
    return rep.to_json(), EXIT_OK if (rep.passed and rep.certified) else EXIT_FAIL


def cmd_trace(args):
    from .reifenberg import detect_center, measure_epsilons, tangent_certificate, trace_structure
    E = _load_set(args.input, args.gap, dim=1)
    _positive("--radius", args.radius)
    w = LocalWindow(args.center, args.radius)
    eps = measure_epsilons(E, w, args.depth, seed=args.seed)
    center = detect_center(E, w, seed=args.seed, return_info=True)
    tr = trace_structure(E, w, center.center, eps, args.eps_threshold, seed=args.seed)
    res = {"trace": tr.to_json(), "center_search": center.to_json()}
    if not tr.partial:
        res["tangents"] = tangent_certificate(tr, seed=args.seed)
    if args.csv:
        tr.write_tangent_csv(args.csv)
    return res, EXIT_FAIL if tr.partial else EXIT_OK


def cmd_steiner(args):
    from .steiner import lipschitz_audit, shape_from_network, shortest_network, y_retraction
    if args.points is None:
        raise InputError("--points is required")
    pts = np.asarray(args.points, dtype=float)
    if pts.size % 3 or not 1 <= pts.size // 3 <= 3:
        raise InputError("--points needs 1 to 3 triples")
    pts = pts.reshape(-1, 3)
    ball = None if args.ball is None else LocalWindow(args.ball[:3], args.ball[3])
    net = shortest_network(pts, ball)
    res = {"network": net.to_json()}
    if args.retract is not None or args.audit:
        F = shape_from_network(net, ball)
        if args.retract is not None:
            p = np.asarray(args.retract, dtype=float).reshape(-1, 3)
            res["retraction"] = {"points": p.tolist(), "images": y_retraction(F, p).tolist()}
        if args.audit:
            res["lipschitz_audit"] = lipschitz_audit(F, args.audit, args.seed)
    return res, EXIT_OK


def cmd_harmonic(args):
    from .harmonic import BoundaryCurve, great_circle_verdict, harmonic_test
    if (args.arc is None) == (args.modes is None):
        raise InputError("give exactly one of --arc and --modes")
    if args.arc is not None:
        if not os.path.exists(args.arc):
            raise InputError(f"{args.arc}: no such file")
        pts = np.loadtxt(args.arc, delimiter=",", ndmin=2, comments="#")
        rep = great_circle_verdict(pts[:, :3], args.tol, args.K)
    else:
        _positive("--T", args.T)
        rep = harmonic_test(BoundaryCurve.from_modes(args.T, args.modes), args.K, args.tol)
    if args.csv:
        rep.write_csv(args.csv)
    return rep.to_json(), EXIT_OK


def cmd_ff_project(args):
    from .skeleton import DyadicCube, projection_audit, skeleton_project
    E = _load_set(args.input, args.gap)
    cube = DyadicCube(np.asarray(args.corner, dtype=float), args.k, args.j)
    pmap, image = skeleton_project(E, cube, args.seed)
    audit = projection_audit(pmap, E, image)
    if args.image:
        write_points_csv(image, args.image)
    res = {"map": pmap.to_json(), "audit": audit.to_json()}
    ok = audit.identity_outside and audit.on_skeleton and audit.in_subcube
    return res, EXIT_OK if ok else EXIT_FAIL


def cmd_validate_cone(args):
    if not os.path.exists(args.graph):
        raise InputError(f"{args.graph}: no such file")
    rep = validate_cone_structure(load_graph(args.graph), args.eta0, args.l0)
    return rep.to_json(), EXIT_OK if rep.is_valid else EXIT_FAIL


def cmd_synth(args):
    from . import synth
    from .geometry import random_rotation
    rng = np.random.default_rng(args.seed)
    R = random_rotation(rng) if args.rotate else np.eye(3)
    kind, out = args.kind, args.output
    if kind in ("P", "Y", "T"):
        cone = construct_reference_cone(kind, frame=R)
        if args.graph_out:
            save_graph(cone.graph, args.graph_out)
        if out.lower().endswith(".obj"):
            E = synth.cone_triangles(cone, args.radius, args.max_edge)
        else:
            E = synth.cone_points(cone, args.radius, args.gap)
    elif kind == "propeller":
        E = synth.propeller_points(normal=R[:, 2], first=R[:, 0], radius=args.radius, gap=args.gap,
                                   bend_C=args.bend)
    elif kind == "annulus":
        E = synth.annulus_hole_plane(args.r_in, args.r_out, args.radius, args.max_edge)
    elif kind == "arc":
        from .harmonic import arc_sample
        p = arc_sample(args.T, lambda s: args.lift * np.sin(2 * np.pi * s), R=R)
        np.savetxt(out, p, delimiter=",", fmt="%.17g", header="x,y,z")
        return {"kind": kind, "output": out, "n_points": len(p)}, EXIT_OK
    else:
        raise InputError(f"unknown synth kind {kind!r}")
    if out.lower().endswith(".obj"):
        write_obj(E, out)
    else:
        write_points_csv(E, out)
    return {"kind": kind, "output": out, "n_points": len(E.points), "gap": E.gap}, EXIT_OK


# --------------------------------------------------------------------------
# parser


def _common_set(p, needs_center=True):
    p.add_argument("--input", help="OBJ triangles or CSV points x,y,z[,w]")
    p.add_argument("--gap", type=float, help="sampling gap (required for CSV input)")
    if needs_center:
        p.add_argument("--center", type=float, nargs=3, default=[0.0, 0.0, 0.0], metavar=("X", "Y", "Z"))


def _gauge_opts(p):
    p.add_argument("--gauge", choices=["zero", "power"], default="zero")
    p.add_argument("--gauge-C", dest="gauge_C", type=float, default=0.0)
    p.add_argument("--gauge-alpha", dest="gauge_alpha", type=float, default=1.0)
    p.add_argument("--lam", type=float, default=1.0)


def _fit_opts(p):
    p.add_argument("--n-starts", dest="n_starts", type=int, default=8)
    p.add_argument("--n-sub", dest="n_sub", type=int, default=2000)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="soapfilm", description=__doc__.strip().splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--config", help="JSON file of option defaults; command-line flags override it")
    ap.add_argument("--seed", type=int, help=f"random seed (default ${SEED_ENV} or 0)")
    ap.add_argument("--out", help="report path (default stdout)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("density", help="density profile and monotonicity audit")
    _common_set(p)
    p.add_argument("--radii", type=float, nargs="+")
    p.add_argument("--rmin", type=float)
    p.add_argument("--rmax", type=float)
    p.add_argument("--n-radii", dest="n_radii", type=int, default=12)
    p.add_argument("--slack", type=float, default=1e-3)
    p.add_argument("--csv", help="write r, theta, A series")
    _gauge_opts(p)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("fit", help="beta number and best cone in a ball")
    _common_set(p)
    p.add_argument("--radius", type=float, required=False)
    p.add_argument("--family", choices=["2d", "1d"], default="2d")
    _fit_opts(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("classify", help="P/Y/T labels from densities")
    _common_set(p, needs_center=False)
    p.add_argument("--at", type=float, nargs="+", default=[0.0, 0.0, 0.0], help="x y z [x y z ...]")
    _gauge_opts(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("certify", help="finite-sample biHolder-ball certificate")
    _common_set(p)
    p.add_argument("--radius", type=float)
    p.add_argument("--eps", type=float, default=0.05)
    _fit_opts(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("trace", help="Reifenberg trace of a 1-dimensional sample")
    _common_set(p)
    p.add_argument("--radius", type=float)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--eps-threshold", dest="eps_threshold", type=float, default=0.2)
    p.add_argument("--csv", help="write center tangents")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("steiner", help="shortest network through <= 3 points and its retraction")
    p.add_argument("--points", type=float, nargs="+", required=False, default=None)
    p.add_argument("--ball", type=float, nargs=4, metavar=("X", "Y", "Z", "R"))
    p.add_argument("--retract", type=float, nargs="+")
    p.add_argument("--audit", type=int, default=0, help="number of random pairs for the Lipschitz audit")
    p.set_defaults(func=cmd_steiner)

    p = sub.add_parser("harmonic", help="harmonic-extension test for a curve or arc sample")
    p.add_argument("--arc", help="CSV of points along a spherical arc, in order")
    p.add_argument("--modes", type=float, nargs="+", help="sine coefficients beta_1..beta_K")
    p.add_argument("--T", type=float)
    p.add_argument("--K", type=int, default=256)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--csv", help="write f and its reconstruction")
    p.set_defaults(func=cmd_harmonic)

    p = sub.add_parser("ff-project", help="Federer-Fleming projection onto the dyadic 2-skeleton")
    _common_set(p, needs_center=False)
    p.add_argument("--corner", type=float, nargs=3, default=[0.0, 0.0, 0.0])
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--j", type=int, default=2)
    p.add_argument("--image", help="write projected points as CSV")
    p.set_defaults(func=cmd_ff_project)

    p = sub.add_parser("validate-cone", help="check a cone graph against the structure rules")
    p.add_argument("--graph", required=True)
    p.add_argument("--eta0", type=float)
    p.add_argument("--l0", type=float)
    p.set_defaults(func=cmd_validate_cone)

    p = sub.add_parser("synth", help="write fixture samples")
    p.add_argument("--kind", choices=["P", "Y", "T", "propeller", "annulus", "arc"], required=True)
    p.add_argument("--output", required=True, help=".obj (triangles) or .csv (points)")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--gap", type=float, default=0.01)
    p.add_argument("--max-edge", dest="max_edge", type=float, default=0.05)
    p.add_argument("--bend", type=float, default=0.0)
    p.add_argument("--r-in", dest="r_in", type=float, default=0.4)
    p.add_argument("--r-out", dest="r_out", type=float, default=0.6)
    p.add_argument("--T", type=float, default=np.pi / 2)
    p.add_argument("--lift", type=float, default=0.05)
    p.add_argument("--rotate", action="store_true")
    p.add_argument("--graph-out", dest="graph_out", help="also write the cone graph JSON (P/Y/T)")
    p.set_defaults(func=cmd_synth)
    return ap


def _apply_config(ap, argv):
    """Parse twice: config values become defaults of the chosen subcommand."""
    args = ap.parse_args(argv)
    if args.config is None:
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    known = set(vars(args))
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise InputError(f"unknown config keys: {', '.join(unknown)}")
    sub = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    top_keys = ("seed", "out", "config")
    sub.choices[args.command].set_defaults(**{k: v for k, v in cfg.items()
                                              if k not in ("command", "func") + top_keys})
    top = {k: v for k, v in cfg.items() if k in ("seed", "out")}
    ap.set_defaults(**top)
    return ap.parse_args(argv)


def main(argv=None) -> int:
    ap = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(ap, argv)
        if args.seed is None:
            env = os.environ.get(SEED_ENV)
            try:
                args.seed = int(env) if env else 0
            except ValueError:
                raise InputError(f"${SEED_ENV} must be an integer (got {env!r})") from None
        result, status = args.func(args)
    except SystemExit as exc:  # argparse errors and --help
        return int(exc.code or 0)
    except (InputError, GeometryError, ValueError, OSError) as exc:
        print(f"soapfilm: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ArithmeticError as exc:
        print(f"soapfilm: analysis failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
    text = dumps({"command": args.command, "seed": args.seed, "config": config,
                  "status": status, "result": result})
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
