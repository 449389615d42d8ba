"""Command-line front end: ``rflab <command> ...``.

Exit codes: 0 success, 1 check failed (validation, structural count,
rejected shots), 2 usage error (unknown space, malformed coefficients,
bad configuration), 3 numerical failure (search or integration).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from . import curvature as cv
from .algebra import invariant_sym_basis, validate
from .catalog import catalog, get_entry, get_space
from .einstein import (
    DiagonalBackend,
    SearchConfig,
    SearchError,
    StructureBackend,
    einstein_point,
    find_einstein_multi,
    random_seeds,
)
from .integrate import IntegrationError, IntegratorConfig
from .io import SpaceFormatError, load_space

log = logging.getLogger("rflab")


class UsageError(Exception):
    pass


def _resolve(space_id: str):
    """(entry or None, space or None, model or None)."""
    if space_id.endswith(".json"):
        try:
            return None, load_space(space_id), None
        except (OSError, SpaceFormatError) as exc:
            raise UsageError(f"cannot load {space_id}: {exc}") from exc
    try:
        entry = get_entry(space_id)
    except KeyError as exc:
        ids = ", ".join(e.id for e in catalog())
        raise UsageError(f"unknown space {space_id!r}; known: {ids}") from exc
    space = get_space(space_id) if entry.representation == "structure_constants" else None
    return entry, space, entry.model


def _parse_coeffs(text: str, entry=None, key_space=None) -> np.ndarray:
    """Comma-separated numbers (fractions allowed) or a known_einstein tag."""
    if entry is not None and text in entry.known_einstein:
        return np.array(entry.known_einstein[text][0], dtype=float)
    try:
        vals = [float(Fraction(s.strip())) for s in text.split(",") if s.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        tags = list(entry.known_einstein) if entry is not None else []
        raise UsageError(f"malformed coefficients {text!r} (numbers or one of {tags})") from exc
    if not vals:
        raise UsageError("empty coefficient list")
    return np.array(vals)


def _backend(entry, space):
    if space is not None:
        return StructureBackend(space)
    return DiagonalBackend(entry.model)


def _dump(obj) -> None:
    json.dump(obj, sys.stdout, indent=1, sort_keys=True, default=_default)
    sys.stdout.write("\n")


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o).__name__)


def _manifest(args, outputs, config: dict) -> dict:
    cfg = json.dumps(config, sort_keys=True, default=_default)
    return {
        "command": args.command,
        "argv": sys.argv[1:],
        "space": getattr(args, "space", None),
        "config": config,
        "config_hash": hashlib.sha256(cfg.encode()).hexdigest()[:16],
        "tool_version": __version__,
        "outputs": [str(p) for p in outputs],
    }


# ----------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    entry, space, model = _resolve(args.space)
    if space is None:
        # scalar model: check the documented values at the known points
        out = {"space": args.space, "representation": "diagonal_scalar_model", "checks": {}}
        be = DiagonalBackend(model)
        ok = True
        for tag, (y, prov, _) in entry.known_einstein.items():
            r = float(np.linalg.norm(be.residual(y)))
            out["checks"][f"einstein_residual[{tag}]"] = r
            ok &= r <= 1e-8
        out["passed"] = ok
        _dump(out)
        return 0 if ok else 1
    rep = validate(space, args.tol)
    d = rep.as_dict()
    d["space"] = args.space
    _dump(d)
    return 0 if rep.passed else 1


def cmd_einstein(args) -> int:
    entry, space, model = _resolve(args.space)
    be = _backend(entry, space)
    seeds = [np.asarray(v[0], float) for v in entry.known_einstein.values()] if entry else []
    seeds = [s for s in seeds if s.shape == (be.n,)]
    seeds += random_seeds(be.n, args.seeds, np.random.default_rng(args.rng))
    perms = entry.symmetry_permutations if entry else ()
    cfg = SearchConfig(max_iter=args.max_iter)
    pts = find_einstein_multi(be, seeds, perms, cfg)
    if not pts:
        print("no Einstein metric found from the given seeds", file=sys.stderr)
        return 3
    _dump([p.to_dict() for p in pts])
    return 0


def cmd_coindex(args) -> int:
    entry, space, model = _resolve(args.space)
    be = _backend(entry, space)
    y = _parse_coeffs(args.at, entry)
    if y.shape != (be.n,):
        raise UsageError(f"expected {be.n} coefficients, got {len(y)}")
    p = einstein_point(be, y, SearchConfig(null_tol=args.null_tol))
    d = p.to_dict()
    if p.residual > args.einstein_tol:
        d["warning"] = f"residual {p.residual:.3e} exceeds {args.einstein_tol:g}: not an Einstein point"
        _dump(d)
        return 1
    _dump(d)
    return 0


def _integrator_config(args) -> IntegratorConfig:
    try:
        return IntegratorConfig(rel_tol=args.rel_tol, abs_tol=args.abs_tol, max_step=args.max_step)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_flow(args) -> int:
    from .flows import ProjectedFlowContext, normalized_flow, projected_flow, ricci_flow

    entry, space, model = _resolve(args.space)
    if space is None:
        raise UsageError("flows need structure constants; scalar models are not supported")
    if args.t1 == args.t0:
        raise UsageError("--t1 must differ from --t0")
    direction = "forward" if args.t1 > args.t0 else "backward"
    span = abs(args.t1 - args.t0)
    cfg = _integrator_config(args)
    x = _parse_coeffs(args.start, entry)
    context = {}
    try:
        if args.kind in ("rf", "nrf"):
            basis = invariant_sym_basis(space)
            if x.shape != (len(basis),):
                raise UsageError(f"expected {len(basis)} coefficients for {args.space}")
            if np.linalg.eigvalsh(basis.metric(x))[0] <= 0:
                raise UsageError("start metric is not positive definite")
            if args.kind == "rf":
                tr = ricci_flow(space, x, cfg, direction, span, basis)
            else:
                P = basis.metric(x)
                x = x / np.linalg.det(P) ** (1.0 / len(P))
                tr = normalized_flow(space, x, cfg, direction, span, basis)
        else:
            if not space.has_fibration:
                raise UsageError("projected flow needs a fibration (toral split)")
            if args.base is None:
                raise UsageError("--base is required for --kind prf")
            base = space.base_space()
            bb = invariant_sym_basis(base)
            base_entry = get_entry(entry.fibration_of) if entry and entry.fibration_of in [e.id for e in catalog()] else entry
            yb = _parse_coeffs(args.base, base_entry)
            if yb.shape != (len(bb),):
                raise UsageError(f"expected {len(bb)} base coefficients")
            try:
                ctx = ProjectedFlowContext.from_base_metric(space, bb.metric(yb))
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
            if x.shape != (len(ctx.basis),):
                raise UsageError(f"expected {len(ctx.basis)} submersion coefficients")
            P0 = ctx.normalize(ctx.basis.metric(x))
            tr = projected_flow(ctx, P0, cfg, direction, span)
            context = ctx.as_dict()
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return 3
    tr.times = tr.times + args.t0
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    csv_path = out.with_suffix(".csv")
    man_path = out.with_suffix(".json")
    tr.to_csv(csv_path)
    man = _manifest(args, [csv_path, man_path], {"kind": args.kind, "from": x, "base": args.base,
                                                 "t0": args.t0, "t1": args.t1, "integrator": cfg.as_dict()})
    man.update({"status": tr.status, "n_samples": len(tr), "context": context, "columns": tr.header()})
    with open(man_path, "w") as fh:
        json.dump(man, fh, indent=1, sort_keys=True, default=_default)
        fh.write("\n")
    _dump({"csv": str(csv_path), "manifest": str(man_path), "status": tr.status, "n_samples": len(tr)})
    return 0


def cmd_ancient(args) -> int:
    from .ancient import (
        PreconditionError,
        ShootConfig,
        StructuralError,
        family_scan,
        linearize_at_collapse,
        shoot_ancient,
        sphere_grid,
        verify_collapse,
    )
    from .flows import ProjectedFlowContext

    entry, space, model = _resolve(args.fibration)
    if space is None or not space.has_fibration:
        raise UsageError(f"{args.fibration} is not a fibration")
    base = space.base_space()
    bb = invariant_sym_basis(base)
    base_entry = None
    if entry is not None and entry.fibration_of:
        try:
            base_entry = get_entry(entry.fibration_of)
        except KeyError:
            base_entry = None
    yb = _parse_coeffs(args.base_einstein, base_entry or entry)
    if yb.shape != (len(bb),):
        raise UsageError(f"expected {len(bb)} base coefficients")
    try:
        ctx = ProjectedFlowContext.from_base_metric(space, bb.metric(yb))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not 1e-8 <= args.eps <= 1e-3:
        raise UsageError("--eps must lie in [1e-8, 1e-3]")
    try:
        fp = linearize_at_collapse(space, ctx)
    except StructuralError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    cfg = ShootConfig(integrator=_integrator_config(args), forward_horizon=args.forward)
    k = fp.unstable.shape[1]
    if args.dir is not None:
        c = _parse_coeffs(args.dir)
        if c.shape != (k,):
            raise UsageError(f"expected {k} direction coefficients")
        grid = [c / np.linalg.norm(c)]
    else:
        grid = sphere_grid(fp, args.scan, seed=args.rng)
    try:
        scan = family_scan(fp, grid, args.eps, cfg)
    except PreconditionError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        for rec, cand in zip(scan.records(), scan.candidates):
            if hasattr(cand, "backward") and cand.accepted and args.trajectories:
                p = out.with_name(f"{out.stem}_{rec['index']:04d}.csv")
                cand.backward.to_csv(p)
                rec["trajectory_csv"] = str(p)
            if hasattr(cand, "backward") and cand.accepted:
                rec["verification"] = verify_collapse(cand, fp)
            fh.write(json.dumps(rec, sort_keys=True, default=_default) + "\n")
    report = {
        "fibration": args.fibration,
        "linearization": fp.summary(),
        "shots": len(grid),
        "accepted": scan.accepted,
        "rejected_precondition": len(scan.rejected_precondition),
        "acceptance_dimension": scan.family_dim,
        "catalog": str(out),
    }
    _dump(report)
    return 0 if scan.accepted else 1


def cmd_plotdata(args) -> int:
    path = Path(args.trajectory)
    if not path.exists():
        raise UsageError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    cols = args.columns.split(",") if args.columns else header
    missing = [c for c in cols if c not in header]
    if missing:
        raise UsageError(f"unknown columns {missing}; available: {header}")
    idx = [header.index(c) for c in cols]
    step = max(1, int(np.ceil(len(data) / args.max_points))) if args.max_points else 1
    keep = list(range(0, len(data), step))
    if data and keep[-1] != len(data) - 1:
        keep.append(len(data) - 1)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(cols)
    for i in keep:
        w.writerow([data[i][j] for j in idx])
    return 0


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rflab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"rflab {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check the algebraic hypotheses of a space")
    s.add_argument("space", help="catalog id or path to a JSON space definition")
    s.add_argument("--tol", type=float, default=1e-9)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("einstein", help="multi-seed Einstein metric search")
    s.add_argument("space")
    s.add_argument("--seeds", type=int, default=8, help="random seeds in addition to catalog points")
    s.add_argument("--rng", type=int, default=0)
    s.add_argument("--max-iter", type=int, default=200)
    s.set_defaults(func=cmd_einstein)

    s = sub.add_parser("coindex", help="Hessian spectrum and coindex at an Einstein metric")
    s.add_argument("space")
    s.add_argument("--at", required=True, help="coefficients 'a,b,...' or a catalog tag such as 'ke'")
    s.add_argument("--null-tol", type=float, default=1e-6)
    s.add_argument("--einstein-tol", type=float, default=1e-8)
    s.set_defaults(func=cmd_coindex)

    def integ(s):
        s.add_argument("--rel-tol", type=float, default=1e-10)
        s.add_argument("--abs-tol", type=float, default=1e-10)
        s.add_argument("--max-step", type=float, default=0.1)

    s = sub.add_parser("flow", help="integrate rf, nrf or prf and write CSV + manifest")
    s.add_argument("space")
    s.add_argument("--kind", choices=["rf", "nrf", "prf"], required=True)
    s.add_argument("--from", dest="start", required=True, help="start coefficients in the invariant basis")
    s.add_argument("--base", help="base Einstein coefficients (prf)")
    s.add_argument("--t0", type=float, default=0.0)
    s.add_argument("--t1", type=float, required=True)
    s.add_argument("--out", default="trajectory", help="output prefix (.csv and .json are added)")
    integ(s)
    s.set_defaults(func=cmd_flow)

    s = sub.add_parser("ancient", help="linearize at the collapsed fixed point and shoot")
    s.add_argument("fibration")
    s.add_argument("--base-einstein", required=True, help="base coefficients or tag (e.g. 'ke')")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--scan", type=int, default=4, help="number of random directions")
    g.add_argument("--dir", help="unit direction in the unstable space")
    s.add_argument("--eps", type=float, default=1e-4)
    s.add_argument("--rng", type=int, default=0)
    s.add_argument("--forward", type=float, default=10.0, help="forward horizon")
    s.add_argument("--out", default="ancient.jsonl")
    s.add_argument("--trajectories", action="store_true", help="also write backward trajectories as CSV")
    integ(s)
    s.set_defaults(func=cmd_ancient)

    s = sub.add_parser("plotdata", help="downsampled columns of a trajectory CSV")
    s.add_argument("trajectory")
    s.add_argument("--columns", help="comma-separated column names (default: all)")
    s.add_argument("--max-points", type=int, default=500)
    s.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rflab {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except SearchError as exc:
        print(f"rflab {args.command}: search failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
