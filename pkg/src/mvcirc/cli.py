"""Command-line front end: run sweeps, verification suites, FSS analysis,
and tape replay.

Exit codes: 0 success, 1 validation error, 2 verification failure,
3 I/O error.  Configuration comes from a JSON file (--config), validated
against CONFIG_SCHEMA, with command-line flags taking precedence.  The
default output directory is $MVCIRC_OUTDIR or the working directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import jsonschema
import numpy as np

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_VERIFICATION = 2
EXIT_IO = 3


class ValidationFailure(Exception):
    pass


class VerificationFailure(Exception):
    pass


CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "mvcirc run configuration",
    "type": "object",
    "properties": {
        "engine": {"enum": ["cluster", "mvc", "percolation"]},
        "dimension": {"enum": [1, 2]},
        "sizes": {"type": "array", "items": {"type": "integer", "minimum": 3},
                  "minItems": 1},
        "p_grid": {"type": "array",
                   "items": {"type": "number", "minimum": 0, "maximum": 1},
                   "minItems": 1},
        "n_traj": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "sweeps": {"type": ["integer", "null"], "minimum": 1},
        "initial": {"type": ["string", "null"],
                    "enum": ["zero", "plus", "up", "random", None]},
        "sampling": {"enum": ["final", "timeavg"]},
        "burn_in": {"type": ["integer", "null"], "minimum": 0},
        "stride": {"type": "integer", "minimum": 1},
        "site_order": {"enum": ["raster", "random"]},
        "workers": {"type": "integer", "minimum": 0},
    },
    "required": ["engine", "dimension", "sizes", "p_grid", "n_traj", "seed"],
    "additionalProperties": False,
}


def _parse_floats(text: str) -> tuple[float, ...]:
    """Comma list '0.1,0.2' or range 'start:stop:step' (stop inclusive)."""
    if ":" in text:
        parts = [float(v) for v in text.split(":")]
        if len(parts) != 3:
            raise ValidationFailure("range syntax is start:stop:step")
        start, stop, step = parts
        n = int(round((stop - start) / step)) + 1
        vals = [round(start + k * step, 12) for k in range(max(n, 0))]
        return tuple(v for v in vals if v <= stop + 1e-12)
    return tuple(float(v) for v in text.split(","))


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _out_dir(args) -> str:
    return args.out or os.environ.get("MVCIRC_OUTDIR", ".")


def _build_run_config(args):
    from .ensemble import RunConfig

    doc: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise OSError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationFailure(f"config is not valid JSON: {exc}")
    overrides = {
        "engine": args.engine,
        "dimension": args.dim,
        "sizes": list(_parse_ints(args.L)) if args.L else None,
        "p_grid": list(_parse_floats(args.p)) if args.p else None,
        "n_traj": args.traj,
        "seed": args.seed,
        "sweeps": args.sweeps,
        "initial": args.initial,
        "sampling": args.sampling,
        "workers": args.workers,
    }
    for key, val in overrides.items():
        if val is not None:
            doc[key] = val
    doc.setdefault("seed", 0)
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ValidationFailure(f"config schema violation: {exc.message}")
    doc["sizes"] = tuple(doc["sizes"])
    doc["p_grid"] = tuple(doc["p_grid"])
    try:
        return RunConfig(**doc)
    except ValueError as exc:
        raise ValidationFailure(str(exc))


def cmd_run(args) -> int:
    config = _build_run_config(args)
    from .ensemble import run_sweep

    result = run_sweep(config)
    out = _out_dir(args)
    stem = args.stem or f"{config.engine}_{config.dimension}d_{config.config_hash()}"
    csv_path, meta_path = result.write(out, stem)
    print(f"wrote {csv_path}")
    print(f"wrote {meta_path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    report: dict = {"suite": args.suite}
    if args.suite == "channels":
        from .dense import verify_relations

        sizes = _parse_ints(args.n) if args.n else (1, 2, 4)
        reports = [verify_relations(n, trials=args.trials, seed=args.seed)
                   for n in sizes]
        report["reports"] = reports
        report["passed"] = all(r["passed"] for r in reports)
    elif args.suite == "equivalence":
        if args.against != "mvc":
            raise ValidationFailure("only --against mvc is supported")
        from .dense import verify_reduction

        sizes = _parse_ints(args.n) if args.n else (4, 5)
        ps = _parse_floats(args.p) if args.p else (0.2, 0.5, 0.8)
        reports = [verify_reduction(n, p, sweeps=args.sweeps or 6,
                                    n_schedules=args.schedules,
                                    seed=args.seed)
                   for n in sizes for p in ps]
        report["reports"] = reports
        report["passed"] = all(r["passed"] for r in reports)
    elif args.suite == "oracles":
        from .verify import engine_equivalence

        dims = _parse_ints(args.dims) if args.dims else (1,)
        sizes = _parse_ints(args.L) if args.L else (12,)
        ps = _parse_floats(args.p) if args.p else tuple(
            round(0.1 * k, 10) for k in range(1, 10))
        reports = []
        for dim, L in zip(dims, sizes):
            reports.append(engine_equivalence(
                dimension=dim, L=L, sweeps=args.sweeps or 2 * L,
                n_tapes=args.tapes, p_values=ps, seed=args.seed))
        report["reports"] = reports
        report["passed"] = all(r["passed"] for r in reports)
    else:
        raise ValidationFailure(f"unknown verify suite {args.suite!r}")
    text = json.dumps(report, indent=2, default=_json_default)
    print(text)
    if args.out:
        os.makedirs(_out_dir(args), exist_ok=True)
        path = os.path.join(_out_dir(args), f"verify_{args.suite}.json")
        with open(path, "w") as fh:
            fh.write(text)
    if not report["passed"]:
        raise VerificationFailure(f"verify {args.suite} failed")
    return EXIT_OK


def cmd_analyze(args) -> int:
    from .ensemble import read_sweep_csv
    from .fss import (curves_from_rows, find_crossing, optimize_collapse,
                      rescaled_points)

    try:
        rows = read_sweep_csv(args.input)
    except OSError as exc:
        raise OSError(f"cannot read sweep CSV: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise ValidationFailure(f"malformed sweep CSV: {exc}")
    try:
        curves = curves_from_rows(rows, args.observable)
    except ValueError as exc:
        raise ValidationFailure(str(exc))
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    if args.mode == "crossing":
        try:
            res = find_crossing(curves, n_boot=args.boot, seed=args.seed)
        except ValueError as exc:
            raise VerificationFailure(f"crossing analysis failed: {exc}")
        doc = {"mode": "crossing", "observable": args.observable,
               "p_c": res.p_c, "error": res.error, "spread": res.spread,
               "pair_crossings": {f"{a}x{b}": v for (a, b), v
                                  in res.pair_crossings.items()}}
        path = os.path.join(out, "crossing.json")
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
        print(json.dumps(doc, indent=2))
        print(f"wrote {path}")
    else:
        res = optimize_collapse(curves,
                                fix_nu=args.fix_nu, fix_beta=args.fix_beta,
                                n_boot=args.boot, seed=args.seed)
        doc = {"mode": "collapse", "observable": args.observable,
               **res.to_dict()}
        path = os.path.join(out, "collapse.json")
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
        pts = rescaled_points(curves, res.p_c, res.nu, res.beta)
        pts_path = os.path.join(out, "collapse_points.csv")
        with open(pts_path, "w") as fh:
            fh.write("L,x,y,yerr\n")
            for L, x, y, err in pts:
                fh.write(f"{int(L)},{x!r},{y!r},{err!r}\n")
        print(json.dumps(doc, indent=2))
        print(f"wrote {path}")
        print(f"wrote {pts_path}")
    return EXIT_OK


def cmd_replay(args) -> int:
    from .schedule import ReplayMismatch, TapeFormatError, read_tape
    from .verify import replay_tape

    try:
        tape = read_tape(args.tape)
    except OSError as exc:
        raise OSError(f"cannot read tape: {exc}") from exc
    except TapeFormatError as exc:
        raise ValidationFailure(str(exc))
    try:
        report = replay_tape(tape, args.engine)
    except ReplayMismatch as exc:
        raise VerificationFailure(f"replay mismatch: {exc}")
    print(json.dumps(report, indent=2, default=_json_default))
    return EXIT_OK


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mvcirc",
        description="Monte Carlo suite for the adaptive X/ZZ measurement "
                    "circuit with majority feedback")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an ensemble sweep")
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--engine", choices=["cluster", "mvc", "percolation"])
    run.add_argument("--dim", type=int, choices=[1, 2])
    run.add_argument("--L", help="comma list of sizes, e.g. 32,64,128")
    run.add_argument("--p", help="comma list or start:stop:step range")
    run.add_argument("--traj", type=int, help="trajectories per point")
    run.add_argument("--sweeps", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--initial", choices=["zero", "plus", "up", "random"])
    run.add_argument("--sampling", choices=["final", "timeavg"])
    run.add_argument("--workers", type=int)
    run.add_argument("--out", help="output directory")
    run.add_argument("--stem", help="output file stem")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run a verification suite")
    ver.add_argument("suite", choices=["channels", "oracles", "equivalence"])
    ver.add_argument("--against", default="mvc")
    ver.add_argument("--n", help="comma list of qubit counts")
    ver.add_argument("--trials", type=int, default=200)
    ver.add_argument("--schedules", type=int, default=100)
    ver.add_argument("--sweeps", type=int)
    ver.add_argument("--L", help="comma list of sizes")
    ver.add_argument("--dims", help="comma list of dimensions")
    ver.add_argument("--p", help="comma list of p values")
    ver.add_argument("--tapes", type=int, default=100)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--out", help="also write the JSON report here")
    ver.set_defaults(func=cmd_verify)

    ana = sub.add_parser("analyze", help="crossing / collapse analysis")
    ana.add_argument("--input", required=True, help="sweep CSV")
    ana.add_argument("--mode", choices=["crossing", "collapse"],
                     required=True)
    ana.add_argument("--observable", required=True)
    ana.add_argument("--fix-nu", type=float, default=None)
    ana.add_argument("--fix-beta", type=float, default=0.0)
    ana.add_argument("--boot", type=int, default=200)
    ana.add_argument("--seed", type=int, default=0)
    ana.add_argument("--out", help="output directory")
    ana.set_defaults(func=cmd_analyze)

    rep = sub.add_parser("replay", help="replay a recorded tape")
    rep.add_argument("--tape", required=True)
    rep.add_argument("--engine", required=True,
                     choices=["cluster", "tableau", "percolation"])
    rep.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for usage errors; ours means
        # verification failure, so remap
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ValidationFailure as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except VerificationFailure as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
