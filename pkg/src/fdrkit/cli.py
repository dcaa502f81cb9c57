"""Command-line interface.

Exit statuses: 0 success, 1 I/O failure, 2 invalid input or configuration,
3 verification ran but found failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

from . import core, simulate, verify

SCHEMA = 1
EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2, 3


class InputError(Exception):
    pass


def _number(x: float):
    # strict JSON has no infinity literal
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def read_values(path: str, header: str) -> list[float]:
    """Read a single-column CSV with a mandatory ``header`` row."""
    if path == "-":
        text = sys.stdin.read()
    else:
        with open(path, encoding="utf-8", newline="") as f:
            text = f.read()
    rows = list(csv.reader(io.StringIO(text)))
    while rows and not any(cell.strip() for cell in rows[-1]):
        rows.pop()
    if not rows:
        raise InputError("no values")
    found = [cell.strip() for cell in rows[0]]
    if found != [header]:
        raise InputError(f"line 1: expected header {header!r}, found {','.join(found)!r}")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        cells = [c.strip() for c in row]
        if not any(cells):
            continue
        if len(cells) != 1:
            raise InputError(f"line {lineno}: expected one value, found {len(cells)}")
        try:
            v = float(cells[0])
        except ValueError:
            raise InputError(f"line {lineno}: cannot parse {cells[0]!r} as a number") from None
        if header == "p" and not 0.0 <= v <= 1.0:
            raise InputError(f"line {lineno}: p-value {cells[0]} outside [0, 1]")
        if header == "e" and not v >= 0.0:
            raise InputError(f"line {lineno}: e-value {cells[0]} must be >= 0")
        values.append(v)
    if not values:
        raise InputError("no values")
    return values


def _render_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _emit(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        with open(output, "w", encoding="utf-8") as f:
            f.write(text)


def _json(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


def cmd_apply(args) -> int:
    header = "e" if args.procedure == "ebh" else "p"
    values = read_values(args.input, header)
    if args.procedure == "bh":
        res = core.bh_procedure(values, args.alpha)
    elif args.procedure == "by":
        res = core.by_procedure(values, args.alpha)
    else:
        res = core.ebh_procedure(values, args.alpha)
    rejected = sorted(i + 1 for i in res.rejected)
    report = {
        "schema": SCHEMA,
        "procedure": args.procedure,
        "alpha": args.alpha,
        "K": len(values),
        "rejected": rejected,
        "k_star": res.k_star,
        "threshold": _number(res.threshold),
    }
    if args.procedure == "by":
        report["effective_alpha"] = args.alpha / core.harmonic_number(len(values))
    if header == "p":
        report["simes"] = core.simes_statistic(values)
    report["decisions"] = [
        {"index": i + 1, "value": _number(v), "rejected": i in res.rejected}
        for i, v in enumerate(values)
    ]
    if args.format == "csv":
        rows = [[i + 1, v, str(i in res.rejected).lower()] for i, v in enumerate(values)]
        _emit(_render_csv(["index", header, "rejected"], rows), args.output)
    else:
        _emit(_json(report), args.output)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    values = read_values(args.input, "p")
    cal = core.Calibrator(len(values), args.alpha)
    e = [core.calibrate_p_to_e(cal, v) for v in values]
    if args.format == "csv":
        _emit(_render_csv(["e"], [[v] for v in e]), args.output)
        return EXIT_OK
    report = {
        "schema": SCHEMA,
        "K": cal.K,
        "alpha": cal.alpha,
        "alpha_prime": cal.alpha_prime,
        "e_values": e,
        "note": (
            "e-BH at level alpha_prime applied to e_values rejects exactly the "
            "hypotheses that BH at level alpha rejects on the input p-values"
        ),
    }
    _emit(_json(report), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.reps < 1:
        raise InputError(f"--reps must be at least 1, got {args.reps}")
    signal = args.signal
    if signal is None and args.model == "discrete-adversarial-p":
        # stress the level the procedure actually runs at
        signal = args.alpha / core.harmonic_number(args.K) if args.procedure == "by" else args.alpha
    try:
        model = simulate.ModelSpec(
            args.model, args.K, args.K0, signal=signal, rho=args.rho, alt_signal=args.alt_signal
        )
        est = simulate.estimate_fdr(
            model, args.procedure, args.alpha, args.reps, seed=args.seed, workers=args.workers
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    bound = simulate.theoretical_bound(model, args.procedure, args.alpha)
    report = {
        "schema": SCHEMA,
        "model": {
            "kind": model.kind,
            "K": model.K,
            "K0": model.K0,
            "signal": model.signal,
            "rho": model.rho,
            "alt_signal": model.alt_signal,
        },
        "procedure": args.procedure,
        "alpha": args.alpha,
        "replications": est.replications,
        "seed": args.seed,
        "mean_fdp": est.mean_fdp,
        "std_error": est.std_error,
        "mean_power": est.mean_power,
        "bound": bound,
        "bound_satisfied": est.mean_fdp <= bound + 3 * est.std_error,
    }
    if args.format == "csv":
        keys = ["procedure", "alpha", "replications", "seed", "mean_fdp", "std_error",
                "mean_power", "bound", "bound_satisfied"]
        row = [report[k] for k in keys]
        row[-1] = str(row[-1]).lower()
        _emit(_render_csv(["model", "K", "K0"] + keys, [[model.kind, model.K, model.K0] + row]),
              args.output)
    else:
        _emit(_json(report), args.output)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise InputError(f"--trials must be at least 1, got {args.trials}")
    reports = verify.run_identity_suite(args.trials, seed=args.seed)
    if args.grid:
        reports.append(verify.grid_equivalence())
    ok = all(r.passed for r in reports)
    report = {
        "schema": SCHEMA,
        "trials": args.trials,
        "seed": args.seed,
        "passed": ok,
        "checks": [r.to_dict() for r in reports],
    }
    _emit(_json(report), args.output)
    return EXIT_OK if ok else EXIT_VERIFY


def _alpha(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid level {text!r}") from None
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdrkit", description="BH, BY and e-BH multiple testing with Monte Carlo checks."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, formats=("json", "csv")):
        p.add_argument("--output", "-o", help="output file (default: standard output)")
        p.add_argument("--format", choices=formats, default="json")

    p = sub.add_parser("apply", help="apply a procedure to a single-column CSV")
    p.add_argument("input", nargs="?", default="-", help="CSV file with header p or e ('-' for stdin)")
    p.add_argument("--procedure", choices=simulate.PROCEDURES, default="bh")
    p.add_argument("--alpha", type=_alpha, required=True)
    common(p)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("calibrate", help="convert p-values to e-values")
    p.add_argument("input", nargs="?", default="-")
    p.add_argument("--alpha", type=_alpha, required=True)
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="Monte Carlo FDR estimate")
    p.add_argument("--model", choices=simulate.MODEL_KINDS, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--K0", type=int, required=True)
    p.add_argument("--signal", type=float)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--alt-signal", type=float)
    p.add_argument("--procedure", choices=simulate.PROCEDURES, default="bh")
    p.add_argument("--alpha", type=_alpha, required=True)
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the randomized identity suite")
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", action="store_true", help="also run the exhaustive K<=4 oracle grid")
    common(p, formats=("json",))
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, core.DomainError) as exc:
        print(f"fdrkit: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"fdrkit: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
