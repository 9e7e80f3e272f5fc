"""Command-line entry point: ``wta analyze | simulate | power | plot | rerun``.

Exit codes: 0 success, 2 usage or validation error, 3 degenerate statistic
(results are still written), 4 internal error.

Environment: WTA_SEED sets the default seed, WTA_THREADS caps worker
processes for power studies.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import traceback
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .curve import curve_csv, wta_curve
from .data import (
    DataValidationError,
    HIGHER_IS_BETTER,
    OrdinalScale,
    export_long_csv,
    export_wide_csv,
    normalize_scale,
    read_dataset,
)
from .gee import fit_gee
from .km import km_estimate, logrank_test, survival_csv
from .markov import computational_pvalue
from .plot import GLYPHS, km_svg, power_svg, wta_svg
from .power import METHODS, GridError, export_power, grid_from_mapping, load_grid, read_power_csv, run_power_study, stderr_progress
from .rng import default_seed
from .simulate import MODEL_ALIASES, MODELS, simulate
from .weighted_logrank import weighted_logrank

EXIT_OK, EXIT_USAGE, EXIT_DEGENERATE, EXIT_INTERNAL = 0, 2, 3, 4
THREADS_ENV = "WTA_THREADS"
MANIFEST = "manifest.json"

ENV_HELP = (
    "environment:\n"
    "  WTA_SEED     default seed when --seed is not given\n"
    "  WTA_THREADS  default worker cap for --threads\n"
)


class UsageError(Exception):
    pass


def _default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    return int(env) if env else (os.cpu_count() or 1)


def _csv_list(text: str) -> list[str]:
    return [v for v in text.replace(" ", ",").split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wta",
        description="Weighted trajectory analysis for ordinal longitudinal trial outcomes.",
        epilog=ENV_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"wta {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = parser.add_subparsers(dest="command", required=True)

    an = sub.add_parser("analyze", help="analyse a trial dataset", epilog=ENV_HELP,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    an.add_argument("-i", "--in", dest="input", required=True, help="long or wide CSV file")
    an.add_argument("-m", "--method", choices=("km", "wta", "wta-sim", "gee"), default="wta")
    an.add_argument("-s", "--scale", help="score range lo:hi[:higher-is-better]; inferred if omitted")
    an.add_argument("-t", "--threshold", type=int,
                    help="KM event threshold on the original scale (default: one step above best)")
    an.add_argument("--arms", help="comparison pair A,B (default: the two arm labels, sorted)")
    an.add_argument("-n", "--nsims", type=int, default=1000, help="null simulations for wta-sim")
    an.add_argument("--seed", type=int, help="seed for wta-sim")
    an.add_argument("--censor-at-max", action="store_true",
                    help="data protocol stops follow-up at the maximum score")
    an.add_argument("--time-unit", default="days")
    an.add_argument("--censor-glyph", choices=GLYPHS, default="wye")
    an.add_argument("-o", "--out", default="wta-out", help="output directory")
    an.add_argument("--json", action="store_true", help="print the result JSON on stdout")

    sm = sub.add_parser("simulate", help="generate a simulated trial", epilog=ENV_HELP,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    sm.add_argument("--model", required=True,
                    choices=sorted(set(MODELS) | set(MODEL_ALIASES)))
    sm.add_argument("-n", "--n", dest="n", type=int, required=True, help="patients (even)")
    sm.add_argument("--hr", type=float, default=1.0, help="control-arm hazard multiplier")
    sm.add_argument("--seed", type=int)
    sm.add_argument("-o", "--out", help="output CSV path (default: stdout)")
    sm.add_argument("--format", choices=("wide", "long"), default="wide")
    sm.add_argument("--json", action="store_true", help="print the summary as JSON")

    pw = sub.add_parser("power", help="run a Monte Carlo power study", epilog=ENV_HELP,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    pw.add_argument("-c", "--config", help="grid file (key = value lines or JSON)")
    pw.add_argument("--model")
    pw.add_argument("-n", "--n", dest="sample_sizes", help="sample sizes, comma separated")
    pw.add_argument("--hr", dest="hazard_ratios", help="hazard ratios, comma separated")
    pw.add_argument("-r", "--replicates", type=int)
    pw.add_argument("--methods", help=f"comma separated subset of: {', '.join(METHODS)}")
    pw.add_argument("--alpha", type=float)
    pw.add_argument("--seed", type=int, dest="root_seed")
    pw.add_argument("--nsims", type=int, dest="n_sims", help="inner simulations for wta-computational")
    pw.add_argument("--km-threshold", type=int)
    pw.add_argument("--threads", type=int, help="worker processes (default: machine parallelism)")
    pw.add_argument("-o", "--out", default="wta-power", help="output directory")
    pw.add_argument("--json", action="store_true", help="print results as JSON")

    pl = sub.add_parser("plot", help="render an SVG from a curve or power CSV")
    pl.add_argument("-i", "--in", dest="input", required=True)
    pl.add_argument("-o", "--out", required=True, help="SVG path")
    pl.add_argument("--censor-glyph", choices=GLYPHS, default="wye")
    pl.add_argument("--time-unit", default="days")

    rr = sub.add_parser("rerun", help="repeat a run recorded in a manifest")
    rr.add_argument("manifest")
    return parser


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: Path, command: str, argv: list[str], config: dict,
                   seed, inputs: list[str], outputs: list[Path]) -> Path:
    manifest = {
        "subcommand": command,
        "argv": argv,
        "config": config,
        "seed": seed,
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": sorted(str(p.name) for p in outputs),
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path = out_dir / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _normalized_threshold(threshold: int | None, scale: OrdinalScale) -> int:
    if threshold is None:
        return 1
    if not scale.contains(threshold):
        raise DataValidationError(
            f"threshold {threshold} outside scale {scale.min_score}..{scale.max_score}")
    if scale.polarity == HIGHER_IS_BETTER:
        return scale.max_score - threshold
    return threshold - scale.min_score


def cmd_analyze(args, argv) -> int:
    scale = OrdinalScale.parse(args.scale) if args.scale else None
    raw = read_dataset(args.input, scale, time_unit=args.time_unit,
                       censor_at_max=args.censor_at_max)
    data = normalize_scale(raw)
    arms = tuple(_csv_list(args.arms)) if args.arms else None
    if arms is not None and len(arms) != 2:
        raise UsageError("--arms takes exactly two labels")
    arms = data.resolve_arms(arms)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    seed = None
    glyph, unit = args.censor_glyph, data.time_unit

    if args.method == "km":
        threshold = _normalized_threshold(args.threshold, raw.scale)
        result = logrank_test(data, threshold, arms)
        payload = result.to_dict() | {"threshold": args.threshold if args.threshold is not None
                                      else raw.scale.min_score + 1}
        curves = km_estimate(data, threshold, arms)
        lines = ["arm,time,survival,at_risk,events,censored"]
        for label, c in curves.items():
            lines += [f"{label},{row}" for row in survival_csv(c).splitlines()[1:]]
        outputs.append(_write(out / "km_curve.csv", "\n".join(lines) + "\n"))
        outputs.append(_write(out / "km_plot.svg", km_svg(curves, glyph, unit)))
        degenerate = result.degenerate
    elif args.method in ("wta", "wta-sim"):
        if args.method == "wta":
            result = weighted_logrank(data, arms)
        else:
            seed = default_seed() if args.seed is None else args.seed
            result = computational_pvalue(data, args.nsims, seed, arms)
        payload = result.to_dict()
        curves = wta_curve(data, arms)
        outputs.append(_write(out / "wta_curve.csv", curve_csv(curves)))
        outputs.append(_write(out / "wta_plot.svg", wta_svg(curves, glyph, unit)))
        degenerate = result.degenerate
    else:
        fit = fit_gee(data, arms)
        payload = fit.to_dict() | {"method": "gee"}
        degenerate = fit.wald.degenerate
    payload["arms"] = list(arms)
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    outputs.append(_write(out / "result.json", text))
    config = {k: v for k, v in vars(args).items() if k != "func"}
    write_manifest(out, "analyze", _resolved_argv(argv, "--seed", seed), config, seed,
                   [args.input], outputs)

    if args.json:
        sys.stdout.write(text)
    else:
        p = payload.get("p_value", payload.get("wald_p"))
        print(f"{args.method}: arms {arms[0]} vs {arms[1]}, p = {p:.4g}"
              + (" (degenerate statistic)" if degenerate else ""))
        print(f"outputs written to {out}/")
    return EXIT_DEGENERATE if degenerate else EXIT_OK


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def _resolved_argv(argv: list[str], flag: str, value) -> list[str]:
    """Pin a defaulted seed into the recorded command line."""
    if value is None or flag in argv:
        return list(argv)
    return list(argv) + [flag, str(value)]


def cmd_simulate(args, argv) -> int:
    seed = default_seed() if args.seed is None else args.seed
    try:
        data = simulate(args.model, args.n, args.hr, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = export_wide_csv(data) if args.format == "wide" else export_long_csv(data)
    sizes = {label: data.n0(label) for label in data.arm_labels}
    summary = {"model": MODEL_ALIASES.get(args.model, args.model), "patients": len(data),
               "arm_sizes": sizes, "max_time": data.max_time, "hr": args.hr, "seed": seed}
    info = sys.stdout
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        _write(path, text)
        write_manifest(path.parent, "simulate", _resolved_argv(argv, "--seed", seed),
                       {k: v for k, v in vars(args).items() if k != "func"}, seed, [], [path])
    else:
        sys.stdout.write(text)
        info = sys.stderr
    if args.json:
        print(json.dumps(summary, sort_keys=True), file=info)
    else:
        arms = ", ".join(f"arm {k}: {v}" for k, v in sizes.items())
        print(f"{summary['model']}: {len(data)} patients ({arms}), max time {data.max_time}",
              file=info)
    return EXIT_OK


def cmd_power(args, argv) -> int:
    raw = {}
    if args.config:
        raw.update(load_grid(args.config).to_dict())
    for key in ("model", "sample_sizes", "hazard_ratios", "replicates", "methods", "alpha",
                "root_seed", "n_sims", "km_threshold"):
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    if "root_seed" not in raw:
        raw["root_seed"] = default_seed()
    if "model" not in raw or "sample_sizes" not in raw or "hazard_ratios" not in raw:
        raise UsageError("power needs --config or --model, --n and --hr")
    try:
        grid = grid_from_mapping(raw)
    except (GridError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    threads = args.threads or _default_threads()
    result = run_power_study(grid, workers=threads, progress=stderr_progress)
    out = Path(args.out)
    outputs = export_power(result, out)
    write_manifest(out, "power", _resolved_argv(argv, "--seed", grid.root_seed),
                   grid.to_dict(), grid.root_seed, [args.config] if args.config else [], outputs)
    if args.json:
        rows = [{"model": c.model, "n": c.n, "hr": c.hr, "method": c.method,
                 "power": c.power, "mc_se": c.mc_se, "replicates": c.replicates}
                for c in result.cells]
        print(json.dumps(rows, indent=2))
    else:
        print(result.to_csv(), end="")
    return EXIT_OK


def cmd_plot(args, argv) -> int:
    from .curve import CurveStep, WeightedTrajectoryCurve
    from .km import SurvivalCurve, SurvivalStep
    import csv

    with open(args.input, newline="", encoding="utf-8") as fh:
        text = fh.read()
    header = text.splitlines()[0].split(",") if text else []
    rows = list(csv.DictReader(text.splitlines()))
    if header[:3] == ["arm", "time", "U"]:
        by_arm: dict[str, list] = {}
        for r in rows:
            by_arm.setdefault(r["arm"], []).append(r)
        curves = {
            arm: WeightedTrajectoryCurve(
                arm, 1,
                tuple(CurveStep(int(r["time"]), float(r["U"]), int(r["at_risk"]),
                                int(r["net_change"])) for r in rs),
                tuple((int(r["time"]), int(r["censored"])) for r in rs if int(r["censored"])),
            )
            for arm, rs in by_arm.items()
        }
        svg = wta_svg(curves, args.censor_glyph, args.time_unit)
    elif header[:3] == ["arm", "time", "survival"]:
        by_arm = {}
        for r in rows:
            by_arm.setdefault(r["arm"], []).append(r)
        curves = {
            arm: SurvivalCurve(
                tuple(SurvivalStep(int(r["time"]), float(r["survival"]), int(r["at_risk"]),
                                   int(r["events"])) for r in rs if int(r["events"])),
                tuple((int(r["time"]), int(r["censored"])) for r in rs if int(r["censored"])),
                int(rs[0]["at_risk"]) if rs else 0,
            )
            for arm, rs in by_arm.items()
        }
        svg = km_svg(curves, args.censor_glyph, args.time_unit)
    elif header[:3] == ["model", "n", "hr"]:
        svg = power_svg(read_power_csv(text))
    else:
        raise UsageError(f"unrecognised CSV header {','.join(header)}")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    _write(Path(args.out), svg)
    return EXIT_OK


def cmd_rerun(args, argv) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    return main(manifest["argv"])


COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "power": cmd_power,
    "plot": cmd_plot,
    "rerun": cmd_rerun,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args, argv)
    except (DataValidationError, UsageError, GridError) as exc:
        print(f"wta {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"wta {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


def entry() -> None:
    sys.exit(main())
