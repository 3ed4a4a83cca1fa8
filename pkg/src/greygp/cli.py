"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import carbon, datasets
from .config import SHIPPED_CONFIGS, load_config, with_overrides
from .errors import InvalidArgumentError, NumericalFailure
from .gp import Posterior, nmse
from .sweep import PRESET_NAMES, full_sweep, make_preset
from .training import fit, sample_start, start_draws

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _coverage(text: str) -> int:
    try:
        return datasets.check_coverage(int(text))
    except (ValueError, InvalidArgumentError):
        raise argparse.ArgumentTypeError(
            f"coverage must be one of {list(datasets.COVERAGES)}, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="toy_standard",
                        help=f"YAML config path or shipped name ({', '.join(SHIPPED_CONFIGS)})")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="greygp", description="Grey-box GP coverage and emissions benchmark.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", parents=[common], help="write a coverage-banded toy dataset as CSV")
    p.add_argument("--coverage", type=_coverage, required=True)
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("fit", parents=[common], help="train one model once and report it")
    p.add_argument("--preset", required=True, help=f"one of {', '.join(PRESET_NAMES)}")
    p.add_argument("--data", help="CSV with header x1,x2,y; default generates toy data")
    p.add_argument("--coverage", type=_coverage, help="coverage band (default 100 / whole file)")
    p.add_argument("--out", help="JSON summary path")
    p.add_argument("--trace", help="write the per-iteration trace CSV here")

    p = sub.add_parser("sweep", parents=[common], help="run the model x coverage sweep")
    p.add_argument("--out", help="output directory (default from config)")
    p.add_argument("--mode", choices=("measured", "fast"))
    p.add_argument("--threshold", type=float, help="NMSE pass threshold")
    p.add_argument("--workers", type=int, help="process count for fast mode")

    p = sub.add_parser("emissions", help="convert a runtime into energy and gCO2e")
    p.add_argument("--runtime", type=float, required=True, help="seconds")
    p.add_argument("--config", help="take the power model from this config")
    p.add_argument("--tdp", type=float, dest="cpu_tdp_w")
    p.add_argument("--load", type=float, dest="cpu_load_factor")
    p.add_argument("--ram-gb", type=float, dest="ram_gb")
    p.add_argument("--ram-w-per-gb", type=float, dest="ram_w_per_gb")
    p.add_argument("--pue", type=float)
    p.add_argument("--intensity", type=float, dest="carbon_intensity", help="gCO2e per kWh")
    return parser


def cmd_gen_data(args) -> int:
    cfg = with_overrides(load_config(args.config), seed=args.seed)
    data = cfg.problem().training_data(args.coverage, 0) if cfg.data.source == "toy" else None
    if data is None:
        raise UsageError("gen-data only generates toy data; the config points at a CSV")
    out = Path(args.out)
    datasets.write_csv(data, out)
    lo, hi = datasets.coverage_band(cfg.domain.x1_range, args.coverage)
    print(f"wrote {data.n} rows to {out} (coverage {args.coverage}%: x1 in [{lo:g}, {hi:g}])")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = with_overrides(load_config(args.config), seed=args.seed)
    presets = {p.name: p for p in cfg.resolve_presets()}
    if args.preset in presets:
        preset = presets[args.preset]
    elif args.preset in PRESET_NAMES:
        preset = make_preset(args.preset, cfg.data.period)
    else:
        valid = sorted(set(PRESET_NAMES) | set(presets))
        raise UsageError(f"unknown preset {args.preset!r}; valid presets: {', '.join(valid)}")

    if args.data:
        full = datasets.load_csv(args.data)
        train = datasets.subset_coverage(full, args.coverage) if args.coverage else full
        eval_X, eval_y = full.X, full.y
    else:
        coverage = args.coverage or 100
        problem = cfg.problem()
        train = problem.training_data(coverage, 0)
        eval_X, eval_y = problem.evaluation(coverage)

    start = sample_start(preset.template, train, start_draws(cfg.seed, 0, len(preset.template.params)))
    result = fit(preset.template, train, start, cfg.train)
    mean, _ = Posterior(result.model, train).predict(eval_X)
    score = nmse(mean, eval_y)
    summary = {
        "preset": preset.name,
        "free_params": preset.n_free,
        "n_train": train.n,
        "coverage": train.coverage,
        "params": dict(zip(result.param_names, map(float, result.model.params))),
        "lml": result.lml,
        "nmse": score,
        "runtime_s": result.duration_s,
        "emissions": carbon.estimate(result.duration_s, cfg.power).to_dict() if cfg.power else None,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
    }
    print(f"{preset.name}: H={preset.n_free} N={train.n} LML={result.lml:.4f} "
          f"NMSE={score:.4g} runtime={result.duration_s:.2f}s")
    for name, value in summary["params"].items():
        print(f"  {name:<24} {value!r}")
    if summary["emissions"]:
        print(f"  emissions: {summary['emissions']['gco2e']:.6g} gCO2e")
    out = Path(args.out) if args.out else Path(cfg.output_dir) / f"fit-{preset.name}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"summary written to {out}")
    if args.trace:
        result.write_trace_csv(args.trace)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = with_overrides(load_config(args.config), seed=args.seed, mode=args.mode,
                         threshold=args.threshold, output_dir=args.out)
    if cfg.mode == "measured" and cfg.power is None:
        raise UsageError("measured mode needs a 'power' section in the config")
    chash = cfg.config_hash()
    print(f"config hash {chash}, seed {cfg.seed}, mode {cfg.mode}")
    report = full_sweep(cfg.resolve_presets(), cfg.problem(), cfg.train,
                        cfg.power if cfg.mode == "measured" else None, mode=cfg.mode,
                        threshold=cfg.threshold, workers=args.workers, config_hash=chash)
    paths = report.write(cfg.output_dir)
    print(report.format_summary())
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


_POWER_FIELDS = ("cpu_tdp_w", "cpu_load_factor", "ram_gb", "ram_w_per_gb", "pue", "carbon_intensity")


def cmd_emissions(args) -> int:
    base = {}
    if args.config:
        cfg = load_config(args.config)
        if cfg.power:
            base = cfg.power.to_dict()
    for name in _POWER_FIELDS:
        if getattr(args, name) is not None:
            base[name] = getattr(args, name)
    missing = [n for n in ("cpu_tdp_w", "carbon_intensity") if n not in base]
    if missing:
        raise UsageError(f"missing power constants {missing}; pass --config or --tdp/--intensity")
    est = carbon.estimate(args.runtime, carbon.PowerModel(**base))
    print(json.dumps(est.to_dict(), indent=2))
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "fit": cmd_fit, "sweep": cmd_sweep, "emissions": cmd_emissions}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValueError) as exc:
        print(f"greygp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"greygp {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"greygp {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
