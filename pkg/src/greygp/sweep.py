"""Model presets and the coverage-sweep experiment harness."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, kernels
from .carbon import EmissionsEstimate, PowerModel, estimate
from .datasets import (COVERAGES, TRUE_PERIOD, DomainSpec, band_mask, check_coverage,
                       empirical_x1_range, evaluation_grid, sample_coverage, subset_coverage,
                       toy_surface)
from .errors import InvalidArgumentError
from .gp import Dataset, GPModel
from .training import (Bounded, Fixed, FreePositive, FreeReal, ModelTemplate, ParamSpec,
                       RunRecord, TrainConfig, fit, multi_start_fit, sample_start, start_draws)

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 10.0
PRESET_NAMES = ("Black-1", "Grey-1", "Grey-2")
EXPECTED_FREE_PARAMS = {"Black-1": 4, "Grey-1": 6, "Grey-2": 5}


# -- presets --------------------------------------------------------------------


@dataclass(frozen=True)
class ModelPreset:
    name: str
    template: ModelTemplate

    def __post_init__(self):
        expected = EXPECTED_FREE_PARAMS.get(self.name)
        if expected is not None and self.template.n_free != expected:
            raise AssertionError(
                f"{self.name} must have {expected} free hyperparameters, has {self.template.n_free}")

    @property
    def n_free(self) -> int:
        return self.template.n_free


_MEAN = ParamSpec("mean", FreeReal(), "mean")
_NOISE = ParamSpec("noise_variance", FreePositive(), "noise")
_VARIANCE = ParamSpec("variance", FreePositive(), "variance")


def black_1() -> ModelPreset:
    """Constant mean + isotropic SE over both inputs."""
    model = GPModel(0.0, kernels.se(1.0, (0, 1)), 0.01)
    specs = (_VARIANCE, ParamSpec("se0.lengthscale", FreePositive(), "lengthscale"), _MEAN, _NOISE)
    return ModelPreset("Black-1", ModelTemplate(model, specs))


def _grey(name: str, period_constraint, true_period: float) -> ModelPreset:
    kernel = kernels.product(kernels.se(1.0, (1,)), kernels.periodic(1.0, true_period, 0))
    model = GPModel(0.0, kernel, 0.01)
    specs = (
        _VARIANCE,
        ParamSpec("se0.lengthscale", FreePositive(), "lengthscale"),
        ParamSpec("periodic1.lengthscale", FreePositive(), "unit_lengthscale"),
        ParamSpec("periodic1.period", period_constraint, "period"),
        _MEAN,
        _NOISE,
    )
    return ModelPreset(name, ModelTemplate(model, specs))


def grey_1(true_period: float = TRUE_PERIOD) -> ModelPreset:
    """SE(x2) x Periodic(x1), period bounded to within 10% of the truth."""
    return _grey("Grey-1", Bounded(0.9 * true_period, 1.1 * true_period), true_period)


def grey_2(true_period: float = TRUE_PERIOD) -> ModelPreset:
    """SE(x2) x Periodic(x1), period fixed at the truth."""
    return _grey("Grey-2", Fixed(float(true_period)), true_period)


def make_preset(name: str, true_period: float = TRUE_PERIOD) -> ModelPreset:
    builders = {"Black-1": black_1, "Grey-1": lambda: grey_1(true_period),
                "Grey-2": lambda: grey_2(true_period)}
    if name not in builders:
        raise InvalidArgumentError(f"unknown preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}")
    return builders[name]()


_CONSTRAINT_KEYS = {"free_positive", "free_real", "bounded", "fixed"}


def custom_preset(cfg: dict) -> ModelPreset:
    """Build a preset from a mapping with ``name``, ``kernel`` and optional ``constraints``.

    ``constraints`` maps a canonical parameter name to one of
    ``{"bounded": [lo, hi]}``, ``{"fixed": value}``, ``"free_positive"`` or
    ``"free_real"``. Unlisted kernel parameters are free and positive.
    """
    try:
        name = str(cfg["name"])
        kernel = kernels.from_dict(cfg["kernel"])
    except KeyError as exc:
        raise InvalidArgumentError(f"custom preset needs key {exc}") from None
    mean = float(cfg.get("mean", 0.0))
    noise = float(cfg.get("noise_variance", 0.01))
    model = GPModel(mean, kernel, noise)
    constraints = dict(cfg.get("constraints") or {})
    unknown = set(constraints) - set(model.param_names)
    if unknown:
        raise InvalidArgumentError(f"constraints for unknown parameters {sorted(unknown)}; "
                                   f"valid: {model.param_names}")
    specs = []
    for pname in model.param_names:
        if pname == "mean":
            default, init = FreeReal(), "mean"
        elif pname == "noise_variance":
            default, init = FreePositive(), "noise"
        elif pname == "variance":
            default, init = FreePositive(), "variance"
        elif pname.endswith(".period"):
            default, init = FreePositive(), "period"
        elif pname.startswith(kernels.PERIODIC):
            default, init = FreePositive(), "unit_lengthscale"
        else:
            default, init = FreePositive(), "lengthscale"
        specs.append(ParamSpec(pname, _parse_constraint(constraints.get(pname), default), init))
    return ModelPreset(name, ModelTemplate(model, tuple(specs)))


def _parse_constraint(raw, default):
    if raw is None:
        return default
    if raw == "free_positive":
        return FreePositive()
    if raw == "free_real":
        return FreeReal()
    if isinstance(raw, dict) and len(raw) == 1 and set(raw) <= _CONSTRAINT_KEYS:
        (key, val), = raw.items()
        if key == "bounded":
            lo, hi = val
            return Bounded(float(lo), float(hi))
        if key == "fixed":
            return Fixed(float(val))
        return FreePositive() if key == "free_positive" else FreeReal()
    raise InvalidArgumentError(f"cannot parse constraint {raw!r}")


# -- problems ---------------------------------------------------------------------


@dataclass(frozen=True)
class ToyProblem:
    """The synthetic surface: fresh training sample per (coverage, repeat)."""

    domain: DomainSpec = field(default_factory=DomainSpec)
    seed: int = 0
    resample_repeats: bool = True
    eval_region: str = "full"

    def __post_init__(self):
        if self.eval_region not in ("full", "uncovered"):
            raise InvalidArgumentError(f"eval_region must be 'full' or 'uncovered', got {self.eval_region!r}")

    def training_data(self, coverage: int, repeat: int) -> Dataset:
        r = repeat if self.resample_repeats else 0
        return sample_coverage(self.domain, coverage, [int(self.seed), int(coverage), int(r)])

    def evaluation(self, coverage: int) -> tuple[np.ndarray, np.ndarray]:
        X, y = evaluation_grid(self.domain)
        if self.eval_region == "uncovered" and coverage < 100:
            keep = ~band_mask(X, self.domain.x1_range, coverage)
            X, y = X[keep], y[keep]
        return X, y


@dataclass(frozen=True)
class CsvProblem:
    """An external dataset; training rows come from its own x1 coverage bands."""

    data: Dataset
    eval_region: str = "full"

    def __post_init__(self):
        if self.eval_region not in ("full", "uncovered"):
            raise InvalidArgumentError(f"eval_region must be 'full' or 'uncovered', got {self.eval_region!r}")

    def training_data(self, coverage: int, repeat: int) -> Dataset:
        return subset_coverage(self.data, coverage)

    def evaluation(self, coverage: int) -> tuple[np.ndarray, np.ndarray]:
        X, y = self.data.X, self.data.y
        if self.eval_region == "uncovered" and coverage < 100:
            keep = ~band_mask(X, empirical_x1_range(self.data), coverage)
            X, y = X[keep], y[keep]
        return X, y


Problem = ToyProblem | CsvProblem


# -- cells -------------------------------------------------------------------------


@dataclass
class CellRecord:
    model: str
    coverage: int
    n_train: int
    runs: list[RunRecord]
    total_runtime_s: float
    threshold: float = DEFAULT_THRESHOLD
    emissions: EmissionsEstimate | None = None

    @property
    def nmse(self) -> list[float]:
        return [r.nmse for r in self.runs]

    @property
    def durations(self) -> list[float]:
        return [r.duration_s for r in self.runs]

    @property
    def training_runtime_s(self) -> float:
        return float(sum(self.durations))

    @property
    def max_nmse(self) -> float:
        return max(self.nmse)

    @property
    def passed(self) -> bool:
        return self.max_nmse <= self.threshold

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "coverage": self.coverage,
            "n_train": self.n_train,
            "passed": self.passed,
            "max_nmse": _json_float(self.max_nmse),
            "nmse": [_json_float(v) for v in self.nmse],
            "durations_s": self.durations,
            "training_runtime_s": self.training_runtime_s,
            "total_runtime_s": self.total_runtime_s,
            "emissions": self.emissions.to_dict() if self.emissions else None,
            "runs": [{**r.to_dict(), "nmse": _json_float(r.nmse)} for r in self.runs],
        }


def _json_float(v: float):
    return v if math.isfinite(v) else None


def run_cell(preset: ModelPreset, coverage: int, problem: Problem, train_config: TrainConfig,
             threshold: float = DEFAULT_THRESHOLD, power_model: PowerModel | None = None) -> CellRecord:
    """Nine (starts x repeats) sequential fits at one coverage, scored on the evaluation set.

    Emissions, when a power model is given, are estimated from the summed
    training time of the runs.
    """
    coverage = check_coverage(coverage)
    t0 = time.perf_counter()
    eval_X, eval_y = problem.evaluation(coverage)
    runs = multi_start_fit(preset.template, lambda r: problem.training_data(coverage, r),
                           train_config, eval_X, eval_y)
    total = time.perf_counter() - t0
    cell = CellRecord(preset.name, coverage, runs[0].n_train, runs, total, float(threshold))
    if power_model is not None:
        cell.emissions = estimate(cell.training_runtime_s, power_model)
    log.info("%s @ %d%%: max NMSE %.3g (%s), %.1fs", preset.name, coverage, cell.max_nmse,
             "pass" if cell.passed else "fail", total)
    return cell


def threshold_coverage(cells: Sequence[CellRecord]) -> int | None:
    passing = [c.coverage for c in cells if c.passed]
    return min(passing) if passing else None


def find_threshold(preset: ModelPreset, problem: Problem, train_config: TrainConfig,
                   threshold: float = DEFAULT_THRESHOLD, power_model: PowerModel | None = None,
                   return_cells: bool = False):
    """Lowest coverage (10, 20, ... in order) whose nine runs all meet ``threshold``."""
    cells = []
    found = None
    for cov in COVERAGES:
        cell = run_cell(preset, cov, problem, train_config, threshold, power_model)
        cells.append(cell)
        if cell.passed:
            found = cov
            break
    return (found, cells) if return_cells else found


# -- full sweep ----------------------------------------------------------------------


@dataclass
class SweepReport:
    presets: list[str]
    cells: list[CellRecord]
    thresholds: dict[str, int | None]
    free_params: dict[str, int]
    threshold: float
    mode: str
    metadata: dict

    @property
    def baseline(self) -> str:
        return self.presets[0]

    def cell(self, model: str, coverage: int) -> CellRecord:
        for c in self.cells:
            if c.model == model and c.coverage == coverage:
                return c
        raise KeyError((model, coverage))

    def nmse_matrix(self) -> dict[str, dict[int, list[float]]]:
        out: dict[str, dict[int, list[float]]] = {}
        for c in self.cells:
            out.setdefault(c.model, {})[c.coverage] = c.nmse
        return out

    def threshold_cell(self, model: str) -> CellRecord | None:
        cov = self.thresholds[model]
        return None if cov is None else self.cell(model, cov)

    def threshold_emissions(self, model: str) -> float | None:
        cell = self.threshold_cell(model)
        if cell is None or cell.emissions is None:
            return None
        return cell.emissions.gco2e

    def coverage_delta(self, model: str) -> float | None:
        return percent_delta(self.thresholds[model], self.thresholds[self.baseline])

    def emissions_delta(self, model: str) -> float | None:
        return percent_delta(self.threshold_emissions(model), self.threshold_emissions(self.baseline))

    def summary_rows(self) -> list[dict]:
        rows = []
        for name in self.presets:
            cell = self.threshold_cell(name)
            row = {
                "model": name,
                "free_params": self.free_params[name],
                "threshold_coverage": self.thresholds[name],
                "delta_coverage_pct": self.coverage_delta(name),
                "n_train": cell.n_train if cell else None,
            }
            if self.mode == "measured":
                em = cell.emissions if cell else None
                row.update({
                    "runtime_s": em.runtime_s if em else None,
                    "energy_kwh": em.energy_kwh if em else None,
                    "gco2e": em.gco2e if em else None,
                    "delta_gco2e_pct": self.emissions_delta(name),
                })
            rows.append(row)
        return rows

    def curve_rows(self) -> list[dict]:
        rows = []
        for c in self.cells:
            for r in c.runs:
                rows.append({"model": c.model, "coverage": c.coverage, "run_index": r.run_index,
                             "n_train": r.n_train, "nmse": r.nmse, "runtime_s": r.duration_s})
        return rows

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "mode": self.mode,
            "threshold": self.threshold,
            "baseline": self.baseline,
            "presets": self.presets,
            "free_params": self.free_params,
            "thresholds": self.thresholds,
            "summary": self.summary_rows(),
            "cells": [c.to_dict() for c in self.cells],
        }

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"report": out / "report.json", "summary": out / "summary.csv",
                 "curves": out / "curves.csv"}
        paths["report"].write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        _write_rows(paths["summary"], self.summary_rows())
        _write_rows(paths["curves"], self.curve_rows())
        return paths

    def format_summary(self) -> str:
        rows = self.summary_rows()
        cols = list(rows[0])
        table = [cols] + [[_fmt(r[c]) for c in cols] for r in rows]
        widths = [max(len(str(row[i])) for row in table) for i in range(len(cols))]
        return "\n".join("  ".join(str(v).rjust(w) for v, w in zip(row, widths)) for row in table)


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _write_rows(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if v is None else v for k, v in row.items()})


def percent_delta(value, baseline) -> float | None:
    if value is None or baseline is None or baseline == 0:
        return None
    if value == baseline:
        return 0.0
    return 100.0 * (value - baseline) / baseline


def _cell_job(args):
    preset, cov, problem, train_config, threshold = args
    return run_cell(preset, cov, problem, train_config, threshold, None)


def full_sweep(presets: Sequence[ModelPreset], problem: Problem, train_config: TrainConfig,
               power_model: PowerModel | None = None, *, mode: str = "measured",
               threshold: float = DEFAULT_THRESHOLD, coverages: Sequence[int] = COVERAGES,
               workers: int | None = None, config_hash: str | None = None) -> SweepReport:
    """Run every (preset, coverage) cell; the first preset is the delta baseline.

    ``measured`` runs cells one after another and attaches emissions;
    ``fast`` may run cells in parallel processes and omits emissions.
    """
    if not presets:
        raise InvalidArgumentError("full_sweep needs at least one preset")
    if mode not in ("measured", "fast"):
        raise InvalidArgumentError(f"mode must be 'measured' or 'fast', got {mode!r}")
    names = [p.name for p in presets]
    if len(set(names)) != len(names):
        raise InvalidArgumentError(f"duplicate preset names in {names}")
    coverages = [check_coverage(c) for c in coverages]
    if mode == "measured" and power_model is None:
        raise InvalidArgumentError("measured mode needs a power model")

    jobs = [(p, c, problem, train_config, threshold) for p in presets for c in coverages]
    t0 = time.perf_counter()
    if mode == "measured":
        cells = [run_cell(p, c, problem, train_config, threshold, power_model)
                 for p, c, *_ in jobs]
    else:
        n_workers = workers or os.cpu_count() or 1
        if n_workers > 1:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                cells = list(pool.map(_cell_job, jobs))
        else:
            cells = [_cell_job(j) for j in jobs]
    elapsed = time.perf_counter() - t0

    thresholds = {p.name: threshold_coverage([c for c in cells if c.model == p.name])
                  for p in presets}
    metadata = {
        "seed": train_config.seed,
        "config_hash": config_hash,
        "sequential": mode == "measured",
        "execution": "cells measured strictly sequentially" if mode == "measured"
                     else "cells may run concurrently; emissions omitted",
        "free_params_H": {p.name: p.n_free for p in presets},
        "n_train": {f"{c.model}@{c.coverage}": c.n_train for c in cells},
        "coverages": list(coverages),
        "train_config": {"iterations": train_config.iterations,
                         "learning_rate": train_config.learning_rate,
                         "starts": train_config.starts, "repeats": train_config.repeats,
                         "adam_betas": list(train_config.adam_betas),
                         "adam_eps": train_config.adam_eps},
        "power_model": power_model.to_dict() if (power_model and mode == "measured") else None,
        "elapsed_s": elapsed,
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    return SweepReport(names, cells, thresholds, {p.name: p.n_free for p in presets},
                       float(threshold), mode, metadata)


# -- complexity --------------------------------------------------------------------


def loglog_slope(sizes: Sequence[float], runtimes: Sequence[float]) -> float:
    """Least-squares slope of log(runtime) against log(size)."""
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(runtimes, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


@dataclass
class ComplexityResult:
    exponent: float
    sizes: list[int]
    runtimes_s: list[float]


def complexity_probe(preset: ModelPreset, domain: DomainSpec, sizes: Sequence[int],
                     train_config: TrainConfig, repeats: int = 1) -> ComplexityResult:
    """Fit the runtime exponent of single training runs against training-set size.

    Each size gets ``repeats`` timed fits on points drawn uniformly over the
    whole domain; the median runtime per size enters the regression.
    """
    sizes = [int(s) for s in sizes]
    if len(sizes) < 4 or len(set(sizes)) < 4:
        raise InvalidArgumentError(f"need at least 4 distinct sizes, got {sizes}")
    if min(sizes) < 2 or max(sizes) < 4 * min(sizes):
        raise InvalidArgumentError(f"sizes must span at least a 4x range, got {sizes}")
    runtimes = []
    for n in sizes:
        rng = np.random.default_rng([int(train_config.seed), 7, n])
        x1 = rng.uniform(*domain.x1_range, n)
        x2 = rng.uniform(*domain.x2_range, n)
        y = toy_surface(x1, x2) + rng.normal(0.0, domain.noise_sd, n)
        data = Dataset(np.column_stack([x1, x2]), y, coverage=100)
        start = sample_start(preset.template, data,
                             start_draws(train_config.seed, 0, len(preset.template.params)))
        times = [fit(preset.template, data, start, train_config).duration_s for _ in range(repeats)]
        runtimes.append(float(np.median(times)))
    return ComplexityResult(loglog_slope(sizes, runtimes), sizes, runtimes)
