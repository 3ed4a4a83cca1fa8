"""Marginal-likelihood training with ADAM under free, bounded and fixed constraints."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np
from scipy.special import expit, logit

from .errors import DivergedRunError, InvalidArgumentError, NumericalFailure
from .gp import Dataset, GPModel, Posterior, lml_and_gradient, nmse
from .kernels import GramEvaluator

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FreePositive:
    pass


@dataclass(frozen=True)
class FreeReal:
    pass


@dataclass(frozen=True)
class Bounded:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise InvalidArgumentError(f"bounds need lo < hi, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class Fixed:
    value: float


Constraint = Union[FreePositive, FreeReal, Bounded, Fixed]

# start-point sampling rules, keyed by ParamSpec.init
INIT_RULES = ("variance", "lengthscale", "unit_lengthscale", "period", "mean", "noise")


@dataclass(frozen=True)
class ParamSpec:
    name: str
    constraint: Constraint
    init: str

    def __post_init__(self):
        if self.init not in INIT_RULES:
            raise InvalidArgumentError(f"unknown init rule {self.init!r}; choose from {INIT_RULES}")

    @property
    def fixed(self) -> bool:
        return isinstance(self.constraint, Fixed)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 1000
    learning_rate: float = 0.1
    starts: int = 3
    repeats: int = 3
    seed: int = 0
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        for name in ("iterations", "starts", "repeats"):
            if int(getattr(self, name)) < 1:
                raise InvalidArgumentError(f"{name} must be a positive integer")
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if int(self.seed) < 0:
            raise InvalidArgumentError("seed must be a non-negative integer")
        b1, b2 = self.adam_betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise InvalidArgumentError("adam_betas must lie in [0, 1)")
        object.__setattr__(self, "adam_betas", (float(b1), float(b2)))


@dataclass(frozen=True)
class ModelTemplate:
    """A model structure plus one constraint per hyperparameter, canonical order."""

    model: GPModel
    params: tuple[ParamSpec, ...]

    def __post_init__(self):
        names = [p.name for p in self.params]
        if names != self.model.param_names:
            raise InvalidArgumentError(
                f"param specs {names} do not match model parameters {self.model.param_names}")

    @property
    def free_names(self) -> list[str]:
        return [p.name for p in self.params if not p.fixed]

    @property
    def n_free(self) -> int:
        return len(self.free_names)


# -- transforms ----------------------------------------------------------------


def to_unconstrained(value: float, spec: ParamSpec | Constraint) -> float:
    c = spec.constraint if isinstance(spec, ParamSpec) else spec
    value = float(value)
    if not math.isfinite(value):
        raise InvalidArgumentError(f"non-finite parameter value {value}")
    if isinstance(c, FreePositive):
        if value <= 0:
            raise InvalidArgumentError(f"value {value} must be positive")
        return math.log(value)
    if isinstance(c, Bounded):
        if not c.lo < value < c.hi:
            raise InvalidArgumentError(f"value {value} outside the open interval ({c.lo}, {c.hi})")
        return float(logit((value - c.lo) / (c.hi - c.lo)))
    if isinstance(c, FreeReal):
        return value
    raise InvalidArgumentError("fixed parameters have no unconstrained coordinate")


def from_unconstrained(u: float, spec: ParamSpec | Constraint) -> float:
    c = spec.constraint if isinstance(spec, ParamSpec) else spec
    if isinstance(c, FreePositive):
        return math.exp(u)
    if isinstance(c, Bounded):
        return min(max(c.lo + (c.hi - c.lo) * float(expit(u)), c.lo), c.hi)
    if isinstance(c, FreeReal):
        return float(u)
    raise InvalidArgumentError("fixed parameters have no unconstrained coordinate")


def unconstrained_jacobian(u: float, spec: ParamSpec | Constraint) -> float:
    """d from_unconstrained / du."""
    c = spec.constraint if isinstance(spec, ParamSpec) else spec
    if isinstance(c, FreePositive):
        return math.exp(u)
    if isinstance(c, Bounded):
        s = float(expit(u))
        return (c.hi - c.lo) * s * (1.0 - s)
    if isinstance(c, FreeReal):
        return 1.0
    raise InvalidArgumentError("fixed parameters have no unconstrained coordinate")


# -- ADAM ----------------------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(state: AdamState, grad, t: int, config: TrainConfig) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected ADAM update for *ascent*; returns the new state and the step."""
    grad = np.asarray(grad, dtype=float)
    if t < 1:
        raise InvalidArgumentError("ADAM iteration index starts at 1")
    if grad.shape != state.m.shape:
        raise InvalidArgumentError(f"gradient shape {grad.shape} != state shape {state.m.shape}")
    if not np.all(np.isfinite(grad)):
        raise DivergedRunError(f"non-finite gradient at iteration {t}: {grad}")
    b1, b2 = config.adam_betas
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    step = config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return AdamState(m, v), step


# -- fitting -------------------------------------------------------------------


@dataclass
class FitResult:
    model: GPModel
    param_names: list[str]
    lml_trace: np.ndarray
    param_trace: np.ndarray
    duration_s: float

    @property
    def lml(self) -> float:
        return float(self.lml_trace[-1])

    def write_trace_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iteration", "lml", *self.param_names])
            for i, (lml, row) in enumerate(zip(self.lml_trace, self.param_trace)):
                writer.writerow([i, repr(float(lml)), *(repr(float(v)) for v in row)])


def fit(template: ModelTemplate, data: Dataset, start_point: Sequence[float],
        config: TrainConfig) -> FitResult:
    """Run exactly ``config.iterations`` ADAM ascent steps on the marginal likelihood.

    ``start_point`` holds every hyperparameter in canonical order; entries for
    fixed parameters are ignored in favour of the fixed value. The returned
    model carries the final-iteration parameters. Traces have one row for the
    start and one per step.
    """
    t0 = time.perf_counter()
    specs = template.params
    raw = np.array(start_point, dtype=float)
    if raw.shape != (len(specs),):
        raise InvalidArgumentError(f"start point needs {len(specs)} values, got {raw.shape}")
    free_idx = [i for i, p in enumerate(specs) if not p.fixed]
    for i, p in enumerate(specs):
        if p.fixed:
            raw[i] = p.constraint.value
    u = np.array([to_unconstrained(raw[i], specs[i]) for i in free_idx])
    free_names = [specs[i].name for i in free_idx]

    evaluator = GramEvaluator(template.model.kernel, data.X)
    state = AdamState.zeros(len(free_idx))
    n_iter = int(config.iterations)
    lml_trace = np.empty(n_iter + 1)
    param_trace = np.empty((n_iter + 1, len(specs)))
    model = template.model.with_params(raw)
    for t in range(1, n_iter + 1):
        lml, grad_raw = lml_and_gradient(model, data, free_names, evaluator)
        lml_trace[t - 1] = lml
        param_trace[t - 1] = raw
        jac = np.array([unconstrained_jacobian(u[j], specs[i]) for j, i in enumerate(free_idx)])
        state, step = adam_step(state, grad_raw * jac, t, config)
        u = u + step
        for j, i in enumerate(free_idx):
            raw[i] = from_unconstrained(u[j], specs[i])
        if not np.all(np.isfinite(raw)) or np.any(raw[_positive_idx(specs)] <= 0):
            raise DivergedRunError(f"parameters left their domain at iteration {t}: {raw}")
        model = template.model.with_params(raw)
    param_trace[n_iter] = raw
    lml_trace[n_iter] = Posterior(model, data, evaluator).log_marginal_likelihood()
    duration = time.perf_counter() - t0
    return FitResult(model, list(model.param_names), lml_trace, param_trace, duration)


def _positive_idx(specs: Sequence[ParamSpec]) -> list[int]:
    return [i for i, p in enumerate(specs) if not isinstance(p.constraint, FreeReal)]


# -- start points and multi-start protocol --------------------------------------


def sample_start(template: ModelTemplate, data: Dataset, draws: Sequence[float]) -> np.ndarray:
    """Map unit-interval draws to a start point scaled to ``data``.

    Keeping the draws separate from the data scaling lets one start index mean
    the same relative start across different datasets.
    """
    y_var = float(np.var(data.y))
    y_var = y_var if y_var > 0 else 1.0
    y_sd = math.sqrt(float(np.var(data.y)))
    x_scale = float(np.mean(np.std(data.X, axis=0)))
    x_scale = x_scale if x_scale > 0 else 1.0
    out = np.empty(len(template.params))
    for i, (p, d) in enumerate(zip(template.params, draws)):
        c = p.constraint
        if isinstance(c, Fixed):
            out[i] = c.value
            continue
        if p.init == "variance":
            v = y_var * 10.0 ** (-1.0 + 2.0 * d)
        elif p.init == "lengthscale":
            v = x_scale * 10.0 ** (-1.0 + 2.0 * d)
        elif p.init == "unit_lengthscale":
            v = 10.0 ** (-1.0 + 2.0 * d)
        elif p.init == "noise":
            v = y_var * 10.0 ** (-4.0 + 3.0 * d)
        elif p.init == "mean":
            v = float(np.mean(data.y)) + (2.0 * d - 1.0) * y_sd
        elif isinstance(c, Bounded):  # period
            v = c.lo + (c.hi - c.lo) * d
        else:
            v = x_scale * 10.0 ** (-1.0 + 2.0 * d)
        if isinstance(c, Bounded):
            v = min(max(v, math.nextafter(c.lo, c.hi)), math.nextafter(c.hi, c.lo))
        out[i] = v
    return out


def start_draws(seed: int, start_index: int, n: int) -> np.ndarray:
    return np.random.default_rng([int(seed), 0, int(start_index)]).random(n)


def shuffle_seed(seed: int, repeat_index: int) -> list[int]:
    return [int(seed), 1, int(repeat_index)]


@dataclass
class RunRecord:
    run_index: int
    start: int
    repeat: int
    n_train: int
    nmse: float
    duration_s: float
    lml: float | None = None
    params: dict[str, float] | None = None
    error: str | None = None
    model: GPModel | None = field(default=None, repr=False, compare=False)

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        return {"run_index": self.run_index, "start": self.start, "repeat": self.repeat,
                "n_train": self.n_train, "nmse": self.nmse, "duration_s": self.duration_s,
                "lml": self.lml, "params": self.params, "error": self.error}


DataSource = Union[Dataset, Callable[[int], Dataset]]


def multi_start_fit(template: ModelTemplate, data: DataSource, config: TrainConfig,
                    eval_X, eval_y) -> list[RunRecord]:
    """Run ``starts * repeats`` fits and score each on the evaluation set.

    ``data`` is either one dataset or a callable giving the dataset for a repeat
    index. Each repeat also permutes its rows with its own seed. All records are
    kept; a failed run scores ``inf``.
    """
    n_params = len(template.params)
    records = []
    for r in range(config.repeats):
        base = data(r) if callable(data) else data
        perm = np.random.default_rng(shuffle_seed(config.seed, r)).permutation(base.n)
        train = Dataset(base.X[perm], base.y[perm], coverage=base.coverage,
                        provenance=base.provenance)
        for s in range(config.starts):
            idx = r * config.starts + s
            t0 = time.perf_counter()
            try:
                start = sample_start(template, train, start_draws(config.seed, s, n_params))
                result = fit(template, train, start, config)
                duration = result.duration_s
                mean, _ = Posterior(result.model, train).predict(eval_X)
                score = nmse(mean, eval_y)
            except (NumericalFailure, ValueError) as exc:
                duration = time.perf_counter() - t0
                log.warning("run %d (repeat %d, start %d) failed: %s", idx, r, s, exc)
                records.append(RunRecord(idx, s, r, train.n, math.inf, duration,
                                         error=f"{type(exc).__name__}: {exc}"))
                continue
            params = dict(zip(result.param_names, map(float, result.model.params)))
            records.append(RunRecord(idx, s, r, train.n, score, duration, result.lml,
                                     params, model=result.model))
    return records
