"""Toy surface generation, coverage-banded sampling, evaluation grids and CSV I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .gp import Dataset

COVERAGES = tuple(range(10, 101, 10))

# sin(4 x1) repeats every pi/2 in x1
TRUE_PERIOD = math.pi / 2


@dataclass(frozen=True)
class DomainSpec:
    x1_range: tuple[float, float] = (0.0, 10.0)
    x2_range: tuple[float, float] = (-5.0, 5.0)
    points_per_decile: int = 100
    noise_sd: float = 0.05
    grid_resolution: tuple[int, int] = (50, 50)

    def __post_init__(self):
        for name in ("x1_range", "x2_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise InvalidArgumentError(f"{name} must satisfy lo < hi, got {(lo, hi)}")
            object.__setattr__(self, name, (lo, hi))
        if int(self.points_per_decile) < 1:
            raise InvalidArgumentError("points_per_decile must be positive")
        if not (np.isfinite(self.noise_sd) and self.noise_sd >= 0):
            raise InvalidArgumentError("noise_sd must be non-negative")
        res = tuple(int(r) for r in self.grid_resolution)
        if len(res) != 2 or min(res) < 1:
            raise InvalidArgumentError(f"grid_resolution must be two positive ints, got {res}")
        object.__setattr__(self, "grid_resolution", res)
        object.__setattr__(self, "points_per_decile", int(self.points_per_decile))
        span = self.x1_range[1] - self.x1_range[0]
        if span < 3 * TRUE_PERIOD:
            raise InvalidArgumentError(
                f"x1 range spans {span / TRUE_PERIOD:.2f} periods; need at least 3")


def toy_surface(x1, x2):
    """y = sqrt(|x2|) * sin(4 * x1); works on scalars and arrays."""
    out = np.sqrt(np.abs(x2)) * np.sin(4.0 * np.asarray(x1, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def check_coverage(coverage_pct) -> int:
    if isinstance(coverage_pct, bool) or int(coverage_pct) != coverage_pct \
            or int(coverage_pct) not in COVERAGES:
        raise InvalidArgumentError(
            f"coverage must be one of {list(COVERAGES)}, got {coverage_pct!r}")
    return int(coverage_pct)


def coverage_band(x1_range: tuple[float, float], coverage_pct) -> tuple[float, float]:
    """The contiguous x1 interval covered at ``coverage_pct``, growing from the low end."""
    pct = check_coverage(coverage_pct)
    lo, hi = x1_range
    upper = hi if pct == 100 else lo + (hi - lo) * pct / 100.0
    return lo, upper


def sample_coverage(domain: DomainSpec, coverage_pct, rng_seed) -> Dataset:
    """Draw ``points_per_decile`` uniform points in every covered tenth of x1.

    Stratifying by tenth keeps the per-decile count exact; within a tenth the
    points are uniform, and x2 always spans its full range.
    """
    pct = check_coverage(coverage_pct)
    rng = np.random.default_rng(rng_seed)
    lo, hi = domain.x1_range
    width = (hi - lo) / 10.0
    m = domain.points_per_decile
    deciles = pct // 10
    x1 = np.concatenate([lo + width * (k + rng.random(m)) for k in range(deciles)])
    _, band_hi = coverage_band(domain.x1_range, pct)
    x1 = np.minimum(x1, band_hi)
    x2 = rng.uniform(domain.x2_range[0], domain.x2_range[1], x1.size)
    y = toy_surface(x1, x2)
    if domain.noise_sd > 0:
        y = y + rng.normal(0.0, domain.noise_sd, x1.size)
    return Dataset(np.column_stack([x1, x2]), y, coverage=pct, provenance="toy")


def evaluation_grid(domain: DomainSpec) -> tuple[np.ndarray, np.ndarray]:
    """Regular grid over the whole domain (x1 major, row-major) with noiseless targets."""
    n1, n2 = domain.grid_resolution
    g1 = np.linspace(*domain.x1_range, n1)
    g2 = np.linspace(*domain.x2_range, n2)
    A, B = np.meshgrid(g1, g2, indexing="ij")
    X = np.column_stack([A.ravel(), B.ravel()])
    return X, toy_surface(X[:, 0], X[:, 1])


def band_mask(X: np.ndarray, x1_range: tuple[float, float], coverage_pct) -> np.ndarray:
    lo, hi = coverage_band(x1_range, coverage_pct)
    x1 = np.asarray(X)[:, 0]
    return (x1 >= lo) & (x1 <= hi)


def empirical_x1_range(data: Dataset) -> tuple[float, float]:
    lo, hi = float(data.X[:, 0].min()), float(data.X[:, 0].max())
    if not lo < hi:
        raise InvalidArgumentError("x1 values are all identical; coverage bands undefined")
    return lo, hi


def subset_coverage(data: Dataset, coverage_pct) -> Dataset:
    """Rows of an external dataset inside the coverage band of its own x1 range."""
    mask = band_mask(data.X, empirical_x1_range(data), coverage_pct)
    return Dataset(data.X[mask], data.y[mask], coverage=check_coverage(coverage_pct),
                   provenance=data.provenance)


def load_csv(path) -> Dataset:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except FileNotFoundError:
        raise FileNotFoundError(f"no such dataset file: {path}") from None
    rows = list(csv.reader(text.splitlines()))
    if not rows or [c.strip() for c in rows[0]] != ["x1", "x2", "y"]:
        raise InvalidArgumentError(f"{path}: line 1: expected header 'x1,x2,y'")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise InvalidArgumentError(f"{path}: line {lineno}: expected 3 columns, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise InvalidArgumentError(f"{path}: line {lineno}: non-numeric value in {row}") from None
        if not all(math.isfinite(v) for v in vals):
            raise InvalidArgumentError(f"{path}: line {lineno}: non-finite value in {row}")
        values.append(vals)
    if len(values) < 2:
        raise InvalidArgumentError(f"{path}: need at least 2 data rows, got {len(values)}")
    arr = np.array(values)
    return Dataset(arr[:, :2], arr[:, 2], coverage="external", provenance="csv")


def write_csv(data: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x1", "x2", "y"])
        for (a, b), y in zip(data.X, data.y):
            writer.writerow([repr(float(a)), repr(float(b)), repr(float(y))])
