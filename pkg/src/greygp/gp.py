"""Exact Gaussian-process regression with a constant mean.

Everything goes through a Cholesky factor of ``K_y = K + noise * I``; no
explicit inverse of ``K_y`` is formed except where the gradient needs the
full matrix, and then it comes from the factor.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import lapack, solve_triangular

from . import kernels
from .errors import DegenerateTargetError, InvalidArgumentError, NumericalFailure
from .kernels import GramEvaluator, KernelSpec

log = logging.getLogger(__name__)

JITTER_LADDER = (1e-8, 1e-6, 1e-4)
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GPModel:
    mean: float
    kernel: KernelSpec
    noise_variance: float

    def __post_init__(self):
        if not np.isfinite(self.mean):
            raise InvalidArgumentError(f"mean must be finite, got {self.mean!r}")
        if not np.isfinite(self.noise_variance) or self.noise_variance <= 0:
            raise InvalidArgumentError(
                f"noise_variance must be positive, got {self.noise_variance!r}")
        kernels.validate(self.kernel)

    @property
    def param_names(self) -> list[str]:
        return kernels.param_names(self.kernel) + ["mean", "noise_variance"]

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([kernels.get_params(self.kernel), [self.mean, self.noise_variance]])

    def with_params(self, values: Sequence[float]) -> "GPModel":
        values = np.asarray(values, dtype=float)
        return replace(self, kernel=kernels.with_params(self.kernel, values[:-2]),
                       mean=float(values[-2]), noise_variance=float(values[-1]))


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    coverage: int | str = "external"
    provenance: str = "toy"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] < 1:
            raise InvalidArgumentError("dataset needs at least one input row")
        if X.shape[0] != y.shape[0]:
            raise InvalidArgumentError(f"{X.shape[0]} inputs but {y.shape[0]} targets")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidArgumentError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]


def cholesky_with_jitter(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K``, adding diagonal jitter only if needed.

    Jitter escalates through ``JITTER_LADDER`` as multiples of the mean
    diagonal. Returns the factor and the absolute jitter that was added.
    """
    L, info = lapack.dpotrf(K, lower=1, clean=1)
    if info == 0:
        return L, 0.0
    scale = float(np.mean(np.diag(K)))
    tried = []
    if np.isfinite(scale) and scale > 0:
        for rel in JITTER_LADDER:
            jitter = rel * scale
            tried.append(jitter)
            L, info = lapack.dpotrf(K + jitter * np.eye(K.shape[0]), lower=1, clean=1)
            if info == 0:
                log.info("cholesky succeeded with jitter %.3e (%.0e of mean diagonal)", jitter, rel)
                return L, jitter
    raise NumericalFailure(f"covariance matrix not positive definite; tried jitters {tried}",
                           jitters=tuple(tried))


class Posterior:
    """Factorised training state; immutable once built."""

    def __init__(self, model: GPModel, train: Dataset, evaluator: GramEvaluator | None = None):
        self.model = model
        self.X = train.X
        ev = evaluator or GramEvaluator(model.kernel, train.X)
        K = ev.gram(model.kernel)
        K[np.diag_indices_from(K)] += model.noise_variance
        self.chol, self.jitter = cholesky_with_jitter(K)
        self.residual = train.y - model.mean
        self.alpha = lapack.dpotrs(self.chol, self.residual, lower=1)[0]
        for arr in (self.chol, self.residual, self.alpha):
            arr.flags.writeable = False

    def log_marginal_likelihood(self) -> float:
        n = self.residual.shape[0]
        log_det = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        return -0.5 * float(self.residual @ self.alpha) - 0.5 * log_det - 0.5 * n * _LOG_2PI

    def predict(self, Xs) -> tuple[np.ndarray, np.ndarray]:
        Xs = np.asarray(Xs, dtype=float)
        if Xs.ndim == 1:
            Xs = Xs[:, None]
        if Xs.shape[0] == 0:
            return np.empty(0), np.empty(0)
        model = self.model
        Ks = kernels.covariance_matrix(model.kernel, self.X, Xs)
        mean = model.mean + Ks.T @ self.alpha
        v = solve_triangular(self.chol, Ks, lower=True, check_finite=False)
        prior = kernels.kernel_diag(model.kernel, Xs)
        var = prior - np.einsum("ij,ij->j", v, v)
        var = np.maximum(var, 0.0) + model.noise_variance
        return mean, var


def log_marginal_likelihood(model: GPModel, data: Dataset) -> float:
    return Posterior(model, data).log_marginal_likelihood()


def lml_and_gradient(model: GPModel, data: Dataset, free_params: Sequence[str] | None = None,
                     evaluator: GramEvaluator | None = None) -> tuple[float, np.ndarray]:
    """Log marginal likelihood and its gradient over ``free_params``.

    The gradient is taken on the raw (untransformed) scale and ordered as
    ``free_params``; by default every model hyperparameter, canonical order.
    """
    names = model.param_names
    free = list(names) if free_params is None else list(free_params)
    unknown = [f for f in free if f not in names]
    if unknown:
        raise InvalidArgumentError(f"unknown hyperparameters {unknown}; valid: {names}")

    ev = evaluator or GramEvaluator(model.kernel, data.X)
    K, factors = ev.gram_and_factors(model.kernel)
    r = data.y - model.mean
    n = r.shape[0]
    Ky = K.copy()
    Ky.flat[:: n + 1] += model.noise_variance
    L, _ = cholesky_with_jitter(Ky)
    alpha = lapack.dpotrs(L, r, lower=1)[0]
    lml = (-0.5 * float(r @ alpha) - float(np.sum(np.log(np.diag(L))))
           - 0.5 * n * _LOG_2PI)

    # dpotri leaves Ky^-1 in the lower triangle only. For symmetric G,
    # sum(Ky^-1 * G) = sum((2 * tril - diag) * G), so fold that into W and skip
    # the symmetrisation: dL/dtheta = 0.5 * sum(W * dKy/dtheta).
    Ky_inv_low = lapack.dpotri(L, lower=1)[0]
    inv_diag = np.diag(Ky_inv_low).copy()
    Ky_inv_low *= 2.0
    WK = np.outer(alpha, alpha)
    WK -= Ky_inv_low
    WK.flat[:: n + 1] += inv_diag
    WK *= K

    kernel_names = kernels.param_names(model.kernel)
    grads = {}
    for name, (coef, base) in zip(kernel_names, factors):
        if name in free:
            total = WK.sum() if base is None else np.vdot(WK, base)
            grads[name] = 0.5 * coef * float(total)
    if "mean" in free:
        grads["mean"] = float(np.sum(alpha))
    if "noise_variance" in free:
        grads["noise_variance"] = 0.5 * (float(alpha @ alpha) - float(inv_diag.sum()))
    return lml, np.array([grads[f] for f in free])


def lml_gradient(model: GPModel, data: Dataset, free_params: Sequence[str] | None = None) -> np.ndarray:
    return lml_and_gradient(model, data, free_params)[1]


def predict(model: GPModel, train: Dataset, Xs, posterior: Posterior | None = None):
    """Posterior predictive mean and variance (noise included) at ``Xs``."""
    if posterior is None or posterior.model is not model:
        posterior = Posterior(model, train)
    return posterior.predict(Xs)


def nmse(predicted, truth) -> float:
    """Normalised MSE, scaled so that predicting the truth's mean scores 100."""
    pred = np.asarray(predicted, dtype=float).ravel()
    true = np.asarray(truth, dtype=float).ravel()
    if pred.shape != true.shape:
        raise InvalidArgumentError(f"length mismatch: {pred.size} vs {true.size}")
    if true.size < 2:
        raise InvalidArgumentError("nmse needs at least two points")
    var = float(np.var(true))
    if not var > 0:
        raise DegenerateTargetError("truth has zero variance")
    return 100.0 * float(np.mean((pred - true) ** 2)) / var
