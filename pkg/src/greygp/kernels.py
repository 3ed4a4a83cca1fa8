"""Covariance functions: squared exponential, periodic, and their product.

A kernel tree carries exactly one output variance, held by its root. Children
of a product node are evaluated at unit variance and multiplied together.

Flat hyperparameter vectors always follow the canonical order

    [variance, <component lengthscales in tree order>, <component periods>]

and component names are ``"{kind}{index}"`` with ``index`` the position of the
leaf in a depth-first walk, e.g. ``se0.lengthscale`` or ``periodic1.period``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from .errors import InvalidArgumentError

SE = "se"
PERIODIC = "periodic"
PRODUCT = "product"
KINDS = (SE, PERIODIC, PRODUCT)

_KIND_ALIASES = {
    "se": SE,
    "squaredexponential": SE,
    "squared_exponential": SE,
    "rbf": SE,
    "periodic": PERIODIC,
    "per": PERIODIC,
    "product": PRODUCT,
    "prod": PRODUCT,
}


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    lengthscale: float | None = None
    variance: float = 1.0
    period: float | None = None
    active_dims: tuple[int, ...] = ()
    children: tuple["KernelSpec", ...] = field(default_factory=tuple)

    def leaves(self) -> list["KernelSpec"]:
        if self.kind == PRODUCT:
            out: list[KernelSpec] = []
            for child in self.children:
                out.extend(child.leaves())
            return out
        return [self]


def se(lengthscale: float, active_dims: Sequence[int], variance: float = 1.0) -> KernelSpec:
    return KernelSpec(SE, lengthscale=float(lengthscale), variance=float(variance),
                      active_dims=tuple(int(d) for d in active_dims))


def periodic(lengthscale: float, period: float, active_dim: int, variance: float = 1.0) -> KernelSpec:
    return KernelSpec(PERIODIC, lengthscale=float(lengthscale), period=float(period),
                      variance=float(variance), active_dims=(int(active_dim),))


def product(*children: KernelSpec, variance: float = 1.0) -> KernelSpec:
    kids = tuple(replace(c, variance=1.0) if c.kind != PRODUCT else c for c in children)
    return KernelSpec(PRODUCT, variance=float(variance), children=kids)


def _positive(name: str, value: Any) -> None:
    if value is None or not np.isfinite(value) or value <= 0:
        raise InvalidArgumentError(f"{name} must be a positive finite number, got {value!r}")


def validate(spec: KernelSpec, input_dim: int | None = None, *, _root: bool = True) -> None:
    """Raise InvalidArgumentError unless ``spec`` is well formed."""
    if spec.kind not in KINDS:
        raise InvalidArgumentError(f"unknown kernel kind {spec.kind!r}")
    if _root:
        _positive("variance", spec.variance)
    elif spec.variance != 1.0:
        raise InvalidArgumentError("only the root of a kernel tree may carry a variance")
    if spec.kind == PRODUCT:
        if len(spec.children) < 2:
            raise InvalidArgumentError("a product kernel needs at least two children")
        for child in spec.children:
            validate(child, input_dim, _root=False)
        return
    if spec.children:
        raise InvalidArgumentError(f"{spec.kind} kernel cannot have children")
    _positive("lengthscale", spec.lengthscale)
    if not spec.active_dims:
        raise InvalidArgumentError("active_dims must be non-empty")
    if len(set(spec.active_dims)) != len(spec.active_dims) or min(spec.active_dims) < 0:
        raise InvalidArgumentError(f"bad active_dims {spec.active_dims}")
    if input_dim is not None and max(spec.active_dims) >= input_dim:
        raise InvalidArgumentError(
            f"active_dims {spec.active_dims} out of range for {input_dim}-d inputs")
    if spec.kind == PERIODIC:
        _positive("period", spec.period)
        if len(spec.active_dims) != 1:
            raise InvalidArgumentError("periodic kernel takes exactly one active dimension")


# -- scalar evaluation ------------------------------------------------------


def _vec(x, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


def eval_se(x, x2, lengthscale: float, variance: float, active_dims: Sequence[int] | None = None) -> float:
    """Squared exponential covariance between two points."""
    a, b = _vec(x, "x"), _vec(x2, "x'")
    _positive("lengthscale", lengthscale)
    _positive("variance", variance)
    dims = list(active_dims) if active_dims is not None else list(range(a.size))
    d2 = float(np.sum((a[dims] - b[dims]) ** 2))
    return variance * math.exp(-d2 / (2.0 * lengthscale**2))


def eval_periodic(x, x2, lengthscale: float, period: float, variance: float,
                  active_dims: Sequence[int] | None = None) -> float:
    a, b = _vec(x, "x"), _vec(x2, "x'")
    _positive("lengthscale", lengthscale)
    _positive("period", period)
    _positive("variance", variance)
    dims = list(active_dims) if active_dims is not None else list(range(a.size))
    if len(dims) != 1:
        raise InvalidArgumentError("periodic kernel takes exactly one active dimension")
    r = abs(a[dims[0]] - b[dims[0]])
    s = math.sin(math.pi * r / period)
    return variance * math.exp(-2.0 * s * s / lengthscale**2)


def eval_kernel(spec: KernelSpec, x, x2) -> float:
    validate(spec)
    a, b = _vec(x, "x"), _vec(x2, "x'")
    return spec.variance * _eval_unit(spec, a, b)


def _eval_unit(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> float:
    if spec.kind == SE:
        return eval_se(a, b, spec.lengthscale, 1.0, spec.active_dims)
    if spec.kind == PERIODIC:
        return eval_periodic(a, b, spec.lengthscale, spec.period, 1.0, spec.active_dims)
    value = 1.0
    for child in spec.children:
        value *= _eval_unit(child, a, b)
    return value


# -- hyperparameter bookkeeping ---------------------------------------------


def param_names(spec: KernelSpec) -> list[str]:
    leaves = spec.leaves()
    names = ["variance"]
    names += [f"{leaf.kind}{i}.lengthscale" for i, leaf in enumerate(leaves)]
    names += [f"{leaf.kind}{i}.period" for i, leaf in enumerate(leaves) if leaf.kind == PERIODIC]
    return names


def get_params(spec: KernelSpec) -> np.ndarray:
    leaves = spec.leaves()
    vals = [spec.variance]
    vals += [leaf.lengthscale for leaf in leaves]
    vals += [leaf.period for leaf in leaves if leaf.kind == PERIODIC]
    return np.array(vals, dtype=float)


def with_params(spec: KernelSpec, values: Sequence[float]) -> KernelSpec:
    """Return a copy of ``spec`` with hyperparameters replaced, canonical order."""
    values = [float(v) for v in values]
    n_leaves = len(spec.leaves())
    n_per = sum(1 for leaf in spec.leaves() if leaf.kind == PERIODIC)
    if len(values) != 1 + n_leaves + n_per:
        raise InvalidArgumentError(
            f"expected {1 + n_leaves + n_per} kernel hyperparameters, got {len(values)}")
    lengthscales = iter(values[1:1 + n_leaves])
    periods = iter(values[1 + n_leaves:])

    def rebuild(node: KernelSpec) -> KernelSpec:
        if node.kind == PRODUCT:
            return replace(node, children=tuple(rebuild(c) for c in node.children))
        new = replace(node, lengthscale=next(lengthscales))
        if node.kind == PERIODIC:
            new = replace(new, period=next(periods))
        return new

    return replace(rebuild(spec), variance=values[0])


# -- matrices ----------------------------------------------------------------


def _as_2d(X, name: str) -> np.ndarray:
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidArgumentError(f"{name} must be a 2-d array of shape (n, d)")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


def pairwise_distances(spec: KernelSpec, X, X2=None) -> list[np.ndarray]:
    """Per-leaf lag matrices: squared distance for SE, signed difference for periodic.

    These depend only on the inputs, so callers that evaluate one design under
    many hyperparameter settings compute them once. The periodic kernel is even
    in its lag, so the sign of the difference never reaches the result.
    """
    X, X2 = _check_pair(spec, X, X2)
    out = []
    for leaf in spec.leaves():
        if leaf.kind == SE:
            d = np.zeros((X.shape[0], X2.shape[0]))
            for dim in leaf.active_dims:
                diff = X[:, dim][:, None] - X2[:, dim][None, :]
                d += diff * diff
        else:
            dim = leaf.active_dims[0]
            d = X[:, dim][:, None] - X2[:, dim][None, :]
        out.append(d)
    return out


def _check_pair(spec: KernelSpec, X, X2):
    X = _as_2d(X, "X")
    X2 = X if X2 is None else _as_2d(X2, "X'")
    if X.shape[1] != X2.shape[1]:
        raise InvalidArgumentError(f"input dimension mismatch: {X.shape[1]} vs {X2.shape[1]}")
    validate(spec, X.shape[1])
    return X, X2


class GramEvaluator:
    """Gram matrix and gradient factors for a fixed input design.

    Periodic terms are memoised on the period value, so a kernel whose period
    never changes pays for them once.
    """

    def __init__(self, spec: KernelSpec, X, X2=None):
        self.template = spec
        X, X2 = _check_pair(spec, X, X2)
        self.distances = pairwise_distances(spec, X, X2)
        self._coords = {i: (X[:, leaf.active_dims[0]], X2[:, leaf.active_dims[0]])
                        for i, leaf in enumerate(spec.leaves()) if leaf.kind == PERIODIC}
        self._trig: dict[int, tuple[float, np.ndarray, np.ndarray]] = {}

    def _periodic_terms(self, i: int, period: float):
        cached = self._trig.get(i)
        if cached is not None and cached[0] == period:
            return cached[1], cached[2]
        # sin(a - b) = sin a cos b - cos a sin b keeps the trig O(n); the result
        # is exactly antisymmetric, so sin^2 stays exactly symmetric.
        a, b = self._coords[i]
        sa, ca = np.sin(a * (math.pi / period)), np.cos(a * (math.pi / period))
        sb, cb = np.sin(b * (math.pi / period)), np.cos(b * (math.pi / period))
        s = np.multiply.outer(sa, cb)
        s -= np.multiply.outer(ca, sb)
        c = np.multiply.outer(ca, cb)
        c += np.multiply.outer(sa, sb)
        # r * sin(2 pi r / p), the base of d log k / d period
        c *= s
        c *= self.distances[i]
        c *= 2.0
        s *= s
        self._trig[i] = (period, s, c)
        return s, c

    def gram(self, spec: KernelSpec) -> np.ndarray:
        return self.gram_and_factors(spec, with_factors=False)[0]

    def gram_and_factors(self, spec: KernelSpec, with_factors: bool = True):
        """Return ``K`` and, per canonical parameter, a ``(coef, base)`` pair.

        ``dK/dtheta = coef * base * K`` elementwise, with ``base=None`` standing
        for a matrix of ones. This holds because each leaf enters the product
        multiplicatively and is strictly positive.
        """
        leaves = spec.leaves()
        neg_log_k = None
        ls_factors, per_factors = [], []
        for i, leaf in enumerate(leaves):
            d = self.distances[i]
            ell = leaf.lengthscale
            if leaf.kind == SE:
                base, coef = d, 0.5 / ell**2
                if with_factors:
                    ls_factors.append((1.0 / ell**3, d))
            else:
                sin2, r_sin_double = self._periodic_terms(i, leaf.period)
                base, coef = sin2, 2.0 / ell**2
                if with_factors:
                    ls_factors.append((4.0 / ell**3, sin2))
                    per_factors.append((2.0 * math.pi / (ell**2 * leaf.period**2), r_sin_double))
            if neg_log_k is None:
                neg_log_k = base * (-coef)
            else:
                neg_log_k -= coef * base
        K = np.exp(neg_log_k, out=neg_log_k)
        K *= spec.variance
        if not with_factors:
            return K, []
        return K, [(1.0 / spec.variance, None)] + ls_factors + per_factors


def covariance_matrix(spec: KernelSpec, X, X2=None) -> np.ndarray:
    """Gram matrix with entry (i, j) = k(X_i, X2_j)."""
    return GramEvaluator(spec, X, X2).gram(spec)


def kernel_diag(spec: KernelSpec, X) -> np.ndarray:
    X = _as_2d(X, "X")
    validate(spec, X.shape[1])
    # every supported kernel is stationary and equals its variance at zero lag
    return np.full(X.shape[0], spec.variance)


def kernel_gradients(spec: KernelSpec, X, fixed: Sequence[str] = ()) -> list[np.ndarray]:
    """dK/dtheta for every kernel hyperparameter not listed in ``fixed``."""
    ev = GramEvaluator(spec, X)
    K, factors = ev.gram_and_factors(spec)
    names = param_names(spec)
    unknown = set(fixed) - set(names)
    if unknown:
        raise InvalidArgumentError(f"unknown kernel parameters {sorted(unknown)}")
    return [K * coef if base is None else K * base * coef
            for name, (coef, base) in zip(names, factors) if name not in fixed]


# -- serialisation ------------------------------------------------------------


def to_dict(spec: KernelSpec) -> dict[str, Any]:
    out: dict[str, Any] = {"kind": spec.kind}
    if spec.kind == PRODUCT:
        out["variance"] = spec.variance
        out["children"] = [_leaf_dict(c) if c.kind != PRODUCT else to_dict(c) for c in spec.children]
        return out
    out.update(_leaf_dict(spec))
    out["variance"] = spec.variance
    return out


def _leaf_dict(leaf: KernelSpec) -> dict[str, Any]:
    d: dict[str, Any] = {"kind": leaf.kind, "lengthscale": leaf.lengthscale,
                         "active_dims": list(leaf.active_dims)}
    if leaf.kind == PERIODIC:
        d["period"] = leaf.period
    return d


def from_dict(data: dict[str, Any], *, _root: bool = True) -> KernelSpec:
    if not isinstance(data, dict) or "kind" not in data:
        raise InvalidArgumentError(f"kernel config must be a mapping with a 'kind' key: {data!r}")
    kind = _KIND_ALIASES.get(str(data["kind"]).lower())
    if kind is None:
        raise InvalidArgumentError(f"unknown kernel kind {data['kind']!r}")
    unknown = set(data) - {"kind", "lengthscale", "variance", "period", "active_dims", "children"}
    if unknown:
        raise InvalidArgumentError(f"unknown kernel keys {sorted(unknown)}")
    variance = float(data.get("variance", 1.0))
    if kind == PRODUCT:
        children = tuple(from_dict(c, _root=False) for c in data.get("children", []))
        spec = KernelSpec(PRODUCT, variance=variance, children=children)
    else:
        dims = data.get("active_dims")
        if dims is None:
            raise InvalidArgumentError(f"{kind} kernel needs active_dims")
        period = data.get("period")
        spec = KernelSpec(kind, lengthscale=_float_or_none(data.get("lengthscale")),
                          variance=variance, period=_float_or_none(period),
                          active_dims=tuple(int(d) for d in dims))
    if _root:
        validate(spec)
    return spec


def _float_or_none(v) -> float | None:
    return None if v is None else float(v)

