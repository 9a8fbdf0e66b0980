"""The six vulnerability discovery model (VDM) curve families.

Each family maps time-in-market t (months since release, t > 0) to an
expected cumulative vulnerability count:

    AML  B / (B*C*exp(-A*B*t) + 1)      Alhazmi-Malaiya Logistic (s-shape)
    AT   k*ln(t) + C                    Anderson Thermodynamic (k folds the
                                        original K/gamma ratio into a single
                                        identifiable coefficient)
    LN   A*t + B                        Linear
    LP   beta0*ln(1 + beta1*t)          Logistic Poisson (Musa-Okumoto)
    RE   N*(1 - exp(-lambda*t))         Rescorla Exponential
    RQ   A*t^2/2 + B*t                  Rescorla Quadratic

Everything here is a pure function of (model id, parameter values, t);
parameter sign constraints live in ``default_domain`` and are enforced by
the fitter, not by ``evaluate``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "MODEL_IDS",
    "MODELS",
    "DomainError",
    "ModelSpec",
    "ParamVector",
    "UnknownModelError",
    "default_domain",
    "evaluate",
    "gradient",
    "param_count",
    "spec",
]

MODEL_IDS = ("AML", "AT", "LN", "LP", "RE", "RQ")

_PARAM_NAMES = {
    "AML": ("A", "B", "C"),
    "AT": ("k", "C"),
    "LN": ("A", "B"),
    "LP": ("beta0", "beta1"),
    "RE": ("N", "lambda"),
    "RQ": ("A", "B"),
}

_INF = math.inf

_DOMAINS = {
    "AML": ((0.0, _INF), (0.0, _INF), (0.0, _INF)),
    "AT": ((-_INF, _INF), (-_INF, _INF)),
    "LN": ((-_INF, _INF), (-_INF, _INF)),
    "LP": ((0.0, _INF), (0.0, _INF)),
    "RE": ((0.0, _INF), (0.0, _INF)),
    "RQ": ((-_INF, _INF), (-_INF, _INF)),
}


class UnknownModelError(ValueError):
    """Model id is not one of the six family ids."""


class DomainError(ValueError):
    """Evaluation requested outside the mathematical domain (t <= 0, or a
    parameter combination that makes a logarithm argument or the AML
    denominator non-positive)."""


@dataclass(frozen=True)
class ModelSpec:
    """Identity card of one curve family."""

    id: str
    param_names: tuple[str, ...]

    @property
    def param_count(self) -> int:
        return len(self.param_names)


MODELS = {mid: ModelSpec(mid, _PARAM_NAMES[mid]) for mid in MODEL_IDS}


def spec(model_id: str) -> ModelSpec:
    try:
        return MODELS[model_id]
    except KeyError:
        raise UnknownModelError(f"unknown model id {model_id!r}; expected one of {MODEL_IDS}") from None


def param_count(model_id: str) -> int:
    return spec(model_id).param_count


@dataclass(frozen=True)
class ParamVector:
    """A model id plus one finite value per parameter, in declared order."""

    model_id: str
    values: tuple[float, ...]

    def __post_init__(self):
        s = spec(self.model_id)
        values = tuple(float(v) for v in self.values)
        if len(values) != s.param_count:
            raise ValueError(
                f"{self.model_id} takes {s.param_count} parameters {s.param_names}, got {len(values)}"
            )
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite parameter values {values}")
        object.__setattr__(self, "values", values)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(spec(self.model_id).param_names, self.values))


Number = Union[float, np.ndarray]


def _check_params(model_id: str, params: Sequence[float]) -> np.ndarray:
    s = spec(model_id)
    p = np.asarray(params, dtype=float)
    if p.shape != (s.param_count,):
        raise ValueError(
            f"{model_id} takes {s.param_count} parameters {s.param_names}, got shape {p.shape}"
        )
    if not np.all(np.isfinite(p)):
        raise ValueError(f"non-finite parameter values {p.tolist()}")
    return p


def _check_t(t: Number) -> tuple[np.ndarray, bool]:
    arr = np.asarray(t, dtype=float)
    scalar = arr.ndim == 0
    if np.any(arr <= 0.0) or not np.all(np.isfinite(arr)):
        raise DomainError(f"t must be finite and > 0, got {t!r}")
    return arr, scalar


def evaluate(model_id: str, params: Sequence[float], t: Number) -> Number:
    """Expected cumulative count of ``model_id`` at time(s) t.

    Accepts a scalar or array t; scalar in, float out. Pure and
    deterministic: identical inputs give bitwise-identical outputs.
    """
    p = _check_params(model_id, params)
    tt, scalar = _check_t(t)

    if model_id == "AML":
        a, b, c = p
        denom = b * c * np.exp(-a * b * tt) + 1.0
        if np.any(denom <= 0.0):
            raise DomainError(f"AML denominator B*C*exp(-A*B*t)+1 <= 0 for params {p.tolist()}")
        out = b / denom
    elif model_id == "AT":
        k, c = p
        out = k * np.log(tt) + c
    elif model_id == "LN":
        a, b = p
        out = a * tt + b
    elif model_id == "LP":
        b0, b1 = p
        arg = 1.0 + b1 * tt
        if np.any(arg <= 0.0):
            raise DomainError(f"LP log argument 1+beta1*t <= 0 for params {p.tolist()}")
        out = b0 * np.log(arg)
    elif model_id == "RE":
        n, lam = p
        out = n * -np.expm1(-lam * tt)
    else:  # RQ
        a, b = p
        out = a * tt * tt / 2.0 + b * tt

    return float(out) if scalar else out


def gradient(model_id: str, params: Sequence[float], t: Number) -> np.ndarray:
    """Partial derivatives of the curve with respect to each parameter.

    Returns shape (param_count,) for scalar t, (len(t), param_count) for
    array t, in ``param_names`` order.
    """
    p = _check_params(model_id, params)
    tt, scalar = _check_t(t)

    if model_id == "AML":
        a, b, c = p
        e = np.exp(-a * b * tt)
        denom = b * c * e + 1.0
        if np.any(denom <= 0.0):
            raise DomainError(f"AML denominator B*C*exp(-A*B*t)+1 <= 0 for params {p.tolist()}")
        d2 = denom * denom
        cols = (
            b * b * b * c * tt * e / d2,
            (denom - b * c * e * (1.0 - a * b * tt)) / d2,
            -b * b * e / d2,
        )
    elif model_id == "AT":
        logt = np.log(tt)
        cols = (logt, np.ones_like(tt))
    elif model_id == "LN":
        cols = (tt, np.ones_like(tt))
    elif model_id == "LP":
        b0, b1 = p
        arg = 1.0 + b1 * tt
        if np.any(arg <= 0.0):
            raise DomainError(f"LP log argument 1+beta1*t <= 0 for params {p.tolist()}")
        cols = (np.log(arg), b0 * tt / arg)
    elif model_id == "RE":
        n, lam = p
        decay = np.exp(-lam * tt)
        cols = (-np.expm1(-lam * tt), n * tt * decay)
    else:  # RQ
        cols = (tt * tt / 2.0, tt)

    jac = np.stack(np.broadcast_arrays(*cols), axis=-1)
    return jac


def default_domain(model_id: str) -> tuple[tuple[float, float], ...]:
    """Per-parameter (lower, upper) fitting box.

    AML, LP and RE parameters are strictly positive (asymptote/rate
    readings only make sense there); AT, LN and RQ are unconstrained.
    """
    spec(model_id)
    return _DOMAINS[model_id]
