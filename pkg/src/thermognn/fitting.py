"""Least-squares fits of temperature against a hyperparameter.

Power laws ``T = a * x**c`` are fitted as straight lines in log-log space;
``r2`` for them is measured in that space too.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass
class FitResult:
    form: str
    a: float
    c_or_b: float
    r2: float
    n_points: int
    layer: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"layer": self.layer, "form": self.form, "a": self.a, "c_or_b": self.c_or_b,
             "r2": self.r2, "n_points": self.n_points}
        if self.extra:
            d.update(self.extra)
        return d

    def predict(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.form == "power_law":
            return self.a * x ** self.c_or_b
        if self.form == "linear":
            return self.a * x + self.c_or_b
        return self.a * x ** 2 + self.c_or_b * x + self.extra["c0"]


def _r_squared(y, yhat) -> float:
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    # sums below rounding level of the data count as exactly zero
    tiny = len(y) * (1e-12 * max(float(np.max(np.abs(y))), 1e-300)) ** 2
    if ss_tot <= tiny:
        return 1.0 if ss_res <= tiny else 0.0
    return max(0.0, 1.0 - ss_res / ss_tot)


def _ols(x, y, degree):
    design = np.vander(x, degree + 1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef, design @ coef


def _arrays(xs, ys, min_points):
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("xs and ys must be 1-D and of equal length")
    if len(x) < min_points:
        raise ValidationError(f"need at least {min_points} points, got {len(x)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("non-finite data")
    return x, y


def fit_power_law(xs, ys, layer: str = "") -> FitResult:
    x, y = _arrays(xs, ys, 3)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValidationError("power-law fit needs strictly positive data; use fit_linear instead")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise ValidationError("all xs identical; exponent undetermined")
    (c, log_a), fitted = _ols(lx, ly, 1)
    return FitResult("power_law", float(np.exp(log_a)), float(c), _r_squared(ly, fitted), len(x), layer)


def fit_linear(xs, ys, layer: str = "") -> FitResult:
    x, y = _arrays(xs, ys, 2)
    if np.ptp(x) == 0:
        raise ValidationError("degenerate design: all xs identical")
    (a, b), fitted = _ols(x, y, 1)
    return FitResult("linear", float(a), float(b), _r_squared(y, fitted), len(x), layer)


def fit_quadratic(xs, ys, layer: str = "") -> FitResult:
    """``T = a x^2 + b x + c0``; offered for comparison with the power law."""
    x, y = _arrays(xs, ys, 3)
    if len(np.unique(x)) < 3:
        raise ValidationError("quadratic fit needs three distinct xs")
    (a, b, c0), fitted = _ols(x, y, 2)
    return FitResult("quadratic", float(a), float(b), _r_squared(y, fitted), len(x), layer,
                     {"c0": float(c0)})


FITTERS = {"power_law": fit_power_law, "linear": fit_linear, "quadratic": fit_quadratic}
