"""Correlation significance and polynomial response surfaces."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from .errors import DegenerateInput, OutOfDomain, ParamError, RankDeficient

SURFACE_VARIABLES = ("v_max", "v_min", "i_charge", "i_discharge")
RESPONSES = ("ln_rul", "rul")
# relative slack on the domain box so round-off at the edges is not rejected
_DOMAIN_RTOL = 1e-9


def pearson(x, y):
    """Sample Pearson correlation coefficient.

    Raises
    ------
    DegenerateInput
        Fewer than three points, unequal lengths or zero variance.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DegenerateInput("x and y must be 1-D vectors of equal length")
    if x.size < 3:
        raise DegenerateInput(f"need at least 3 points, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInput("zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def student_t_cdf(t, df):
    """CDF of Student's t distribution via the regularized incomplete beta function."""
    if df <= 0:
        raise ParamError("df must be positive")
    t = np.asarray(t, dtype=np.float64)
    tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + t * t))
    out = np.where(t >= 0, 1.0 - tail, tail)
    return float(out) if out.ndim == 0 else out


def p_value(r, n):
    """Two-sided p-value of the null hypothesis of zero correlation."""
    if not abs(r) < 1.0:
        raise DegenerateInput(f"|r| must be < 1, got {r}")
    if n < 3:
        raise DegenerateInput(f"need n >= 3, got {n}")
    df = n - 2
    t2 = r * r * df / (1.0 - r * r)
    # two-sided p = I_{df/(df+t^2)}(df/2, 1/2)
    return float(betainc(0.5 * df, 0.5, df / (df + t2)))


@dataclass(frozen=True)
class CorrelationReport:
    variable: str
    pearson_r: float
    p_value: float
    n: int


def correlation_table(records):
    """Correlation of V_max, V_min and their difference with RUL.

    ``records`` is a :class:`hirul.montecarlo.CampaignTable` or a list of
    scenario records.
    """
    from .montecarlo import as_table

    table = as_table(records)
    if len(table) < 3:
        raise DegenerateInput(f"need at least 3 records, got {len(table)}")
    rul = table["rul_hours"]
    out = []
    for name, col in (("v_max", table["v_max"]), ("v_min", table["v_min"]), ("delta_v", table["delta_v"])):
        try:
            r = pearson(col, rul)
        except DegenerateInput as exc:
            raise DegenerateInput(f"{name}: {exc}") from None
        out.append(CorrelationReport(name, r, p_value(r, len(table)), len(table)))
    return out


def correlation_csv(reports, comment=None):
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variable", "r", "p", "n"])
    for rep in reports:
        w.writerow([rep.variable, repr(rep.pearson_r), repr(rep.p_value), rep.n])
    return buf.getvalue()


def monomial_exponents(degree):
    """Exponent pairs of the 2-D monomials up to ``degree``, by total degree then descending x power."""
    return [(d - k, k) for d in range(degree + 1) for k in range(d + 1)]


def _design(z, exps):
    return np.column_stack([z[:, 0] ** a * z[:, 1] ** b for a, b in exps])


@dataclass(frozen=True)
class FittedSurface:
    """Least-squares polynomial in two standardized inputs.

    ``domain`` holds ``((lo_0, hi_0), (lo_1, hi_1))``; evaluation outside it
    raises :class:`OutOfDomain`.
    """

    inputs: tuple
    response: str
    degree: int
    coefficients: tuple
    x_mean: tuple
    x_scale: tuple
    y_mean: float
    y_scale: float
    residual_rms: float
    domain: tuple
    n_samples: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def contains(self, point):
        p = np.atleast_2d(np.asarray(point, dtype=np.float64))
        ok = np.ones(p.shape[0], dtype=bool)
        for j, (lo, hi) in enumerate(self.domain):
            tol = _DOMAIN_RTOL * max(1.0, abs(lo), abs(hi))
            ok &= (p[:, j] >= lo - tol) & (p[:, j] <= hi + tol)
        return ok

    def predict(self, points):
        """Vectorized evaluation over an ``(n, 2)`` array (domain checked)."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if p.shape[1] != 2:
            raise ParamError("points must have two columns")
        if not np.all(self.contains(p)):
            bad = p[~self.contains(p)][0]
            raise OutOfDomain(f"point {tuple(bad)} outside fitted domain {self.domain}")
        z = (p - np.asarray(self.x_mean)) / np.asarray(self.x_scale)
        return self.y_mean + self.y_scale * (_design(z, monomial_exponents(self.degree)) @ np.asarray(self.coefficients))

    def predict_rul(self, points):
        """Prediction in hours whatever the response units."""
        y = self.predict(points)
        return np.exp(y) if self.response == "ln_rul" else y

    def to_dict(self):
        return {
            "inputs": list(self.inputs),
            "response": self.response,
            "degree": self.degree,
            "coefficients": list(self.coefficients),
            "x_mean": list(self.x_mean),
            "x_scale": list(self.x_scale),
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
            "residual_rms": self.residual_rms,
            "domain": [list(b) for b in self.domain],
            "n_samples": self.n_samples,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            inputs=tuple(d["inputs"]),
            response=d["response"],
            degree=int(d["degree"]),
            coefficients=tuple(float(c) for c in d["coefficients"]),
            x_mean=tuple(float(v) for v in d["x_mean"]),
            x_scale=tuple(float(v) for v in d["x_scale"]),
            y_mean=float(d["y_mean"]),
            y_scale=float(d["y_scale"]),
            residual_rms=float(d["residual_rms"]),
            domain=tuple(tuple(float(v) for v in b) for b in d["domain"]),
            n_samples=int(d.get("n_samples", 0)),
            meta=dict(d.get("meta", {})),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def fit_arrays(x0, x1, y, degree=2, inputs=("x0", "x1"), response="rul", domain=None):
    """Fit a degree-``degree`` polynomial surface ``y ~ f(x0, x1)``.

    Inputs and response are standardized before solving the normal
    equations; a constant input keeps unit scale so degree-0 fits still work.

    Raises
    ------
    RankDeficient
        If the normal matrix is singular in standardized coordinates.
    """
    if degree < 0 or int(degree) != degree:
        raise ParamError(f"degree must be a non-negative integer, got {degree}")
    degree = int(degree)
    X = np.column_stack([np.asarray(x0, dtype=np.float64), np.asarray(x1, dtype=np.float64)])
    y = np.asarray(y, dtype=np.float64)
    exps = monomial_exponents(degree)
    if X.shape[0] != y.size:
        raise ParamError("inputs and response must have equal length")
    if y.size < len(exps):
        raise RankDeficient(f"{y.size} samples cannot determine {len(exps)} coefficients")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ParamError("non-finite values in fit data")

    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    y_mu = float(y.mean())
    y_sd = float(y.std()) or 1.0
    A = _design((X - mu) / sd, exps)
    b = (y - y_mu) / y_sd
    N = A.T @ A
    # singular (or numerically singular) normal matrix means the design has no full rank
    if np.linalg.matrix_rank(A) < len(exps) or np.linalg.cond(N) > 1e14:
        raise RankDeficient("design matrix is singular after standardization")
    coef = np.linalg.solve(N, A.T @ b)
    resid = y_sd * (A @ coef - b)
    rms = float(np.sqrt(np.mean(resid**2)))
    if domain is None:
        domain = ((float(X[:, 0].min()), float(X[:, 0].max())), (float(X[:, 1].min()), float(X[:, 1].max())))
    return FittedSurface(
        inputs=tuple(inputs),
        response=response,
        degree=degree,
        coefficients=tuple(float(c) for c in coef),
        x_mean=tuple(float(v) for v in mu),
        x_scale=tuple(float(v) for v in sd),
        y_mean=y_mu,
        y_scale=y_sd,
        residual_rms=rms,
        domain=tuple(tuple(b) for b in domain),
        n_samples=int(y.size),
    )


def fit_surface(records, inputs=("v_max", "i_discharge"), response="ln_rul", degree=2, domain=None):
    """Fit the response (``ln_rul`` or ``rul``) over two campaign variables."""
    from .montecarlo import as_table

    inputs = tuple(inputs)
    if len(inputs) != 2 or inputs[0] == inputs[1]:
        raise ParamError(f"need two distinct inputs, got {inputs}")
    for name in inputs:
        if name not in SURFACE_VARIABLES:
            raise ParamError(f"unknown surface input {name!r}; choose from {SURFACE_VARIABLES}")
    if response not in RESPONSES:
        raise ParamError(f"response must be one of {RESPONSES}")
    table = as_table(records)
    return fit_arrays(table[inputs[0]], table[inputs[1]], table[response], degree, inputs, response, domain)


def evaluate(surface, point):
    """Evaluate the surface at one point, in the surface's response units."""
    return float(surface.predict(np.asarray(point, dtype=np.float64).reshape(1, 2))[0])
