"""Seasonal-trend decomposition by Loess (Cleveland et al., 1990).

Additive only: ``y = trend + seasonal + remainder``. The remainder is always
computed as the residual, so the decomposition adds back exactly.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .divergence import DivergenceSeries
from .ingest import Month

logger = logging.getLogger(__name__)

PERIODIC = "periodic"


class LoessFallbackWarning(UserWarning):
    """A neighborhood had zero total weight and was refit unweighted."""


def _next_odd(x: float) -> int:
    n = math.ceil(x)
    return n if n % 2 else n + 1


@dataclass(frozen=True)
class StlParams:
    """STL tuning knobs.

    ``seasonal_window`` is an odd integer >= 7 or ``"periodic"``. ``trend_window``
    and ``low_pass_window`` default to Cleveland's recommendations when left
    as ``None``.
    """

    period: int = 12
    seasonal_window: int | str = PERIODIC
    trend_window: int | None = None
    low_pass_window: int | None = None
    inner_iterations: int = 2
    outer_iterations: int = 1
    seasonal_degree: int = 1
    trend_degree: int = 1
    low_pass_degree: int = 1

    def __post_init__(self):
        if self.period < 2:
            raise ValueError("period must be >= 2")
        if self.seasonal_window != PERIODIC:
            if not isinstance(self.seasonal_window, int) or self.seasonal_window < 7 or self.seasonal_window % 2 == 0:
                raise ValueError("seasonal_window must be an odd integer >= 7 or 'periodic'")
        if self.trend_window is None:
            if self.seasonal_window == PERIODIC:
                tw = _next_odd(1.5 * self.period)
            else:
                tw = _next_odd(1.5 * self.period / (1 - 1.5 / self.seasonal_window))
            object.__setattr__(self, "trend_window", tw)
        if self.low_pass_window is None:
            object.__setattr__(self, "low_pass_window", _next_odd(self.period))
        for name in ("trend_window", "low_pass_window"):
            v = getattr(self, name)
            if v < 1 or v % 2 == 0:
                raise ValueError(f"{name} must be a positive odd integer, got {v}")
        if self.inner_iterations < 1 or self.outer_iterations < 0:
            raise ValueError("need inner_iterations >= 1 and outer_iterations >= 0")
        for name in ("seasonal_degree", "trend_degree", "low_pass_degree"):
            if getattr(self, name) not in (0, 1, 2):
                raise ValueError(f"{name} must be 0, 1 or 2")

    @property
    def periodic(self) -> bool:
        return self.seasonal_window == PERIODIC


@dataclass
class StlResult:
    observed: np.ndarray
    trend: np.ndarray
    seasonal: np.ndarray
    remainder: np.ndarray
    robustness_weights: np.ndarray
    months: list[Month] = field(default_factory=list)


def _tricube(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    inside = u < 1.0
    out[inside] = (1.0 - u[inside] ** 3) ** 3
    return out


def _local_fit(x, y, w, t, degree):
    keep = w > 0
    xs, ys, ws = x[keep] - t, y[keep], w[keep]
    # drop to a lower degree when the support can't pin the polynomial
    deg = min(degree, np.unique(xs).size - 1)
    while deg >= 0:
        A = np.vander(xs, deg + 1, increasing=True)
        sw = np.sqrt(ws)
        coef, _, rank, _ = np.linalg.lstsq(A * sw[:, None], ys * sw, rcond=None)
        if rank == deg + 1:
            return float(coef[0])
        deg -= 1
    return float(np.average(ys, weights=ws))


def loess_smooth(x, y, span: int, degree: int = 1, weights=None, targets=None) -> np.ndarray:
    """Locally weighted polynomial regression.

    Each target is fit by weighted least squares over its ``span`` nearest
    abscissae with tricube distance weights, multiplied by ``weights`` when
    given. When ``span`` exceeds the number of points the bandwidth is
    stretched by ``(span - n) // 2`` as in the original STL code.

    A target whose whole neighbourhood has zero weight cannot be fit. Like
    the reference implementation it then keeps the observed value (or, for a
    target outside the data, the value at the nearest end) and warns.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if y.size != n:
        raise ValueError("x and y differ in length")
    if span < degree + 1:
        raise ValueError(f"span {span} too small for degree {degree}")
    if n == 0:
        raise ValueError("empty input")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x must be strictly increasing")
    rw = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    targets = x if targets is None else np.asarray(targets, dtype=float)

    out = np.empty(targets.size)
    failed = []
    q = min(span, n)
    for i, t in enumerate(targets):
        d = np.abs(x - t)
        idx = np.argpartition(d, q - 1)[:q]
        h = d[idx].max()
        if span > n:
            h += (span - n) // 2
        if h <= 0:
            h = 1.0
        u = d[idx] / h
        w = np.zeros(n)
        # same cut-offs as the reference Fortran: full weight inside 0.001h, none beyond 0.999h
        w[idx] = np.where(u <= 0.001, 1.0, np.where(u <= 0.999, _tricube(u), 0.0))
        w *= rw
        if w.sum() <= 0:
            failed.append(i)
            continue
        out[i] = _local_fit(x, y, w, t, degree)
    if failed:
        warnings.warn(f"zero neighbourhood weight at {len(failed)} point(s); kept observed values",
                      LoessFallbackWarning, stacklevel=2)
        for i in failed:
            t = targets[i]
            k = int(np.argmin(np.abs(x - t)))
            if x[k] == t:
                out[i] = y[k]
            else:
                out[i] = loess_smooth(x, y, span, degree, rw, targets=[x[k]])[0]
    return out


def _moving_average(x: np.ndarray, length: int) -> np.ndarray:
    c = np.cumsum(np.concatenate([[0.0], x]))
    return (c[length:] - c[:-length]) / length


def _cycle_subseries(detr, rw, params: StlParams) -> np.ndarray:
    n, period = detr.size, params.period
    c = np.empty(n + 2 * period)
    for j in range(period):
        idx = np.arange(j, n, period)
        sub, w = detr[idx], rw[idx]
        m = sub.size
        if params.periodic:
            wsum = w.sum()
            level = float(np.dot(sub, w) / wsum) if wsum > 0 else float(sub.mean())
            fitted = np.full(m + 2, level)
        else:
            fitted = loess_smooth(np.arange(m), sub, params.seasonal_window, params.seasonal_degree, w,
                                  targets=np.arange(-1, m + 1))
        c[j::period][: m + 2] = fitted
    return c


def _low_pass(c: np.ndarray, params: StlParams) -> np.ndarray:
    period = params.period
    lp = _moving_average(_moving_average(_moving_average(c, period), period), 3)
    return loess_smooth(np.arange(lp.size), lp, params.low_pass_window, params.low_pass_degree)


def _bisquare_weights(resid: np.ndarray) -> np.ndarray:
    r = np.abs(resid)
    h = 6.0 * np.median(r)
    w = np.zeros_like(r)
    if h <= 0:
        w[r <= 0] = 1.0
        return w
    lo, hi = 0.001 * h, 0.999 * h
    w[r <= lo] = 1.0
    mid = (r > lo) & (r <= hi)
    w[mid] = (1.0 - (r[mid] / h) ** 2) ** 2
    return w


def stl_decompose(series: Sequence[float], params: StlParams | None = None) -> StlResult:
    """Decompose a contiguous series into trend, seasonal and remainder."""
    params = params or StlParams()
    y = np.asarray(series, dtype=float)
    n = y.size
    if n < 2 * params.period:
        raise ValueError(f"series length {n} < 2 * period ({2 * params.period})")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains non-finite values")

    x = np.arange(n)
    rw = np.ones(n)
    trend = np.zeros(n)
    seasonal = np.zeros(n)
    for outer in range(params.outer_iterations + 1):
        for _ in range(params.inner_iterations):
            c = _cycle_subseries(y - trend, rw, params)
            low = _low_pass(c, params)
            seasonal = c[params.period: params.period + n] - low
            trend = loess_smooth(x, y - seasonal, params.trend_window, params.trend_degree, rw)
        if outer < params.outer_iterations:
            rw = _bisquare_weights(y - trend - seasonal)
            logger.debug("outer pass %d: %d points downweighted to 0", outer, int((rw == 0).sum()))
    remainder = y - trend - seasonal
    return StlResult(y, trend, seasonal, remainder, rw)


def missing_months(months: Sequence[Month]) -> list[Month]:
    if not months:
        return []
    present = set(months)
    return [Month.from_ordinal(k) for k in range(months[0].ordinal, months[-1].ordinal + 1)
            if Month.from_ordinal(k) not in present]


def decompose_divergence(series: DivergenceSeries, params: StlParams | None = None) -> StlResult:
    gaps = missing_months(series.months)
    if gaps:
        raise ValueError("series has month gaps; restrict the range to avoid: "
                         + ", ".join(str(m) for m in gaps))
    res = stl_decompose(series.values, params)
    res.months = list(series.months)
    return res


def write_components_csv(res: StlResult, out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["month", "observed", "trend", "seasonal", "remainder"])
    labels = [str(m) for m in res.months] if res.months else [str(i) for i in range(res.observed.size)]
    for row in zip(labels, res.observed, res.trend, res.seasonal, res.remainder):
        writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
