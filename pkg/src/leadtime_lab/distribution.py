"""Nights-weighted lead-time distributions and their descriptive statistics."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .ingest import Market, Month, MonthlyCohort

NORM_TOL = 1e-9


class DegenerateInputWarning(UserWarning):
    pass


class EmptyCohortError(ValueError):
    pass


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LeadTimeDistribution:
    """Probability mass over lead times ``0..lead_cap`` for one (month, market) cell.

    ``mass[d]`` is the share of the cell's nights booked ``d`` days ahead.
    """

    mass: np.ndarray
    total_nights: float = 1.0
    month: Month | None = None
    market: Market | None = None

    def __post_init__(self):
        mass = _frozen(self.mass)
        if mass.ndim != 1 or mass.size < 1:
            raise ValueError("mass must be a non-empty 1-d vector")
        if np.any(mass < 0) or not np.all(np.isfinite(mass)):
            raise ValueError("mass entries must be finite and non-negative")
        if abs(mass.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"mass sums to {mass.sum():.12g}, not 1")
        if not self.total_nights > 0:
            raise ValueError("total_nights must be positive")
        object.__setattr__(self, "mass", mass)

    @property
    def lead_cap(self) -> int:
        return self.mass.size - 1

    @classmethod
    def from_vector(cls, vec, **kw) -> "LeadTimeDistribution":
        """Normalize an arbitrary non-negative weight vector."""
        vec = np.asarray(vec, dtype=float)
        total = vec.sum()
        if not total > 0:
            raise EmptyCohortError("weights sum to zero")
        return cls(vec / total, total_nights=float(total), **kw)


@dataclass(frozen=True)
class DescriptiveStats:
    mean: float
    median: float
    sd: float
    weighted: bool


def build_distribution(cohort: MonthlyCohort, lead_cap: int = 365) -> LeadTimeDistribution:
    """Accumulate nights per lead time and normalize.

    Records beyond ``lead_cap`` are ignored here; :func:`group_by_month`
    normally removes them first and keeps the count.
    """
    w = np.zeros(lead_cap + 1)
    for rec in cohort.records:
        lt = rec.lead_time
        if lt <= lead_cap:
            w[lt] += rec.nights
    if w.sum() == 0:
        raise EmptyCohortError(f"no bookings in cohort {cohort.month} {cohort.market}")
    return LeadTimeDistribution.from_vector(w, month=cohort.month, market=cohort.market)


def weighted_stats(values, weights) -> DescriptiveStats:
    """Mean, lower weighted median and population SD of ``values`` under ``weights``."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    keep = weights > 0
    values, weights = values[keep], weights[keep]
    if values.size == 0:
        raise EmptyCohortError("no positive weight")
    order = np.argsort(values, kind="stable")
    values, weights = values[order], weights[order]
    p = weights / weights.sum()
    mean = float(np.dot(values, p))
    var = float(np.dot((values - mean) ** 2, p))
    cum = np.cumsum(p)
    # 1e-12 slack so an exact 0.5 crossing isn't lost to rounding
    median = float(values[min(np.searchsorted(cum, 0.5 - 1e-12), values.size - 1)])
    return DescriptiveStats(mean, median, math.sqrt(max(var, 0.0)), weighted=True)


def per_trip_stats(leads: Sequence[float]) -> DescriptiveStats:
    x = np.sort(np.asarray(leads, dtype=float))
    n = x.size
    if n == 0:
        raise EmptyCohortError("no lead times")
    mean = float(x.mean())
    if n % 2:
        median = float(x[(n + 1) // 2 - 1])
    else:
        median = float((x[n // 2 - 1] + x[n // 2]) / 2)
    if n == 1:
        warnings.warn("sample SD undefined for a single trip; reporting 0", DegenerateInputWarning, stacklevel=3)
        sd = 0.0
    else:
        sd = math.sqrt(float(((x - mean) ** 2).sum()) / (n - 1))
    return DescriptiveStats(mean, median, sd, weighted=False)


def describe(data, weighted: bool = True) -> DescriptiveStats:
    """Descriptive statistics of a distribution, a cohort, or a list of lead times.

    ``weighted=True`` weights every booking by its nights (what the mass
    vector already does); ``weighted=False`` treats each trip once and uses
    the sample (n-1) SD. A bare mass vector only supports weighted mode.
    """
    if isinstance(data, LeadTimeDistribution):
        if not weighted:
            raise ValueError("per-trip statistics need the cohort, not a mass vector")
        return weighted_stats(np.arange(data.mass.size), data.mass)
    if isinstance(data, MonthlyCohort):
        if not data.records:
            raise EmptyCohortError("no bookings in cohort")
        leads = [r.lead_time for r in data.records]
        if weighted:
            return weighted_stats(leads, [r.nights for r in data.records])
        return per_trip_stats(leads)
    if weighted:
        raise ValueError("a plain lead-time list is described per trip; pass weighted=False")
    return per_trip_stats(data)


def pickup_curve(dist: LeadTimeDistribution | np.ndarray) -> np.ndarray:
    """Cumulative booked share by window position.

    ``C[i]`` is the mass in positions ``0..i``. Positions are read as
    elapsed steps through the booking window, so ``C[-1] == 1``.
    """
    mass = dist.mass if isinstance(dist, LeadTimeDistribution) else np.asarray(dist, dtype=float)
    c = np.cumsum(mass)
    if abs(c[-1] - 1.0) > NORM_TOL:
        raise ValueError("mass vector is not normalized")
    c[-1] = 1.0
    return np.minimum(c, 1.0)


def elapsed_index(days_before: int, window: int) -> int:
    """Window position reached ``days_before`` days ahead of check-in (``window - days_before``)."""
    if not 0 <= days_before <= window:
        raise ValueError(f"days_before must lie in [0, {window}]")
    return window - days_before


def days_before(elapsed: int, window: int) -> int:
    if not 0 <= elapsed <= window:
        raise ValueError(f"elapsed index must lie in [0, {window}]")
    return window - elapsed


def write_distribution_csv(dist: LeadTimeDistribution, out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["delta", "mass"])
    for d, m in enumerate(dist.mass):
        writer.writerow([d, repr(float(m))])


def read_distribution_csv(src: IO[str]) -> LeadTimeDistribution:
    """Read a ``delta,mass`` (or ``position,mass``) table; missing deltas get zero mass."""
    reader = csv.reader(src)
    header = [h.strip() for h in next(reader)]
    if len(header) != 2 or header[1] != "mass":
        raise ValueError(f"expected columns delta,mass; got {header}")
    rows = [(int(a), float(b)) for a, b in reader if a.strip()]
    if not rows:
        raise ValueError("empty distribution file")
    mass = np.zeros(max(d for d, _ in rows) + 1)
    for d, m in rows:
        if d < 0:
            raise ValueError(f"negative delta {d}")
        mass[d] += m
    return LeadTimeDistribution.from_vector(mass)


def stats_record(stats: DescriptiveStats, month: Month | None = None, market: Market | None = None) -> dict:
    return {
        "month": str(month) if month else None,
        "market": str(market) if market else None,
        "mean": stats.mean,
        "median": stats.median,
        "sd": stats.sd,
        "weighted": stats.weighted,
    }
