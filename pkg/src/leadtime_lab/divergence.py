"""Normalized L1 divergence between lead-time distributions.

Covers the pairwise distance, the year-over-year and fixed-baseline monthly
series, the forward-looking partial distance with threshold flags, and
Pearson correlation between divergence series.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .distribution import NORM_TOL, LeadTimeDistribution
from .ingest import Market, Month, MonthlyCohort


class Mode(str, Enum):
    YOY = "yoy"
    BASELINE = "baseline"
    PARTIAL = "partial"


class InsufficientHistoryError(ValueError):
    pass


def _as_prob(v, name: str) -> np.ndarray:
    if isinstance(v, LeadTimeDistribution):
        return v.mass
    a = np.asarray(v, dtype=float)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-d")
    if np.any(a < 0) or abs(a.sum() - 1.0) > NORM_TOL:
        raise ValueError(f"{name} is not a normalized probability vector (sum={a.sum():.12g})")
    return a


def l1_distance(p, q) -> float:
    """Half the L1 norm of ``p - q``: the share of probability mass that moved.

    Both inputs must be normalized over the same support; they are never
    renormalized here.
    """
    p = _as_prob(p, "p")
    q = _as_prob(q, "q")
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.size} vs {q.size}")
    d = 0.5 * float(np.abs(p - q).sum())
    return min(d, 1.0)


@dataclass
class DivergenceSeries:
    mode: Mode
    months: list[Month]
    values: list[float]
    market: Market | None = None
    baseline_year: int | None = None
    horizon: int | None = None
    gaps: list[Month] = field(default_factory=list)

    def __post_init__(self):
        if len(self.months) != len(self.values):
            raise ValueError("months and values differ in length")
        if any(b <= a for a, b in zip(self.months, self.months[1:])):
            raise ValueError("months must be strictly increasing")
        if any(not (0.0 <= v <= 1.0) for v in self.values):
            raise ValueError("divergence values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.values)

    def as_dict(self) -> dict[Month, float]:
        return dict(zip(self.months, self.values))

    @property
    def label(self) -> str:
        mode = self.mode.value
        if self.mode is Mode.BASELINE:
            mode = f"baseline{self.baseline_year}"
        elif self.mode is Mode.PARTIAL:
            mode = f"partialH{self.horizon}"
        return f"{self.market}:{mode}" if self.market else mode


def yoy_series(dists: Mapping[Month, LeadTimeDistribution], market: Market | None = None) -> DivergenceSeries:
    """Distance of each month to the same calendar month a year earlier.

    Months with no prior-year counterpart are skipped and listed in ``gaps``.
    """
    months, values, gaps = [], [], []
    for t in sorted(dists):
        prev = dists.get(t.shift(-12))
        if prev is None:
            gaps.append(t)
            continue
        months.append(t)
        values.append(l1_distance(dists[t], prev))
    if not months:
        raise InsufficientHistoryError("insufficient history: no month has a month-12 counterpart")
    return DivergenceSeries(Mode.YOY, months, values, market=market, gaps=gaps)


def baseline_series(dists: Mapping[Month, LeadTimeDistribution], baseline_year: int,
                    market: Market | None = None) -> DivergenceSeries:
    """Distance of each month outside the baseline year to that year's same calendar month."""
    base = {t.month: d for t, d in dists.items() if t.year == baseline_year}
    if not base:
        raise InsufficientHistoryError(f"baseline year {baseline_year} absent from data")
    months, values, gaps = [], [], []
    for t in sorted(dists):
        if t.year == baseline_year:
            continue
        ref = base.get(t.month)
        if ref is None:
            gaps.append(t)
            continue
        months.append(t)
        values.append(l1_distance(dists[t], ref))
    if not months:
        raise InsufficientHistoryError("no months outside the baseline year")
    return DivergenceSeries(Mode.BASELINE, months, values, market=market,
                            baseline_year=baseline_year, gaps=gaps)


@dataclass(frozen=True, eq=False)
class PartialDistribution:
    """Nights-weighted lead-time shape over ``0..horizon`` from bookings observed so far."""

    horizon: int
    mass: np.ndarray
    observed_nights: float

    def __post_init__(self):
        mass = np.array(self.mass, dtype=float)
        if mass.size != self.horizon + 1:
            raise ValueError(f"mass has {mass.size} bins, horizon {self.horizon} needs {self.horizon + 1}")
        if np.any(mass < 0) or abs(mass.sum() - 1.0) > NORM_TOL:
            raise ValueError("partial mass must be normalized over 0..H")
        if not self.observed_nights > 0:
            raise ValueError("observed_nights must be positive")
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)


def build_partial(bookings: Iterable, horizon: int, as_of=None) -> PartialDistribution:
    """Partial distribution of bookings with lead time ``0..horizon``.

    ``bookings`` holds either :class:`BookingRecord` objects or
    ``(lead_time, nights)`` pairs. With ``as_of`` set, only records booked
    on or before that date count (the in-progress view).
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if isinstance(bookings, MonthlyCohort):
        bookings = bookings.records
    w = np.zeros(horizon + 1)
    for b in bookings:
        if isinstance(b, tuple):
            lead, nights = b
        else:
            if as_of is not None and b.booking_date > as_of:
                continue
            lead, nights = b.lead_time, b.nights
        if 0 <= lead <= horizon:
            w[lead] += nights
    total = w.sum()
    if total <= 0:
        raise ValueError("no observed nights within the horizon")
    return PartialDistribution(horizon, w / total, float(total))


def historical_partial(partials: Sequence[PartialDistribution]) -> PartialDistribution:
    """Reference shape: renormalized arithmetic mean of prior partial mass vectors."""
    if not partials:
        raise InsufficientHistoryError("no prior partial distributions")
    h = {p.horizon for p in partials}
    if len(h) != 1:
        raise ValueError(f"horizon mismatch among references: {sorted(h)}")
    avg = np.mean([p.mass for p in partials], axis=0)
    return PartialDistribution(h.pop(), avg / avg.sum(), float(sum(p.observed_nights for p in partials)))


def partial_l1(current: PartialDistribution, historical: PartialDistribution) -> float:
    if current.horizon != historical.horizon:
        raise ValueError(f"horizon mismatch: {current.horizon} vs {historical.horizon}")
    return l1_distance(current.mass, historical.mass)


def partial_series(partials: Mapping[Month, PartialDistribution], reference_years: int | None = None,
                   market: Market | None = None) -> DivergenceSeries:
    """Partial-L1 of each month against the average of its prior same-calendar-month partials.

    ``reference_years`` caps how many prior years feed the reference
    (default: all available). Months with no prior year are gaps.
    """
    months, values, gaps = [], [], []
    horizons = {p.horizon for p in partials.values()}
    if len(horizons) > 1:
        raise ValueError(f"mixed horizons: {sorted(horizons)}")
    for t in sorted(partials):
        prior = sorted((m for m in partials if m.month == t.month and m < t), reverse=True)
        if reference_years is not None:
            prior = prior[:reference_years]
        if not prior:
            gaps.append(t)
            continue
        ref = historical_partial([partials[m] for m in prior])
        months.append(t)
        values.append(partial_l1(partials[t], ref))
    if not months:
        raise InsufficientHistoryError("insufficient history for partial references")
    return DivergenceSeries(Mode.PARTIAL, months, values, market=market,
                            horizon=horizons.pop(), gaps=gaps)


def early_warning(series: DivergenceSeries, threshold: float) -> list[Month]:
    """Months whose value strictly exceeds ``threshold``, in order."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return [m for m, v in zip(series.months, series.values) if v > threshold]


def correlate(a: DivergenceSeries, b: DivergenceSeries, lag: int = 0) -> float:
    """Pearson r between ``a`` at month t and ``b`` at month t - lag.

    A positive lag therefore asks whether ``b`` leads ``a``. Months are
    inner-joined after the shift.
    """
    bvals = {m.shift(lag): v for m, v in zip(b.months, b.values)}
    pairs = [(v, bvals[m]) for m, v in zip(a.months, a.values) if m in bvals]
    if len(pairs) < 3:
        raise ValueError(f"only {len(pairs)} overlapping months after lag {lag}; need >= 3")
    x, y = np.array(pairs).T
    x = x - x.mean()
    y = y - y.mean()
    sx, sy = np.sqrt((x * x).sum()), np.sqrt((y * y).sum())
    if sx == 0 or sy == 0:
        which = "first" if sx == 0 else "second"
        raise ValueError(f"zero variance in the {which} series over the overlap")
    return float(np.clip((x * y).sum() / (sx * sy), -1.0, 1.0))


@dataclass
class CorrelationMatrix:
    labels: list[str]
    r: np.ndarray
    lag: int = 0


def correlation_matrix(series: Sequence[DivergenceSeries], lag: int = 0) -> CorrelationMatrix:
    """Pairwise correlations; cells without enough overlap are NaN."""
    n = len(series)
    r = np.full((n, n), np.nan)
    for i in range(n):
        for j in range(n):
            try:
                r[i, j] = correlate(series[i], series[j], lag)
            except ValueError:
                pass
    return CorrelationMatrix([s.label for s in series], r, lag)


def series_quantile(values: Sequence[float], q: float) -> float:
    """Empirical quantile by linear interpolation between order statistics."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("empty sample")
    h = (x.size - 1) * q
    lo = int(np.floor(h))
    hi = min(lo + 1, x.size - 1)
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))


def write_series_csv(series: Iterable[DivergenceSeries], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["month", "market", "mode", "value"])
    for s in series:
        mode = s.label.split(":")[-1]
        for m, v in zip(s.months, s.values):
            writer.writerow([str(m), str(s.market) if s.market else "", mode, repr(float(v))])


def read_series_csv(src: IO[str]) -> list[DivergenceSeries]:
    """Inverse of :func:`write_series_csv`; one series per (market, mode)."""
    groups: dict[tuple[str, str], list[tuple[Month, float]]] = {}
    for row in csv.DictReader(src):
        groups.setdefault((row["market"], row["mode"]), []).append((Month.parse(row["month"]), float(row["value"])))
    out = []
    for (market, mode), pts in groups.items():
        pts.sort()
        kw = {}
        if mode.startswith("baseline"):
            m, kw["baseline_year"] = Mode.BASELINE, int(mode[len("baseline"):])
        elif mode.startswith("partialH"):
            m, kw["horizon"] = Mode.PARTIAL, int(mode[len("partialH"):])
        else:
            m = Mode(mode)
        out.append(DivergenceSeries(m, [p[0] for p in pts], [p[1] for p in pts],
                                    market=Market.parse(market) if market else None, **kw))
    return out


def write_correlation_csv(cm: CorrelationMatrix, out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([""] + cm.labels)
    for label, row in zip(cm.labels, cm.r):
        writer.writerow([label] + ["" if np.isnan(v) else repr(float(v)) for v in row])


def flags_json(series: DivergenceSeries, threshold: float) -> str:
    flagged = set(early_warning(series, threshold))
    return json.dumps([{"month": str(m), "value": v, "threshold": threshold}
                       for m, v in zip(series.months, series.values) if m in flagged], indent=2)
