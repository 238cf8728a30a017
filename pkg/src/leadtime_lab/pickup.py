"""Multiplicative pickup forecasts, their relative error, and the L1-based error bound.

Window positions are elapsed indices: position ``k`` of a ``window``-long
booking window has cumulative historical share ``C_hist[k]``. The bound

    |eps| <= 2 D (1 - k / window) / C_hist[k]

holds when the divergence between historical and actual shapes is spread
evenly across the window. It is not a worst-case guarantee;
:func:`bound_counterexample` finds pairs that break it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .distribution import LeadTimeDistribution, pickup_curve
from .divergence import l1_distance, series_quantile


@dataclass(frozen=True)
class ForecastEvaluation:
    elapsed: int
    window: int
    observed: float
    c_hist: float
    forecast: float | None
    actual: float | None = None
    rel_error: float | None = None
    bound: float | None = None


def pickup_forecast(observed: float, c_hist: float) -> float:
    """Total-demand forecast ``observed / c_hist`` (unconstrained demand)."""
    if observed < 0:
        raise ValueError("observed bookings must be non-negative")
    if not c_hist > 0:
        raise ValueError("no historical mass accrued at this horizon (c_hist <= 0)")
    if c_hist > 1 + 1e-9:
        raise ValueError(f"c_hist must be <= 1, got {c_hist}")
    return observed / c_hist


def relative_error(forecast: float, actual: float) -> float:
    """Signed relative error; negative means the forecast fell short."""
    if not actual > 0:
        raise ValueError("actual must be positive")
    return (forecast - actual) / actual


def error_bound(divergence: float, elapsed: int, window: int, c_hist: float) -> float:
    """Upper bound on ``|relative_error|`` at window position ``elapsed``.

    Exactly 0 at the end of the window.
    """
    if not 0.0 <= divergence <= 1.0:
        raise ValueError("divergence must lie in [0, 1]")
    if window < 1 or not 0 <= elapsed <= window:
        raise ValueError(f"elapsed must lie in [0, {window}]")
    if not c_hist > 0:
        raise ValueError("c_hist must be positive")
    if elapsed == window:
        return 0.0
    return 2.0 * divergence * (1.0 - elapsed / window) / c_hist


def _curve(dist) -> np.ndarray:
    if isinstance(dist, LeadTimeDistribution):
        return pickup_curve(dist)
    return pickup_curve(np.asarray(dist, dtype=float))


def evaluate_horizon_sweep(hist, actual, total_actual: float, divergence: float | None = None
                           ) -> list[ForecastEvaluation]:
    """Forecast, error and bound at every window position.

    ``hist`` and ``actual`` are mass vectors (or distributions) over the same
    grid of ``window + 1`` positions. Observed bookings at position ``k`` are
    ``C_actual[k] * total_actual``. ``divergence`` defaults to the L1 distance
    between the two shapes. Positions with no historical mass get
    ``forecast=None``.
    """
    ch, ca = _curve(hist), _curve(actual)
    if ch.size != ca.size:
        raise ValueError(f"grid mismatch: {ch.size} vs {ca.size} positions")
    if divergence is None:
        divergence = l1_distance(hist.mass if isinstance(hist, LeadTimeDistribution) else hist,
                                 actual.mass if isinstance(actual, LeadTimeDistribution) else actual)
    window = ch.size - 1
    out = []
    for k in range(window + 1):
        observed = ca[k] * total_actual
        if ch[k] <= 0:
            out.append(ForecastEvaluation(k, window, observed, float(ch[k]), None, total_actual))
            continue
        fc = pickup_forecast(observed, min(ch[k], 1.0))
        out.append(ForecastEvaluation(k, window, observed, float(ch[k]), fc, total_actual,
                                      relative_error(fc, total_actual),
                                      error_bound(divergence, k, window, ch[k])))
    return out


def bound_counterexample(window: int = 30, tries: int = 2000, seed: int = 0):
    """Search for a (hist, actual) pair whose sweep exceeds the bound somewhere.

    Shifts a random share of historical mass from late to early positions,
    which piles the whole divergence into the start of the window. Returns
    ``(hist, actual, elapsed, |eps|, bound)`` for the first violation, or
    ``None``.
    """
    rng = np.random.default_rng(seed)
    for _ in range(tries):
        hist = rng.dirichlet(np.ones(window + 1))
        split = int(rng.integers(1, window))
        moved = hist[split:].sum() * rng.uniform(0.1, 0.9)
        actual = hist.copy()
        actual[split:] *= 1 - moved / hist[split:].sum()
        actual[:split] += moved * hist[:split] / hist[:split].sum()
        actual /= actual.sum()
        for ev in evaluate_horizon_sweep(hist, actual, 1.0):
            if ev.forecast is not None and abs(ev.rel_error) > ev.bound + 1e-12:
                return hist, actual, ev.elapsed, abs(ev.rel_error), ev.bound
    return None


def estimate_divergence_scenarios(history: Sequence[tuple], quantiles=(0.5, 0.9, 0.95)) -> dict:
    """Summarize the L1 distances of past (historical, actual) pairs.

    The maximum is the natural scenario input for :func:`error_bound`.
    """
    if not history:
        raise ValueError("empty history")
    ds = [l1_distance(h, a) for h, a in history]
    return {
        "max_D": max(ds),
        "mean_D": float(np.mean(ds)),
        "quantiles": {f"q{q:g}": series_quantile(ds, q) for q in quantiles},
        "n": len(ds),
    }


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def write_sweep_csv(sweep: Sequence[ForecastEvaluation], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["delta", "B_obs", "C_hist", "forecast", "actual", "rel_error", "bound"])
    for ev in sweep:
        writer.writerow([ev.elapsed, _fmt(ev.observed), _fmt(ev.c_hist), _fmt(ev.forecast),
                         _fmt(ev.actual), _fmt(ev.rel_error), _fmt(ev.bound)])


def scenario_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True)
