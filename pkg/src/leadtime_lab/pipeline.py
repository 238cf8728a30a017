"""End-to-end analysis over a booking dataset and report-bundle output."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import random
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .decompose import StlParams, StlResult, decompose_divergence, write_components_csv
from .distribution import DescriptiveStats, LeadTimeDistribution, build_distribution, describe
from .divergence import (
    CorrelationMatrix,
    DivergenceSeries,
    InsufficientHistoryError,
    Mode,
    PartialDistribution,
    baseline_series,
    build_partial,
    correlation_matrix,
    early_warning,
    l1_distance,
    partial_series,
    series_quantile,
    write_correlation_csv,
    write_series_csv,
    yoy_series,
)
from .ingest import BookingRecord, Market, Month, MonthlyCohort, group_by_month
from .pickup import ForecastEvaluation, evaluate_horizon_sweep, write_sweep_csv

logger = logging.getLogger(__name__)


class AnalysisError(RuntimeError):
    """A module error annotated with the (market, month) cell it came from."""

    def __init__(self, market, month, cause: Exception):
        where = f"market={market}" + (f", month={month}" if month is not None else "")
        super().__init__(f"{where}: {cause}")
        self.market, self.month, self.cause = market, month, cause


@dataclass
class AnalysisConfig:
    lead_cap: int = 365
    baseline_year: int | None = None
    stl: StlParams = field(default_factory=StlParams)
    partial_horizons: list[int] = field(default_factory=list)
    markets: list[str] | None = None
    weighted_stats: bool = True
    output_dir: str | None = None
    threshold: float | None = None
    reference_years: int | None = None
    correlation_lags: list[int] = field(default_factory=lambda: [0])
    forecasts: bool = True

    def __post_init__(self):
        if self.lead_cap < 1:
            raise ValueError("lead_cap must be >= 1")
        bad = [h for h in self.partial_horizons if not 0 <= h <= self.lead_cap]
        if bad:
            raise ValueError(f"partial horizons {bad} outside 0..{self.lead_cap}")
        if self.threshold is not None and not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "AnalysisConfig":
        doc = dict(doc)
        doc.pop("input", None)
        stl = doc.pop("stl", None)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**doc)
        if stl is not None:
            cfg.stl = StlParams(**stl)
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stl"] = asdict(self.stl)
        return d


@dataclass
class RatioTable:
    mode: str
    rows: list[dict]
    notes: list[str] = field(default_factory=list)


@dataclass
class MarketReport:
    market: Market
    distributions: dict[Month, LeadTimeDistribution]
    monthly_stats: dict[Month, DescriptiveStats]
    annual_stats: dict[int, DescriptiveStats]
    ratios: list[RatioTable]
    series: list[DivergenceSeries]
    summaries: dict[str, dict[int, dict]]
    stl: dict[str, StlResult]
    forecasts: dict[Month, list[ForecastEvaluation]]
    flags: dict[str, list[Month]]
    notes: list[str]


@dataclass
class ReportBundle:
    config: AnalysisConfig
    markets: list[MarketReport]
    correlations: dict[str, CorrelationMatrix]
    input_hash: str
    ingest: dict


def yoy_ratio_table(stats: Mapping[int, DescriptiveStats], mode: str = "prior_year",
                    baseline_year: int | None = None) -> RatioTable:
    """Ratio of each year's mean/median/SD to a reference year.

    ``mode="prior_year"`` compares with the previous calendar year;
    ``mode="baseline"`` compares with ``baseline_year``. Years without a
    reference are omitted and noted; a zero reference statistic gives
    ``None`` for that cell.
    """
    if len(stats) < 2:
        raise ValueError("need at least two years of statistics")
    if mode not in ("prior_year", "baseline"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "baseline" and baseline_year is None:
        raise ValueError("baseline mode needs baseline_year")
    rows, notes = [], []
    for year in sorted(stats):
        ref_year = year - 1 if mode == "prior_year" else baseline_year
        if ref_year == year:
            continue
        ref = stats.get(ref_year)
        if ref is None:
            notes.append(f"{year}: no statistics for reference year {ref_year}")
            continue
        row = {"year": year, "reference_year": ref_year}
        for name in ("mean", "median", "sd"):
            denom = getattr(ref, name)
            if denom == 0:
                row[name] = None
                notes.append(f"{year}: reference {name} is 0, ratio undefined")
            else:
                row[name] = getattr(stats[year], name) / denom
        rows.append(row)
    return RatioTable(mode, rows, notes)


def annual_divergence_summary(series: DivergenceSeries) -> dict[int, dict]:
    """Per calendar year: mean, median, 2.5% and 97.5% quantiles of the monthly values."""
    if not len(series):
        raise ValueError("empty series")
    by_year: dict[int, list[float]] = {}
    for m, v in zip(series.months, series.values):
        by_year.setdefault(m.year, []).append(v)
    out = {}
    for year, vals in sorted(by_year.items()):
        out[year] = {
            "mean": float(np.mean(vals)),
            "median": series_quantile(vals, 0.5),
            "q025": series_quantile(vals, 0.025),
            "q0975": series_quantile(vals, 0.975),
            "n": len(vals),
        }
    return out


def window_shape(dist: LeadTimeDistribution) -> np.ndarray:
    """Lead-time mass re-indexed by elapsed window position (longest lead first)."""
    return dist.mass[::-1]


def _first_full_year(months: Iterable[Month]) -> int | None:
    years: dict[int, int] = {}
    for m in months:
        years[m.year] = years.get(m.year, 0) + 1
    full = [y for y, n in years.items() if n == 12]
    return min(full) if full else (min(years) if years else None)


def _longest_run(series: DivergenceSeries) -> DivergenceSeries:
    runs, cur = [], [0]
    for i in range(1, len(series.months)):
        if series.months[i].ordinal == series.months[i - 1].ordinal + 1:
            cur.append(i)
        else:
            runs.append(cur)
            cur = [i]
    runs.append(cur)
    best = max(runs, key=len)
    return DivergenceSeries(series.mode, [series.months[i] for i in best], [series.values[i] for i in best],
                            market=series.market, baseline_year=series.baseline_year, horizon=series.horizon)


def _analyze_market(market: Market, cohorts: Sequence[MonthlyCohort], config: AnalysisConfig) -> MarketReport:
    notes: list[str] = []
    dists, monthly = {}, {}
    for c in cohorts:
        try:
            dists[c.month] = build_distribution(c, config.lead_cap)
            monthly[c.month] = describe(c, weighted=config.weighted_stats)
        except ValueError as exc:
            raise AnalysisError(market, c.month, exc) from exc

    by_year: dict[int, list[BookingRecord]] = {}
    for c in cohorts:
        by_year.setdefault(c.month.year, []).extend(c.records)
    annual = {y: describe(MonthlyCohort(Month(y, 1), market, tuple(recs)), weighted=config.weighted_stats)
              for y, recs in sorted(by_year.items())}

    baseline_year = config.baseline_year or _first_full_year(dists)
    ratios = []
    if len(annual) >= 2:
        ratios.append(yoy_ratio_table(annual, "prior_year"))
        if baseline_year in annual:
            ratios.append(yoy_ratio_table(annual, "baseline", baseline_year))

    series: list[DivergenceSeries] = []
    for build in (lambda: yoy_series(dists, market), lambda: baseline_series(dists, baseline_year, market)):
        try:
            series.append(build())
        except InsufficientHistoryError as exc:
            notes.append(str(exc))

    flags: dict[str, list[Month]] = {}
    for h in config.partial_horizons:
        partials: dict[Month, PartialDistribution] = {}
        for c in cohorts:
            try:
                partials[c.month] = build_partial(c.records, h)
            except ValueError:
                notes.append(f"{c.month}: no nights within horizon {h}")
        try:
            ps = partial_series(partials, config.reference_years, market)
        except InsufficientHistoryError as exc:
            notes.append(f"H={h}: {exc}")
            continue
        series.append(ps)
        if config.threshold is not None:
            flags[ps.label] = early_warning(ps, config.threshold)

    for s in series:
        if s.gaps:
            notes.append(f"{s.label}: skipped months without reference: " + ", ".join(map(str, s.gaps)))

    summaries = {s.label: annual_divergence_summary(s) for s in series}

    stl: dict[str, StlResult] = {}
    for s in series:
        run = _longest_run(s)
        if len(run) < 2 * config.stl.period:
            notes.append(f"{s.label}: longest contiguous run {len(run)} < 2 periods; no STL")
            continue
        if len(run) < len(s):
            notes.append(f"{s.label}: STL restricted to {run.months[0]}..{run.months[-1]}")
        stl[s.label] = decompose_divergence(run, config.stl)

    forecasts: dict[Month, list[ForecastEvaluation]] = {}
    if config.forecasts:
        for t, actual in sorted(dists.items()):
            hist = dists.get(t.shift(-12))
            if hist is None:
                continue
            forecasts[t] = evaluate_horizon_sweep(window_shape(hist), window_shape(actual), actual.total_nights,
                                                  l1_distance(hist, actual))

    return MarketReport(market, dists, monthly, annual, ratios, series, summaries, stl, forecasts, flags, notes)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("LEADTIME_LAB_THREADS", "1")))
    except ValueError:
        return 1


def bookings_hash(bookings: Sequence[BookingRecord]) -> str:
    """SHA-256 over a canonical binary encoding of the records, in input order."""
    markets: dict[tuple, int] = {}
    rows = np.array([(r.booking_date.toordinal(), r.checkin_date.toordinal(), r.nights,
                      markets.setdefault((r.city, r.corridor.value, r.travel_type.value), len(markets)))
                     for r in bookings], dtype="<i8")
    h = hashlib.sha256(rows.tobytes())
    for key in markets:
        h.update("|".join(key).encode() + b"\n")
    return h.hexdigest()


def run_analysis(bookings: Sequence[BookingRecord], config: AnalysisConfig | None = None) -> ReportBundle:
    """Distributions, statistics, divergences, STL and forecast sweeps for every market.

    Markets are processed independently (threads capped by
    ``LEADTIME_LAB_THREADS``); output order is fixed by market then month.
    """
    config = config or AnalysisConfig()
    if not bookings:
        raise ValueError("no bookings to analyze")
    grouped = group_by_month(bookings, config.lead_cap)
    by_market: dict[Market, list[MonthlyCohort]] = {}
    for c in grouped.cohorts:
        if config.markets is None or str(c.market) in config.markets or c.market.city in config.markets:
            by_market.setdefault(c.market, []).append(c)
    if not by_market:
        raise ValueError(f"no bookings left after market filter {config.markets}")

    markets = sorted(by_market)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        reports = list(pool.map(lambda m: _analyze_market(m, by_market[m], config), markets))

    correlations = {}
    kinds = sorted({(s.mode.value, s.horizon or 0) for r in reports for s in r.series})
    for mode, h in kinds:
        group = [s for r in reports for s in r.series if s.mode.value == mode and (s.horizon or 0) == h]
        if len(group) < 2:
            continue
        name = f"{mode}_H{h}" if mode == Mode.PARTIAL.value else mode
        for lag in config.correlation_lags:
            correlations[f"{name}_lag{lag}"] = correlation_matrix(group, lag)

    ingest = {"total": grouped.total, "kept": grouped.kept, "excluded_over_cap": grouped.excluded_over_cap, "errors": []}
    return ReportBundle(config, reports, correlations, bookings_hash(bookings), ingest)


# --- verification -----------------------------------------------------------------


def verify_bundle(bundle: ReportBundle, bookings: Sequence[BookingRecord], samples: int = 5, seed: int = 0) -> int:
    """Recompute randomly chosen bundle cells with direct module calls.

    Returns the number of cells checked; raises ``AssertionError`` on the
    first mismatch.
    """
    rng = random.Random(seed)
    grouped = group_by_month(bookings, bundle.config.lead_cap)
    cohorts = {(c.market, c.month): c for c in grouped.cohorts}
    checked = 0
    for report in bundle.markets:
        months = sorted(report.distributions)
        for t in rng.sample(months, min(samples, len(months))):
            direct = build_distribution(cohorts[(report.market, t)], bundle.config.lead_cap)
            assert np.array_equal(direct.mass, report.distributions[t].mass), (report.market, t)
            assert describe(cohorts[(report.market, t)], bundle.config.weighted_stats) == report.monthly_stats[t]
            checked += 1
        for s in report.series:
            if s.mode is Mode.PARTIAL or not len(s):
                continue
            i = rng.randrange(len(s))
            t = s.months[i]
            ref = t.shift(-12) if s.mode is Mode.YOY else Month(s.baseline_year, t.month)
            assert l1_distance(report.distributions[t], report.distributions[ref]) == s.values[i], (s.label, t)
            checked += 1
    return checked


# --- output -------------------------------------------------------------------------


def _slug(text: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in text)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(rows: Iterable[Sequence], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(v):
    return "" if v is None else repr(float(v))


def render_bundle(bundle: ReportBundle) -> dict[str, str]:
    """Map of relative path -> file content for every bundle file, manifest included."""
    files: dict[str, str] = {}
    rows_m, rows_a, rows_r = [], [], []
    for r in bundle.markets:
        for t, s in sorted(r.monthly_stats.items()):
            rows_m.append([str(r.market), str(t), _num(s.mean), _num(s.median), _num(s.sd), s.weighted,
                           _num(r.distributions[t].total_nights)])
        for y, s in sorted(r.annual_stats.items()):
            rows_a.append([str(r.market), y, _num(s.mean), _num(s.median), _num(s.sd), s.weighted])
        for table in r.ratios:
            for row in table.rows:
                rows_r.append([str(r.market), table.mode, row["year"], row["reference_year"],
                               _num(row["mean"]), _num(row["median"]), _num(row["sd"])])
    files["stats/monthly.csv"] = _csv(rows_m, ["market", "month", "mean", "median", "sd", "weighted", "total_nights"])
    files["stats/annual.csv"] = _csv(rows_a, ["market", "year", "mean", "median", "sd", "weighted"])
    files["stats/ratios.csv"] = _csv(rows_r, ["market", "mode", "year", "reference_year", "mean", "median", "sd"])

    buf = io.StringIO()
    write_series_csv([s for r in bundle.markets for s in r.series], buf)
    files["divergence/series.csv"] = buf.getvalue()
    rows_s = []
    for r in bundle.markets:
        for label, per_year in r.summaries.items():
            for y, d in per_year.items():
                rows_s.append([str(r.market), label.split(":")[-1], y, _num(d["mean"]), _num(d["median"]),
                               _num(d["q025"]), _num(d["q0975"]), d["n"]])
    files["divergence/summary.csv"] = _csv(rows_s, ["market", "mode", "year", "mean", "median", "q025", "q0975", "n"])
    if bundle.config.threshold is not None:
        flags = []
        for r in bundle.markets:
            for s in r.series:
                for m in r.flags.get(s.label, []):
                    flags.append({"market": str(r.market), "series": s.label, "month": str(m),
                                  "value": s.as_dict()[m], "threshold": bundle.config.threshold})
        files["divergence/flags.json"] = json.dumps(flags, indent=2) + "\n"

    for r in bundle.markets:
        for label, res in r.stl.items():
            buf = io.StringIO()
            write_components_csv(res, buf)
            files[f"stl/{_slug(label)}.csv"] = buf.getvalue()
        if r.forecasts:
            buf = io.StringIO()
            first = True
            for t, sweep in r.forecasts.items():
                part = io.StringIO()
                write_sweep_csv(sweep, part)
                lines = part.getvalue().splitlines()
                if first:
                    buf.write("month," + lines[0] + "\n")
                    first = False
                for line in lines[1:]:
                    buf.write(f"{t},{line}\n")
            files[f"forecast/{_slug(str(r.market))}.csv"] = buf.getvalue()

    for name, cm in bundle.correlations.items():
        buf = io.StringIO()
        write_correlation_csv(cm, buf)
        files[f"correlation/{name}.csv"] = buf.getvalue()

    manifest = {
        "version": __version__,
        "input_sha256": bundle.input_hash,
        "config": bundle.config.to_dict(),
        "ingest": bundle.ingest,
        "notes": {str(r.market): r.notes for r in bundle.markets},
        "files": {p: hashlib.sha256(c.encode()).hexdigest() for p, c in sorted(files.items())},
    }
    manifest["config"]["output_dir"] = None
    files["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    return files


def write_bundle(bundle: ReportBundle, output_dir: str | os.PathLike) -> list[Path]:
    out = Path(output_dir)
    written = []
    for rel, text in sorted(render_bundle(bundle).items()):
        path = out / rel
        _atomic_write(path, text)
        written.append(path)
    return written
