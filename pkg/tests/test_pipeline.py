import json
import os

import numpy as np
import pytest

from leadtime_lab.decompose import StlParams
from leadtime_lab.distribution import DescriptiveStats, LeadTimeDistribution
from leadtime_lab.divergence import DivergenceSeries, Mode, l1_distance
from leadtime_lab.ingest import Month
from leadtime_lab.pipeline import (
    AnalysisConfig,
    annual_divergence_summary,
    render_bundle,
    run_analysis,
    verify_bundle,
    window_shape,
    write_bundle,
    yoy_ratio_table,
    _atomic_write,
)
from leadtime_lab.simulate import generate_scenario, scenario_from_dict

MARKETS = [{"city": "North", "corridor": "destination", "travel_type": "domestic"},
           {"city": "South", "corridor": "origin", "travel_type": "international"}]


@pytest.fixture(scope="module")
def bookings():
    doc = {"start": "2018-01", "end": "2020-12", "seed": 17, "markets": MARKETS, "lead_cap": 200,
           "shocks": [{"start": "2019-04", "end": "2019-09", "factor": 3.0, "markets": ["North"]}],
           "volume": {"nights_per_month": 6000, "seasonal_amplitude": 0.2}}
    return generate_scenario(scenario_from_dict(doc))


@pytest.fixture(scope="module")
def config():
    return AnalysisConfig(lead_cap=200, baseline_year=2018, partial_horizons=[30], threshold=0.2,
                          correlation_lags=[0, 1])


@pytest.fixture(scope="module")
def bundle(bookings, config):
    return run_analysis(bookings, config)


def stats(mean, median=5.0, sd=2.0):
    return DescriptiveStats(mean, median, sd, True)


def test_ratio_examples():
    t = yoy_ratio_table({2018: stats(44), 2019: stats(46)})
    assert round(t.rows[0]["mean"], 3) == 1.045
    same = yoy_ratio_table({2018: stats(10), 2019: stats(10), 2020: stats(10)})
    assert all(r[k] == 1.0 for r in same.rows for k in ("mean", "median", "sd"))


def test_ratio_missing_reference_year_noted():
    t = yoy_ratio_table({2017: stats(10), 2019: stats(11)})
    assert t.rows == [] and any(n.startswith("2019") for n in t.notes)
    b = yoy_ratio_table({2017: stats(10), 2019: stats(11)}, "baseline", 2017)
    assert [r["year"] for r in b.rows] == [2019]
    zero = yoy_ratio_table({2018: stats(10, sd=0.0), 2019: stats(11)})
    assert zero.rows[0]["sd"] is None


def _series(vals, start=Month(2019, 1)):
    return DivergenceSeries(Mode.YOY, [start.shift(k) for k in range(len(vals))], list(vals))


def test_summary_examples():
    s = annual_divergence_summary(_series([0.04] * 12))[2019]
    for key in ("mean", "median", "q025", "q0975"):
        assert s[key] == pytest.approx(0.04, abs=1e-15)
    single = annual_divergence_summary(_series([0.07], Month(2019, 12)))[2019]
    assert single["mean"] == single["q025"] == single["q0975"] == single["median"] == 0.07


def test_summary_matches_sort_oracle():
    vals = [0.01 * k for k in (5, 12, 1, 9, 3, 11, 2, 8, 6, 10, 4, 7)]
    s = annual_divergence_summary(_series(vals))[2019]
    x = sorted(vals)

    def q(p):
        h = (len(x) - 1) * p
        lo = int(h)
        return x[lo] + (h - lo) * (x[min(lo + 1, len(x) - 1)] - x[lo])

    assert s["median"] == pytest.approx((x[5] + x[6]) / 2)
    assert s["q025"] == pytest.approx(q(0.025)) and s["q0975"] == pytest.approx(q(0.975))
    assert s["q025"] == pytest.approx(0.01 + 0.275 * 0.01)


def test_window_shape_reverses_leads():
    mass = np.array([0.5, 0.3, 0.2])
    assert window_shape(LeadTimeDistribution(mass)).tolist() == [0.2, 0.3, 0.5]


def test_bundle_contents(bundle):
    assert [str(r.market.city) for r in bundle.markets] == ["North", "South"]
    north = bundle.markets[0]
    labels = {s.label.split(":")[-1] for s in north.series}
    assert labels == {"yoy", "baseline2018", "partialH30"}
    assert set(north.stl) == {s.label for s in north.series}
    assert len(north.forecasts) == 24
    assert set(bundle.correlations) == {"yoy_lag0", "yoy_lag1", "baseline_lag0", "baseline_lag1",
                                        "partial_H30_lag0", "partial_H30_lag1"}
    flagged = north.flags[[s.label for s in north.series if s.mode is Mode.PARTIAL][0]]
    assert set(flagged) == {Month(2019, k) for k in range(4, 10)}


def test_cells_match_direct_calls(bundle, bookings):
    assert verify_bundle(bundle, bookings, samples=6, seed=3) > 12
    north = bundle.markets[0]
    t = Month(2020, 5)
    assert north.series[0].as_dict()[t] == l1_distance(north.distributions[t], north.distributions[t.shift(-12)])


def test_forecast_sweep_ends_exact(bundle):
    for sweep in bundle.markets[1].forecasts.values():
        assert abs(sweep[-1].rel_error) < 1e-9 and sweep[-1].bound == 0


def test_render_is_deterministic_and_manifest_hashes(bundle, bookings, config):
    a = render_bundle(bundle)
    b = render_bundle(run_analysis(bookings, config))
    assert a == b
    manifest = json.loads(a["manifest.json"])
    assert manifest["config"]["baseline_year"] == 2018
    assert set(manifest["files"]) == set(a) - {"manifest.json"}
    assert manifest["ingest"]["total"] == len(bookings)
    assert len(manifest["input_sha256"]) == 64


def test_thread_count_does_not_change_output(bookings, config, monkeypatch):
    ref = render_bundle(run_analysis(bookings, config))
    monkeypatch.setenv("LEADTIME_LAB_THREADS", "4")
    assert render_bundle(run_analysis(bookings, config)) == ref


def test_write_bundle_layout(bundle, tmp_path):
    written = write_bundle(bundle, tmp_path)
    rel = {p.relative_to(tmp_path).as_posix() for p in written}
    for prefix in ("stats/", "divergence/", "stl/", "correlation/", "forecast/"):
        assert any(r.startswith(prefix) for r in rel)
    assert "manifest.json" in rel
    assert not [p for p in tmp_path.rglob("*.tmp")]


def test_atomic_write_leaves_old_file_on_failure(tmp_path, monkeypatch):
    target = tmp_path / "x.csv"
    _atomic_write(target, "old\n")

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        _atomic_write(target, "new\n")
    assert target.read_text() == "old\n"
    assert list(tmp_path.iterdir()) == [target]


def test_empty_market_filter_names_filter(bookings):
    with pytest.raises(ValueError, match="Nowhere"):
        run_analysis(bookings, AnalysisConfig(lead_cap=200, markets=["Nowhere"]))


def test_no_bookings_rejected():
    with pytest.raises(ValueError):
        run_analysis([], AnalysisConfig())


def test_no_shock_market_is_quiet(bundle):
    south = bundle.markets[1]
    stl = south.stl[[s.label for s in south.series if s.mode is Mode.YOY][0]]
    north = bundle.markets[0]
    baseline = [s for s in north.series if s.mode is Mode.BASELINE][0]
    quiet = [s for s in south.series if s.mode is Mode.BASELINE][0]
    assert max(quiet.values) < min(v for m, v in zip(baseline.months, baseline.values)
                                   if Month(2019, 4) <= m <= Month(2019, 9))
    assert np.ptp(stl.trend) < 0.05


def test_config_round_trip_and_validation():
    cfg = AnalysisConfig.from_dict({"input": "x.csv", "baseline_year": 2019, "stl": {"seasonal_window": 7}})
    assert cfg.stl == StlParams(seasonal_window=7)
    assert AnalysisConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError, match="bogus"):
        AnalysisConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        AnalysisConfig(partial_horizons=[400])
