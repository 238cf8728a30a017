import io
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import booking
from leadtime_lab.distribution import LeadTimeDistribution, build_distribution
from leadtime_lab.divergence import (
    DivergenceSeries,
    InsufficientHistoryError,
    Mode,
    PartialDistribution,
    baseline_series,
    build_partial,
    correlate,
    correlation_matrix,
    early_warning,
    historical_partial,
    l1_distance,
    partial_l1,
    partial_series,
    read_series_csv,
    series_quantile,
    write_series_csv,
    yoy_series,
)
from leadtime_lab.ingest import Month, group_by_month
from leadtime_lab.simulate import generate_scenario, make_figure1_pair, scenario_from_dict


def months(n, start=Month(2018, 1)):
    return [start.shift(k) for k in range(n)]


def dist(vec):
    return LeadTimeDistribution.from_vector(vec)


def series(vals, start=Month(2018, 1)):
    return DivergenceSeries(Mode.YOY, months(len(vals), start), list(vals))


def simplex(n, rng):
    return rng.dirichlet(np.ones(n))


def test_hand_examples():
    assert l1_distance([0.6, 0.4], [0.4, 0.6]) == pytest.approx(0.2, abs=1e-15)
    assert l1_distance([1, 0], [0, 1]) == 1.0
    p = np.array([0.1, 0.2, 0.7])
    assert l1_distance(p, p) == 0.0


def test_figure1_pair_distance():
    a, b = make_figure1_pair()
    assert l1_distance(a, b) == pytest.approx(0.25, abs=0.01)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        l1_distance([0.5, 0.5], [1.0])
    with pytest.raises(ValueError):
        l1_distance([0.5, 0.6], [0.5, 0.5])


def test_metric_properties_bulk(rng):
    for _ in range(2000):
        n = int(rng.integers(2, 40))
        p, q, r = simplex(n, rng), simplex(n, rng), simplex(n, rng)
        d = l1_distance(p, q)
        assert d == l1_distance(q, p)
        assert 0 <= d <= 1
        assert l1_distance(p, r) <= d + l1_distance(q, r) + 1e-12
        assert d == pytest.approx(np.maximum(p - q, 0).sum(), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(arrays(float, 12, elements=st.floats(0, 10)).filter(lambda a: a.sum() > 1e-3))
def test_identity_of_indiscernibles(w):
    p = w / w.sum()
    assert l1_distance(p, p.copy()) <= 1e-12


def test_yoy_identical_months_all_zero():
    d = dist([1, 2, 3, 4])
    s = yoy_series({m: d for m in months(24)})
    assert len(s.months) == 12 and s.months[0] == Month(2019, 1)
    assert all(v == 0 for v in s.values)


def test_yoy_disjoint_years_all_one():
    a, b = dist([1, 0, 0, 0]), dist([0, 0, 0, 1])
    s = yoy_series({m: (a if m.year == 2018 else b) for m in months(24)})
    assert s.values == [1.0] * 12


def test_yoy_missing_prior_is_gap():
    d = dist([1, 1])
    ms = [m for m in months(24) if m != Month(2018, 5)]
    s = yoy_series({m: d for m in ms})
    assert Month(2019, 5) not in s.months and Month(2019, 5) in s.gaps


def test_yoy_needs_history():
    with pytest.raises(InsufficientHistoryError):
        yoy_series({m: dist([1, 1]) for m in months(12)})


def test_baseline_examples():
    base, odd = dist([1, 1, 0]), dist([0, 0, 1])
    dists = {m: base for m in months(36)}
    assert all(v == 0 for v in baseline_series(dists, 2018).values)
    dists[Month(2020, 4)] = odd
    s = baseline_series(dists, 2018)
    vals = s.as_dict()
    assert vals[Month(2020, 4)] == 1.0
    assert sum(vals.values()) == 1.0
    assert s.months[0] == Month(2019, 1)


def test_partial_examples():
    cur = PartialDistribution(2, np.array([0.5, 0.3, 0.2]), 1.0)
    ref = PartialDistribution(2, np.array([0.2, 0.3, 0.5]), 1.0)
    assert partial_l1(cur, ref) == pytest.approx(0.3, abs=1e-15)
    assert partial_l1(cur, cur) == 0
    one = PartialDistribution(1, np.array([1.0, 0.0]), 1.0)
    two = PartialDistribution(1, np.array([0.0, 1.0]), 1.0)
    assert partial_l1(one, two) == 1.0


def test_build_partial_examples():
    p = build_partial([(0, 3), (1, 1)], horizon=1)
    np.testing.assert_allclose(p.mass, [0.75, 0.25])
    q = build_partial([(5, 2), (5, 1), (9, 4)], horizon=5)
    assert q.mass[5] == 1.0 and q.observed_nights == 3


def test_build_partial_as_of_filters_future_bookings():
    checkin = date(2020, 3, 20)
    recs = [booking(2, 1, checkin), booking(10, 1, checkin), booking(25, 2, checkin)]
    full = build_partial(recs, 30)
    early = build_partial(recs, 30, as_of=date(2020, 3, 12))
    assert full.observed_nights == 4 and early.observed_nights == 3
    assert early.mass[2] == 0


def test_historical_reference_is_mean_of_vectors(rng):
    parts = [PartialDistribution(10, simplex(11, rng), 5.0) for _ in range(4)]
    ref = historical_partial(parts)
    oracle = np.mean(np.vstack([p.mass for p in parts]), axis=0)
    np.testing.assert_allclose(ref.mass, oracle / oracle.sum(), atol=1e-15)


def test_partial_series_uses_prior_same_month(rng):
    vecs = {m: PartialDistribution(5, simplex(6, rng), 1.0) for m in months(36)}
    s = partial_series(vecs)
    t = Month(2020, 7)
    ref = (vecs[Month(2018, 7)].mass + vecs[Month(2019, 7)].mass) / 2
    assert s.as_dict()[t] == pytest.approx(0.5 * np.abs(vecs[t].mass - ref / ref.sum()).sum(), abs=1e-12)
    capped = partial_series(vecs, reference_years=1)
    assert capped.as_dict()[t] == pytest.approx(l1_distance(vecs[t].mass, vecs[Month(2019, 7)].mass), abs=1e-12)
    assert s.label.endswith("partialH5")


def test_early_warning_examples():
    assert early_warning(series([0, 0, 0]), 0.1) == []
    s = series([0.05, 0.2, 0.15])
    assert early_warning(s, 0.1) == s.months[1:]
    assert early_warning(series([0.1, 0.1]), 0.1) == []
    with pytest.raises(ValueError):
        early_warning(s, 1.5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30))
def test_high_threshold_flags_only_extreme_points(vals):
    flagged = early_warning(series(vals), 0.99)
    assert len(flagged) == sum(v > 0.99 for v in vals)


def test_correlate_examples():
    a, b = series([0.1, 0.2, 0.3, 0.4]), series([0.2, 0.4, 0.6, 0.8])
    assert correlate(a, b) == pytest.approx(1.0)
    assert correlate(a, a) == pytest.approx(1.0)
    neg = series([0.5 - v for v in a.values])
    assert correlate(a, neg) == pytest.approx(-1.0)


def test_correlate_lag_shifts_second_series():
    base = [0.1, 0.5, 0.2, 0.8, 0.3, 0.6, 0.05, 0.4]
    lead = series(base)
    follow = series([0.3] + base[:-1])
    assert correlate(follow, lead, lag=1) == pytest.approx(1.0)
    assert correlate(follow, lead, lag=0) < 0.9
    with pytest.raises(ValueError):
        correlate(series([0.1, 0.2]), series([0.1, 0.2]))


def test_correlation_matrix_is_symmetric_with_unit_diagonal(rng):
    ss = [series(rng.random(20)) for _ in range(3)]
    cm = correlation_matrix(ss)
    np.testing.assert_allclose(np.diag(cm.r), 1.0)
    np.testing.assert_allclose(cm.r, cm.r.T, atol=1e-15)


def test_quantile_linear_interpolation(rng):
    x = rng.random(17)
    for q in (0, 0.025, 0.5, 0.975, 1):
        assert series_quantile(x, q) == pytest.approx(np.quantile(x, q, method="linear"), abs=1e-15)


def test_series_csv_round_trip():
    s = series([0.1, 0.25, 0.3])
    buf = io.StringIO()
    write_series_csv([s], buf)
    (back,) = read_series_csv(io.StringIO(buf.getvalue()))
    assert back.months == s.months and back.values == s.values and back.mode == s.mode


def test_series_validation():
    with pytest.raises(ValueError):
        DivergenceSeries(Mode.YOY, months(2), [0.1, 1.2])
    with pytest.raises(ValueError):
        DivergenceSeries(Mode.YOY, [Month(2019, 2), Month(2019, 1)], [0.1, 0.2])


def test_drift_scenario_matches_brute_force():
    spec = scenario_from_dict({
        "start": "2018-01", "end": "2019-12", "seed": 42, "lead_cap": 120,
        "markets": [{"city": "Drift", "corridor": "origin", "travel_type": "domestic"}],
        "shocks": [{"start": "2019-03", "end": "2019-08", "factor": 3.0, "max_lead": 20}],
        "volume": {"nights_per_month": 30000},
    })
    recs = generate_scenario(spec)
    cohorts = {c.month: c for c in group_by_month(recs, 120).cohorts}
    dists = {m: build_distribution(c, 120) for m, c in cohorts.items()}
    yoy = yoy_series(dists)
    base = baseline_series(dists, 2018)

    def brute(c1, c2):
        w1, w2 = np.zeros(121), np.zeros(121)
        for r in c1.records:
            w1[(r.checkin_date - r.booking_date).days] += r.nights
        for r in c2.records:
            w2[(r.checkin_date - r.booking_date).days] += r.nights
        return 0.5 * sum(abs(a / w1.sum() - b / w2.sum()) for a, b in zip(w1, w2))

    for m, v in zip(yoy.months, yoy.values):
        assert v == pytest.approx(brute(cohorts[m], cohorts[m.shift(-12)]), abs=1e-12)
    for m, v in zip(base.months, base.values):
        assert v == pytest.approx(brute(cohorts[m], cohorts[Month(2018, m.month)]), abs=1e-12)
    shocked = [v for m, v in zip(base.months, base.values) if Month(2019, 3) <= m <= Month(2019, 8)]
    calm = [v for m, v in zip(base.months, base.values) if not Month(2019, 3) <= m <= Month(2019, 8)]
    assert min(shocked) > max(calm)
