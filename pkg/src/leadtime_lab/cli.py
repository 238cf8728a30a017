"""``leadtime-lab`` command line.

Exit status: 0 on success, 1 for bad input (usage, unreadable or invalid
files), 2 when a computation fails on otherwise valid input.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import sys
from contextlib import contextmanager
from importlib import resources
from pathlib import Path

from . import __version__
from .decompose import PERIODIC, StlParams, decompose_divergence, write_components_csv
from .distribution import LeadTimeDistribution, build_distribution, describe, read_distribution_csv, stats_record, write_distribution_csv
from .divergence import (
    DivergenceSeries,
    baseline_series,
    build_partial,
    early_warning,
    l1_distance,
    partial_series,
    read_series_csv,
    write_series_csv,
    yoy_series,
)
from .ingest import IngestError, exclusion_report, group_by_month, parse_bookings, write_bookings_csv
from .pickup import error_bound, evaluate_horizon_sweep, write_sweep_csv
from .pipeline import AnalysisConfig, run_analysis, write_bundle
from .simulate import describe_fixture, generate_scenario, make_bville_fixture, make_figure1_pair, scenario_from_dict

log = logging.getLogger("leadtime_lab")


class InputError(Exception):
    pass


class UsageError(InputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage().strip()}\n{self.prog}: error: {message}")


def fmt(x: float) -> str:
    return f"{x:.6g}"


def fixture_hash() -> str:
    h = hashlib.sha256()
    for f in sorted(resources.files("leadtime_lab").joinpath("fixtures").iterdir(), key=lambda p: p.name):
        if f.name.endswith(".csv"):
            h.update(f.read_bytes())
    return h.hexdigest()[:12]


@contextmanager
def _reading(what: str):
    try:
        yield
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"{what}: {exc}") from exc


def _open_text(path: str):
    return sys.stdin if path == "-" else open(path, newline="")


def _load_bookings(path: str, strict: bool = True):
    with _reading(path):
        with _open_text(path) as fh:
            return parse_bookings(fh, strict=strict)


def _load_dist(path: str):
    with _reading(path):
        with open(path, newline="") as fh:
            return read_distribution_csv(fh)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _monthly_dists(args):
    parsed = _load_bookings(args.input)
    grouped = group_by_month(parsed.records, args.lead_cap)
    by_market = {}
    for c in grouped.cohorts:
        if args.market and str(c.market) != args.market and c.market.city != args.market:
            continue
        by_market.setdefault(c.market, {})[c.month] = build_distribution(c, args.lead_cap)
    if not by_market:
        raise InputError(f"no cohorts left (market filter: {args.market})")
    return grouped, by_market


# --- verbs ------------------------------------------------------------------------


def cmd_ingest_check(args):
    with _reading(args.input), _open_text(args.input) as fh:
        try:
            parsed = parse_bookings(fh, strict=not args.lenient)
        except IngestError as exc:
            report = {"total": None, "kept": 0, "excluded_over_cap": 0, "errors": [exc.error.as_dict()]}
            print(json.dumps(report, indent=2))
            return 1
    grouped = group_by_month(parsed.records, args.lead_cap)
    print(json.dumps(exclusion_report(grouped, parsed.errors), indent=2, sort_keys=True))
    return 0


def cmd_describe(args):
    if args.dist:
        stats = describe(_load_dist(args.dist))
        print(json.dumps({k: (fmt(v) if isinstance(v, float) else v) for k, v in stats_record(stats).items()}))
        return 0
    if not args.input:
        raise UsageError("describe needs a bookings file or --dist")
    parsed = _load_bookings(args.input)
    grouped = group_by_month(parsed.records, args.lead_cap)
    for c in grouped.cohorts:
        if args.market and str(c.market) != args.market and c.market.city != args.market:
            continue
        rec = stats_record(describe(c, weighted=not args.per_trip), c.month, c.market)
        print(json.dumps({k: (fmt(v) if isinstance(v, float) else v) for k, v in rec.items()}))
    return 0


def cmd_divergence(args):
    grouped, by_market = _monthly_dists(args)
    series: list[DivergenceSeries] = []
    for market, dists in sorted(by_market.items()):
        if args.mode == "yoy":
            series.append(yoy_series(dists, market))
        elif args.mode == "baseline":
            year = args.baseline_year or min(m.year for m in dists)
            series.append(baseline_series(dists, year, market))
        else:
            series.append(_partial(grouped, market, args.horizon, args.reference_years))
    buf = io.StringIO()
    write_series_csv(series, buf)
    _emit(buf.getvalue(), args.out)
    return 0


def _partial(grouped, market, horizon, reference_years):
    partials = {c.month: build_partial(c.records, horizon) for c in grouped.cohorts if c.market == market}
    return partial_series(partials, reference_years, market)


def cmd_stl(args):
    with _reading(args.series), open(args.series, newline="") as fh:
        series = read_series_csv(fh)
    if args.market:
        series = [s for s in series if s.market and (str(s.market) == args.market or s.market.city == args.market)]
    if args.mode:
        series = [s for s in series if s.label.split(":")[-1] == args.mode or s.mode.value == args.mode]
    if len(series) != 1:
        raise InputError(f"series file must select exactly one series (found {len(series)}); use --market/--mode")
    seasonal = args.seasonal if args.seasonal == PERIODIC else int(args.seasonal)
    try:
        params = StlParams(period=args.period, seasonal_window=seasonal, trend_window=args.trend,
                           low_pass_window=args.low_pass, inner_iterations=args.inner, outer_iterations=args.outer)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    res = decompose_divergence(series[0], params)
    buf = io.StringIO()
    write_components_csv(res, buf)
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_pickup(args):
    if not args.total > 0:
        raise InputError("--total must be positive")
    if args.d is not None and not 0 <= args.d <= 1:
        raise InputError("--d must lie in [0, 1]")
    hist, actual = _load_dist(args.hist), _load_dist(args.actual)
    h, a = hist.mass, actual.mass
    if args.lead_time:
        h, a = h[::-1], a[::-1]
    if args.at is not None and not 0 <= args.at < h.size:
        raise InputError(f"--at must lie in 0..{h.size - 1}")
    sweep = evaluate_horizon_sweep(h, a, args.total, args.d)
    buf = io.StringIO()
    write_sweep_csv(sweep, buf)
    _emit(buf.getvalue(), args.out)
    if args.at is not None:
        ev = sweep[args.at]
        stream = sys.stdout if args.out else sys.stderr
        if ev.forecast is None:
            print(f"delta={args.at} forecast=undefined (no historical mass)", file=stream)
        else:
            print(f"delta={args.at} forecast={fmt(ev.forecast)} rel_error={fmt(ev.rel_error)} bound={fmt(ev.bound)}",
                  file=stream)
    return 0


def cmd_bound(args):
    try:
        value = error_bound(args.d, args.delta, args.delta_max, args.c_hist)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    print(fmt(value))
    return 0


def cmd_simulate(args):
    if args.kind == "bville":
        if args.seed is None:
            raise UsageError("simulate bville requires --seed")
        fx = make_bville_fixture(args.seed)
        out = Path(args.out or ".")
        for name, dist in zip(("bville_year1.csv", "bville_year2.csv"), fx.distributions()):
            buf = io.StringIO()
            write_distribution_csv(dist, buf)
            _emit(buf.getvalue(), str(out / name))
        s1, s2 = describe_fixture(fx.year1), describe_fixture(fx.year2)
        print(json.dumps({"year1": {k: fmt(v) for k, v in s1.items()}, "year2": {k: fmt(v) for k, v in s2.items()},
                          "l1": fmt(l1_distance(fx.year1, fx.year2)), "totals": [fx.total1, fx.total2]}))
        return 0
    if args.kind == "figure1":
        a, b = make_figure1_pair()
        out = Path(args.out or ".")
        for name, vec in (("figure1_A.csv", a), ("figure1_B.csv", b)):
            buf = io.StringIO()
            write_distribution_csv(LeadTimeDistribution(vec), buf)
            _emit(buf.getvalue(), str(out / name))
        sa, sb = describe(LeadTimeDistribution(a)), describe(LeadTimeDistribution(b))
        print(json.dumps({"A": {"mean": fmt(sa.mean), "sd": fmt(sa.sd)}, "B": {"mean": fmt(sb.mean), "sd": fmt(sb.sd)},
                          "l1": fmt(l1_distance(a, b))}))
        return 0
    if not args.spec:
        raise UsageError("simulate scenario requires --spec")
    with _reading(args.spec):
        doc = json.loads(Path(args.spec).read_text())
    if args.seed is not None:
        doc["seed"] = args.seed
    if "seed" not in doc:
        raise UsageError("no seed: pass --seed or set 'seed' in the spec")
    with _reading(args.spec):
        spec = scenario_from_dict(doc)
    buf = io.StringIO()
    write_bookings_csv(generate_scenario(spec), buf)
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_monitor(args):
    if not 0 < args.threshold < 1:
        raise InputError("--threshold must lie in (0, 1)")
    grouped, by_market = _monthly_dists(args)
    flags = []
    for market in sorted(by_market):
        s = _partial(grouped, market, args.horizon, args.reference_years)
        values = s.as_dict()
        for m in early_warning(s, args.threshold):
            flags.append({"market": str(market), "month": str(m), "value": values[m], "threshold": args.threshold})
    _emit(json.dumps(flags, indent=2) + "\n", args.out)
    return 0


def cmd_analyze(args):
    with _reading(args.config):
        doc = json.loads(Path(args.config).read_text())
        source = args.input or doc.get("input")
        if not source:
            raise InputError("no input: pass --input or set 'input' in the config")
        if not Path(source).is_absolute() and source != "-" and not args.input:
            source = str(Path(args.config).parent / source)
        config = AnalysisConfig.from_dict(doc)
    out = args.out or config.output_dir
    if not out:
        raise InputError("no output directory: pass --out or set 'output_dir'")
    parsed = _load_bookings(source)
    bundle = run_analysis(parsed.records, config)
    written = write_bundle(bundle, out)
    print(f"wrote {len(written)} files to {out}")
    return 0


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="leadtime-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="store_true", help="print version and fixture hash")
    p.add_argument("--json-errors", action="store_true", help="report errors on stderr as JSON")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", parser_class=_Parser)

    def bookings_args(sp, optional=False):
        sp.add_argument("input", nargs="?" if optional else None, help="bookings CSV ('-' for stdin)")
        sp.add_argument("--lead-cap", type=int, default=365)
        sp.add_argument("--market", help="city or city|corridor|travel_type")

    sp = sub.add_parser("ingest-check", help="validate a bookings CSV and report exclusions")
    bookings_args(sp)
    sp.add_argument("--lenient", action="store_true", help="skip bad rows instead of failing")
    sp.set_defaults(func=cmd_ingest_check)

    sp = sub.add_parser("describe", help="mean/median/SD per month and market")
    bookings_args(sp, optional=True)
    sp.add_argument("--per-trip", action="store_true", help="unweighted per-trip statistics")
    sp.add_argument("--dist", help="describe a delta,mass distribution file instead")
    sp.set_defaults(func=cmd_describe)

    sp = sub.add_parser("divergence", help="monthly L1 divergence series")
    bookings_args(sp)
    sp.add_argument("--mode", choices=["yoy", "baseline", "partial"], required=True)
    sp.add_argument("--baseline-year", type=int)
    sp.add_argument("--horizon", type=int, default=30)
    sp.add_argument("--reference-years", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_divergence)

    sp = sub.add_parser("stl", help="decompose a divergence series")
    sp.add_argument("series", help="series CSV (month,market,mode,value)")
    sp.add_argument("--market")
    sp.add_argument("--mode")
    sp.add_argument("--period", type=int, default=12)
    sp.add_argument("--seasonal", default=PERIODIC, help="odd window >= 7 or 'periodic'")
    sp.add_argument("--trend", type=int)
    sp.add_argument("--low-pass", type=int)
    sp.add_argument("--inner", type=int, default=2)
    sp.add_argument("--outer", type=int, default=1)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_stl)

    sp = sub.add_parser("pickup", help="pickup forecast sweep over the booking window")
    sp.add_argument("--hist", required=True)
    sp.add_argument("--actual", required=True)
    sp.add_argument("--total", type=float, required=True, help="actual total bookings")
    sp.add_argument("--d", type=float, help="divergence for the bound (default: L1 of the pair)")
    sp.add_argument("--lead-time", action="store_true", help="files are indexed by lead time, not window position")
    sp.add_argument("--at", type=int, help="also print the evaluation at this window position")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_pickup)

    sp = sub.add_parser("bound", help="forecast-error bound at one window position")
    sp.add_argument("--d", type=float, required=True)
    sp.add_argument("--delta", type=int, required=True)
    sp.add_argument("--delta-max", type=int, required=True)
    sp.add_argument("--c-hist", type=float, required=True)
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("simulate", help="synthetic fixtures and booking streams")
    sp.add_argument("kind", choices=["bville", "figure1", "scenario"])
    sp.add_argument("--spec")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="output directory (bville, figure1) or CSV file (scenario)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("monitor", help="early-warning flags from partial L1")
    bookings_args(sp)
    sp.add_argument("--horizon", type=int, default=30)
    sp.add_argument("--threshold", type=float, required=True)
    sp.add_argument("--reference-years", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_monitor)

    sp = sub.add_parser("analyze", help="full report bundle")
    sp.add_argument("--config", required=True)
    sp.add_argument("--input")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_analyze)
    return p


def _report(exc: Exception, code: int, json_errors: bool) -> int:
    if json_errors:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit": code}), file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    json_errors = "--json-errors" in argv
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _report(exc, 1, json_errors)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.version:
        print(f"leadtime-lab {__version__} fixtures {fixture_hash()}")
        return 0
    if not args.verb:
        return _report(UsageError(parser.format_usage().strip()), 1, json_errors)
    try:
        return args.func(args)
    except (InputError, IngestError) as exc:
        return _report(exc, 1, json_errors)
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        return _report(exc, 2, json_errors)


if __name__ == "__main__":
    sys.exit(main())
