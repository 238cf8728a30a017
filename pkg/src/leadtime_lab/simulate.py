"""Seeded synthetic data: the B-Ville toy pair, the equal-moments pair and booking streams.

Randomness comes from numpy's PCG64 (``default_rng``). Half-normal noise is
drawn as ``sigma * Phi^-1((1 + u) / 2)`` from PCG64 uniforms so the fixture
does not depend on numpy's normal-sampling internals.
"""

from __future__ import annotations

import calendar
import csv
import json
from dataclasses import dataclass
from datetime import date
from importlib import resources
from typing import Sequence

import jsonschema
import numpy as np
from scipy import optimize, special, stats

from .distribution import LeadTimeDistribution, weighted_stats
from .divergence import l1_distance
from .ingest import BookingRecord, Corridor, Market, Month, TravelType

BVILLE_SEED = 882569
BVILLE_SIGMA = 0.05
BVILLE_TOTALS = (1000, 1200)

FIGURE1_MEAN = 188.0
FIGURE1_SD = 30.0
FIGURE1_L1 = 0.25


@dataclass(frozen=True)
class PerturbationSpec:
    sigma: float = BVILLE_SIGMA
    seed: int = BVILLE_SEED
    bins: int = 30

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")


def half_normal(n: int, sigma: float, seed: int) -> np.ndarray:
    u = np.random.default_rng(seed).random(n)
    return sigma * special.ndtri(0.5 + 0.5 * u)


def perturb_distribution(base, spec: PerturbationSpec) -> np.ndarray:
    """Add half-normal noise to every bin and renormalize."""
    base = np.asarray(base, dtype=float)
    if base.size != spec.bins:
        raise ValueError(f"base has {base.size} bins, spec expects {spec.bins}")
    if np.any(base < 0) or abs(base.sum() - 1) > 1e-9:
        raise ValueError("base must be a normalized probability vector")
    noisy = base + half_normal(base.size, spec.sigma, spec.seed)
    return noisy / noisy.sum()


def load_fixture(name: str) -> np.ndarray:
    """Read a ``position,mass`` fixture shipped with the package (normalized on load)."""
    text = resources.files("leadtime_lab").joinpath("fixtures", name).read_text()
    rows = list(csv.reader(text.splitlines()))[1:]
    vec = np.array([float(m) for _, m in rows])
    return vec / vec.sum()


@dataclass(frozen=True)
class BVilleFixture:
    """Two 30-position booking-window shapes for consecutive years, plus totals.

    Position ``i`` (0-based) of each vector is window step ``i + 1``.
    """

    year1: np.ndarray
    year2: np.ndarray
    total1: int = BVILLE_TOTALS[0]
    total2: int = BVILLE_TOTALS[1]

    def distributions(self) -> tuple[LeadTimeDistribution, LeadTimeDistribution]:
        """Both shapes on a 0..30 grid with an empty position 0, so ``C[17]`` sums steps 1..17."""
        pad = lambda v: LeadTimeDistribution(np.concatenate([[0.0], v]))
        return pad(self.year1), pad(self.year2)


def make_bville_fixture(seed: int = BVILLE_SEED, sigma: float = BVILLE_SIGMA) -> BVilleFixture:
    base = load_fixture("bville_2019.csv")
    return BVilleFixture(base, perturb_distribution(base, PerturbationSpec(sigma, seed, base.size)))


def discretized_normal(mean: float, sd: float, lead_cap: int = 365) -> np.ndarray:
    """Normal mass per integer bin ``[d - 0.5, d + 0.5)``, truncated to ``0..lead_cap``."""
    edges = np.arange(lead_cap + 2) - 0.5
    p = np.diff(stats.norm.cdf(edges, mean, sd))
    if p.sum() <= 0:
        raise ValueError(f"normal({mean}, {sd}) puts no mass on 0..{lead_cap}")
    return p / p.sum()


def make_figure1_pair(mean: float = FIGURE1_MEAN, sd: float = FIGURE1_SD, target_l1: float = FIGURE1_L1,
                      lead_cap: int = 365) -> tuple[np.ndarray, np.ndarray]:
    """A unimodal and a bimodal shape with matching mean and SD but L1 distance ``target_l1``.

    The bimodal shape is an equal mixture of normals at ``mean +- s`` with
    common SD ``sqrt(sd**2 - s**2)``, which keeps the first two moments
    fixed; ``s`` is solved by root finding.
    """
    a = discretized_normal(mean, sd, lead_cap)

    def mixture(s):
        inner = np.sqrt(sd * sd - s * s)
        return 0.5 * discretized_normal(mean - s, inner, lead_cap) + 0.5 * discretized_normal(mean + s, inner, lead_cap)

    gap = lambda s: l1_distance(a, mixture(s)) - target_l1
    lo, hi = 1e-3 * sd, 0.999 * sd
    if gap(lo) * gap(hi) > 0:
        raise RuntimeError(f"cannot reach L1={target_l1}: range [{gap(lo) + target_l1:.4f}, "
                           f"{gap(hi) + target_l1:.4f}] over separations [{lo:.3g}, {hi:.3g}]")
    s, info = optimize.brentq(gap, lo, hi, xtol=1e-12, full_output=True)
    if not info.converged:
        raise RuntimeError(f"separation solve did not converge: {info.flag}")
    return a, mixture(s)


# --- booking-stream scenarios -------------------------------------------------

_SCHEMA = json.loads(resources.files("leadtime_lab").joinpath("scenario_schema.json").read_text())

DEFAULT_BASE = (
    {"weight": 0.45, "mean": 10.0, "sd": 12.0},
    {"weight": 0.35, "mean": 45.0, "sd": 30.0},
    {"weight": 0.20, "mean": 120.0, "sd": 60.0},
)


@dataclass(frozen=True)
class Shock:
    """Multiply mass at lead times ``min_lead..max_lead`` by ``factor`` during ``start..end``."""

    start: Month
    end: Month
    factor: float
    min_lead: int = 0
    max_lead: int = 14
    cities: tuple[str, ...] = ()

    def active(self, month: Month, market: Market) -> bool:
        return self.start <= month <= self.end and (not self.cities or market.city in self.cities)

    def apply(self, mass: np.ndarray) -> np.ndarray:
        out = mass.copy()
        out[self.min_lead: self.max_lead + 1] *= self.factor
        return out / out.sum()


@dataclass(frozen=True)
class ScenarioSpec:
    start: Month
    end: Month
    markets: tuple[Market, ...]
    seed: int
    lead_cap: int = 365
    base_components: tuple[dict, ...] = DEFAULT_BASE
    shocks: tuple[Shock, ...] = ()
    nights_per_month: float = 20000.0
    annual_growth: float = 0.0
    seasonal_amplitude: float = 0.0
    mean_extra_nights: float = 2.0

    @property
    def months(self) -> list[Month]:
        return [Month.from_ordinal(k) for k in range(self.start.ordinal, self.end.ordinal + 1)]

    def base_mass(self) -> np.ndarray:
        mix = sum(c["weight"] * discretized_normal(c["mean"], c["sd"], self.lead_cap) for c in self.base_components)
        return mix / mix.sum()

    def target_mass(self, month: Month, market: Market) -> np.ndarray:
        mass = self.base_mass()
        for shock in self.shocks:
            if shock.active(month, market):
                mass = shock.apply(mass)
        return mass

    def expected_nights(self, month: Month) -> float:
        years = (month.ordinal - self.start.ordinal) / 12.0
        season = 1.0 + self.seasonal_amplitude * np.sin(2 * np.pi * (month.month - 1) / 12)
        return self.nights_per_month * (1 + self.annual_growth) ** years * season


class ScenarioError(ValueError):
    pass


def scenario_from_dict(doc: dict) -> ScenarioSpec:
    """Validate a scenario document and build the spec. Errors name the offending field."""
    errors = sorted(jsonschema.Draft202012Validator(_SCHEMA).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        raise ScenarioError("; ".join(f"{'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors))
    start, end = Month.parse(doc["start"]), Month.parse(doc["end"])
    if end < start:
        raise ScenarioError("end: precedes start")
    lead_cap = doc.get("lead_cap", 365)
    shocks = []
    for i, s in enumerate(doc.get("shocks", [])):
        shock = Shock(Month.parse(s["start"]), Month.parse(s["end"]), float(s["factor"]),
                      s.get("min_lead", 0), s.get("max_lead", 14), tuple(s.get("markets", ())))
        if not (start <= shock.start <= shock.end <= end):
            raise ScenarioError(f"shocks/{i}: window {shock.start}..{shock.end} outside {start}..{end}")
        if shock.min_lead > shock.max_lead or shock.max_lead > lead_cap:
            raise ScenarioError(f"shocks/{i}: lead range {shock.min_lead}..{shock.max_lead} invalid for cap {lead_cap}")
        shocks.append(shock)
    vol = doc.get("volume", {})
    return ScenarioSpec(
        start=start, end=end,
        markets=tuple(Market(m["city"], Corridor(m["corridor"]), TravelType(m["travel_type"])) for m in doc["markets"]),
        seed=doc["seed"], lead_cap=lead_cap,
        base_components=tuple(doc.get("base_distribution", DEFAULT_BASE)),
        shocks=tuple(shocks),
        nights_per_month=float(vol.get("nights_per_month", 20000.0)),
        annual_growth=float(vol.get("annual_growth", 0.0)),
        seasonal_amplitude=float(vol.get("seasonal_amplitude", 0.0)),
        mean_extra_nights=float(vol.get("mean_extra_nights", 2.0)),
    )


def _month_records(spec: ScenarioSpec, m_idx: int, month: Month, k_idx: int, market: Market) -> list[BookingRecord]:
    rng = np.random.default_rng([spec.seed, k_idx, m_idx])
    n = max(1, int(round(spec.expected_nights(month) / (1.0 + spec.mean_extra_nights))))
    mass = spec.target_mass(month, market)
    leads = rng.choice(mass.size, size=n, p=mass)
    nights = 1 + rng.poisson(spec.mean_extra_nights, size=n)
    ndays = calendar.monthrange(month.year, month.month)[1]
    day = rng.integers(0, ndays, size=n)
    order = np.lexsort((leads, day))
    first = month.first_day().toordinal()
    out = []
    for i in order:
        checkin = first + int(day[i])
        out.append(BookingRecord(date.fromordinal(checkin - int(leads[i])), date.fromordinal(checkin),
                                 int(nights[i]), market.city, market.corridor, market.travel_type))
    return out


def generate_scenario(spec: ScenarioSpec) -> list[BookingRecord]:
    """Deterministic booking stream for every (market, month) in the spec.

    Each cell draws from its own generator seeded by ``(seed, market index,
    month index)``, so cells can be produced in any order.
    """
    out: list[BookingRecord] = []
    for k_idx, market in enumerate(spec.markets):
        for m_idx, month in enumerate(spec.months):
            out.extend(_month_records(spec, m_idx, month, k_idx, market))
    return out


def describe_fixture(vec: Sequence[float]) -> dict:
    """Table-style stats of a 30-step window shape, with steps numbered from 1."""
    s = weighted_stats(np.arange(1, len(vec) + 1), vec)
    return {"mean": s.mean, "median": s.median, "sd": s.sd}
