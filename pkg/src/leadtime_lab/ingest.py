"""Booking ingestion: CSV parsing, validation and monthly cohort grouping."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import IO, Iterable, NamedTuple

HEADER = ("booking_date", "checkin_date", "nights", "city", "corridor", "travel_type")


class Corridor(str, Enum):
    DESTINATION = "destination"
    ORIGIN = "origin"


class TravelType(str, Enum):
    DOMESTIC = "domestic"
    INTERNATIONAL = "international"


class Month(NamedTuple):
    """Calendar month key, ordered chronologically."""

    year: int
    month: int

    @classmethod
    def of(cls, d: date) -> "Month":
        return cls(d.year, d.month)

    @classmethod
    def parse(cls, text: str) -> "Month":
        y, m = text.strip().split("-")[:2]
        month = cls(int(y), int(m))
        if not 1 <= month.month <= 12:
            raise ValueError(f"invalid month {text!r}")
        return month

    @property
    def ordinal(self) -> int:
        return self.year * 12 + self.month - 1

    @classmethod
    def from_ordinal(cls, n: int) -> "Month":
        return cls(n // 12, n % 12 + 1)

    def shift(self, months: int) -> "Month":
        return Month.from_ordinal(self.ordinal + months)

    def first_day(self) -> date:
        return date(self.year, self.month, 1)

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


class Market(NamedTuple):
    city: str
    corridor: Corridor
    travel_type: TravelType

    def __str__(self) -> str:
        return f"{self.city}|{self.corridor.value}|{self.travel_type.value}"

    @classmethod
    def parse(cls, text: str) -> "Market":
        city, corridor, travel = text.split("|")
        return cls(city, Corridor(corridor), TravelType(travel))


@dataclass(frozen=True)
class BookingRecord:
    booking_date: date
    checkin_date: date
    nights: int
    city: str
    corridor: Corridor
    travel_type: TravelType
    row: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.nights < 1:
            raise ValueError(f"nights must be >= 1, got {self.nights}")
        if self.checkin_date < self.booking_date:
            raise ValueError("negative lead time: checkin_date precedes booking_date")

    @property
    def lead_time(self) -> int:
        return (self.checkin_date - self.booking_date).days

    @property
    def market(self) -> Market:
        return Market(self.city, self.corridor, self.travel_type)

    @property
    def month(self) -> Month:
        return Month.of(self.checkin_date)


@dataclass(frozen=True)
class MonthlyCohort:
    month: Month
    market: Market
    records: tuple[BookingRecord, ...]

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class RowError:
    row: int
    field: str
    message: str

    def as_dict(self) -> dict:
        return {"row": self.row, "field": self.field, "message": self.message}


class IngestError(ValueError):
    """Raised in strict mode for the first invalid row (or a bad header)."""

    def __init__(self, error: RowError):
        super().__init__(f"row {error.row}, field {error.field!r}: {error.message}")
        self.error = error


@dataclass
class ParseResult:
    records: list[BookingRecord]
    errors: list[RowError]


@dataclass
class GroupResult:
    cohorts: list[MonthlyCohort]
    total: int
    excluded_over_cap: int

    @property
    def kept(self) -> int:
        return self.total - self.excluded_over_cap


def _parse_row(row_no: int, row: list[str]) -> BookingRecord:
    if len(row) != len(HEADER):
        raise IngestError(RowError(row_no, "*", f"expected {len(HEADER)} columns, got {len(row)}"))
    values = dict(zip(HEADER, (c.strip() for c in row)))

    def fail(name, msg):
        raise IngestError(RowError(row_no, name, msg))

    dates = {}
    for name in ("booking_date", "checkin_date"):
        try:
            dates[name] = date.fromisoformat(values[name])
        except ValueError:
            fail(name, f"malformed date {values[name]!r}")
    try:
        nights = int(values["nights"])
    except ValueError:
        fail("nights", f"not an integer: {values['nights']!r}")
    if nights < 1:
        fail("nights", f"nights must be >= 1, got {nights}")
    if dates["checkin_date"] < dates["booking_date"]:
        fail("checkin_date", "negative lead time")
    if not values["city"]:
        fail("city", "empty city label")
    try:
        corridor = Corridor(values["corridor"])
    except ValueError:
        fail("corridor", f"unknown corridor {values['corridor']!r}")
    try:
        travel = TravelType(values["travel_type"])
    except ValueError:
        fail("travel_type", f"unknown travel_type {values['travel_type']!r}")
    return BookingRecord(dates["booking_date"], dates["checkin_date"], nights,
                         values["city"], corridor, travel, row=row_no)


def parse_bookings(source: IO[bytes] | IO[str] | bytes | str, strict: bool = True) -> ParseResult:
    """Parse booking CSV text.

    ``source`` may be a binary or text stream, or the raw bytes/str content.
    Row numbers count the header as row 1, so the first data row is row 2.
    In strict mode the first invalid row raises :class:`IngestError`; in
    lenient mode invalid rows are skipped and reported in ``errors``.
    """
    if isinstance(source, bytes):
        text = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, str):
        text = io.StringIO(source)
    elif isinstance(source, io.TextIOBase):
        text = source
    else:
        text = io.TextIOWrapper(source, encoding="utf-8", newline="")
    reader = csv.reader(text)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != HEADER:
        raise IngestError(RowError(1, "header", f"expected header {','.join(HEADER)}"))

    records, errors = [], []
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            records.append(_parse_row(row_no, row))
        except IngestError as exc:
            if strict:
                raise
            errors.append(exc.error)
    return ParseResult(records, errors)


def group_by_month(records: Iterable[BookingRecord], lead_cap: int = 365) -> GroupResult:
    """Partition records into (check-in month, market) cohorts.

    Records with a lead time above ``lead_cap`` are dropped and counted.
    Cohorts come back sorted by month, then market.
    """
    if lead_cap < 1:
        raise ValueError(f"lead_cap must be >= 1, got {lead_cap}")
    buckets: dict[tuple, list[BookingRecord]] = {}
    total = excluded = 0
    for rec in records:
        total += 1
        ci = rec.checkin_date
        if (ci - rec.booking_date).days > lead_cap:
            excluded += 1
            continue
        key = (ci.year, ci.month, rec.city, rec.corridor, rec.travel_type)
        bucket = buckets.get(key)
        if bucket is None:
            bucket = buckets[key] = []
        bucket.append(rec)
    cohorts = [MonthlyCohort(Month(y, m), Market(city, cor, tt), tuple(recs))
               for (y, m, city, cor, tt), recs in sorted(buckets.items())]
    return GroupResult(cohorts, total, excluded)


def exclusion_report(grouped: GroupResult, errors: Iterable[RowError] = ()) -> dict:
    errors = list(errors)
    return {
        "total": grouped.total + len(errors),
        "kept": grouped.kept,
        "excluded_over_cap": grouped.excluded_over_cap,
        "errors": [e.as_dict() for e in errors],
    }


def write_bookings_csv(records: Iterable[BookingRecord], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(HEADER)
    for r in records:
        writer.writerow([r.booking_date.isoformat(), r.checkin_date.isoformat(), r.nights,
                         r.city, r.corridor.value, r.travel_type.value])


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
