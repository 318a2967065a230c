"""Smart-card (AFC) record parsing and cleaning."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, time, timedelta
from typing import IO, Any, Iterable, NamedTuple

from .errors import ConfigError
from .network import MetroNetwork

RECORD_FIELDS = ("card_id", "in_line", "in_station", "in_time",
                 "out_line", "out_station", "out_time", "card_type")
TIME_FIELDS = ("in_time", "out_time")

RULES = {
    1: "out_time not after in_time",
    2: "same entry and exit station",
    3: "swipe outside operating hours",
    4: "unknown station code",
    5: "trip longer than max duration",
}


@dataclass(frozen=True)
class AfcRecord:
    card_id: str
    in_line: str
    in_station: str
    in_time: datetime
    out_line: str
    out_station: str
    out_time: datetime
    card_type: str = ""
    extra: dict[str, str] = field(default_factory=dict, compare=False, hash=False)

    @property
    def duration(self) -> timedelta:
        return self.out_time - self.in_time

    @property
    def is_transfer_candidate(self) -> bool:
        return self.in_line != self.out_line


@dataclass(frozen=True)
class AfcSchema:
    """Maps record fields to header names of a delimited file.

    Columns not mapped to a field are carried along in ``AfcRecord.extra``.
    """

    columns: dict[str, str] = field(default_factory=lambda: {f: f for f in RECORD_FIELDS})
    delimiter: str = ","
    time_format: str = "%Y-%m-%d %H:%M:%S"

    def __post_init__(self):
        missing = [f for f in RECORD_FIELDS if f != "card_type" and f not in self.columns]
        if missing:
            raise ConfigError(f"schema does not map required fields: {missing}")
        unknown = set(self.columns) - set(RECORD_FIELDS)
        if unknown:
            raise ConfigError(f"schema maps unknown fields: {sorted(unknown)}")


class ParsedAfc(NamedTuple):
    records: list[AfcRecord]
    malformed: list[tuple[int, str]]


def parse_afc_csv(source: IO[str] | IO[bytes] | str | bytes, schema: AfcSchema | None = None) -> ParsedAfc:
    """Parse delimited AFC text into records.

    Row numbers in ``malformed`` are 1-based file line numbers (header is
    line 1). A mapped column missing from the header raises ConfigError.
    """
    schema = schema or AfcSchema()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        source = io.StringIO(source)
    elif isinstance(source, io.BufferedIOBase) or "b" in getattr(source, "mode", ""):
        source = io.TextIOWrapper(source, encoding="utf-8")

    reader = csv.reader(source, delimiter=schema.delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ConfigError("input has no header row") from None
    index = {h: i for i, h in enumerate(header)}
    missing = [col for col in schema.columns.values() if col not in index]
    if missing:
        raise ConfigError(f"mapped columns missing from header: {missing}")
    mapped = {index[col]: name for name, col in schema.columns.items()}
    extra_cols = [(i, h) for i, h in enumerate(header) if i not in mapped]

    records, malformed = [], []
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            malformed.append((rowno, f"expected {len(header)} columns, got {len(row)}"))
            continue
        values: dict[str, Any] = {}
        try:
            for i, name in mapped.items():
                raw = row[i].strip()
                if name in TIME_FIELDS:
                    values[name] = datetime.strptime(raw, schema.time_format)
                elif not raw and name != "card_type":
                    raise ValueError(f"empty {name}")
                else:
                    values[name] = raw
        except ValueError as exc:
            malformed.append((rowno, str(exc)))
            continue
        values["extra"] = {h: row[i] for i, h in extra_cols}
        records.append(AfcRecord(**values))
    return ParsedAfc(records, malformed)


def write_afc_csv(records: Iterable[AfcRecord], sink: IO[str], schema: AfcSchema | None = None) -> None:
    schema = schema or AfcSchema()
    records = list(records)
    extra_names = sorted({k for r in records for k in r.extra})
    names = [f for f in RECORD_FIELDS if f in schema.columns]
    writer = csv.writer(sink, delimiter=schema.delimiter, lineterminator="\n")
    writer.writerow([schema.columns[f] for f in names] + extra_names)
    for r in records:
        row = []
        for f in names:
            v = getattr(r, f)
            row.append(v.strftime(schema.time_format) if f in TIME_FIELDS else v)
        writer.writerow(row + [r.extra.get(k, "") for k in extra_names])


@dataclass
class CleaningReport:
    total_in: int = 0
    valid_out: int = 0
    rejected_per_rule: dict[int, int] = field(default_factory=lambda: {k: 0 for k in RULES})

    @property
    def validity_rate(self) -> float | None:
        if self.total_in == 0:
            return None
        return self.valid_out / self.total_in

    def __add__(self, other: "CleaningReport") -> "CleaningReport":
        return CleaningReport(
            self.total_in + other.total_in,
            self.valid_out + other.valid_out,
            {k: self.rejected_per_rule[k] + other.rejected_per_rule[k] for k in RULES},
        )

    def to_dict(self) -> dict[str, Any]:
        d = {
            "total_in": self.total_in,
            "valid_out": self.valid_out,
            "rejected_per_rule": {str(k): v for k, v in self.rejected_per_rule.items()},
            "rule_descriptions": {str(k): v for k, v in RULES.items()},
        }
        if self.validity_rate is not None:
            d["validity_rate"] = self.validity_rate
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


DEFAULT_OPS_HOURS = (time(5, 30), time(22, 30))
DEFAULT_MAX_TRIP = timedelta(hours=4)


def violated_rule(rec: AfcRecord, stations, ops_hours=DEFAULT_OPS_HOURS,
                  max_trip: timedelta = DEFAULT_MAX_TRIP) -> int | None:
    """First cleaning rule (1-5) the record breaks, or None."""
    if rec.out_time <= rec.in_time:
        return 1
    if (rec.in_line, rec.in_station) == (rec.out_line, rec.out_station) or rec.in_station == rec.out_station:
        return 2
    start, end = ops_hours
    for t in (rec.in_time, rec.out_time):
        if not start <= t.time() <= end:
            return 3
    if rec.in_station not in stations or rec.out_station not in stations:
        return 4
    if rec.duration > max_trip:
        return 5
    return None


def clean_records(records: Iterable[AfcRecord], network: MetroNetwork | Iterable[str],
                  ops_hours: tuple[time, time] = DEFAULT_OPS_HOURS,
                  max_trip: timedelta = DEFAULT_MAX_TRIP) -> tuple[list[AfcRecord], CleaningReport]:
    """Drop invalid trips, attributing each to the first rule it violates."""
    stations = network.stations if isinstance(network, MetroNetwork) else set(network)
    report = CleaningReport()
    kept = []
    for rec in records:
        report.total_in += 1
        rule = violated_rule(rec, stations, ops_hours, max_trip)
        if rule is None:
            kept.append(rec)
        else:
            report.rejected_per_rule[rule] += 1
    report.valid_out = len(kept)
    return kept, report


def split_by_line_consistency(records: Iterable[AfcRecord]) -> tuple[list[AfcRecord], list[AfcRecord]]:
    """(transfer candidates, single-line trips) by entry/exit line equality."""
    transfer, single = [], []
    for rec in records:
        (transfer if rec.is_transfer_candidate else single).append(rec)
    return transfer, single
