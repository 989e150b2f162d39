"""Parse per-dwelling hourly CSV files and reshape them into property-day records.

Each dwelling has its own file named ``<property_id>.csv`` with header
``date,hour,kwh,temperature,wind_speed,rainfall``. Site-wide environment
columns are split out and merged across properties into one record per date.
Unparsable numeric cells degrade to absent values (recorded in a parse
report) so that physically degraded datasets stay usable.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from loadshape.errors import (
    DatasetError,
    DuplicateTimestampError,
    MalformedHeaderError,
    MissingFileError,
    SchemeError,
)

logger = logging.getLogger(__name__)

HOURS_PER_DAY = 24
CANONICAL_COLUMNS = ("date", "hour", "kwh", "temperature", "wind_speed", "rainfall")
REQUIRED_COLUMNS = ("date", "hour", "kwh")

# columns that must be non-negative when present
_NON_NEGATIVE = {"kwh", "wind_speed", "rainfall"}

# merged environment values from different properties are considered identical
# when they agree within this tolerance
ENV_AGREEMENT_TOL = 1e-6


@dataclass(frozen=True, slots=True)
class RawHourRow:
    """One hourly meter reading with its co-recorded weather columns."""

    property_id: str
    date: dt.date
    hour: int
    kwh: float | None
    temperature: float | None = None
    wind_speed: float | None = None
    rainfall: float | None = None


@dataclass(frozen=True, slots=True)
class DayRecord:
    """All 24 hourly readings of one property on one date; absent slots are None."""

    property_id: str
    date: dt.date
    readings: tuple[float | None, ...]

    def __post_init__(self):
        if len(self.readings) != HOURS_PER_DAY:
            raise ValueError(f"DayRecord needs {HOURS_PER_DAY} slots, got {len(self.readings)}")

    @property
    def is_complete(self) -> bool:
        return all(v is not None for v in self.readings)

    @property
    def present_count(self) -> int:
        return sum(1 for v in self.readings if v is not None)


@dataclass(frozen=True, slots=True)
class EnvironmentRecord:
    """Site-wide hourly weather for one date (stored once, not per property)."""

    date: dt.date
    hourly_temperature: tuple[float | None, ...]
    hourly_wind: tuple[float | None, ...]
    hourly_rainfall: tuple[float | None, ...]


@dataclass(frozen=True)
class Dataset:
    """Immutable bundle of day records plus the per-date environment store."""

    day_records: tuple[DayRecord, ...]
    environment: dict[dt.date, EnvironmentRecord]
    property_ids: tuple[str, ...]

    @classmethod
    def build(cls, day_records, environment) -> "Dataset":
        records = tuple(day_records)
        seen = set()
        for rec in records:
            key = (rec.property_id, rec.date)
            if key in seen:
                raise DatasetError(f"duplicate day record for {key[0]} on {key[1]}")
            seen.add(key)
        pids = tuple(sorted({rec.property_id for rec in records}))
        return cls(records, dict(environment), pids)


@dataclass(frozen=True, slots=True)
class ParseIssue:
    """One cell that could not be parsed and was degraded to an absent value."""

    line: int
    column: str
    raw: str
    reason: str


@dataclass
class ParseReport:
    """Salvage log for one dwelling file."""

    path: str
    issues: list[ParseIssue] = field(default_factory=list)
    rows_parsed: int = 0
    rows_skipped: int = 0


@dataclass(frozen=True, slots=True)
class MergeConflict:
    date: dt.date
    hour: int
    column: str
    values: tuple[float, ...]
    merged: float


@dataclass
class MergeReport:
    """Environment values that disagreed across properties (resolved by mean)."""

    conflicts: list[MergeConflict] = field(default_factory=list)


@dataclass
class IngestReport:
    """Summary of a whole-directory load."""

    files: int = 0
    rows: int = 0
    day_records: int = 0
    parse_reports: list[ParseReport] = field(default_factory=list)
    merge_report: MergeReport = field(default_factory=MergeReport)


def read_schema_map(path) -> dict[str, str | int]:
    """Read a key=value file remapping canonical column names to header names or 0-based positions."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"schema map not found: {path}")
    mapping: dict[str, str | int] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SchemeError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CANONICAL_COLUMNS:
            raise SchemeError(f"{path}:{lineno}: unknown column {key!r}")
        mapping[key] = int(value) if value.lstrip("-").isdigit() else value
    for required in REQUIRED_COLUMNS:
        if required not in mapping:
            raise SchemeError(f"schema map {path} must map column {required!r}")
    return mapping


def _column_indices(header: list[str], schema_map, path) -> dict[str, int]:
    """Resolve canonical column -> position in this file's header."""
    if schema_map is None:
        if [h.strip() for h in header] != list(CANONICAL_COLUMNS):
            raise MalformedHeaderError(
                f"{path}:1: header {header!r} does not match {','.join(CANONICAL_COLUMNS)}"
            )
        return {name: i for i, name in enumerate(CANONICAL_COLUMNS)}
    indices: dict[str, int] = {}
    stripped = [h.strip() for h in header]
    for name, target in schema_map.items():
        if isinstance(target, int):
            if not 0 <= target < len(header):
                raise MalformedHeaderError(f"{path}:1: mapped position {target} for {name!r} out of range")
            indices[name] = target
        else:
            if target not in stripped:
                raise MalformedHeaderError(f"{path}:1: mapped column {target!r} for {name!r} not in header")
            indices[name] = stripped.index(target)
    return indices


def _parse_value(cell: str, column: str, line: int, report: ParseReport) -> float | None:
    """Parse one numeric cell; empty means intentionally absent, anything unparsable degrades."""
    cell = cell.strip()
    if cell == "":
        return None
    try:
        value = float(cell)
    except ValueError:
        report.issues.append(ParseIssue(line, column, cell, "not a number"))
        return None
    if not math.isfinite(value):
        report.issues.append(ParseIssue(line, column, cell, "not finite"))
        return None
    if column in _NON_NEGATIVE and value < 0:
        report.issues.append(ParseIssue(line, column, cell, "negative"))
        return None
    return value


def parse_dwelling_file(path, property_id: str | None = None, schema_map=None):
    """Parse one dwelling CSV into RawHourRows plus a salvage report.

    Args:
        path: CSV file with the canonical header (or one covered by schema_map).
        property_id: identity for the rows; defaults to the file name stem.
        schema_map: optional canonical-column remapping from read_schema_map.

    Returns:
        (rows, ParseReport). Unparsable numeric cells become absent values and
        are noted in the report; rows whose date/hour cannot be parsed are
        skipped (also noted) since they cannot be placed in any day.

    Raises:
        MissingFileError, MalformedHeaderError, DuplicateTimestampError.
    """
    path = Path(path)
    if property_id is None:
        property_id = path.stem
    if not path.is_file():
        raise MissingFileError(f"dwelling file not found: {path}")
    report = ParseReport(path=str(path))
    rows: list[RawHourRow] = []
    seen: dict[tuple[dt.date, int], int] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedHeaderError(f"{path}:1: file is empty")
        cols = _column_indices(header, schema_map, path)
        for line, cells in enumerate(reader, start=2):
            if not cells or all(c.strip() == "" for c in cells):
                continue

            def cell(name: str) -> str:
                idx = cols.get(name)
                return cells[idx] if idx is not None and idx < len(cells) else ""

            try:
                date = dt.date.fromisoformat(cell("date").strip())
            except ValueError:
                report.issues.append(ParseIssue(line, "date", cell("date"), "bad date; row skipped"))
                report.rows_skipped += 1
                continue
            try:
                hour = int(cell("hour").strip())
                if not 0 <= hour < HOURS_PER_DAY:
                    raise ValueError
            except ValueError:
                report.issues.append(ParseIssue(line, "hour", cell("hour"), "bad hour; row skipped"))
                report.rows_skipped += 1
                continue
            key = (date, hour)
            if key in seen:
                raise DuplicateTimestampError(
                    f"{path}:{line}: duplicate timestamp {date} hour {hour} (first seen line {seen[key]})"
                )
            seen[key] = line
            rows.append(
                RawHourRow(
                    property_id=property_id,
                    date=date,
                    hour=hour,
                    kwh=_parse_value(cell("kwh"), "kwh", line, report),
                    temperature=_parse_value(cell("temperature"), "temperature", line, report),
                    wind_speed=_parse_value(cell("wind_speed"), "wind_speed", line, report),
                    rainfall=_parse_value(cell("rainfall"), "rainfall", line, report),
                )
            )
            report.rows_parsed += 1
    return rows, report


def reshape(rows, property_id: str):
    """Group hourly rows into one DayRecord per date; split out environment samples.

    Returns (day_records sorted by date, environment fragments keyed
    (date, hour) -> {column: value}).
    """
    by_date: dict[dt.date, list[float | None]] = {}
    env: dict[tuple[dt.date, int], dict[str, float]] = {}
    filled: set[tuple[dt.date, int]] = set()
    for row in rows:
        if row.property_id != property_id:
            raise ValueError(f"row for {row.property_id!r} passed to reshape of {property_id!r}")
        key = (row.date, row.hour)
        if key in filled:
            raise DuplicateTimestampError(f"duplicate timestamp {row.date} hour {row.hour} for {property_id}")
        filled.add(key)
        slots = by_date.setdefault(row.date, [None] * HOURS_PER_DAY)
        slots[row.hour] = row.kwh
        samples = {}
        if row.temperature is not None:
            samples["temperature"] = row.temperature
        if row.wind_speed is not None:
            samples["wind_speed"] = row.wind_speed
        if row.rainfall is not None:
            samples["rainfall"] = row.rainfall
        if samples:
            env[key] = samples
    records = [
        DayRecord(property_id, date, tuple(slots)) for date, slots in sorted(by_date.items())
    ]
    return records, env


def merge_environment(partials):
    """Merge per-property environment fragments into one record per date.

    Values for the same (date, hour, column) reported by different properties
    and agreeing within ENV_AGREEMENT_TOL are deduplicated (lowest value kept,
    which is order-insensitive and exact for true duplicates). Disagreements
    are resolved by arithmetic mean and recorded as MergeConflicts, since
    site-wide weather should not vary by property.

    Args:
        partials: iterable of fragments as returned by reshape.

    Returns:
        (dict date -> EnvironmentRecord, MergeReport)
    """
    collected: dict[tuple[dt.date, int, str], list[float]] = {}
    for fragment in partials:
        for (date, hour), samples in fragment.items():
            for column, value in samples.items():
                collected.setdefault((date, hour, column), []).append(value)
    report = MergeReport()
    merged: dict[tuple[dt.date, int, str], float] = {}
    for key in sorted(collected, key=lambda k: (k[0], k[1], k[2])):
        values = collected[key]
        if max(values) - min(values) > ENV_AGREEMENT_TOL:
            mean = sum(values) / len(values)
            report.conflicts.append(MergeConflict(key[0], key[1], key[2], tuple(values), mean))
            merged[key] = mean
        else:
            merged[key] = min(values)
    records: dict[dt.date, EnvironmentRecord] = {}
    dates = sorted({date for date, _, _ in merged})
    for date in dates:
        series = {}
        for column in ("temperature", "wind_speed", "rainfall"):
            series[column] = tuple(merged.get((date, h, column)) for h in range(HOURS_PER_DAY))
        records[date] = EnvironmentRecord(
            date, series["temperature"], series["wind_speed"], series["rainfall"]
        )
    return records, report


def load_dataset(directory, schema_map=None):
    """Load every ``*.csv`` dwelling file in a directory into one Dataset.

    Property identity comes from the file name stem. Per-file failures are
    aggregated into one DatasetError naming each offending file.

    Returns:
        (Dataset, IngestReport)
    """
    directory = Path(directory)
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise DatasetError(f"no dwelling files (*.csv) found in {directory}")
    report = IngestReport()
    all_records: list[DayRecord] = []
    fragments = []
    failures: list[tuple[str, Exception]] = []
    for path in files:
        try:
            rows, parse_report = parse_dwelling_file(path, schema_map=schema_map)
            records, env = reshape(rows, path.stem)
        except (MissingFileError, MalformedHeaderError, DuplicateTimestampError) as exc:
            failures.append((str(path), exc))
            continue
        report.files += 1
        report.rows += len(rows)
        report.parse_reports.append(parse_report)
        all_records.extend(records)
        fragments.append(env)
    if failures:
        names = ", ".join(name for name, _ in failures)
        raise DatasetError(f"failed to load {len(failures)} file(s): {names}", file_errors=failures)
    environment, merge_report = merge_environment(fragments)
    report.merge_report = merge_report
    report.day_records = len(all_records)
    dataset = Dataset.build(all_records, environment)
    logger.info(
        "loaded %d files: %d rows, %d day records, %d properties, %d environment dates",
        report.files, report.rows, report.day_records, len(dataset.property_ids), len(environment),
    )
    return dataset, report


def flatten(day_records):
    """Inverse of reshape for the present slots: yields (property_id, date, hour, kwh)."""
    for rec in day_records:
        for hour, value in enumerate(rec.readings):
            if value is not None:
                yield rec.property_id, rec.date, hour, value


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(value)


def write_dataset(dataset: Dataset, out_dir, stem: str = "dataset", with_environment: bool = True) -> list[Path]:
    """Serialize a Dataset to ``<stem>.csv`` (+ ``environment.csv``) in out_dir.

    Absent slots are written as empty cells so that error days survive the
    round trip; floats are written with repr for exact reload.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / f"{stem}.csv"
    with open(data_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["property_id", "date", "hour", "kwh"])
        for rec in sorted(dataset.day_records, key=lambda r: (r.property_id, r.date)):
            for hour, value in enumerate(rec.readings):
                writer.writerow([rec.property_id, rec.date.isoformat(), hour, _fmt(value)])
    paths = [data_path]
    if with_environment:
        env_path = out_dir / "environment.csv"
        with open(env_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", "hour", "temperature", "wind_speed", "rainfall"])
            for date in sorted(dataset.environment):
                rec = dataset.environment[date]
                for hour in range(HOURS_PER_DAY):
                    writer.writerow(
                        [
                            date.isoformat(),
                            hour,
                            _fmt(rec.hourly_temperature[hour]),
                            _fmt(rec.hourly_wind[hour]),
                            _fmt(rec.hourly_rainfall[hour]),
                        ]
                    )
        paths.append(env_path)
    return paths


def read_dataset(run_dir, stem: str = "dataset") -> Dataset:
    """Reload a Dataset written by write_dataset."""
    run_dir = Path(run_dir)
    data_path = run_dir / f"{stem}.csv"
    if not data_path.is_file():
        raise MissingFileError(f"{data_path} not found")
    days: dict[tuple[str, dt.date], list[float | None]] = {}
    with open(data_path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = (row["property_id"], dt.date.fromisoformat(row["date"]))
            slots = days.setdefault(key, [None] * HOURS_PER_DAY)
            if row["kwh"] != "":
                slots[int(row["hour"])] = float(row["kwh"])
    records = [DayRecord(pid, date, tuple(slots)) for (pid, date), slots in sorted(days.items())]
    environment: dict[dt.date, EnvironmentRecord] = {}
    env_path = run_dir / "environment.csv"
    if env_path.is_file():
        series: dict[dt.date, dict[str, list[float | None]]] = {}
        with open(env_path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                date = dt.date.fromisoformat(row["date"])
                per_date = series.setdefault(
                    date,
                    {c: [None] * HOURS_PER_DAY for c in ("temperature", "wind_speed", "rainfall")},
                )
                hour = int(row["hour"])
                for column in ("temperature", "wind_speed", "rainfall"):
                    if row[column] != "":
                        per_date[column][hour] = float(row[column])
        for date, cols in series.items():
            environment[date] = EnvironmentRecord(
                date, tuple(cols["temperature"]), tuple(cols["wind_speed"]), tuple(cols["rainfall"])
            )
    return Dataset.build(records, environment)
