"""Validity splitting, reading-count statistics, and fraction-of-average imputation.

A day is valid iff all 24 hourly slots are present. Missing hours are repaired
by scaling the property's per-hour average profile: the day's present readings
are summed and divided by the sum of the averages at those same hours, and each
missing hour is filled with that fraction times the average for the hour. The
averages can optionally be conditioned on day-type labels, with fallback to the
unconditioned table when a conditioned cell has no data.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass
from pathlib import Path

from loadshape.daytype import DayTypeLabel
from loadshape.errors import (
    DegenerateDayError,
    MissingAverageError,
    NotImputableError,
)
from loadshape.ingest import HOURS_PER_DAY, Dataset, DayRecord

logger = logging.getLogger(__name__)

POLICIES = ("omit", "impute", "impute_by_daytype")


@dataclass(frozen=True, slots=True)
class PropertyValidity:
    valid_days: int
    error_days: int

    @property
    def total_days(self) -> int:
        return self.valid_days + self.error_days


@dataclass(frozen=True)
class ValidityReport:
    """Reading-count statistics per property and across the population."""

    per_property: dict[str, PropertyValidity]
    min_valid: int
    max_valid: int
    mean_valid: float
    min_total: int
    max_total: int
    mean_total: float
    total_valid_rows: int
    total_error_rows: int

    def format_table(self) -> str:
        """Render the min/max/mean counts as an aligned text table."""
        header = f"{'':16s}{'Minimum':>10s}{'Maximum':>10s}{'Mean':>10s}"
        valid = f"{'Valid readings':16s}{self.min_valid:>10d}{self.max_valid:>10d}{self.mean_valid:>10.1f}"
        total = f"{'All readings':16s}{self.min_total:>10d}{self.max_total:>10d}{self.mean_total:>10.1f}"
        footer = (
            f"rows: {self.total_valid_rows} valid, {self.total_error_rows} with errors, "
            f"{len(self.per_property)} properties"
        )
        return "\n".join([header, valid, total, footer])


def split_valid(dataset: Dataset):
    """Split day records into valid (all 24 slots present) and error days.

    Returns (valid_days, error_days, ValidityReport). Statistics are
    independent of input order.
    """
    if not dataset.day_records:
        raise ValueError("dataset has no day records")
    valid: list[DayRecord] = []
    errors: list[DayRecord] = []
    counts: dict[str, list[int]] = {}
    for rec in dataset.day_records:
        tally = counts.setdefault(rec.property_id, [0, 0])
        if rec.is_complete:
            valid.append(rec)
            tally[0] += 1
        else:
            errors.append(rec)
            tally[1] += 1
    per_property = {pid: PropertyValidity(v, e) for pid, (v, e) in sorted(counts.items())}
    valid_counts = [pv.valid_days for pv in per_property.values()]
    total_counts = [pv.total_days for pv in per_property.values()]
    report = ValidityReport(
        per_property=per_property,
        min_valid=min(valid_counts),
        max_valid=max(valid_counts),
        mean_valid=sum(valid_counts) / len(valid_counts),
        min_total=min(total_counts),
        max_total=max(total_counts),
        mean_total=sum(total_counts) / len(total_counts),
        total_valid_rows=len(valid),
        total_error_rows=len(errors),
    )
    return valid, errors, report


@dataclass(frozen=True)
class HourlyAverageTable:
    """Per-(property, optional day type) mean reading for each hour of the day.

    Keys are (property_id, DayTypeLabel | None); None holds the unconditioned
    averages. An entry slot is None when no reading backed it.
    """

    entries: dict[tuple[str, DayTypeLabel | None], tuple[float | None, ...]]

    def get(self, property_id: str, label: DayTypeLabel | None = None):
        return self.entries.get((property_id, label))


def build_average_table(days, labels=None) -> HourlyAverageTable:
    """Build per-hour averages over the complete (valid) days of each property.

    Args:
        days: a Dataset or iterable of DayRecord; incomplete days are ignored.
        labels: optional mapping (property_id, date) -> DayTypeLabel. When
            given, conditioned entries are built per label cell alongside the
            unconditioned ones so that consumers can fall back.
    """
    if isinstance(days, Dataset):
        days = days.day_records
    sums: dict[tuple[str, DayTypeLabel | None], list[float]] = {}
    counts: dict[tuple[str, DayTypeLabel | None], list[int]] = {}

    def accumulate(key, readings):
        s = sums.setdefault(key, [0.0] * HOURS_PER_DAY)
        c = counts.setdefault(key, [0] * HOURS_PER_DAY)
        for h, v in enumerate(readings):
            if v is not None:
                s[h] += v
                c[h] += 1

    for rec in days:
        if not rec.is_complete:
            continue
        accumulate((rec.property_id, None), rec.readings)
        if labels is not None:
            label = labels.get((rec.property_id, rec.date))
            if label is not None:
                accumulate((rec.property_id, label), rec.readings)
    entries = {}
    for key, s in sums.items():
        c = counts[key]
        entries[key] = tuple(s[h] / c[h] if c[h] else None for h in range(HOURS_PER_DAY))
    return HourlyAverageTable(entries)


@dataclass(frozen=True)
class ImputationOutcome:
    """A repaired day plus how it was repaired."""

    day: DayRecord
    fraction: float
    filled_hours: tuple[int, ...]
    method: str  # "unconditioned" | "day_type_conditioned"


def impute_day(day: DayRecord, table: HourlyAverageTable, label: DayTypeLabel | None = None) -> ImputationOutcome:
    """Fill a day's absent hours by scaling the property's average profile.

    fraction = (sum of present readings) / (sum of averages at the same
    present hours); each absent hour h becomes fraction * average[h].
    Present readings are never altered.

    Raises:
        NotImputableError: the day has no present readings.
        MissingAverageError: no table entry for (property, label); the caller
            may retry with label=None to fall back to the unconditioned table.
        DegenerateDayError: the averages (or the readings) sum to zero over
            the present hours, so no positive fraction exists.
    """
    averages = table.get(day.property_id, label)
    if averages is None:
        which = f"label {label.key!r}" if label is not None else "unconditioned"
        raise MissingAverageError(f"no {which} average entry for property {day.property_id!r}")
    present_sum = 0.0
    average_sum = 0.0
    present_count = 0
    missing_avg_hours = []
    for h, v in enumerate(day.readings):
        if v is not None:
            present_count += 1
            present_sum += v
            avg = averages[h]
            if avg is None:
                missing_avg_hours.append(h)
            else:
                average_sum += avg
    if present_count == 0:
        raise NotImputableError(f"{day.property_id} {day.date}: no present readings")
    if missing_avg_hours:
        raise MissingAverageError(
            f"{day.property_id} {day.date}: average absent at present hours {missing_avg_hours}"
        )
    if average_sum == 0.0:
        raise DegenerateDayError(f"{day.property_id} {day.date}: averages sum to zero over present hours")
    if present_sum == 0.0:
        raise DegenerateDayError(f"{day.property_id} {day.date}: present readings sum to zero")
    fraction = present_sum / average_sum
    filled = []
    readings = list(day.readings)
    for h in range(HOURS_PER_DAY):
        if readings[h] is None:
            avg = averages[h]
            if avg is None:
                raise MissingAverageError(f"{day.property_id} {day.date}: no average for absent hour {h}")
            readings[h] = fraction * avg
            filled.append(h)
    method = "day_type_conditioned" if label is not None else "unconditioned"
    return ImputationOutcome(
        day=DayRecord(day.property_id, day.date, tuple(readings)),
        fraction=fraction,
        filled_hours=tuple(filled),
        method=method,
    )


@dataclass(frozen=True, slots=True)
class ImputationLogEntry:
    property_id: str
    date: dt.date
    method: str  # "unconditioned" | "day_type_conditioned" | "dropped"
    fraction: float | None
    filled_hours: tuple[int, ...]


def clean(dataset: Dataset, policy: str, labels=None):
    """Apply a missing-data policy to the dataset.

    Policies: "omit" keeps only fully valid days; "impute" repairs partial
    days from the unconditioned average table; "impute_by_daytype" uses
    label-conditioned averages, falling back to the unconditioned table
    (visible in the log as method="unconditioned") when a cell is missing.
    Days that cannot be repaired are dropped and logged, never fatal.

    Returns:
        (cleaned Dataset, ValidityReport, list[ImputationLogEntry])
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    valid, error_days, report = split_valid(dataset)
    log: list[ImputationLogEntry] = []
    if policy == "omit":
        cleaned = valid
    else:
        if policy == "impute_by_daytype":
            if labels is None:
                raise ValueError("impute_by_daytype requires labels")
            missing = [(r.property_id, r.date) for r in error_days if (r.property_id, r.date) not in labels]
            if missing:
                raise ValueError(f"labels missing for {len(missing)} day(s), e.g. {missing[0]}")
        table = build_average_table(valid, labels if policy == "impute_by_daytype" else None)
        cleaned = list(valid)
        for rec in sorted(error_days, key=lambda r: (r.property_id, r.date)):
            label = labels.get((rec.property_id, rec.date)) if policy == "impute_by_daytype" else None
            outcome = None
            try:
                if label is not None:
                    try:
                        outcome = impute_day(rec, table, label)
                    except MissingAverageError:
                        logger.info(
                            "falling back to unconditioned averages for %s %s (no %r cell)",
                            rec.property_id, rec.date, label.key,
                        )
                        outcome = impute_day(rec, table, None)
                else:
                    outcome = impute_day(rec, table, None)
            except (NotImputableError, MissingAverageError, DegenerateDayError) as exc:
                logger.info("dropping %s %s: %s", rec.property_id, rec.date, exc)
                log.append(ImputationLogEntry(rec.property_id, rec.date, "dropped", None, ()))
                continue
            cleaned.append(outcome.day)
            log.append(
                ImputationLogEntry(
                    rec.property_id, rec.date, outcome.method, outcome.fraction, outcome.filled_hours
                )
            )
    cleaned_set = Dataset.build(
        sorted(cleaned, key=lambda r: (r.property_id, r.date)), dataset.environment
    )
    return cleaned_set, report, log


def write_imputation_log(entries, path) -> Path:
    """Write the imputation log CSV: property_id,date,method,fraction,filled_hours."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["property_id", "date", "method", "fraction", "filled_hours"])
        for e in entries:
            writer.writerow(
                [
                    e.property_id,
                    e.date.isoformat(),
                    e.method,
                    "" if e.fraction is None else repr(e.fraction),
                    ";".join(str(h) for h in e.filled_hours),
                ]
            )
    return path
