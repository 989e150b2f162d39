"""Assign composite day-type labels (day class, season, temperature/wind band).

Labeling is a pure function of (date, environment, scheme). Holidays override
the weekday/weekend rule; seasons default to meteorological quarters; weather
bands compare the daily mean of present hourly values against ordered upper
bounds, the last band being unbounded.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path

from loadshape.errors import MissingFileError, SchemeError, UnlabeledDayError
from loadshape.ingest import Dataset, EnvironmentRecord

AXES = ("day_class", "season", "temperature", "wind")
DAY_CLASSES = ("weekday", "weekend", "holiday")
SEASONS = ("winter", "spring", "summer", "autumn")

DEFAULT_SEASON_BY_MONTH = {
    12: "winter", 1: "winter", 2: "winter",
    3: "spring", 4: "spring", 5: "spring",
    6: "summer", 7: "summer", 8: "summer",
    9: "autumn", 10: "autumn", 11: "autumn",
}

DEFAULT_TEMPERATURE_BANDS = (("cool", 10.0), ("mild", 15.0), ("hot", math.inf))
DEFAULT_WIND_BANDS = (("calm", 5.0), ("windy", math.inf))


@dataclass(frozen=True)
class DayTypeScheme:
    """Config describing which label axes are active and their thresholds.

    Band lists are (name, upper_bound) pairs with strictly increasing bounds;
    the last bound must be infinite so every daily mean falls in some band.
    """

    enabled_axes: tuple[str, ...] = ("day_class", "season")
    holidays: frozenset[dt.date] = frozenset()
    season_by_month: dict[int, str] = field(default_factory=lambda: dict(DEFAULT_SEASON_BY_MONTH))
    temperature_bands: tuple[tuple[str, float], ...] = DEFAULT_TEMPERATURE_BANDS
    wind_bands: tuple[tuple[str, float], ...] = DEFAULT_WIND_BANDS

    def __post_init__(self):
        if not self.enabled_axes:
            raise SchemeError("scheme must enable at least one axis")
        for axis in self.enabled_axes:
            if axis not in AXES:
                raise SchemeError(f"unknown axis {axis!r}; valid axes: {', '.join(AXES)}")
        for name, bands in (("temperature", self.temperature_bands), ("wind", self.wind_bands)):
            if not bands:
                raise SchemeError(f"{name} bands must not be empty")
            bounds = [b for _, b in bands]
            if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
                raise SchemeError(f"{name} band bounds must be strictly increasing: {bounds}")
            if not math.isinf(bounds[-1]):
                raise SchemeError(f"last {name} band must be unbounded (bound inf)")


@dataclass(frozen=True, slots=True)
class DayTypeLabel:
    """Composite label; an axis is None iff disabled in the scheme."""

    day_class: str | None = None
    season: str | None = None
    temperature_band: str | None = None
    wind_band: str | None = None

    @property
    def key(self) -> str:
        """Compact descriptor like 'weekend|winter' (enabled axes only, fixed order)."""
        parts = [v for v in (self.day_class, self.season, self.temperature_band, self.wind_band) if v]
        return "|".join(parts)


def daily_mean(slots) -> float | None:
    present = [v for v in slots if v is not None]
    if not present:
        return None
    return sum(present) / len(present)


def _band_for(mean: float, bands) -> str:
    for name, bound in bands:
        if mean < bound:
            return name
    return bands[-1][0]


def label_day(date: dt.date, environment: EnvironmentRecord | None, scheme: DayTypeScheme) -> DayTypeLabel:
    """Label one date under the scheme.

    Raises UnlabeledDayError when a weather axis is enabled but the date has
    no environment data for that series.
    """
    day_class = season = temperature_band = wind_band = None
    if "day_class" in scheme.enabled_axes:
        if date in scheme.holidays:
            day_class = "holiday"
        elif date.isoweekday() >= 6:  # ISO: Sat=6, Sun=7
            day_class = "weekend"
        else:
            day_class = "weekday"
    if "season" in scheme.enabled_axes:
        season = scheme.season_by_month.get(date.month)
        if season is None:
            raise SchemeError(f"season rule has no entry for month {date.month}")
    if "temperature" in scheme.enabled_axes:
        mean = daily_mean(environment.hourly_temperature) if environment else None
        if mean is None:
            raise UnlabeledDayError(f"no temperature data for {date}")
        temperature_band = _band_for(mean, scheme.temperature_bands)
    if "wind" in scheme.enabled_axes:
        mean = daily_mean(environment.hourly_wind) if environment else None
        if mean is None:
            raise UnlabeledDayError(f"no wind data for {date}")
        wind_band = _band_for(mean, scheme.wind_bands)
    return DayTypeLabel(day_class, season, temperature_band, wind_band)


def label_dataset(dataset: Dataset, scheme: DayTypeScheme, drop_unlabeled: bool = False):
    """Label every (property, date) in the dataset.

    Returns a dict (property_id, date) -> DayTypeLabel. Days that cannot be
    labeled raise UnlabeledDayError unless drop_unlabeled is set, in which
    case they are silently omitted from the mapping.
    """
    labels: dict[tuple[str, dt.date], DayTypeLabel] = {}
    cache: dict[dt.date, DayTypeLabel] = {}
    for rec in dataset.day_records:
        if rec.date not in cache:
            try:
                cache[rec.date] = label_day(rec.date, dataset.environment.get(rec.date), scheme)
            except UnlabeledDayError:
                if not drop_unlabeled:
                    raise
                cache[rec.date] = None  # type: ignore[assignment]
        label = cache[rec.date]
        if label is not None:
            labels[(rec.property_id, rec.date)] = label
    return labels


def partition(dataset: Dataset, scheme: DayTypeScheme, drop_unlabeled: bool = False):
    """Partition the dataset's (property, date) pairs by day-type label.

    Cells are disjoint and cover every labeled day.
    """
    labels = label_dataset(dataset, scheme, drop_unlabeled=drop_unlabeled)
    cells: dict[DayTypeLabel, set[tuple[str, dt.date]]] = {}
    for key, label in labels.items():
        cells.setdefault(label, set()).add(key)
    return cells


def write_labels_csv(labels, path) -> Path:
    """Write per-day labels as CSV; disabled axes stay empty."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["property_id", "date", "day_class", "season", "temperature_band", "wind_band"])
        for (pid, date), label in sorted(labels.items()):
            writer.writerow(
                [
                    pid,
                    date.isoformat(),
                    label.day_class or "",
                    label.season or "",
                    label.temperature_band or "",
                    label.wind_band or "",
                ]
            )
    return path


def read_labels_csv(path):
    """Reload labels written by write_labels_csv."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"labels file not found: {path}")
    labels = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            labels[(row["property_id"], dt.date.fromisoformat(row["date"]))] = DayTypeLabel(
                day_class=row["day_class"] or None,
                season=row["season"] or None,
                temperature_band=row["temperature_band"] or None,
                wind_band=row["wind_band"] or None,
            )
    return labels


def read_holidays(path) -> frozenset[dt.date]:
    """Read a holiday file: one ISO date per line, # comments allowed."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"holiday file not found: {path}")
    holidays = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            holidays.add(dt.date.fromisoformat(line))
        except ValueError:
            raise SchemeError(f"{path}:{lineno}: not an ISO date: {line!r}")
    return frozenset(holidays)


def _parse_bands(text: str, path, lineno: int):
    bands = []
    for part in text.split(","):
        part = part.strip()
        if ":" not in part:
            raise SchemeError(f"{path}:{lineno}: band {part!r} must be name:bound")
        name, bound = part.split(":", 1)
        try:
            value = math.inf if bound.strip().lower() == "inf" else float(bound)
        except ValueError:
            raise SchemeError(f"{path}:{lineno}: bad band bound {bound!r}")
        bands.append((name.strip(), value))
    return tuple(bands)


def read_scheme(path) -> DayTypeScheme:
    """Read a day-type scheme from a key=value config file.

    Recognized keys: axes (comma list), temperature_bands / wind_bands
    (comma-joined name:bound), seasons (comma-joined month:season),
    holidays_file (path, relative to the scheme file).
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"scheme file not found: {path}")
    kwargs: dict = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SchemeError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "axes":
            kwargs["enabled_axes"] = tuple(a.strip() for a in value.split(",") if a.strip())
        elif key == "temperature_bands":
            kwargs["temperature_bands"] = _parse_bands(value, path, lineno)
        elif key == "wind_bands":
            kwargs["wind_bands"] = _parse_bands(value, path, lineno)
        elif key == "seasons":
            season_map = {}
            for part in value.split(","):
                month, _, season = part.strip().partition(":")
                if season not in SEASONS:
                    raise SchemeError(f"{path}:{lineno}: unknown season {season!r}")
                season_map[int(month)] = season
            kwargs["season_by_month"] = season_map
        elif key == "holidays_file":
            kwargs["holidays"] = read_holidays(path.parent / value)
        else:
            raise SchemeError(f"{path}:{lineno}: unknown key {key!r}")
    return DayTypeScheme(**kwargs)
