"""Representative daily profiles: averaging, normalization, and similarity.

A profile is a 24-vector of non-negative values, either raw kWh ("kwh" units)
or sum-normalized ("shape" units, summing to 1). Shape-mode distance compares
usage *timing* and is invariant to total consumption; amplitude mode compares
raw kWh so heavy and light users separate.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from loadshape.ingest import HOURS_PER_DAY, Dataset

logger = logging.getLogger(__name__)

UNITS = ("kwh", "shape")
SIMILARITY_MODES = ("amplitude", "shape")

SHAPE_SUM_TOL = 1e-9


@dataclass(frozen=True)
class DayProfile:
    """A 24-vector load profile with its units and provenance.

    property_id plus day_set describe the source day set, e.g.
    ("p001", "all") or ("p001", "weekend|winter").
    """

    values: tuple[float, ...]
    units: str
    property_id: str
    day_set: str = "all"

    def __post_init__(self):
        if len(self.values) != HOURS_PER_DAY:
            raise ValueError(f"profile needs {HOURS_PER_DAY} values, got {len(self.values)}")
        if self.units not in UNITS:
            raise ValueError(f"unknown units {self.units!r}")
        if any(not math.isfinite(v) or v < 0 for v in self.values):
            raise ValueError("profile values must be finite and non-negative")
        if self.units == "shape" and abs(sum(self.values) - 1.0) > SHAPE_SUM_TOL:
            raise ValueError(f"shape profile must sum to 1, got {sum(self.values)!r}")


def average_profile(days, day_set: str = "all") -> DayProfile:
    """Per-hour arithmetic mean over a nonempty set of complete days (kwh units)."""
    days = list(days)
    if not days:
        raise ValueError("cannot average an empty day set")
    property_id = days[0].property_id
    sums = [0.0] * HOURS_PER_DAY
    for rec in days:
        if not rec.is_complete:
            raise ValueError(f"day {rec.property_id} {rec.date} has absent slots; clean first")
        for h, v in enumerate(rec.readings):
            sums[h] += v
    n = len(days)
    return DayProfile(tuple(s / n for s in sums), "kwh", property_id, day_set)


def normalize(profile: DayProfile) -> DayProfile:
    """Divide by the daily total so the profile sums to 1 (shape units)."""
    total = sum(profile.values)
    if total <= 0.0:
        raise ValueError(f"cannot normalize all-zero profile {profile.property_id}/{profile.day_set}")
    return DayProfile(
        tuple(v / total for v in profile.values), "shape", profile.property_id, profile.day_set
    )


def distance(a: DayProfile, b: DayProfile, mode: str = "amplitude") -> float:
    """Euclidean distance between two profiles.

    amplitude mode compares raw kWh vectors and requires both profiles in kwh
    units; shape mode sum-normalizes internally, so distance(p, alpha*p) == 0.
    """
    if mode not in SIMILARITY_MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {SIMILARITY_MODES}")
    if mode == "amplitude":
        if a.units != "kwh" or b.units != "kwh":
            raise ValueError(f"amplitude mode requires kwh units, got {a.units!r} vs {b.units!r}")
        va, vb = a.values, b.values
    else:
        va = a.values if a.units == "shape" else normalize(a).values
        vb = b.values if b.units == "shape" else normalize(b).values
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(va, vb)))


def profile_matrix(dataset: Dataset, labels=None, mode: str = "amplitude") -> list[DayProfile]:
    """One representative profile per grouping cell, deterministically ordered.

    Grouping is per property, or per (property, label) when a labels mapping
    (property_id, date) -> DayTypeLabel is given. mode "amplitude" keeps raw
    kWh averages; "shape" sum-normalizes each profile. Cells that end up with
    no complete days are dropped with a log entry.

    Ordering is by (property_id, day_set descriptor).
    """
    if mode not in SIMILARITY_MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {SIMILARITY_MODES}")
    cells: dict[tuple[str, str], list] = {}
    skipped = 0
    for rec in dataset.day_records:
        if not rec.is_complete:
            skipped += 1
            continue
        if labels is None:
            key = (rec.property_id, "all")
        else:
            label = labels.get((rec.property_id, rec.date))
            if label is None:
                skipped += 1
                continue
            key = (rec.property_id, label.key)
        cells.setdefault(key, []).append(rec)
    if skipped:
        logger.info("profile_matrix: %d day(s) skipped (incomplete or unlabeled)", skipped)
    empty = [pid for pid in dataset.property_ids if not any(k[0] == pid for k in cells)]
    for pid in empty:
        logger.info("profile_matrix: property %s contributed no cell, dropped", pid)
    profiles = []
    for (pid, day_set), days in sorted(cells.items()):
        prof = average_profile(days, day_set)
        profiles.append(normalize(prof) if mode == "shape" else prof)
    return profiles


def to_matrix(profiles) -> np.ndarray:
    """Stack profiles into an (n, 24) float64 array for clustering."""
    return np.array([p.values for p in profiles], dtype=np.float64)


def write_profiles_csv(profiles, path) -> Path:
    """Write profiles as CSV with header id,label,h00..h23,units."""
    path = Path(path)
    hour_cols = [f"h{h:02d}" for h in range(HOURS_PER_DAY)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", *hour_cols, "units"])
        for p in profiles:
            writer.writerow([p.property_id, p.day_set, *(repr(v) for v in p.values), p.units])
    return path


def read_profiles_csv(path) -> list[DayProfile]:
    """Reload profiles written by write_profiles_csv."""
    path = Path(path)
    profiles = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            values = tuple(float(row[f"h{h:02d}"]) for h in range(HOURS_PER_DAY))
            profiles.append(DayProfile(values, row["units"], row["id"], row["label"]))
    return profiles
