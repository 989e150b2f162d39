"""Synthetic meter datasets with planted ground truth for testing the pipeline.

Each property belongs to one archetype; its day at hour h is
amplitude * shape[h] + gaussian noise, clamped at zero. A fraction of days is
corrupted by masking a fraction of hours. The generated files use the ingest
module's canonical CSV format, and every generated quantity (archetype,
amplitude, true readings, masked cells, per-hour means) is recorded in a
ledger so recovery can be scored exactly.

Default archetypes: one evening-peaked household shape with a large
membership plus three overnight-heavy variants with small memberships,
giving a crisply planted 4-cluster population.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from loadshape.cluster import ClusteringResult
from loadshape.ingest import (
    HOURS_PER_DAY,
    Dataset,
    DayRecord,
    EnvironmentRecord,
)

# hourly kWh shapes at amplitude 1.0
DEFAULT_SHAPES = {
    "evening": (
        0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.5, 0.9, 0.9, 0.45, 0.45, 0.45,
        0.45, 0.45, 0.45, 0.45, 0.45, 1.0, 1.6, 1.6, 1.6, 1.6, 0.9, 0.45,
    ),
    "night_flat": (
        2.2, 2.2, 2.2, 2.2, 2.2, 2.2, 2.2, 1.2, 0.35, 0.35, 0.35, 0.35,
        0.35, 0.35, 0.35, 0.35, 0.35, 0.7, 0.7, 0.7, 0.7, 0.7, 0.5, 1.5,
    ),
    "night_morning": (
        1.7, 1.7, 1.7, 1.7, 1.7, 1.7, 1.7, 2.8, 2.8, 0.35, 0.35, 0.35,
        0.35, 0.35, 0.35, 0.35, 0.35, 0.8, 0.8, 0.8, 0.8, 0.5, 0.5, 0.5,
    ),
    "night_evening": (
        1.6, 1.6, 1.6, 1.6, 1.6, 1.6, 1.6, 1.0, 0.4, 0.4, 0.4, 0.4,
        0.4, 0.4, 0.4, 0.4, 0.4, 1.9, 1.9, 1.9, 1.9, 1.9, 0.8, 0.8,
    ),
}


@dataclass(frozen=True)
class Archetype:
    name: str
    shape: tuple[float, ...]
    amplitude_range: tuple[float, float]
    members: int

    def __post_init__(self):
        if self.members < 1:
            raise ValueError(f"archetype {self.name!r} needs >= 1 members")
        if len(self.shape) != HOURS_PER_DAY:
            raise ValueError(f"archetype {self.name!r} shape needs {HOURS_PER_DAY} values")
        if any(v < 0 for v in self.shape):
            raise ValueError(f"archetype {self.name!r} shape must be non-negative")
        lo, hi = self.amplitude_range
        if not 0 < lo <= hi:
            raise ValueError(f"archetype {self.name!r} amplitude range invalid: {self.amplitude_range}")


@dataclass(frozen=True)
class WeatherModel:
    """Sinusoidal annual temperature plus uniform wind and sparse rainfall."""

    temperature_mean: float = 9.5
    temperature_annual_amplitude: float = 6.5
    temperature_daily_amplitude: float = 3.0
    wind_max: float = 10.0


@dataclass(frozen=True)
class SynthSpec:
    archetypes: tuple[Archetype, ...]
    noise_sigma: float = 0.05
    mask_day_fraction: float = 0.1
    mask_hour_fraction: float = 0.25
    start_date: dt.date = dt.date(1990, 1, 1)
    days: int = 28
    weather: WeatherModel = field(default_factory=WeatherModel)
    seed: int = 0

    def __post_init__(self):
        if not self.archetypes:
            raise ValueError("spec needs at least one archetype")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        for name, frac in (("mask_day_fraction", self.mask_day_fraction),
                           ("mask_hour_fraction", self.mask_hour_fraction)):
            if not 0 <= frac < 1:
                raise ValueError(f"{name} must be in [0, 1), got {frac}")
        if self.days < 1:
            raise ValueError("days must be >= 1")

    @property
    def property_count(self) -> int:
        return sum(a.members for a in self.archetypes)


def default_spec(seed: int = 0, days: int = 28, noise_fraction: float = 0.05,
                 mask_day_fraction: float = 0.1, mask_hour_fraction: float = 0.25) -> SynthSpec:
    """The standard planted population: 93 properties over 4 archetypes
    (memberships 48/15/15/15), noise sigma = noise_fraction * mean amplitude."""
    archetypes = (
        Archetype("evening", DEFAULT_SHAPES["evening"], (0.7, 1.4), 48),
        Archetype("night_flat", DEFAULT_SHAPES["night_flat"], (0.8, 1.3), 15),
        Archetype("night_morning", DEFAULT_SHAPES["night_morning"], (0.8, 1.3), 15),
        Archetype("night_evening", DEFAULT_SHAPES["night_evening"], (0.8, 1.3), 15),
    )
    total = sum(a.members for a in archetypes)
    mean_amplitude = sum(a.members * (a.amplitude_range[0] + a.amplitude_range[1]) / 2 for a in archetypes) / total
    return SynthSpec(
        archetypes=archetypes,
        noise_sigma=noise_fraction * mean_amplitude,
        mask_day_fraction=mask_day_fraction,
        mask_hour_fraction=mask_hour_fraction,
        days=days,
        seed=seed,
    )


@dataclass
class PropertyTruth:
    archetype: str
    amplitude: float
    true_days: dict[dt.date, tuple[float, ...]]
    masked: dict[dt.date, tuple[int, ...]]
    hourly_means: tuple[float, ...]


@dataclass
class GroundTruthLedger:
    """Everything the generator decided, keyed by property id."""

    properties: dict[str, PropertyTruth]

    def archetype_of(self, property_id: str) -> str:
        return self.properties[property_id].archetype

    def to_json(self) -> dict:
        return {
            "properties": {
                pid: {
                    "archetype": t.archetype,
                    "amplitude": t.amplitude,
                    "hourly_means": list(t.hourly_means),
                    "true_days": {d.isoformat(): list(v) for d, v in t.true_days.items()},
                    "masked": {d.isoformat(): list(v) for d, v in t.masked.items()},
                }
                for pid, t in self.properties.items()
            }
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GroundTruthLedger":
        properties = {}
        for pid, t in doc["properties"].items():
            properties[pid] = PropertyTruth(
                archetype=t["archetype"],
                amplitude=t["amplitude"],
                true_days={dt.date.fromisoformat(d): tuple(v) for d, v in t["true_days"].items()},
                masked={dt.date.fromisoformat(d): tuple(v) for d, v in t["masked"].items()},
                hourly_means=tuple(t["hourly_means"]),
            )
        return cls(properties)


def _weather_records(spec: SynthSpec, rng: np.random.Generator):
    records = {}
    model = spec.weather
    for offset in range(spec.days):
        date = spec.start_date + dt.timedelta(days=offset)
        doy = date.timetuple().tm_yday
        annual = model.temperature_mean - model.temperature_annual_amplitude * math.cos(
            2.0 * math.pi * (doy - 15) / 365.0
        )
        temps = []
        winds = []
        rains = []
        for hour in range(HOURS_PER_DAY):
            swing = model.temperature_daily_amplitude * math.sin(2.0 * math.pi * (hour - 9) / 24.0)
            temps.append(annual + swing + float(rng.normal(0.0, 0.4)))
            winds.append(float(rng.uniform(0.0, model.wind_max)))
            rains.append(max(0.0, float(rng.uniform(-3.0, 1.5))))
        records[date] = EnvironmentRecord(date, tuple(temps), tuple(winds), tuple(rains))
    return records


def generate(spec: SynthSpec):
    """Generate (Dataset, GroundTruthLedger), deterministic in spec.seed.

    Properties are named p000, p001, ... in archetype order so that sorted
    file names reproduce the generation order.
    """
    rng = np.random.default_rng(spec.seed)
    environment = _weather_records(spec, rng)
    dates = [spec.start_date + dt.timedelta(days=o) for o in range(spec.days)]
    mask_hours = max(1, round(spec.mask_hour_fraction * HOURS_PER_DAY))
    records = []
    truths: dict[str, PropertyTruth] = {}
    pid_index = 0
    for archetype in spec.archetypes:
        shape = np.array(archetype.shape)
        for _ in range(archetype.members):
            pid = f"p{pid_index:03d}"
            pid_index += 1
            amplitude = float(rng.uniform(*archetype.amplitude_range))
            true_days = {}
            masked = {}
            for date in dates:
                noise = rng.normal(0.0, spec.noise_sigma, HOURS_PER_DAY) if spec.noise_sigma > 0 else np.zeros(HOURS_PER_DAY)
                values = np.maximum(amplitude * shape + noise, 0.0)
                true_days[date] = tuple(float(v) for v in values)
            corrupt = rng.random(spec.days) < spec.mask_day_fraction
            for date, is_corrupt in zip(dates, corrupt):
                if is_corrupt:
                    hours = rng.choice(HOURS_PER_DAY, size=mask_hours, replace=False)
                    masked[date] = tuple(int(h) for h in sorted(hours))
            for date in dates:
                slots = list(true_days[date])
                for h in masked.get(date, ()):
                    slots[h] = None
                records.append(DayRecord(pid, date, tuple(slots)))
            means = np.mean([true_days[d] for d in dates], axis=0)
            truths[pid] = PropertyTruth(
                archetype=archetype.name,
                amplitude=amplitude,
                true_days=true_days,
                masked=masked,
                hourly_means=tuple(float(m) for m in means),
            )
    dataset = Dataset.build(records, environment)
    return dataset, GroundTruthLedger(truths)


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(value)


def write_synth_csvs(dataset: Dataset, ledger: GroundTruthLedger, out_dir) -> list[Path]:
    """Emit one canonical dwelling CSV per property plus ledger.json."""
    out_dir = Path(out_dir)
    data_dir = out_dir / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    by_pid: dict[str, list[DayRecord]] = {}
    for rec in dataset.day_records:
        by_pid.setdefault(rec.property_id, []).append(rec)
    paths = []
    for pid in sorted(by_pid):
        path = data_dir / f"{pid}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", "hour", "kwh", "temperature", "wind_speed", "rainfall"])
            for rec in sorted(by_pid[pid], key=lambda r: r.date):
                env = dataset.environment.get(rec.date)
                for hour in range(HOURS_PER_DAY):
                    writer.writerow(
                        [
                            rec.date.isoformat(),
                            hour,
                            _fmt(rec.readings[hour]),
                            _fmt(env.hourly_temperature[hour] if env else None),
                            _fmt(env.hourly_wind[hour] if env else None),
                            _fmt(env.hourly_rainfall[hour] if env else None),
                        ]
                    )
        paths.append(path)
    ledger_path = out_dir / "ledger.json"
    with open(ledger_path, "w") as fh:
        json.dump(ledger.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(ledger_path)
    return paths


def read_ledger(path) -> GroundTruthLedger:
    with open(path) as fh:
        return GroundTruthLedger.from_json(json.load(fh))


@dataclass(frozen=True)
class RecoveryMetrics:
    purity: float
    rand_index: float


def score_recovery(result: ClusteringResult, profile_ids, ledger: GroundTruthLedger) -> RecoveryMetrics:
    """Score cluster assignments against the planted archetypes.

    Args:
        result: clustering of per-property profiles.
        profile_ids: property id of each profile, aligned with
            result.assignments.
        ledger: the generator's ground truth; every scored property must
            appear in it (and vice versa).

    Returns:
        purity (fraction of profiles whose cluster's majority archetype is
        their own) and the pairwise Rand index.
    """
    profile_ids = list(profile_ids)
    if len(profile_ids) != len(result.assignments):
        raise ValueError(f"{len(profile_ids)} ids for {len(result.assignments)} assignments")
    missing = [pid for pid in profile_ids if pid not in ledger.properties]
    if missing:
        raise ValueError(f"ids not in ledger: {missing[:3]}...")
    uncovered = set(ledger.properties) - set(profile_ids)
    if uncovered:
        raise ValueError(f"ledger properties not covered by assignments: {sorted(uncovered)[:3]}...")
    truth = [ledger.archetype_of(pid) for pid in profile_ids]
    archetype_names = sorted(set(truth))
    truth_idx = np.array([archetype_names.index(t) for t in truth])
    assign = np.array(result.assignments)
    k = result.k
    g = len(archetype_names)
    contingency = np.zeros((k, g), dtype=np.int64)
    for a, t in zip(assign, truth_idx):
        contingency[a, t] += 1
    n = len(truth)
    purity = float(contingency.max(axis=1).sum() / n)
    # Rand index from contingency pair counts
    comb = lambda x: x * (x - 1) // 2
    same_both = int(sum(comb(int(v)) for v in contingency.ravel()))
    same_cluster = int(sum(comb(int(v)) for v in contingency.sum(axis=1)))
    same_class = int(sum(comb(int(v)) for v in contingency.sum(axis=0)))
    total_pairs = comb(n)
    agreements = same_both + (total_pairs - same_cluster - same_class + same_both)
    rand = float(agreements / total_pairs) if total_pairs else 1.0
    return RecoveryMetrics(purity=purity, rand_index=rand)
