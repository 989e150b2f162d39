import datetime as dt
import math

import pytest

from conftest import dataset_of, flat_day
from loadshape.daytype import (
    DayTypeLabel,
    DayTypeScheme,
    label_dataset,
    label_day,
    partition,
    read_holidays,
    read_labels_csv,
    read_scheme,
    write_labels_csv,
)
from loadshape.errors import SchemeError, UnlabeledDayError
from loadshape.ingest import EnvironmentRecord

D = dt.date


def env_for(date, temp=None, wind=None):
    temps = tuple([temp] * 24) if temp is not None else tuple([None] * 24)
    winds = tuple([wind] * 24) if wind is not None else tuple([None] * 24)
    return EnvironmentRecord(date, temps, winds, tuple([None] * 24))


def test_saturday_in_january():
    scheme = DayTypeScheme(enabled_axes=("day_class", "season"))
    label = label_day(D(1990, 1, 6), None, scheme)  # a Saturday
    assert label == DayTypeLabel(day_class="weekend", season="winter")


def test_temperature_band_lookup():
    scheme = DayTypeScheme(enabled_axes=("temperature",))
    date = D(1990, 7, 1)
    label = label_day(date, env_for(date, temp=16.0), scheme)
    assert label.temperature_band == "hot"
    assert label.day_class is None and label.season is None


def test_temperature_band_boundary_strict():
    # a daily mean exactly on a bound belongs to the next band up
    scheme = DayTypeScheme(enabled_axes=("temperature",))
    date = D(1990, 7, 1)
    assert label_day(date, env_for(date, temp=10.0), scheme).temperature_band == "mild"
    assert label_day(date, env_for(date, temp=9.999), scheme).temperature_band == "cool"


def test_holiday_overrides_weekday():
    holiday = D(1990, 12, 26)  # a Wednesday
    scheme = DayTypeScheme(enabled_axes=("day_class",), holidays=frozenset({holiday}))
    assert label_day(holiday, None, scheme).day_class == "holiday"
    assert label_day(D(1990, 12, 19), None, scheme).day_class == "weekday"


def test_wind_band():
    scheme = DayTypeScheme(enabled_axes=("wind",))
    date = D(1990, 3, 1)
    assert label_day(date, env_for(date, wind=2.0), scheme).wind_band == "calm"
    assert label_day(date, env_for(date, wind=7.5), scheme).wind_band == "windy"


def test_band_uses_mean_of_present_hours():
    date = D(1990, 3, 1)
    temps = tuple([20.0] * 6 + [None] * 18)  # mean of present = 20
    env = EnvironmentRecord(date, temps, tuple([None] * 24), tuple([None] * 24))
    scheme = DayTypeScheme(enabled_axes=("temperature",))
    assert label_day(date, env, scheme).temperature_band == "hot"


def test_unlabeled_day_error():
    scheme = DayTypeScheme(enabled_axes=("temperature",))
    with pytest.raises(UnlabeledDayError):
        label_day(D(1990, 3, 1), None, scheme)
    with pytest.raises(UnlabeledDayError):
        label_day(D(1990, 3, 1), env_for(D(1990, 3, 1)), scheme)


def fortnight_dataset():
    # 1990-01-01 was a Monday: 14 consecutive days = 10 weekdays + 4 weekend days
    return dataset_of([flat_day("p1", D(1990, 1, 1) + dt.timedelta(days=i), 1.0) for i in range(14)])


def test_partition_fortnight_counts():
    cells = partition(fortnight_dataset(), DayTypeScheme(enabled_axes=("day_class",)))
    sizes = {label.day_class: len(days) for label, days in cells.items()}
    assert sizes == {"weekday": 10, "weekend": 4}


def test_partition_disjoint_cover():
    dataset = fortnight_dataset()
    cells = partition(dataset, DayTypeScheme())
    all_days = [key for days in cells.values() for key in days]
    assert len(all_days) == len(set(all_days)) == len(dataset.day_records)


def test_partition_refinement():
    """Adding an axis only splits cells, never merges them."""
    dataset = fortnight_dataset()
    coarse = partition(dataset, DayTypeScheme(enabled_axes=("day_class",)))
    fine = partition(dataset, DayTypeScheme(enabled_axes=("day_class", "season")))
    for fine_days in fine.values():
        parents = [c for c, coarse_days in coarse.items() if fine_days <= coarse_days]
        assert len(parents) == 1


def test_partition_planted_hot_days(rng):
    """Hot-day cell size matches the generator's plant."""
    records = []
    environment = {}
    n_hot = 0
    for i in range(60):
        date = D(1990, 1, 1) + dt.timedelta(days=i)
        hot = rng.random() < 0.3
        n_hot += hot
        environment[date] = env_for(date, temp=22.0 if hot else 5.0)
        records.append(flat_day("p1", date, 1.0))
    dataset = dataset_of(records, environment)
    cells = partition(dataset, DayTypeScheme(enabled_axes=("temperature",)))
    hot_cell = cells.get(DayTypeLabel(temperature_band="hot"), set())
    assert len(hot_cell) == n_hot


def test_label_determinism():
    scheme = DayTypeScheme()
    a = label_day(D(1990, 5, 13), None, scheme)
    b = label_day(D(1990, 5, 13), None, scheme)
    assert a == b


def test_scheme_validation():
    with pytest.raises(SchemeError):
        DayTypeScheme(enabled_axes=())
    with pytest.raises(SchemeError):
        DayTypeScheme(enabled_axes=("weather",))
    with pytest.raises(SchemeError):
        DayTypeScheme(temperature_bands=(("cool", 15.0), ("mild", 10.0), ("hot", math.inf)))
    with pytest.raises(SchemeError):
        DayTypeScheme(wind_bands=(("calm", 5.0), ("windy", 30.0)))


def test_read_scheme_and_holidays(tmp_path):
    holidays = tmp_path / "holidays.txt"
    holidays.write_text("# bank holidays\n1990-12-25\n1990-12-26\n")
    scheme_file = tmp_path / "scheme.conf"
    scheme_file.write_text(
        "axes=day_class,temperature\n"
        "temperature_bands=cold:5,normal:18,hot:inf\n"
        "holidays_file=holidays.txt\n"
    )
    scheme = read_scheme(scheme_file)
    assert scheme.enabled_axes == ("day_class", "temperature")
    assert scheme.temperature_bands == (("cold", 5.0), ("normal", 18.0), ("hot", math.inf))
    assert D(1990, 12, 25) in scheme.holidays
    assert read_holidays(holidays) == scheme.holidays


def test_read_scheme_rejects_bad_key(tmp_path):
    scheme_file = tmp_path / "scheme.conf"
    scheme_file.write_text("axis=day_class\n")
    with pytest.raises(SchemeError, match="axis"):
        read_scheme(scheme_file)


def test_labels_csv_roundtrip(tmp_path):
    labels = label_dataset(fortnight_dataset(), DayTypeScheme())
    path = write_labels_csv(labels, tmp_path / "labels.csv")
    assert read_labels_csv(path) == labels
