import datetime as dt

import numpy as np
import pytest

from conftest import day, dataset_of, flat_day
from loadshape.cleaning import (
    HourlyAverageTable,
    build_average_table,
    clean,
    impute_day,
    split_valid,
    write_imputation_log,
)
from loadshape.daytype import DayTypeLabel
from loadshape.errors import DegenerateDayError, MissingAverageError, NotImputableError

D = dt.date


def dates(n, start=D(1990, 1, 1)):
    return [start + dt.timedelta(days=i) for i in range(n)]


def planted_gap_dataset(rng, n_props=10):
    """Random dataset with planted per-day gaps; returns (dataset, expected counts)."""
    records = []
    truth = {}
    for p in range(n_props):
        pid = f"p{p:02d}"
        n_days = int(rng.integers(3, 12))
        n_bad = int(rng.integers(0, n_days + 1))
        bad = set(rng.choice(n_days, size=n_bad, replace=False).tolist())
        for i, date in enumerate(dates(n_days)):
            values = [float(v) for v in rng.uniform(0.1, 3.0, 24)]
            if i in bad:
                for h in rng.choice(24, size=int(rng.integers(1, 25)), replace=False):
                    values[h] = None
            records.append(day(pid, date, values))
        truth[pid] = (n_days - n_bad, n_bad)
    return dataset_of(records), truth


def test_split_valid_planted_counts(rng):
    dataset, truth = planted_gap_dataset(rng)
    valid, errors, report = split_valid(dataset)
    for pid, (n_valid, n_bad) in truth.items():
        assert report.per_property[pid].valid_days == n_valid
        assert report.per_property[pid].error_days == n_bad
    assert report.total_valid_rows == sum(v for v, _ in truth.values())
    assert report.total_error_rows == sum(e for _, e in truth.values())


def test_split_valid_all_complete():
    dataset = dataset_of([flat_day("p1", d, 1.0) for d in dates(4)])
    valid, errors, report = split_valid(dataset)
    assert errors == []
    assert report.min_valid == report.max_valid == 4


def test_split_valid_permutation_invariant(rng):
    dataset, _ = planted_gap_dataset(rng)
    shuffled = list(dataset.day_records)
    rng.shuffle(shuffled)
    report_a = split_valid(dataset)[2]
    report_b = split_valid(dataset_of(shuffled))[2]
    assert report_a == report_b


def test_validity_report_table_layout():
    # counts chosen so the population mean lands exactly on one decimal
    counts = [199, 284] + [700] * 8
    records = []
    for p, n_valid in enumerate(counts):
        pid = f"p{p:02d}"
        for i, date in enumerate(dates(n_valid + 2)):
            values = [1.0] * 24 if i < n_valid else [1.0] * 23 + [None]
            records.append(day(pid, date, values))
    _, _, report = split_valid(dataset_of(records))
    assert report.min_valid == 199 and report.max_valid == 700
    assert f"{report.mean_valid:.1f}" == "608.3"
    table = report.format_table()
    assert "Valid readings" in table and "608.3" in table
    assert "All readings" in table and "610.3" in table


def test_build_average_table_two_days():
    dataset = [flat_day("p1", D(1990, 1, 1), 1.0), flat_day("p1", D(1990, 1, 2), 3.0)]
    table = build_average_table(dataset)
    assert table.get("p1") == tuple([2.0] * 24)


def test_build_average_table_ignores_incomplete():
    incomplete = day("p1", D(1990, 1, 3), [5.0] * 23 + [None])
    table = build_average_table([flat_day("p1", D(1990, 1, 1), 1.0), incomplete])
    assert table.get("p1") == tuple([1.0] * 24)


def test_build_average_table_partition_identity(rng):
    """Conditioned cells are a partition: member-weighted mean equals the unconditioned mean."""
    weekend = DayTypeLabel(day_class="weekend")
    weekday = DayTypeLabel(day_class="weekday")
    records, labels = [], {}
    for i, date in enumerate(dates(10)):
        values = [float(v) for v in rng.uniform(0.1, 2.0, 24)]
        records.append(day("p1", date, values))
        labels[("p1", date)] = weekend if date.isoweekday() >= 6 else weekday
    table = build_average_table(records, labels)
    n_weekend = sum(1 for v in labels.values() if v is weekend)
    n_weekday = 10 - n_weekend
    for h in range(24):
        mixed = (n_weekend * table.get("p1", weekend)[h] + n_weekday * table.get("p1", weekday)[h]) / 10
        assert mixed == pytest.approx(table.get("p1")[h], abs=1e-12)


def test_build_average_table_known_means(rng):
    """Per-hour means match an independently accumulated oracle to 1e-12."""
    values_by_day = [list(rng.uniform(0.0, 4.0, 24)) for _ in range(7)]
    records = [day("p1", date, vals) for date, vals in zip(dates(7), values_by_day)]
    table = build_average_table(records)
    arr = np.array(values_by_day)
    expected = arr.sum(axis=0) / len(values_by_day)
    np.testing.assert_allclose(table.get("p1"), expected, atol=1e-12, rtol=0)


def avg_table(pid, averages):
    return HourlyAverageTable({(pid, None): tuple(averages)})


def test_impute_day_toy_fraction():
    # observed hour 0 reads half its average; absent hour 1 gets half of its average
    averages = [2.0, 4.0] + [0.0] * 22
    observed = [1.0, None] + [0.0] * 22
    outcome = impute_day(day("p1", D(1990, 1, 1), observed), avg_table("p1", averages))
    assert outcome.fraction == 0.5
    assert outcome.day.readings[1] == 2.0
    assert outcome.filled_hours == (1,)
    assert outcome.method == "unconditioned"


def test_impute_day_identity_case():
    averages = [0.5 + 0.1 * h for h in range(24)]
    observed = list(averages)
    observed[13] = None
    outcome = impute_day(day("p1", D(1990, 1, 1), observed), avg_table("p1", averages))
    assert outcome.fraction == pytest.approx(1.0, abs=1e-15)
    assert outcome.day.readings[13] == pytest.approx(averages[13], abs=1e-15)


def test_impute_day_scalar_multiple_exact(rng):
    """Algebraic oracle: day = c * average reconstructs exactly (fraction collapses to c)."""
    averages = [float(v) for v in rng.uniform(0.2, 2.0, 24)]
    table = avg_table("p1", averages)
    for c in (0.1, 1.0, 7.3):
        full = [c * a for a in averages]
        for size in (1, 5, 23):
            for trial in range(10):
                mask = rng.choice(24, size=size, replace=False)
                observed = list(full)
                for h in mask:
                    observed[h] = None
                outcome = impute_day(day("p1", D(1990, 1, 1), observed), table)
                for h in mask:
                    assert abs(outcome.day.readings[h] - full[h]) <= 1e-12


def test_impute_day_never_touches_present(rng):
    averages = [float(v) for v in rng.uniform(0.2, 2.0, 24)]
    observed = [float(v) for v in rng.uniform(0.0, 5.0, 24)]
    observed[3] = observed[17] = None
    record = day("p1", D(1990, 1, 1), observed)
    outcome = impute_day(record, avg_table("p1", averages))
    for h in range(24):
        if h not in (3, 17):
            assert outcome.day.readings[h] == record.readings[h]  # bit-identical


def test_impute_day_scaling_equivariance(rng):
    """impute(alpha*d, table from alpha*D) == alpha * impute(d, table from D)."""
    for _ in range(20):
        alpha = float(rng.uniform(0.01, 50))
        base_days = [list(rng.uniform(0.1, 2.0, 24)) for _ in range(4)]
        records = [day("p1", date, vals) for date, vals in zip(dates(4), base_days)]
        scaled = [day("p1", date, [alpha * v for v in vals]) for date, vals in zip(dates(4), base_days)]
        broken = list(rng.uniform(0.1, 2.0, 24))
        mask = rng.choice(24, size=int(rng.integers(1, 24)), replace=False)
        for h in mask:
            broken[h] = None
        out_base = impute_day(day("p1", D(1991, 1, 1), broken), build_average_table(records))
        scaled_broken = [None if v is None else alpha * v for v in broken]
        out_scaled = impute_day(day("p1", D(1991, 1, 1), scaled_broken), build_average_table(scaled))
        for h in range(24):
            assert out_scaled.day.readings[h] == pytest.approx(
                alpha * out_base.day.readings[h], rel=1e-12
            )


def test_impute_day_all_absent():
    with pytest.raises(NotImputableError):
        impute_day(day("p1", D(1990, 1, 1), [None] * 24), avg_table("p1", [1.0] * 24))


def test_impute_day_zero_average_sum():
    averages = [0.0, 0.0] + [1.0] * 22
    observed = [1.0, 2.0] + [None] * 22
    with pytest.raises(DegenerateDayError):
        impute_day(day("p1", D(1990, 1, 1), observed), avg_table("p1", averages))


def test_impute_day_missing_entry():
    with pytest.raises(MissingAverageError):
        impute_day(day("p9", D(1990, 1, 1), [1.0] * 23 + [None]), avg_table("p1", [1.0] * 24))


def test_impute_day_conditioned_method():
    label = DayTypeLabel(day_class="weekend")
    table = HourlyAverageTable({("p1", label): tuple([1.0] * 24)})
    outcome = impute_day(day("p1", D(1990, 1, 6), [1.0] * 23 + [None]), table, label)
    assert outcome.method == "day_type_conditioned"


def test_clean_omit_keeps_only_valid(rng):
    dataset, truth = planted_gap_dataset(rng)
    cleaned, report, log = clean(dataset, "omit")
    assert len(cleaned.day_records) == report.total_valid_rows
    assert all(rec.is_complete for rec in cleaned.day_records)
    assert log == []


def test_clean_impute_identity_on_valid_dataset():
    dataset = dataset_of([flat_day("p1", d, 2.0) for d in dates(3)])
    cleaned, _, log = clean(dataset, "impute")
    assert cleaned.day_records == dataset.day_records
    assert log == []


def test_clean_impute_repairs_partial_days():
    records = [flat_day("p1", d, 2.0) for d in dates(3)]
    records.append(day("p1", D(1990, 2, 1), [2.0] * 20 + [None] * 4))
    records.append(day("p1", D(1990, 2, 2), [None] * 24))  # unrepairable
    cleaned, _, log = clean(dataset_of(records), "impute")
    assert len(cleaned.day_records) == 4
    assert all(rec.is_complete for rec in cleaned.day_records)
    by_key = {(e.property_id, e.date): e for e in log}
    repaired = by_key[("p1", D(1990, 2, 1))]
    assert repaired.method == "unconditioned" and repaired.filled_hours == (20, 21, 22, 23)
    assert by_key[("p1", D(1990, 2, 2))].method == "dropped"


def test_clean_impute_by_daytype_with_fallback():
    """Days in a label cell with no valid data fall back to the unconditioned table."""
    weekend = DayTypeLabel(day_class="weekend")
    weekday = DayTypeLabel(day_class="weekday")
    records = [flat_day("p1", D(1990, 1, 1), 2.0),  # Monday
               flat_day("p1", D(1990, 1, 2), 4.0)]  # Tuesday
    broken_weekday = day("p1", D(1990, 1, 3), [3.0] * 12 + [None] * 12)
    broken_weekend = day("p1", D(1990, 1, 6), [3.0] * 12 + [None] * 12)  # Saturday
    records += [broken_weekday, broken_weekend]
    labels = {
        ("p1", D(1990, 1, 1)): weekday,
        ("p1", D(1990, 1, 2)): weekday,
        ("p1", D(1990, 1, 3)): weekday,
        ("p1", D(1990, 1, 6)): weekend,
    }
    cleaned, _, log = clean(dataset_of(records), "impute_by_daytype", labels)
    by_key = {(e.property_id, e.date): e for e in log}
    assert by_key[("p1", D(1990, 1, 3))].method == "day_type_conditioned"
    # no valid weekend day exists, so the weekend cell is absent -> fallback
    assert by_key[("p1", D(1990, 1, 6))].method == "unconditioned"
    assert len(cleaned.day_records) == 4


def test_clean_impute_by_daytype_requires_labels():
    dataset = dataset_of([day("p1", D(1990, 1, 1), [1.0] * 23 + [None])])
    with pytest.raises(ValueError, match="labels"):
        clean(dataset, "impute_by_daytype")


def test_clean_rejects_unknown_policy():
    dataset = dataset_of([flat_day("p1", D(1990, 1, 1), 1.0)])
    with pytest.raises(ValueError, match="policy"):
        clean(dataset, "discard")


def test_imputation_log_csv(tmp_path):
    records = [flat_day("p1", d, 2.0) for d in dates(3)]
    records.append(day("p1", D(1990, 2, 1), [2.0] * 23 + [None]))
    _, _, log = clean(dataset_of(records), "impute")
    path = write_imputation_log(log, tmp_path / "log.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "property_id,date,method,fraction,filled_hours"
    assert lines[1].startswith("p1,1990-02-01,unconditioned,") and lines[1].endswith(",23")
