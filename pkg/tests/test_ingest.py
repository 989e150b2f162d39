import datetime as dt

import numpy as np
import pytest

from loadshape.errors import (
    DatasetError,
    DuplicateTimestampError,
    MalformedHeaderError,
    MissingFileError,
    SchemeError,
)
from loadshape.ingest import (
    Dataset,
    DayRecord,
    RawHourRow,
    flatten,
    load_dataset,
    merge_environment,
    parse_dwelling_file,
    read_dataset,
    read_schema_map,
    reshape,
    write_dataset,
)

HEADER = "date,hour,kwh,temperature,wind_speed,rainfall"


def write_file(tmp_path, name, lines):
    path = tmp_path / name
    path.write_text("\n".join([HEADER, *lines]) + "\n")
    return path


def test_parse_two_lines(tmp_path):
    path = write_file(tmp_path, "p1.csv", [
        "1990-01-01,0,0.4,4.0,2.0,0.0",
        "1990-01-01,1,0.3,3.5,2.5,0.1",
    ])
    rows, report = parse_dwelling_file(path)
    assert [r.kwh for r in rows] == [0.4, 0.3]
    assert rows[0].property_id == "p1"
    assert rows[0].hour == 0 and rows[1].hour == 1
    assert rows[0].temperature == 4.0
    assert report.issues == [] and report.rows_parsed == 2


def test_parse_na_cell_reported(tmp_path):
    path = write_file(tmp_path, "p1.csv", ["1990-01-01,0,NA,4.0,2.0,0.0"])
    rows, report = parse_dwelling_file(path)
    assert rows[0].kwh is None
    assert len(report.issues) == 1
    issue = report.issues[0]
    assert issue.line == 2 and issue.column == "kwh" and issue.raw == "NA"


def test_parse_empty_cell_absent_but_silent(tmp_path):
    path = write_file(tmp_path, "p1.csv", ["1990-01-01,0,,4.0,2.0,0.0"])
    rows, report = parse_dwelling_file(path)
    assert rows[0].kwh is None
    assert report.issues == []


def test_parse_negative_kwh_degrades(tmp_path):
    path = write_file(tmp_path, "p1.csv", ["1990-01-01,0,-1.5,4.0,2.0,0.0"])
    rows, report = parse_dwelling_file(path)
    assert rows[0].kwh is None
    assert report.issues[0].reason == "negative"


def test_parse_negative_temperature_kept(tmp_path):
    path = write_file(tmp_path, "p1.csv", ["1990-01-01,0,0.4,-6.0,2.0,0.0"])
    rows, _ = parse_dwelling_file(path)
    assert rows[0].temperature == -6.0


def test_parse_duplicate_timestamp(tmp_path):
    path = write_file(tmp_path, "p1.csv", [
        "1990-01-01,5,0.4,,,",
        "1990-01-01,5,0.5,,,",
    ])
    with pytest.raises(DuplicateTimestampError, match=r"p1\.csv:3"):
        parse_dwelling_file(path)


def test_parse_missing_file(tmp_path):
    with pytest.raises(MissingFileError):
        parse_dwelling_file(tmp_path / "nope.csv")


def test_parse_malformed_header(tmp_path):
    path = tmp_path / "p1.csv"
    path.write_text("time,usage\n1,2\n")
    with pytest.raises(MalformedHeaderError, match="p1.csv"):
        parse_dwelling_file(path)


def test_parse_bad_date_skips_row(tmp_path):
    path = write_file(tmp_path, "p1.csv", [
        "nonsense,0,0.4,,,",
        "1990-01-01,1,0.3,,,",
    ])
    rows, report = parse_dwelling_file(path)
    assert len(rows) == 1 and rows[0].kwh == 0.3
    assert report.rows_skipped == 1
    assert report.issues[0].column == "date"


def test_schema_map(tmp_path):
    map_path = tmp_path / "map.txt"
    map_path.write_text("date=Date\nhour=Hour\nkwh=Usage\n")
    path = tmp_path / "weird.csv"
    path.write_text("Date,Hour,Usage\n1990-01-01,0,0.7\n")
    rows, _ = parse_dwelling_file(path, schema_map=read_schema_map(map_path))
    assert rows[0].kwh == 0.7
    assert rows[0].temperature is None


def test_schema_map_positions(tmp_path):
    map_path = tmp_path / "map.txt"
    map_path.write_text("date=2\nhour=1\nkwh=0\n")
    path = tmp_path / "weird.csv"
    path.write_text("a,b,c\n0.7,3,1990-01-01\n")
    rows, _ = parse_dwelling_file(path, schema_map=read_schema_map(map_path))
    assert rows[0].kwh == 0.7 and rows[0].hour == 3


def test_schema_map_requires_core_columns(tmp_path):
    map_path = tmp_path / "map.txt"
    map_path.write_text("date=Date\n")
    with pytest.raises(SchemeError, match="hour"):
        read_schema_map(map_path)


def rows_for(pid, date, hours, kwh=1.0):
    return [RawHourRow(pid, dt.date.fromisoformat(date), h, kwh) for h in hours]


def test_reshape_full_day():
    records, _ = reshape(rows_for("p1", "1990-01-01", range(24)), "p1")
    assert len(records) == 1
    assert records[0].is_complete


def test_reshape_missing_hour():
    hours = [h for h in range(24) if h != 7]
    records, _ = reshape(rows_for("p1", "1990-01-01", hours), "p1")
    assert records[0].readings[7] is None
    assert records[0].present_count == 23


def test_reshape_three_dates():
    rows = (rows_for("p1", "1990-01-01", range(24))
            + rows_for("p1", "1990-01-02", range(24))
            + rows_for("p1", "1990-01-03", range(24)))
    records, _ = reshape(rows, "p1")
    assert len(records) == 3


def test_reshape_rejects_foreign_rows():
    with pytest.raises(ValueError):
        reshape(rows_for("p2", "1990-01-01", [0]), "p1")


def test_reshape_roundtrip_random(rng):
    """Flattening DayRecords reproduces exactly the present kwh of the input rows."""
    for _ in range(25):
        n_days = int(rng.integers(1, 5))
        rows = []
        for d in range(n_days):
            date = dt.date(1990, 1, 1) + dt.timedelta(days=d)
            hours = rng.permutation(24)[: int(rng.integers(1, 25))]
            for h in sorted(int(h) for h in hours):
                kwh = None if rng.random() < 0.2 else float(np.round(rng.uniform(0, 5), 6))
                rows.append(RawHourRow("p1", date, h, kwh))
        records, _ = reshape(rows, "p1")
        got = {(pid, date, h): v for pid, date, h, v in flatten(records)}
        expected = {("p1", r.date, r.hour): r.kwh for r in rows if r.kwh is not None}
        assert got == expected
        # partition: every present kwh lands in exactly one slot
        assert sum(r.present_count for r in records) == len(expected)


def test_merge_environment_agreement():
    key = (dt.date(1990, 1, 1), 3)
    records, report = merge_environment([{key: {"temperature": 4.0}}, {key: {"temperature": 4.0}}])
    assert records[key[0]].hourly_temperature[3] == 4.0
    assert report.conflicts == []


def test_merge_environment_disagreement_mean_flagged():
    key = (dt.date(1990, 1, 1), 3)
    records, report = merge_environment([{key: {"temperature": 4.0}}, {key: {"temperature": 6.0}}])
    assert records[key[0]].hourly_temperature[3] == 5.0
    assert len(report.conflicts) == 1
    assert report.conflicts[0].column == "temperature"


def test_merge_environment_absent_hour():
    key = (dt.date(1990, 1, 1), 3)
    records, _ = merge_environment([{key: {"temperature": 4.0}}])
    assert records[key[0]].hourly_temperature[4] is None
    assert records[key[0]].hourly_wind[3] is None


def test_environment_not_property_dependent(rng):
    """Merged environment is identical whichever subset of properties reported it."""
    date = dt.date(1990, 1, 1)
    weather = {(date, h): {"temperature": float(np.round(rng.uniform(-5, 20), 3))} for h in range(24)}
    full = merge_environment([weather, weather, weather])[0]
    partial = merge_environment([weather])[0]
    assert full == partial


def make_dwelling_dir(tmp_path, n_files=3, days=2):
    directory = tmp_path / "data"
    directory.mkdir()
    for i in range(n_files):
        lines = []
        for d in range(days):
            for h in range(24):
                lines.append(f"1990-01-{d + 1:02d},{h},{0.1 * (i + 1):.3f},4.0,2.0,0.0")
        (directory / f"p{i:03d}.csv").write_text("\n".join([HEADER, *lines]) + "\n")
    return directory


def test_load_dataset(tmp_path):
    directory = make_dwelling_dir(tmp_path, n_files=3)
    dataset, report = load_dataset(directory)
    assert dataset.property_ids == ("p000", "p001", "p002")
    assert len(dataset.day_records) == 6
    assert report.files == 3 and report.rows == 3 * 2 * 24
    assert len(dataset.environment) == 2


def test_load_dataset_empty_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(DatasetError, match="no dwelling files"):
        load_dataset(tmp_path / "empty")


def test_load_dataset_aggregates_failures(tmp_path):
    directory = make_dwelling_dir(tmp_path, n_files=1)
    (directory / "broken.csv").write_text("not,a,header\n1,2,3\n")
    with pytest.raises(DatasetError, match="broken.csv") as info:
        load_dataset(directory)
    assert len(info.value.file_errors) == 1


def test_dataset_rejects_duplicate_property_day():
    rec = DayRecord("p1", dt.date(1990, 1, 1), tuple([1.0] * 24))
    with pytest.raises(DatasetError, match="duplicate"):
        Dataset.build([rec, rec], {})


def test_write_read_dataset_roundtrip(tmp_path, rng):
    directory = make_dwelling_dir(tmp_path, n_files=2)
    dataset, _ = load_dataset(directory)
    write_dataset(dataset, tmp_path / "run")
    again = read_dataset(tmp_path / "run")
    assert again.day_records == dataset.day_records
    assert again.environment == dataset.environment
    assert again.property_ids == dataset.property_ids
