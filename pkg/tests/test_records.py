import csv

import numpy as np
import pytest

from entangled.economy import run_simulation
from entangled.records import SERIES_COLUMNS, RunRecord

from conftest import small_params


@pytest.fixture(scope="module")
def rec():
    return run_simulation(small_params(iterations=25, snapshot_interval=10), 9)


def test_round_trip(tmp_path, rec):
    rec.save(tmp_path / "r.npz")
    back = RunRecord.load(tmp_path / "r.npz")
    assert back.to_bytes() == rec.to_bytes()
    assert np.array_equal(back.series, rec.series)
    assert [s.iteration for s in back.snapshots] == [10, 20, 25]
    assert back.params == rec.params and back.kernel_digest == rec.kernel_digest


def test_numpy_can_read_the_archive(tmp_path, rec):
    rec.save(tmp_path / "r.npz")
    with np.load(tmp_path / "r.npz") as data:
        assert np.array_equal(data["series"], rec.series)


def test_snapshot_lookup(rec):
    assert rec.snapshot_at(20).iteration == 20
    with pytest.raises(KeyError):
        rec.snapshot_at(21)


def test_series_csv(tmp_path, rec):
    rec.write_series_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == f"# params_digest={rec.params_digest} seed=9"
    assert lines[1] == ",".join(SERIES_COLUMNS)
    rows = list(csv.reader(lines[2:]))
    assert len(rows) == rec.final_iteration
    assert float(rows[-1][1]) == rec.gdp[-1]


def test_snapshot_exports(tmp_path, rec):
    snap = rec.snapshots[0]
    snap.write_csv(tmp_path / "c.csv")
    rows = list(csv.reader((tmp_path / "c.csv").read_text().splitlines()))
    assert rows[0] == ["id", "t1", "t2", "t3", "capital", "age"]
    assert len(rows) == snap.n + 1
    snap.write_json(tmp_path / "c.json")
    import json
    doc = json.loads((tmp_path / "c.json").read_text())
    assert doc["iteration"] == 10 and len(doc["companies"]) == snap.n
