import copy
import json

import pytest

from randwave.acceptance import crit_eta_calibration
from randwave.calibration import CASES, check_table, load_table, table_path
from randwave.errors import ConfigError


@pytest.fixture(scope="module")
def table():
    return load_table()


def d1_only(table):
    return {**table, "cases": [r for r in table["cases"] if r["d"] == 1]}


def test_shipped_table_covers_every_case(table):
    assert table_path().is_file()
    assert [(r["d"], r["p"]) for r in table["cases"]] == [(c["d"], c["p"]) for c in CASES]
    assert all(r["A0"] > 0 and r["eta0"] > 0 for r in table["cases"])


def test_d1_row_reproduces(table):
    (row,) = check_table(d1_only(table))
    assert row["passed"], row
    assert row["half_converges"] and row["double_fails"] and row["eta_matches"]


def test_inflated_threshold_is_caught(table):
    bad = copy.deepcopy(d1_only(table))
    bad["cases"][0]["A0"] *= 4
    assert not crit_eta_calibration(0, table=bad)["passed"]


def test_wrong_eta_is_caught(table):
    bad = copy.deepcopy(d1_only(table))
    bad["cases"][0]["eta0"] *= 1.05
    (row,) = check_table(bad)
    assert not row["passed"] and not row["eta_matches"]


def test_malformed_row_fails_without_crashing(table):
    bad = copy.deepcopy(d1_only(table))
    del bad["cases"][0]["A0"]
    res = crit_eta_calibration(0, table=bad)
    assert not res["passed"]
    assert "malformed" in res["metrics"]["rows"][0]["error"]
    assert not crit_eta_calibration(0, table={"cases": "nonsense"})["passed"]


def test_unreadable_table(tmp_path):
    with pytest.raises(ConfigError):
        load_table(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        load_table(broken)
    assert json.loads(table_path().read_text()) == load_table()
