import json
import os

import numpy as np
import pytest

from mixlab.reporting import ExperimentRecord, fmt, write_csv, write_jsonl
from mixlab.util import atomic_write_text, canonical_hash, canonical_json, to_jsonable


def test_fmt_cell_types():
    assert fmt(True) == "true"
    assert fmt(False) == "false"
    assert fmt(3) == "3"
    assert fmt("mean") == "mean"
    assert fmt(0.1) == "0.10000000000000001"
    assert float(fmt(1.0 / 3.0)) == 1.0 / 3.0  # round-trips exactly


def test_write_csv_layout(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b"], [[1, 0.5], ["x", True]])
    assert path.read_text() == "a,b\n1,0.5\nx,true\n"


def test_write_csv_rejects_ragged_rows(tmp_path):
    with pytest.raises(ValueError, match="3 cells for 2 columns"):
        write_csv(tmp_path / "t.csv", ["a", "b"], [[1, 2, 3]])


def test_write_csv_overwrites_atomically(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a"], [[1]])
    write_csv(path, ["a"], [[2]])
    assert path.read_text() == "a\n2\n"
    assert [f for f in os.listdir(tmp_path) if f.endswith(".tmp")] == []


def test_experiment_record_as_dict_merges_extra():
    rec = ExperimentRecord("abc", "train", 1, {"mae": 0.5}, 1.25,
                           ["ck.npz"], {"best_epoch": 3})
    row = rec.as_dict()
    assert row["config_hash"] == "abc"
    assert row["best_epoch"] == 3
    assert row["artifacts"] == ["ck.npz"]


def test_write_jsonl_accepts_records_and_dicts(tmp_path):
    path = tmp_path / "t.jsonl"
    rec = ExperimentRecord("abc", "train", 1, {"mae": 0.5}, 0.0)
    write_jsonl(path, [rec, {"kind": "aggregate", "n": np.int64(3)}])
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[0])["command"] == "train"
    assert json.loads(lines[1]) == {"kind": "aggregate", "n": 3}
    # keys are sorted for byte stability
    assert lines[1] == '{"kind": "aggregate", "n": 3}'


def test_canonical_json_sorts_and_compacts():
    assert canonical_json({"b": 1, "a": (1, 2)}) == '{"a":[1,2],"b":1}'


def test_canonical_hash_key_order_invariant():
    assert canonical_hash({"x": 1, "y": 2}) == canonical_hash({"y": 2, "x": 1})
    assert canonical_hash({"x": 1}) != canonical_hash({"x": 2})
    assert len(canonical_hash({})) == 12


def test_to_jsonable_handles_numpy_and_dataclasses():
    rec = ExperimentRecord("h", "c", 1, {}, 0.0)
    out = to_jsonable({"r": rec, "v": np.float64(0.5), "t": (1, 2)})
    assert out["r"]["config_hash"] == "h"
    assert out["v"] == 0.5 and isinstance(out["v"], float)
    assert out["t"] == [1, 2]


def test_atomic_write_replaces_content(tmp_path):
    path = tmp_path / "f.txt"
    atomic_write_text(path, "one\n")
    atomic_write_text(path, "two\n")
    assert path.read_text() == "two\n"
