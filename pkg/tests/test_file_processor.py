import numpy as np
import orjson
import pandas as pd
import pytest

from src.exceptions import ConfigError
from src.file_processor import FileProcessor, read_profile_csv, read_samples_json


def test_safe_name():
    assert FileProcessor.safe_name('ideal gas/C:"1"') == "ideal_gas_C__1_"


def test_csv_round_trips_doubles_exactly(tmp_path):
    values = np.array([0.1, 1.0 / 3.0, np.pi * 1e-300, 2.0 ** 0.5 * 1e300])
    frame = pd.DataFrame({"y": [-3.0, -2.0, -1.0, 0.0], "rho": values, "phi": values[::-1], "h_residual": [0.0] * 4})
    path = FileProcessor(tmp_path).write_csv(frame, "profile")
    assert path.read_text().splitlines()[0] == "y,rho,phi,h_residual"
    back = read_profile_csv(path)
    np.testing.assert_array_equal(back["rho"].to_numpy(), values)
    np.testing.assert_array_equal(back["phi"].to_numpy(), values[::-1])


def test_writes_leave_no_temporary_files(tmp_path):
    files = FileProcessor(tmp_path / "out")
    files.write_json({"survivors": ["a"]}, "report")
    files.write_json({"survivors": []}, "report")
    assert [p.name for p in (tmp_path / "out").iterdir()] == ["report.json"]
    assert orjson.loads((tmp_path / "out" / "report.json").read_bytes()) == {"survivors": []}


def test_failed_write_keeps_the_previous_file(tmp_path):
    files = FileProcessor(tmp_path)
    files.write_json({"ok": True}, "report")
    with pytest.raises(TypeError):
        files.write_json({"bad": object()}, "report")
    assert orjson.loads((tmp_path / "report.json").read_bytes()) == {"ok": True}


def test_profile_needs_columns(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("y,rho\n0,1\n")
    with pytest.raises(ConfigError, match="phi"):
        read_profile_csv(path)


def test_samples_file_forms(tmp_path):
    listed = tmp_path / "a.json"
    listed.write_bytes(orjson.dumps([{"rho": 1.0, "phi": 1.0}]))
    wrapped = tmp_path / "b.json"
    wrapped.write_bytes(orjson.dumps({"samples": [{"rho": 1.0, "phi": 1.0}]}))
    empty = tmp_path / "c.json"
    empty.write_bytes(b"[]")
    assert read_samples_json(listed) == read_samples_json(wrapped)
    with pytest.raises(ConfigError):
        read_samples_json(empty)
