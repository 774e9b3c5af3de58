import json

import pytest

from cli.config import config_hash, load_device, parse_device
from cli.main import main
from cli.models import RunConfig
from src.common.errors import ConfigError
from tests.conftest import DATA_DIR

TWO_QUBIT = str(DATA_DIR / "two-qubit.device")
UNITLESS = """{
  "name": "bad",
  "modes": [
    {"name": "Q1", "role": "qubit", "frequency": 5.627, "anharmonicity": "-184 MHz"},
    {"name": "Q2", "role": "qubit", "frequency": "4.353 GHz", "anharmonicity": "-220 MHz"}
  ]
}
"""


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_unitless_frequency_is_rejected_with_location():
    with pytest.raises(ConfigError) as info:
        parse_device(UNITLESS, "bad.device")
    assert info.value.field == "modes.0.frequency"
    assert info.value.line == 4


def test_malformed_json_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_device('{\n  "name": "x",\n  "modes": [\n}', "broken.device")
    assert info.value.line == 4


def test_missing_device_file(tmp_path):
    with pytest.raises(ConfigError):
        load_device(tmp_path / "nowhere.device")


def test_config_hash_ignores_output_directory(tmp_path):
    first = RunConfig(command="spectrum", device=TWO_QUBIT, out_dir=tmp_path / "a")
    second = RunConfig(command="spectrum", device=TWO_QUBIT, out_dir=tmp_path / "b")
    assert config_hash(first) == config_hash(second)
    assert config_hash(first) != config_hash(first.model_copy(update={"seed": 1}))


def test_spectrum_command(tmp_path):
    assert main(["spectrum", "--device", TWO_QUBIT, "--out", str(tmp_path)]) == 0
    payload = json.loads((tmp_path / "spectrum.json").read_text())
    assert payload["dispersive"]["chi_zz_static"] == pytest.approx(-103.0, abs=5.0)
    record = manifest(tmp_path)
    assert record["success"] is True
    assert record["files"] == ["spectrum.json"]
    assert len(record["config_hash"]) == 64
    assert record["seed"] == 0


def test_invalid_device_exits_with_config_error(tmp_path):
    device = tmp_path / "bad.device"
    device.write_text(UNITLESS)
    out = tmp_path / "out"
    assert main(["spectrum", "--device", str(device), "--out", str(out)]) == 2
    record = manifest(out)
    assert record["success"] is False
    assert "modes.0.frequency" in record["error"]


def test_cancel_command(tmp_path):
    assert main(["cancel", "--device", TWO_QUBIT, "--out", str(tmp_path)]) == 0
    point = json.loads((tmp_path / "cancellation.json").read_text())
    assert point["drive_amp"] == pytest.approx(0.66, rel=0.15)


def test_json_tables_carry_seed(tmp_path):
    args = ["zzmap", "--device", TWO_QUBIT, "--out", str(tmp_path), "--format", "json", "--seed", "9",
            "--n-freq", "2", "--n-amp", "2"]
    assert main(args) == 0
    payload = json.loads((tmp_path / "zzmap.json").read_text())
    assert payload["seed"] == 9
    assert manifest(tmp_path)["files"] == ["zzmap.json"]


def test_rb_outputs_are_reproducible(tmp_path):
    args = ["rb", "--device", TWO_QUBIT, "--seed", "4", "--taus", "0.4,0.8", "--n-random", "3", "--m-max", "8",
            "--residual-chi-zz", "0", "--dephasing", "none"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("rb_error_on.csv", "rb_error_off.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert manifest(tmp_path / "a")["config_hash"] == manifest(tmp_path / "b")["config_hash"]
    lines = (tmp_path / "a" / "rb_error_on.csv").read_text().splitlines()
    assert lines[0] == "tau_us,epsilon"
    assert len(lines) == 3
