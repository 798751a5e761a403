import dataclasses
import json
import math
from pathlib import Path

import pytest

from qwork_pipeline.config import VALID_BASE_CONFIGS, RunConfigManager
from qwork_pipeline.utils.errors import ConfigError


@dataclasses.dataclass
class BadValue:
    key: str
    value: object


bad_values = [
    BadValue("trap.eta", "0.33"),
    BadValue("trap.mean_phonon_number", 0.0),
    BadValue("schedule_forward.kind", "gaussian"),
    BadValue("schedule_forward.cycles", 1.5),
    BadValue("measurement.samples", 1),
    BadValue("measurement.noise_sigma", -0.1),
    BadValue("numerics.dim", True),
    BadValue("numerics.n_pad", 64),
    BadValue("fit.rel_threshold", 1.0),
    BadValue("fit.weighted", "yes"),
    BadValue("output.time_units", "ms"),
]


@pytest.mark.parametrize("base_config", VALID_BASE_CONFIGS)
def test_base_configs_load(base_config):
    cfg = RunConfigManager(base_config=base_config).to_run_config()
    assert cfg.name == Path(base_config).stem
    assert cfg.numerics.n_pad < cfg.numerics.dim
    assert cfg.trap.frequency_khz == 300.0


def test_default_values():
    cfg = RunConfigManager(base_config="default.toml").to_run_config()
    assert cfg.schedule_forward.kind == "tanh"
    assert cfg.measurement.samples == 1000
    assert cfg.measurement.seed == 20120101
    assert cfg.fit.crosstalk_correction is True
    assert cfg.numerics.tolerances.n_pad == 8


def test_partial_files_fall_back_to_defaults():
    cfg = RunConfigManager(base_config="null.toml").to_run_config()
    assert cfg.schedule_forward.end == 0.0
    assert math.isinf(cfg.measurement.tau_us)
    assert cfg.measurement.du_us == 0.5


def test_get_and_set():
    manager = RunConfigManager(base_config="default.toml")
    assert manager.get("measurement.seed") == 20120101
    assert manager.get("measurement.missing", default=3) == 3
    manager.set("measurement.seed", 7)
    assert manager.to_run_config().measurement.seed == 7
    with pytest.raises(ConfigError):
        manager.set("measurement.sed", 7)
    with pytest.raises(ConfigError):
        manager.set("measurements.seed", 7)


@pytest.mark.parametrize("bad", bad_values, ids=lambda b: b.key)
def test_invalid_values_are_rejected(bad: BadValue):
    manager = RunConfigManager(base_config="default.toml")
    manager.set(bad.key, bad.value)
    with pytest.raises(ConfigError):
        manager.to_run_config()


def test_text_schedule_requires_text():
    manager = RunConfigManager(base_config="default.toml")
    manager.set("schedule_forward.kind", "text")
    with pytest.raises(ConfigError):
        manager.to_run_config()
    manager.set("schedule_forward.text", "tanh 0 1 T=1 dur=8")
    assert manager.to_run_config().schedule_forward.kind == "text"


def test_unknown_keys_in_file(tmp_path):
    path = tmp_path / "typo.toml"
    path.write_text("[measurement]\nsampels = 10\n")
    with pytest.raises(ConfigError, match="measurement.sampels"):
        RunConfigManager(config_path=path)
    path.write_text("[detector]\ngain = 1\n")
    with pytest.raises(ConfigError, match="detector"):
        RunConfigManager(config_path=path)


def test_unparsable_and_missing_files(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[trap\n")
    with pytest.raises(ConfigError):
        RunConfigManager(config_path=path)
    with pytest.raises(ConfigError):
        RunConfigManager(config_path=tmp_path / "absent.toml")


def test_invalid_base_config():
    with pytest.raises(ConfigError):
        RunConfigManager(base_config="fig9.toml")
    with pytest.raises(ConfigError):
        RunConfigManager()


def test_save_and_reload(tmp_path):
    manager = RunConfigManager(base_config="null.toml")
    manager.set("measurement.seed", 99)
    saved = manager.save(tmp_path / "config.json")
    with open(saved) as f:
        data = json.load(f)
    assert data["measurement"]["tau_us"] == "inf"
    assert list(data) == sorted(data)
    reloaded = RunConfigManager(config_path=saved).to_run_config()
    assert reloaded.measurement.seed == 99
    assert math.isinf(reloaded.measurement.tau_us)
    assert reloaded.schedule_forward.end == 0.0
