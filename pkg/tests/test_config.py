import json
from pathlib import Path

import numpy as np
import pytest

from beamobs.config import (
    ConfigError,
    ExperimentConfig,
    config_from_mapping,
    load_beam_spec,
    load_config,
)

REPO_ROOT = Path(__file__).resolve().parents[1]


class TestDefaults:
    def test_committed_bundle_equals_defaults(self):
        cfg = load_config(REPO_ROOT / "experiment.toml")
        assert cfg == ExperimentConfig()

    def test_defaults_validate(self):
        cfg = ExperimentConfig().validate()
        assert cfg.n_modes == 8
        assert cfg.grid_size == 501
        assert cfg.budget == 10

    def test_horizon_and_dt(self):
        cfg = ExperimentConfig()
        horizon, dt = cfg.horizon_and_dt(2 * np.pi)
        assert horizon == pytest.approx(1.0, rel=1e-15)
        assert dt == pytest.approx(1.0 / 2000, rel=1e-15)


class TestMappingCoercion:
    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            config_from_mapping({"n_modez": 4})

    def test_bool_not_a_number(self):
        # bool is an int subclass; accepting it would mask typos like
        # budget = true
        with pytest.raises(ConfigError):
            config_from_mapping({"budget": True})
        with pytest.raises(ConfigError):
            config_from_mapping({"weight": True})

    def test_string_where_number_expected(self):
        with pytest.raises(ConfigError):
            config_from_mapping({"weight": "5.0"})

    def test_int_accepted_for_float_field(self):
        cfg = config_from_mapping({"weight": 3})
        assert cfg.weight == 3.0
        assert isinstance(cfg.weight, float)

    def test_list_fields(self):
        cfg = config_from_mapping({"scan_modes": [2, 3], "systems": ["continuum"]})
        assert cfg.scan_modes == (2, 3)
        assert cfg.systems == ("continuum",)


class TestValidation:
    @pytest.mark.parametrize("overrides", [
        {"n_modes": 0},
        {"grid_size": 100},
        {"dt_steps": 5},
        {"horizon_periods": -1.0},
        {"epsilon": 0.0},
        {"budget": 600},
        {"place_budgets": (0,)},
        {"scan_modes": (0,)},
        {"systems": ("spectral",)},
        {"estimate_variant": "modal"},
        {"n_trials": 0},
        {"table_format": "parquet"},
        {"measurement_noise": -1.0},
    ])
    def test_rejects(self, overrides):
        with pytest.raises(ConfigError):
            config_from_mapping(overrides).validate()


class TestFileLoading:
    def test_toml_roundtrip(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text('n_modes = 4\nweight = 2.5\nsystems = ["truncated"]\n')
        cfg = load_config(path)
        assert cfg.n_modes == 4
        assert cfg.weight == 2.5
        assert cfg.systems == ("truncated",)

    def test_json_roundtrip(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"n_modes": 4, "seed": 7}))
        cfg = load_config(path)
        assert cfg.n_modes == 4
        assert cfg.seed == 7

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.toml")

    def test_bad_suffix(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("n_modes: 4\n")
        with pytest.raises(ConfigError, match="toml or .json"):
            load_config(path)

    def test_invalid_toml(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text("n_modes = = 4\n")
        with pytest.raises(ConfigError, match="invalid TOML"):
            load_config(path)

    def test_non_table_root(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("[1, 2, 3]")
        with pytest.raises(ConfigError, match="table"):
            load_config(path)


class TestBeamDescriptionFiles:
    GOOD = {
        "length_m": 2.0,
        "width_m": 0.02,
        "thickness_m": 0.005,
        "elastic_modulus_pa": 70e9,
        "density_kg_m3": 2700.0,
        "n_modes": 8,
        "grid_size": 501,
    }

    def test_load(self, tmp_path):
        path = tmp_path / "beam.json"
        path.write_text(json.dumps(self.GOOD))
        spec, n_modes, grid_size = load_beam_spec(path)
        assert spec.length == 2.0
        assert spec.density == 2700.0
        assert (n_modes, grid_size) == (8, 501)

    def test_missing_key(self, tmp_path):
        bad = dict(self.GOOD)
        del bad["density_kg_m3"]
        path = tmp_path / "beam.json"
        path.write_text(json.dumps(bad))
        with pytest.raises(ConfigError, match="density_kg_m3"):
            load_beam_spec(path)

    def test_unknown_key(self, tmp_path):
        bad = dict(self.GOOD, poisson_ratio=0.3)
        path = tmp_path / "beam.json"
        path.write_text(json.dumps(bad))
        with pytest.raises(ConfigError, match="poisson_ratio"):
            load_beam_spec(path)

    def test_bool_mode_count_rejected(self, tmp_path):
        bad = dict(self.GOOD, n_modes=True)
        path = tmp_path / "beam.json"
        path.write_text(json.dumps(bad))
        with pytest.raises(ConfigError):
            load_beam_spec(path)
