"""
Testes unitários para o módulo de configuração.
"""

import json
import logging
from unittest import mock

import pytest

from selest import config
from selest.config import (
    DEFAULT_CONFIG,
    SelestSettings,
    apply_overrides,
    get_log_level,
    get_threads,
    load_config,
    resolve_settings,
    save_config,
    set_config,
)
from selest.core.exceptions import ConfigurationError


@pytest.fixture(autouse=True)
def reset_singleton():
    original = config._config_instance
    yield
    config._config_instance = original


class TestLoadConfig:
    """Testes para load_config e save_config."""

    def test_default(self):
        """Testa que sem arquivo a configuração padrão é devolvida (cópia)."""
        loaded = load_config()
        loaded["model"]["L"] = -1
        assert DEFAULT_CONFIG["model"]["L"] == 50

    def test_file_is_merged_over_defaults(self, tmp_path):
        # Arrange
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"model": {"L": 8}}))

        # Act
        loaded = load_config(path)

        # Assert
        assert loaded["model"]["L"] == 8
        assert loaded["model"]["K"] == DEFAULT_CONFIG["model"]["K"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "nada.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{nope")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_save_settings(self, tmp_path):
        """Testa que a configuração salva pode ser resolvida de volta."""
        # Arrange
        settings = resolve_settings(overrides={"model.L": 12})
        path = tmp_path / "out" / "resolved.json"

        # Act
        save_config(settings, path)

        # Assert
        assert resolve_settings(path) == settings


class TestResolveSettings:
    """Testes para resolve_settings e apply_overrides."""

    def test_defaults(self):
        settings = resolve_settings()
        assert isinstance(settings, SelestSettings)
        assert settings.model.L == 50 and settings.model.K == 3
        assert settings.workload.t_max_mode == "fixed"

    def test_precedence(self, tmp_path):
        """Testa padrão < preset < arquivo < overrides."""
        # Arrange
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"model": {"h_dim": 7, "z_dim": 5}}))

        # Act
        settings = resolve_settings(path, {"model.z_dim": 3, "model.L": None}, preset="desk")

        # Assert
        assert settings.model.tau_hidden == [128, 64]
        assert settings.model.h_dim == 7
        assert settings.model.z_dim == 3
        assert settings.model.L == 50

    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError):
            resolve_settings(preset="enorme")

    def test_invalid_value(self):
        """Testa que valores inválidos viram ConfigurationError."""
        with pytest.raises(ConfigurationError):
            resolve_settings(overrides={"training.patience": 0})

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError):
            resolve_settings(overrides={"model.nao_existe": 1})

    def test_invalid_override_section(self):
        with pytest.raises(ConfigurationError):
            apply_overrides(DEFAULT_CONFIG, {"sem_secao": 1})


class TestRuntimeAccessors:
    """Testes para get_log_level e get_threads."""

    def test_log_level_from_settings(self):
        set_config(resolve_settings(overrides={"runtime.log_level": "debug"}))
        assert get_log_level() == logging.DEBUG

    def test_unknown_log_level_falls_back_to_info(self):
        set_config({"runtime": {"log_level": "verboso"}})
        assert get_log_level() == logging.INFO

    def test_threads_env_var_wins(self):
        """Testa que SELEST_THREADS tem precedência sobre runtime.threads."""
        set_config(resolve_settings(overrides={"runtime.threads": 2}))
        with mock.patch.dict("os.environ", {"SELEST_THREADS": "5"}):
            assert get_threads() == 5
        with mock.patch.dict("os.environ", {"SELEST_THREADS": ""}):
            assert get_threads() == 2

    @pytest.mark.parametrize("value", ["abc", "0"])
    def test_invalid_threads_env_var(self, value):
        with mock.patch.dict("os.environ", {"SELEST_THREADS": value}):
            with pytest.raises(ConfigurationError):
                get_threads()
