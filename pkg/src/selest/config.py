"""
Módulo de configuração para o Selest.

Este módulo fornece acesso às configurações da aplicação: um dicionário
DEFAULT_CONFIG com as seções data, workload, model, training, updates e
runtime, leitura e escrita do arquivo JSON de configuração e a resolução
completa (padrão < preset < arquivo < flags) validada por modelos pydantic.
"""

import copy
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from selest.core.exceptions import ConfigurationError
from selest.core.models import HyperParams, TrainConfig

THREADS_ENV_VAR = "SELEST_THREADS"


class DataSettings(BaseModel):
    """Geração do dataset sintético."""

    model_config = ConfigDict(extra="forbid")

    n: int = Field(20000, ge=1)
    d: int = Field(16, ge=1)
    components: int = Field(8, ge=1)
    distance: Literal["euclidean", "cosine"] = "euclidean"
    seed: int = 0


class WorkloadSettings(BaseModel):
    """Protocolo de geração da carga de trabalho."""

    model_config = ConfigDict(extra="forbid")

    queries: int = Field(500, ge=1)
    targets: int = Field(40, ge=1)
    max_fraction: float = Field(0.01, gt=0.0, le=1.0)
    split: List[float] = Field(default_factory=lambda: [0.8, 0.1, 0.1], min_length=3, max_length=3)
    eval_thresholds: int = Field(3, ge=1)
    noise_std: float = Field(0.0, ge=0.0)
    train_fraction: float = Field(1.0, gt=0.0, le=1.0)
    t_max_mode: Literal["fixed", "observed"] = "fixed"
    t_max: Optional[float] = Field(None, gt=0.0)
    verify_labels: bool = True
    seed: int = 1


class UpdateSettings(BaseModel):
    """Política de atualização e treino incremental."""

    model_config = ConfigDict(extra="forbid")

    delta_u: float = Field(20.0, ge=0.0)
    patience: int = Field(3, ge=1)
    max_epochs: int = Field(100, ge=0)
    batch_records: int = Field(5, ge=1)
    steps: int = Field(20, ge=0)
    seed: int = 2


class RuntimeSettings(BaseModel):
    """Execução: paralelismo, logging, precisão do arquivo de modelo e avaliação."""

    model_config = ConfigDict(extra="forbid")

    threads: Optional[int] = Field(None, ge=1)
    log_level: str = "INFO"
    log_file: Optional[str] = None
    model_precision: Literal["float64", "float32"] = "float64"
    rs_fraction: float = Field(0.01, gt=0.0, le=1.0)
    monotonicity_queries: int = Field(200, ge=1)
    monotonicity_thresholds: int = Field(100, ge=2)
    seed: int = 3


class SelestSettings(BaseModel):
    """Configuração completa e validada de uma execução."""

    model_config = ConfigDict(extra="forbid")

    data: DataSettings = Field(default_factory=DataSettings)
    workload: WorkloadSettings = Field(default_factory=WorkloadSettings)
    model: HyperParams = Field(default_factory=HyperParams)
    training: TrainConfig = Field(default_factory=TrainConfig)
    updates: UpdateSettings = Field(default_factory=UpdateSettings)
    runtime: RuntimeSettings = Field(default_factory=RuntimeSettings)


# Configuração padrão
DEFAULT_CONFIG: Dict[str, Any] = SelestSettings().model_dump()

# Presets: "full" mantém as larguras padrão; "desk" encolhe as redes
PRESETS: Dict[str, Dict[str, Any]] = {
    "full": {},
    "desk": {
        "model": {
            "tau_hidden": [128, 64],
            "m_hidden": [128, 64],
            "ae_hidden": [64],
            "z_dim": 16,
            "h_dim": 32,
            "learning_rate": 1e-3,
            "batch_size": 256,
        },
        "training": {
            "max_epochs": 200,
            "pretrain_epochs": 20,
        },
    },
}

# Singleton para a configuração
_config_instance: Optional[Dict[str, Any]] = None


def _deep_merge(base: Dict[str, Any], extra: Mapping[str, Any]) -> Dict[str, Any]:
    """Mescla recursivamente `extra` sobre `base` (retorna um novo dicionário)."""
    merged = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(config_path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """
    Carrega as configurações do arquivo especificado.

    Chaves ausentes no arquivo são preenchidas a partir de DEFAULT_CONFIG.

    Args:
        config_path: Caminho para o arquivo JSON. Se None, retorna a configuração padrão.

    Returns:
        Dict[str, Any]: Dicionário com as configurações carregadas.

    Raises:
        FileNotFoundError: Se o caminho foi informado mas o arquivo não existe.
        ConfigurationError: Se o arquivo não for um JSON válido.
    """
    if config_path is None:
        return copy.deepcopy(DEFAULT_CONFIG)

    return _deep_merge(DEFAULT_CONFIG, _read_config_file(Path(config_path)))


def _read_config_file(config_path: Path) -> Dict[str, Any]:
    """Lê o JSON do arquivo de configuração, sem completar com os padrões."""
    if not config_path.exists():
        raise FileNotFoundError(f"Arquivo de configuração não encontrado: {config_path}")

    try:
        with open(config_path, "r", encoding="utf-8") as f:
            config = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Arquivo de configuração inválido: {e}") from e

    if not isinstance(config, dict):
        raise ConfigurationError("O arquivo de configuração precisa conter um objeto JSON")

    return config


def save_config(config: Union[Dict[str, Any], SelestSettings], config_path: Union[str, Path]) -> None:
    """
    Salva as configurações no arquivo especificado (escrita atômica).

    Args:
        config: Dicionário ou SelestSettings a ser salvo.
        config_path: Caminho do arquivo.
    """
    from selest.infrastructure.file_system import atomic_write_text

    if isinstance(config, SelestSettings):
        config = config.model_dump()
    atomic_write_text(Path(config_path), json.dumps(config, indent=4, sort_keys=True) + "\n")


def apply_overrides(config: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """
    Aplica overrides no formato "secao.chave" sobre um dicionário de configuração.

    Overrides com valor None são ignorados (flag não informada).

    Raises:
        ConfigurationError: Se a seção não existir.
    """
    result = copy.deepcopy(config)
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if not key or section not in result or not isinstance(result[section], dict):
            raise ConfigurationError(f"Override inválido: {dotted}")
        result[section][key] = value
    return result


def resolve_settings(config_path: Optional[Union[str, Path]] = None,
                     overrides: Optional[Mapping[str, Any]] = None,
                     preset: Optional[str] = None) -> SelestSettings:
    """
    Resolve a configuração completa: padrão < preset < arquivo < overrides.

    Args:
        config_path: Arquivo JSON opcional.
        overrides: Valores vindos de flags, no formato {"secao.chave": valor}.
        preset: Nome de um preset em PRESETS.

    Returns:
        SelestSettings: Configuração validada.

    Raises:
        ConfigurationError: Preset desconhecido ou valores inválidos.
    """
    config = copy.deepcopy(DEFAULT_CONFIG)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigurationError(f"Preset desconhecido: {preset}")
        config = _deep_merge(config, PRESETS[preset])
    if config_path is not None:
        config = _deep_merge(config, _read_config_file(Path(config_path)))
    if overrides:
        config = apply_overrides(config, overrides)

    try:
        return SelestSettings.model_validate(config)
    except ValidationError as e:
        raise ConfigurationError(f"Configuração inválida: {e}") from e


def get_config(config_path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """
    Retorna a instância singleton da configuração.

    Na primeira chamada carrega a configuração; chamadas seguintes retornam a
    mesma instância, a menos que config_path seja especificado.
    """
    global _config_instance

    if _config_instance is None or config_path is not None:
        _config_instance = load_config(config_path)

    return _config_instance


def set_config(settings: Union[Dict[str, Any], SelestSettings]) -> None:
    """Substitui a configuração singleton pela configuração resolvida da execução."""
    global _config_instance
    _config_instance = settings.model_dump() if isinstance(settings, SelestSettings) else copy.deepcopy(settings)


def get_log_level() -> int:
    """
    Retorna o nível de log configurado como um valor inteiro do módulo logging.

    Returns:
        int: Nível de log (logging.DEBUG, logging.INFO, etc.)
    """
    config = get_config()
    level_str = str(config.get("runtime", {}).get("log_level", "INFO")).upper()

    log_levels = {
        "DEBUG": logging.DEBUG,
        "INFO": logging.INFO,
        "WARNING": logging.WARNING,
        "ERROR": logging.ERROR,
        "CRITICAL": logging.CRITICAL,
    }

    return log_levels.get(level_str, logging.INFO)


def get_threads() -> Optional[int]:
    """
    Limite de paralelismo interno.

    A variável de ambiente SELEST_THREADS tem precedência sobre runtime.threads.

    Returns:
        Optional[int]: Número de workers, ou None para decidir pelo sistema.
    """
    env_value = os.environ.get(THREADS_ENV_VAR)
    if env_value:
        try:
            threads = int(env_value)
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV_VAR} precisa ser um inteiro, recebido '{env_value}'")
        if threads < 1:
            raise ConfigurationError(f"{THREADS_ENV_VAR} precisa ser positivo")
        return threads
    return get_config().get("runtime", {}).get("threads")
