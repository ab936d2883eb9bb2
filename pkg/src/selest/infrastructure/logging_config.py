"""
Configuração de logging do Selest.

Um handler de console (stderr) e, opcionalmente, um arquivo rotativo. Quando
nível e arquivo não são informados, vêm da seção runtime da configuração. Um
arquivo de log com caminho relativo fica dentro do diretório de saída da
execução.

Avisos do Python (por exemplo overflow do numpy durante o treino) passam pelo
logger "py.warnings".

Exemplo de uso:
    ```python
    from selest.infrastructure.logging_config import setup_logging, get_logger

    setup_logging("DEBUG", "selest.log", base_dir="run")
    logger = get_logger(__name__)
    ```
"""

import logging
import logging.handlers
from pathlib import Path
from typing import Optional, Union

from selest.config import get_config, get_log_level

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
LOG_FILE_MAX_BYTES = 10 * 1024 * 1024
LOG_FILE_BACKUPS = 5

_configured = False


def _level_number(level: Union[int, str, None]) -> int:
    if level is None:
        return get_log_level()
    if isinstance(level, int):
        return level
    number = logging.getLevelName(level.upper())
    return number if isinstance(number, int) else logging.INFO


def _log_file_path(log_file: Union[str, Path], base_dir: Optional[Union[str, Path]]) -> Path:
    path = Path(log_file)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def setup_logging(log_level: Optional[Union[int, str]] = None,
                  log_file: Optional[Union[str, Path]] = None,
                  console: bool = True,
                  base_dir: Optional[Union[str, Path]] = None) -> logging.Logger:
    """
    Configura o logger raiz. Chamadas repetidas substituem os handlers anteriores.

    Args:
        log_level: Nível (inteiro ou nome). Se None, vem da configuração; nomes desconhecidos viram INFO.
        log_file: Arquivo de log. Se None, vem de runtime.log_file (sem arquivo quando ausente).
        console: Se True, adiciona um handler para stderr.
        base_dir: Diretório onde caminhos relativos de log_file são resolvidos.

    Returns:
        logging.Logger: O logger raiz.
    """
    global _configured

    level = _level_number(log_level)
    if log_file is None:
        log_file = get_config().get("runtime", {}).get("log_file")

    root = logging.getLogger()
    if _configured:
        for handler in list(root.handlers):
            root.removeHandler(handler)
            handler.close()

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)
    handlers = []
    if console:
        handlers.append(logging.StreamHandler())
    if log_file:
        handlers.append(logging.handlers.RotatingFileHandler(
            _log_file_path(log_file, base_dir),
            maxBytes=LOG_FILE_MAX_BYTES,
            backupCount=LOG_FILE_BACKUPS,
            encoding="utf-8",
        ))
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)

    root.setLevel(level)
    logging.captureWarnings(True)
    _configured = True
    root.debug(f"Logging configurado: nível {logging.getLevelName(level)}, arquivo {log_file or '-'}")
    return root


def get_logger(name: str) -> logging.Logger:
    """Logger do módulo; configura o logger raiz na primeira chamada."""
    if not _configured:
        setup_logging()
    return logging.getLogger(name)
