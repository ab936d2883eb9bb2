"""
Escrita atômica de arquivos.

Toda saída do Selest (datasets, cargas, modelos, relatórios) passa por aqui:
o conteúdo é escrito num arquivo temporário no mesmo diretório e depois
renomeado sobre o destino, de modo que nunca fica um arquivo parcial.
"""

import os
import tempfile
from pathlib import Path
from typing import Union

from selest.infrastructure.logging_config import get_logger

logger = get_logger(__name__)


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> Path:
    """
    Escreve bytes no caminho de forma atômica.

    Args:
        path: Caminho de destino (diretórios pais são criados).
        data: Conteúdo a ser escrito.

    Returns:
        Path: O caminho escrito.

    Raises:
        IOError: Se a escrita ou a renomeação falhar.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except Exception as e:
        logger.error(f"Erro ao escrever {path}: {str(e)}")
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise

    logger.debug(f"Arquivo escrito: {path} ({len(data)} bytes)")
    return path


def atomic_write_text(path: Union[str, Path], text: str, encoding: str = "utf-8") -> Path:
    """Escreve texto no caminho de forma atômica."""
    return atomic_write_bytes(path, text.encode(encoding))
