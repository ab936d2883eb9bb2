"""
Leitura e escrita de datasets vetoriais.

Formato VECD (little-endian):
    magic "VECD" | versão u32 | n u64 | d u32 | distância u8 | normalizado u8 |
    n·d float32 linha a linha | CRC32 u32 de tudo que vem antes.

Também lê texto (um vetor por linha, separado por espaços) e `.fvecs`.
"""

import struct
import zlib
from pathlib import Path
from typing import Union

import numpy as np

from selest.core.exceptions import (
    ChecksumError,
    FileFormatError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from selest.core.models import DISTANCE_KINDS, VectorDataset
from selest.infrastructure.file_system import atomic_write_bytes
from selest.infrastructure.logging_config import get_logger

logger = get_logger(__name__)

DATASET_MAGIC = b"VECD"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sIQIBB")
_CRC = struct.Struct("<I")

PathLike = Union[str, Path]


def encode_dataset(dataset: VectorDataset) -> bytes:
    """Serializa o dataset no formato VECD."""
    header = _HEADER.pack(
        DATASET_MAGIC,
        DATASET_VERSION,
        dataset.n,
        dataset.d,
        DISTANCE_KINDS.index(dataset.distance_kind),
        int(dataset.normalized),
    )
    body = header + dataset.rows.astype("<f4").tobytes()
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def decode_dataset(data: bytes) -> VectorDataset:
    """
    Desserializa um dataset VECD.

    Raises:
        FileFormatError: Magic ou campos inválidos.
        UnsupportedVersionError: Versão diferente da suportada.
        TruncatedFileError: Arquivo menor que o declarado no cabeçalho.
        ChecksumError: CRC32 não confere.
    """
    if len(data) < _HEADER.size + _CRC.size:
        raise TruncatedFileError(f"Arquivo de dataset com apenas {len(data)} bytes")
    magic, version, n, d, kind_code, normalized = _HEADER.unpack_from(data, 0)
    if magic != DATASET_MAGIC:
        raise FileFormatError(f"Magic inválido: {magic!r}")
    if version != DATASET_VERSION:
        raise UnsupportedVersionError(f"Versão de dataset {version} não suportada (esperada {DATASET_VERSION})")
    expected = _HEADER.size + n * d * 4 + _CRC.size
    if len(data) < expected:
        raise TruncatedFileError(f"Arquivo de dataset truncado: {len(data)} de {expected} bytes")
    if len(data) > expected:
        raise FileFormatError(f"Arquivo de dataset com {len(data) - expected} bytes extras")
    body = data[:-_CRC.size]
    (stored_crc,) = _CRC.unpack_from(data, len(body))
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise ChecksumError("CRC32 do dataset não confere")
    if kind_code >= len(DISTANCE_KINDS):
        raise FileFormatError(f"Código de distância inválido: {kind_code}")

    rows = np.frombuffer(body, dtype="<f4", offset=_HEADER.size).reshape(n, d).astype(np.float64)
    return VectorDataset(rows, distance_kind=DISTANCE_KINDS[kind_code], normalized=bool(normalized))


def save_dataset(dataset: VectorDataset, path: PathLike) -> Path:
    """Grava o dataset de forma atômica."""
    path = Path(path)
    atomic_write_bytes(path, encode_dataset(dataset))
    logger.info(f"Dataset salvo em {path}: n={dataset.n}, d={dataset.d}, distância={dataset.distance_kind}")
    return path


def load_dataset(path: PathLike) -> VectorDataset:
    """Carrega um dataset VECD."""
    path = Path(path)
    dataset = decode_dataset(path.read_bytes())
    logger.info(f"Dataset carregado de {path}: n={dataset.n}, d={dataset.d}")
    return dataset


def load_text_vectors(path: PathLike, distance_kind: str = "euclidean", normalize: bool = False) -> VectorDataset:
    """
    Carrega vetores de um arquivo texto, um por linha.

    Raises:
        FileFormatError: Linhas com números de colunas diferentes ou valores inválidos.
    """
    try:
        rows = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except ValueError as e:
        raise FileFormatError(f"Arquivo texto inválido {path}: {e}") from e
    return VectorDataset(rows.astype(np.float32).astype(np.float64), distance_kind, normalized=normalize)


def read_fvecs(path: PathLike) -> np.ndarray:
    """
    Lê um arquivo `.fvecs`: cada vetor é um int32 com a dimensão seguido dos floats.

    Raises:
        FileFormatError: Dimensões não uniformes ou arquivo mal formado.
    """
    raw = np.fromfile(path, dtype="<i4")
    if raw.size == 0:
        return np.zeros((0, 0), dtype=np.float32)
    dim = int(raw[0])
    if dim <= 0 or raw.size % (dim + 1) != 0:
        raise FileFormatError(f"Arquivo fvecs mal formado: {path}")
    raw = raw.reshape(-1, dim + 1)
    if not np.all(raw[:, 0] == dim):
        raise FileFormatError(f"Vetores com dimensões diferentes em {path}")
    return raw[:, 1:].copy().view("<f4")


def load_fvecs(path: PathLike, distance_kind: str = "euclidean", normalize: bool = False) -> VectorDataset:
    """Carrega um `.fvecs` como VectorDataset."""
    rows = read_fvecs(path)
    logger.info(f"fvecs carregado de {path}: {rows.shape[0]} vetores de dimensão {rows.shape[1]}")
    return VectorDataset(rows.astype(np.float64), distance_kind, normalized=normalize)


def write_fvecs(rows: np.ndarray, path: PathLike) -> Path:
    """Grava vetores no formato `.fvecs`."""
    rows = np.ascontiguousarray(rows, dtype="<f4")
    n, d = rows.shape
    out = np.empty((n, d + 1), dtype="<i4")
    out[:, 0] = d
    out[:, 1:] = rows.view("<i4")
    path = Path(path)
    atomic_write_bytes(path, out.tobytes())
    return path
