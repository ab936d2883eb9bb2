"""
Persistência do modelo no formato SELN.

Layout (little-endian):
    magic "SELN" | versão u32 | tamanho do payload u64 | payload | CRC32 u32

O payload contém os hiperparâmetros (JSON com prefixo de tamanho), K, L,
z_dim, h_dim, d e o código de precisão, o layout de partição e os tensores na
ordem de `SelNetModel.parameters()`. O CRC32 cobre tudo que vem antes dele.
"""

import struct
import zlib
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from selest.core.estimator import SelNetModel
from selest.core.exceptions import (
    ChecksumError,
    ConfigurationError,
    FileFormatError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from selest.core.models import DISTANCE_KINDS, BallRegion, Cluster, HyperParams, PartitionLayout
from selest.infrastructure.file_system import atomic_write_bytes
from selest.infrastructure.logging_config import get_logger

logger = get_logger(__name__)

MODEL_MAGIC = b"SELN"
MODEL_FORMAT_VERSION = 1

_PREFIX = struct.Struct("<4sIQ")
_CRC = struct.Struct("<I")
_DIMS = struct.Struct("<IIIIIB")
_LAYOUT_HEADER = struct.Struct("<BdBII")

PRECISIONS = {"float64": (0, "<f8"), "float32": (1, "<f4")}
LAYOUT_KINDS = ("metric", "random")

PathLike = Union[str, Path]


class _Writer:
    def __init__(self):
        self._parts: List[bytes] = []

    def pack(self, fmt: str, *values) -> None:
        self._parts.append(struct.pack(fmt, *values))

    def raw(self, data: bytes) -> None:
        self._parts.append(data)

    def array(self, values: np.ndarray, dtype: str) -> None:
        self._parts.append(np.ascontiguousarray(values, dtype=dtype).tobytes())

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class _Reader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def _take(self, size: int) -> bytes:
        if self._pos + size > len(self._data):
            raise TruncatedFileError("Payload do modelo termina antes do esperado")
        chunk = self._data[self._pos:self._pos + size]
        self._pos += size
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self._take(struct.calcsize(fmt)))

    def raw(self, size: int) -> bytes:
        return self._take(size)

    def array(self, count: int, dtype: str) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self._take(count * itemsize), dtype=dtype).astype(
            np.int64 if np.dtype(dtype).kind == "i" else np.float64
        )

    @property
    def exhausted(self) -> bool:
        return self._pos == len(self._data)


def _write_layout(w: _Writer, layout: PartitionLayout) -> None:
    w.raw(_LAYOUT_HEADER.pack(
        LAYOUT_KINDS.index(layout.kind),
        layout.ratio,
        DISTANCE_KINDS.index(layout.distance_kind),
        layout.requested_k,
        layout.k,
    ))
    for cluster in layout.clusters:
        w.pack("<Q", cluster.size)
        w.array(cluster.member_indices, "<i8")
        w.pack("<I", len(cluster.balls))
        for ball in cluster.balls:
            w.pack("<Qd", ball.size, ball.radius)
            w.array(ball.member_indices, "<i8")
            w.array(ball.center, "<f8")


def _read_layout(r: _Reader, d: int) -> PartitionLayout:
    kind_code, ratio, dist_code, requested_k, k = r.unpack(_LAYOUT_HEADER.format)
    if kind_code >= len(LAYOUT_KINDS) or dist_code >= len(DISTANCE_KINDS):
        raise FileFormatError("Layout com códigos inválidos")
    clusters = []
    for _ in range(k):
        (size,) = r.unpack("<Q")
        members = r.array(size, "<i8")
        (n_balls,) = r.unpack("<I")
        balls = []
        for _ in range(n_balls):
            ball_size, radius = r.unpack("<Qd")
            ball_members = r.array(ball_size, "<i8")
            center = r.array(d, "<f8")
            balls.append(BallRegion(ball_members, center, radius))
        clusters.append(Cluster(members, balls))
    return PartitionLayout(
        clusters=clusters,
        kind=LAYOUT_KINDS[kind_code],
        ratio=ratio,
        distance_kind=DISTANCE_KINDS[dist_code],
        requested_k=requested_k,
    )


def encode_model(model: SelNetModel, precision: str = "float64") -> bytes:
    """
    Serializa o modelo.

    Args:
        model: Modelo a ser serializado.
        precision: "float64" (padrão, ida e volta exata) ou "float32".
    """
    if precision not in PRECISIONS:
        raise ConfigurationError(f"Precisão desconhecida: {precision}")
    code, dtype = PRECISIONS[precision]

    w = _Writer()
    hyper_json = model.hyper.model_dump_json().encode("utf-8")
    w.pack("<I", len(hyper_json))
    w.raw(hyper_json)
    w.raw(_DIMS.pack(model.K, model.L, model.ae.z_dim, model.hyper.h_dim, model.d, code))
    _write_layout(w, model.layout)

    params = model.parameters()
    w.pack("<I", len(params))
    for name, value in params.items():
        encoded_name = name.encode("utf-8")
        w.pack("<H", len(encoded_name))
        w.raw(encoded_name)
        w.pack("<B", value.ndim)
        w.pack(f"<{value.ndim}I", *value.shape)
        w.array(value, dtype)

    payload = w.getvalue()
    head = _PREFIX.pack(MODEL_MAGIC, MODEL_FORMAT_VERSION, len(payload)) + payload
    return head + _CRC.pack(zlib.crc32(head) & 0xFFFFFFFF)


def decode_model(data: bytes) -> SelNetModel:
    """
    Desserializa um modelo SELN.

    A ordem das verificações é magic, versão, tamanho e CRC32; só depois o payload é interpretado.

    Raises:
        FileFormatError: Magic inválido ou payload inconsistente.
        UnsupportedVersionError: Versão do formato diferente da suportada.
        TruncatedFileError: Arquivo menor que o declarado.
        ChecksumError: CRC32 não confere.
    """
    if len(data) < _PREFIX.size:
        raise TruncatedFileError(f"Arquivo de modelo com apenas {len(data)} bytes")
    magic, version, length = _PREFIX.unpack_from(data, 0)
    if magic != MODEL_MAGIC:
        raise FileFormatError(f"Magic inválido: {magic!r}")
    if version != MODEL_FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"Formato de modelo versão {version} não suportado (esperada {MODEL_FORMAT_VERSION})"
        )
    expected = _PREFIX.size + length + _CRC.size
    if len(data) < expected:
        raise TruncatedFileError(f"Arquivo de modelo truncado: {len(data)} de {expected} bytes")
    if len(data) > expected:
        raise FileFormatError(f"Arquivo de modelo com {len(data) - expected} bytes extras")
    head = data[:_PREFIX.size + length]
    (stored_crc,) = _CRC.unpack_from(data, len(head))
    if zlib.crc32(head) & 0xFFFFFFFF != stored_crc:
        raise ChecksumError("CRC32 do modelo não confere")

    r = _Reader(data[_PREFIX.size:_PREFIX.size + length])
    (hyper_len,) = r.unpack("<I")
    try:
        hyper = HyperParams.model_validate_json(r.raw(hyper_len))
    except ValueError as e:
        raise FileFormatError(f"Hiperparâmetros inválidos no arquivo de modelo: {e}") from e
    K, L, z_dim, h_dim, d, code = r.unpack(_DIMS.format)
    if L != hyper.L or z_dim != hyper.z_dim or h_dim != hyper.h_dim:
        raise FileFormatError("Dimensões do cabeçalho não conferem com os hiperparâmetros")
    dtype = next((dt for c, dt in PRECISIONS.values() if c == code), None)
    if dtype is None:
        raise FileFormatError(f"Código de precisão inválido: {code}")
    layout = _read_layout(r, d)
    if layout.k != K:
        raise FileFormatError(f"Layout com {layout.k} clusters, cabeçalho declara K={K}")

    model = SelNetModel.build(hyper, d, layout)
    params = model.parameters()
    (count,) = r.unpack("<I")
    if count != len(params):
        raise FileFormatError(f"Arquivo com {count} tensores, modelo espera {len(params)}")
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.raw(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        if name not in params or params[name].shape != tuple(shape):
            raise FileFormatError(f"Tensor inesperado no arquivo de modelo: {name} {shape}")
        params[name][...] = r.array(int(np.prod(shape, dtype=np.int64)), dtype).reshape(shape)
    if not r.exhausted:
        raise FileFormatError("Bytes sobrando no payload do modelo")
    model.bump_version()
    return model


def save_model(model: SelNetModel, path: PathLike, precision: str = "float64") -> Path:
    """Grava o modelo de forma atômica."""
    path = Path(path)
    atomic_write_bytes(path, encode_model(model, precision))
    logger.info(f"Modelo salvo em {path} (K={model.K}, L={model.L}, {model.parameter_count()} parâmetros)")
    return path


def load_model(path: PathLike) -> SelNetModel:
    """Carrega um modelo SELN."""
    path = Path(path)
    model = decode_model(path.read_bytes())
    logger.info(f"Modelo carregado de {path} (K={model.K}, L={model.L})")
    return model
