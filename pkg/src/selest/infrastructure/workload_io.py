"""
Arquivos JSONL do Selest: carga de trabalho, stream de atualizações, log de
treinamento e requisições de estimativa.

Carga de trabalho: a primeira linha é o cabeçalho {"type": "header", ...} com a
proveniência; cada linha seguinte é uma consulta
{"x": [...], "t": ..., "y": ..., "split": "train|val|test", "qid": ..., "per_cluster_y": [...]}.
"""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Tuple, Union

import numpy as np

from selest.core.exceptions import FileFormatError
from selest.core.models import LabeledQuery, UpdateOp, Workload
from selest.infrastructure.file_system import atomic_write_text
from selest.infrastructure.logging_config import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]

_SPLITS = ("train", "val", "test")


def _query_to_json(query: LabeledQuery) -> str:
    record: Dict[str, Any] = {
        "x": query.x.tolist(),
        "t": query.t,
        "y": query.y,
        "split": query.split,
        "qid": query.query_id,
    }
    if query.per_cluster_y is not None:
        record["per_cluster_y"] = query.per_cluster_y.tolist()
    return json.dumps(record)


def workload_to_jsonl(workload: Workload) -> str:
    header = {
        "type": "header",
        "provenance": workload.provenance,
        "split_fractions": list(workload.split_fractions),
        "seed": workload.seed,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for name in _SPLITS:
        lines.extend(_query_to_json(q) for q in workload.split(name))
    return "\n".join(lines) + "\n"


def save_workload(workload: Workload, path: PathLike) -> Path:
    """Grava a carga de trabalho de forma atômica."""
    path = Path(path)
    atomic_write_text(path, workload_to_jsonl(workload))
    logger.info(
        f"Carga salva em {path}: {len(workload.train)}/{len(workload.validation)}/{len(workload.test)} consultas"
    )
    return path


def _parse_json_line(line: str, lineno: int, source: str) -> Dict[str, Any]:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise FileFormatError(f"{source}:{lineno}: JSON inválido ({e.msg})") from e
    if not isinstance(record, dict):
        raise FileFormatError(f"{source}:{lineno}: esperado um objeto JSON")
    return record


def load_workload(path: PathLike) -> Workload:
    """
    Carrega uma carga de trabalho JSONL.

    Raises:
        FileFormatError: Cabeçalho ausente ou linhas mal formadas.
    """
    path = Path(path)
    lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not lines:
        raise FileFormatError(f"Arquivo de carga vazio: {path}")
    header = _parse_json_line(lines[0], 1, str(path))
    if header.get("type") != "header":
        raise FileFormatError(f"{path}: a primeira linha precisa ser o cabeçalho")

    splits: Dict[str, List[LabeledQuery]] = {name: [] for name in _SPLITS}
    for lineno, line in enumerate(lines[1:], start=2):
        record = _parse_json_line(line, lineno, str(path))
        try:
            split = record["split"]
            query = LabeledQuery(
                x=np.asarray(record["x"], dtype=np.float64),
                t=record["t"],
                y=record["y"],
                split=split,
                query_id=int(record.get("qid", 0)),
                per_cluster_y=record.get("per_cluster_y"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FileFormatError(f"{path}:{lineno}: consulta inválida ({e})") from e
        if split not in splits:
            raise FileFormatError(f"{path}:{lineno}: divisão desconhecida '{split}'")
        splits[split].append(query)

    return Workload(
        train=splits["train"],
        validation=splits["val"],
        test=splits["test"],
        split_fractions=tuple(header.get("split_fractions", (0.8, 0.1, 0.1))),
        seed=int(header.get("seed", 0)),
        provenance=dict(header.get("provenance", {})),
    )


def update_op_to_dict(op: UpdateOp) -> Dict[str, Any]:
    if op.kind == "insert":
        return {"op": "insert", "vectors": op.vectors.tolist()}
    return {"op": "delete", "ids": list(op.ids)}


def save_update_stream(ops: Iterable[UpdateOp], path: PathLike) -> Path:
    """Grava um stream de atualizações (uma operação por linha)."""
    text = "".join(json.dumps(update_op_to_dict(op)) + "\n" for op in ops)
    return atomic_write_text(Path(path), text)


def load_update_stream(path: PathLike) -> List[UpdateOp]:
    """
    Lê um stream de atualizações JSONL.

    Raises:
        FileFormatError: Linha mal formada ou operação desconhecida.
    """
    path = Path(path)
    ops = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        record = _parse_json_line(line, lineno, str(path))
        try:
            ops.append(UpdateOp(kind=record["op"], vectors=record.get("vectors"), ids=record.get("ids")))
        except (KeyError, TypeError, ValueError) as e:
            raise FileFormatError(f"{path}:{lineno}: operação inválida ({e})") from e
    return ops


def save_jsonl(records: Iterable[Dict[str, Any]], path: PathLike) -> Path:
    """Grava registros como JSONL (usado pelo log de treinamento e pelos relatórios de stream)."""
    text = "".join(json.dumps(record) + "\n" for record in records)
    return atomic_write_text(Path(path), text)


def parse_estimate_request(line: str, lineno: int = 1) -> Tuple[np.ndarray, float]:
    """
    Interpreta uma linha {"x": [...], "t": ...} de requisição de estimativa.

    Raises:
        FileFormatError: JSON inválido ou campos ausentes.
    """
    record = _parse_json_line(line, lineno, "entrada")
    try:
        x = np.asarray(record["x"], dtype=np.float64)
        t = float(record["t"])
    except (KeyError, TypeError, ValueError) as e:
        raise FileFormatError(f"entrada:{lineno}: requisição inválida ({e})") from e
    if x.ndim != 1:
        raise FileFormatError(f"entrada:{lineno}: 'x' precisa ser uma lista de números")
    return x, t
