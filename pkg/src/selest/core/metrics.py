"""
Métricas de erro, monotonicidade empírica e o estimador por amostragem aleatória (RS).
"""

import json
from dataclasses import dataclass
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Union

import numpy as np

from selest.core.exceptions import ConfigurationError, ShapeError
from selest.core.models import MetricReport, VectorDataset
from selest.core.oracle import distances_to
from selest.infrastructure.logging_config import get_logger

logger = get_logger(__name__)

CurveFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def compute_metrics(y: Sequence[float], y_hat: Sequence[float]) -> MetricReport:
    """
    Calcula MSE, MAE e MAPE.

    Pares com y = 0 ficam fora do MAPE e são contados em `mape_excluded`.

    Raises:
        ConfigurationError: Entrada vazia.
        ShapeError: Tamanhos diferentes.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.size == 0:
        raise ConfigurationError("compute_metrics exige pelo menos um par")
    if y.shape != y_hat.shape:
        raise ShapeError(f"y com {y.size} valores e ŷ com {y_hat.size}")

    diff = y_hat - y
    positive = y != 0.0
    excluded = int(y.size - np.count_nonzero(positive))
    if excluded:
        logger.warning(f"{excluded} pares com y = 0 excluídos do MAPE")
    mape = float(np.mean(np.abs(diff[positive] / y[positive]))) if np.any(positive) else 0.0
    return MetricReport(
        mse=float(np.mean(diff * diff)),
        mae=float(np.mean(np.abs(diff))),
        mape=mape,
        count=int(y.size),
        mape_excluded=excluded,
    )


def _curve_fn(estimator: Any) -> CurveFn:
    if hasattr(estimator, "estimate_curve"):
        return estimator.estimate_curve
    if callable(estimator):
        return estimator
    raise ConfigurationError("O estimador precisa ser chamável ou expor estimate_curve(x, ts)")


def empirical_monotonicity(estimator: Union[CurveFn, Any], queries: np.ndarray,
                           thresholds_per_query: int = 100, seed: int = 0,
                           t_max: Optional[float] = None) -> float:
    """
    Percentual de pares de limiares (t ≤ t') com estimativa(t) ≤ estimativa(t'), médio sobre as consultas.

    Para cada consulta são sorteados `thresholds_per_query` limiares uniformes em
    [0, t_max] e todos os C(m, 2) pares são verificados. Empates contam como consistentes.

    Args:
        estimator: Objeto com `estimate_curve(x, ts)` ou função (x, ts) -> estimativas.
        queries: Objetos de consulta (Q, d).
        thresholds_per_query: Limiares por consulta (m >= 2).
        seed: Semente do sorteio.
        t_max: Maior limiar; padrão é `estimator.t_max`.

    Returns:
        float: Percentual em [0, 100].
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if thresholds_per_query < 2:
        raise ConfigurationError("São necessários pelo menos 2 limiares por consulta")
    if queries.shape[0] == 0:
        raise ConfigurationError("empirical_monotonicity exige pelo menos uma consulta")
    if t_max is None:
        t_max = getattr(estimator, "t_max", None)
        if t_max is None:
            raise ConfigurationError("t_max não informado")
    curve = _curve_fn(estimator)

    rng = np.random.default_rng(seed)
    m = thresholds_per_query
    upper = np.triu(np.ones((m, m), dtype=bool), k=1)
    pairs = m * (m - 1) // 2
    scores = []
    for x in queries:
        ts = np.sort(rng.uniform(0.0, t_max, size=m))
        est = np.asarray(curve(x, ts), dtype=np.float64)
        consistent = np.count_nonzero((est[None, :] >= est[:, None]) & upper)
        scores.append(consistent / pairs)
    result = 100.0 * float(np.mean(scores))
    logger.debug(f"Monotonicidade empírica: {result:.4f}% sobre {queries.shape[0]} consultas")
    return result


@dataclass
class RsBaseline:
    """
    Amostra uniforme fixa de linhas do dataset.

    Attributes:
        sample_indices: Posições das linhas amostradas (ordenadas).
        sample_fraction: Tamanho da amostra dividido por n.
        seed: Semente do sorteio.
    """

    sample_indices: np.ndarray
    sample_fraction: float
    seed: int = 0


def build_rs_baseline(D: VectorDataset, fraction: float, seed: int = 0) -> RsBaseline:
    """
    Sorteia a amostra do baseline RS (pelo menos uma linha).

    Raises:
        ConfigurationError: fraction fora de (0, 1] ou dataset vazio.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigurationError(f"Fração de amostragem fora de (0, 1]: {fraction}")
    if D.n == 0:
        raise ConfigurationError("Não é possível amostrar um dataset vazio")
    size = max(1, int(round(fraction * D.n)))
    rng = np.random.default_rng(seed)
    indices = np.sort(rng.choice(D.n, size=size, replace=False))
    return RsBaseline(sample_indices=indices, sample_fraction=size / D.n, seed=seed)


def rs_estimate(baseline: RsBaseline, D: VectorDataset, x: np.ndarray, t: float) -> float:
    """Contagem na amostra com dist ≤ t, escalada por 1/sample_fraction."""
    d = distances_to(D.rows[baseline.sample_indices], x, D.distance_kind)
    return float(np.count_nonzero(d <= t)) / baseline.sample_fraction


class RsEstimator:
    """Adaptador do baseline RS com a mesma interface de estimativa do modelo."""

    def __init__(self, baseline: RsBaseline, dataset: VectorDataset, t_max: float):
        self.baseline = baseline
        self.dataset = dataset
        self.t_max = t_max
        self._sample = dataset.rows[baseline.sample_indices]

    def estimate(self, x: np.ndarray, t: float) -> float:
        return rs_estimate(self.baseline, self.dataset, x, t)

    def estimate_curve(self, x: np.ndarray, ts: np.ndarray) -> np.ndarray:
        d = np.sort(distances_to(self._sample, x, self.dataset.distance_kind))
        counts = np.searchsorted(d, np.asarray(ts, dtype=np.float64), side="right")
        return counts / self.baseline.sample_fraction

    def estimate_batch(self, X: np.ndarray, t: np.ndarray) -> np.ndarray:
        return np.array([self.estimate(x, ti) for x, ti in zip(np.atleast_2d(X), np.asarray(t))])


def reports_to_dict(reports: Mapping[str, MetricReport],
                    monotonicity: Optional[Mapping[str, float]] = None) -> Dict[str, Any]:
    """Relatório de vários estimadores como dicionário serializável."""
    out: Dict[str, Any] = {}
    for name, report in reports.items():
        entry = report.to_dict()
        if monotonicity and name in monotonicity:
            entry["monotonicity"] = monotonicity[name]
        out[name] = entry
    return out


def reports_to_json(reports: Mapping[str, MetricReport],
                    monotonicity: Optional[Mapping[str, float]] = None) -> str:
    return json.dumps(reports_to_dict(reports, monotonicity), indent=2, sort_keys=True)


def format_report_table(reports: Mapping[str, MetricReport],
                        monotonicity: Optional[Mapping[str, float]] = None) -> str:
    """
    Tabela de texto alinhada, uma linha por estimador.

    Example:
        ```
        estimator          mse          mae     mape  count  monotonicity
        selnet        123.4567       8.1234   0.4321    150      100.0000
        ```
    """
    headers = ["estimator", "mse", "mae", "mape", "count", "monotonicity"]
    rows = []
    for name, report in reports.items():
        mono = monotonicity.get(name) if monotonicity else None
        rows.append([
            name,
            f"{report.mse:.4f}",
            f"{report.mae:.4f}",
            f"{report.mape:.4f}",
            str(report.count),
            "-" if mono is None else f"{mono:.4f}",
        ])
    widths = [max(len(headers[i]), *(len(row[i]) for row in rows)) if rows else len(headers[i])
              for i in range(len(headers))]
    lines = ["  ".join(h.ljust(widths[0]) if i == 0 else h.rjust(widths[i]) for i, h in enumerate(headers))]
    for row in rows:
        lines.append("  ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(row)))
    return "\n".join(lines)
