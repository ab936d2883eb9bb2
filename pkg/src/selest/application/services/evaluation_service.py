"""
Serviço de avaliação do Selest.

Compara o modelo com o baseline de amostragem aleatória (RS) numa divisão da
carga de trabalho e mede a monotonicidade empírica de ambos.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from selest.core.estimator import SelNetModel
from selest.core.metrics import (
    RsEstimator,
    build_rs_baseline,
    compute_metrics,
    empirical_monotonicity,
    format_report_table,
    reports_to_dict,
)
from selest.core.models import MetricReport, VectorDataset, Workload
from selest.infrastructure.logging_config import get_logger
from selest.utils.helpers import measure_time

logger = get_logger(__name__)


@dataclass
class EvaluationReport:
    """Métricas e monotonicidade por estimador."""

    split: str
    metrics: Dict[str, MetricReport] = field(default_factory=dict)
    monotonicity: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"split": self.split, "estimators": reports_to_dict(self.metrics, self.monotonicity)}

    def to_table(self) -> str:
        return format_report_table(self.metrics, self.monotonicity)


class EvaluationService:
    """Avaliação de estimadores sobre cargas rotuladas."""

    def __init__(self):
        logger.debug("EvaluationService inicializado")

    @staticmethod
    def monotonicity_objects(workload: Workload, split: str, count: int,
                             dataset: Optional[VectorDataset] = None, seed: int = 0) -> np.ndarray:
        """
        Objetos de consulta para a medida de monotonicidade.

        Usa os objetos distintos da divisão; se forem menos que `count` e houver
        dataset, completa com linhas sorteadas dele.
        """
        X, _, _, _ = workload.arrays(split)
        objects = np.unique(X, axis=0)[:count]
        if objects.shape[0] < count and dataset is not None:
            rng = np.random.default_rng(seed)
            extra = dataset.rows[rng.choice(dataset.n, size=min(count - objects.shape[0], dataset.n), replace=False)]
            objects = np.vstack([objects, extra])
        return objects

    @measure_time
    def evaluate(self, model: SelNetModel, workload: Workload, split: str = "test",
                 dataset: Optional[VectorDataset] = None, rs_fraction: float = 0.01, rs_seed: int = 0,
                 monotonicity_queries: int = 200, monotonicity_thresholds: int = 100,
                 seed: int = 0) -> EvaluationReport:
        """
        Avalia o modelo (e o RS, se houver dataset) numa divisão.

        Args:
            model: Modelo treinado.
            workload: Carga rotulada.
            split: Divisão avaliada.
            dataset: Dataset para o baseline RS e para completar os objetos de monotonicidade.
            rs_fraction: Fração amostrada pelo RS.
            rs_seed: Semente do RS.
            monotonicity_queries: Objetos de consulta da medida de monotonicidade.
            monotonicity_thresholds: Limiares por objeto.
            seed: Semente dos limiares sorteados.

        Returns:
            EvaluationReport: Relatório com "selnet" e, se houver dataset, "rs".
        """
        X, t, y, _ = workload.arrays(split)
        report = EvaluationReport(split=split)
        objects = self.monotonicity_objects(workload, split, monotonicity_queries, dataset, seed)

        report.metrics["selnet"] = compute_metrics(y, model.estimate_batch(X, t))
        report.monotonicity["selnet"] = empirical_monotonicity(
            model, objects, monotonicity_thresholds, seed=seed
        )

        if dataset is not None:
            rs = RsEstimator(build_rs_baseline(dataset, rs_fraction, rs_seed), dataset, model.t_max)
            report.metrics["rs"] = compute_metrics(y, rs.estimate_batch(X, t))
            report.monotonicity["rs"] = empirical_monotonicity(rs, objects, monotonicity_thresholds, seed=seed)

        for name, metrics in report.metrics.items():
            logger.info(
                f"{name} ({split}): MSE {metrics.mse:.4f}, MAE {metrics.mae:.4f}, MAPE {metrics.mape:.4f}, "
                f"monotonicidade {report.monotonicity[name]:.2f}%"
            )
        return report
