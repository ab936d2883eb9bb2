"""
Serviço de atualização da base de dados do Selest.

Este módulo implementa o UpdateService, responsável por aplicar inserções e
remoções ao dataset (com o layout de partição e a CountTree atualizados), medir
a deriva do MAE de validação após re-rotular as consultas e disparar o treino
incremental a partir do modelo atual quando a deriva passa de δ_U.
"""

import copy
from concurrent.futures import Future
from dataclasses import dataclass, field
from threading import Lock
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from selest.application.services.workload_service import WorkloadService, dataset_hash
from selest.core.estimator import SelNetModel
from selest.core.exceptions import RowNotFoundError, ShapeError
from selest.core.metrics import compute_metrics, empirical_monotonicity
from selest.core.models import (
    DriftReport,
    MetricReport,
    PartitionLayout,
    TrainConfig,
    UpdateOp,
    UpdateSummary,
    VectorDataset,
    Workload,
)
from selest.core.oracle import CountTree
from selest.core.partition import gate_batch, insert_rows, remove_rows
from selest.core.trainer import TrainResult, train
from selest.infrastructure.concurrency import ConcurrencyService
from selest.infrastructure.logging_config import get_logger
from selest.utils.helpers import measure_time

logger = get_logger(__name__)

INSERT_NOISE_STD = 0.05


@dataclass
class UpdateResult:
    """Dataset, layout e árvore após um lote de atualizações."""

    dataset: VectorDataset
    layout: PartitionLayout
    tree: CountTree
    summary: UpdateSummary


@dataclass
class StreamStepReport:
    """Resultado de um passo do stream de atualizações."""

    step: int
    op: str
    records: int
    n: int
    drift: DriftReport
    retrained: bool
    validation_mae: float
    test: MetricReport
    monotonicity: float
    epochs: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "step": self.step,
            "op": self.op,
            "records": self.records,
            "n": self.n,
            "mae_before": self.drift.mae_before,
            "mae_after_relabel": self.drift.mae_after_relabel,
            "delta_u": self.drift.delta_u,
            "retrained": self.retrained,
            "epochs": self.epochs,
            "validation_mae": self.validation_mae,
            "test_mse": self.test.mse,
            "test_mae": self.test.mae,
            "test_mape": self.test.mape,
            "monotonicity": self.monotonicity,
        }


@dataclass
class StreamResult:
    """Estado final de um stream e os relatórios por passo."""

    model: SelNetModel
    dataset: VectorDataset
    workload: Workload
    reports: List[StreamStepReport] = field(default_factory=list)


def generate_update_stream(D: VectorDataset, steps: int, batch: int = 5, seed: int = 0,
                           noise_std: float = INSERT_NOISE_STD) -> List[UpdateOp]:
    """
    Gera um stream alternando inserções e remoções de `batch` linhas.

    Inserções são linhas existentes perturbadas por ruído gaussiano; remoções
    sorteiam posições válidas no dataset daquele momento.
    """
    rng = np.random.default_rng(seed)
    rows = D.rows.copy()
    ops: List[UpdateOp] = []
    for step in range(steps):
        if step % 2 == 0 or rows.shape[0] <= batch:
            base = rows[rng.integers(0, rows.shape[0], size=batch)]
            vectors = (base + rng.normal(0.0, noise_std, size=base.shape)).astype(np.float32).astype(np.float64)
            ops.append(UpdateOp("insert", vectors=vectors))
            rows = np.vstack([rows, vectors])
        else:
            ids = np.sort(rng.choice(rows.shape[0], size=batch, replace=False))
            ops.append(UpdateOp("delete", ids=ids.tolist()))
            rows = np.delete(rows, ids, axis=0)
    return ops


class UpdateService:
    """
    Serviço de atualizações e treino incremental.

    O modelo corrente pode ser consultado enquanto um retreino roda em
    background sobre uma cópia; `swap_model` troca o modelo de forma atômica.
    """

    def __init__(self, workload_service: Optional[WorkloadService] = None,
                 concurrency_service: Optional[ConcurrencyService] = None,
                 model: Optional[SelNetModel] = None):
        """
        Inicializa o serviço.

        Args:
            workload_service: Serviço de re-rotulagem.
            concurrency_service: Pool para re-rotulagem e retreino em background.
            model: Modelo corrente (opcional).
        """
        self.concurrency_service = concurrency_service or ConcurrencyService()
        self.workload_service = workload_service or WorkloadService(self.concurrency_service)
        self._model = model
        self._lock = Lock()
        logger.debug("UpdateService inicializado")

    @property
    def current_model(self) -> Optional[SelNetModel]:
        with self._lock:
            return self._model

    def swap_model(self, model: SelNetModel) -> None:
        with self._lock:
            self._model = model
        logger.info("Modelo corrente substituído")

    @measure_time
    def apply_update(self, D: VectorDataset, layout: PartitionLayout, ops: Sequence[UpdateOp]) -> UpdateResult:
        """
        Aplica um lote de operações.

        Ids de remoção são posições no dataset do momento da operação. Se
        qualquer operação falhar, nada é alterado.

        Raises:
            RowNotFoundError: Remoção de posição inexistente ou repetida.
            ShapeError: Vetores inseridos com dimensão errada.
        """
        rows = D.rows
        new_layout = layout
        inserted = deleted = 0
        for op in ops:
            if op.kind == "insert":
                vectors = op.vectors
                if vectors.shape[1] != D.d:
                    raise ShapeError(f"Vetores inseridos com dimensão {vectors.shape[1]}, dataset com {D.d}")
                new_layout = insert_rows(new_layout, vectors, first_index=rows.shape[0])
                rows = np.vstack([rows, vectors])
                inserted += vectors.shape[0]
            else:
                ids = np.asarray(op.ids, dtype=np.int64)
                missing = [int(i) for i in ids if i < 0 or i >= rows.shape[0]]
                if missing or np.unique(ids).size != ids.size:
                    bad = missing[0] if missing else int(ids[0])
                    logger.error(f"Remoção de linha inexistente: {bad}; lote descartado")
                    raise RowNotFoundError(f"Linha {bad} não existe no dataset atual")
                new_layout = remove_rows(new_layout, ids)
                rows = np.delete(rows, ids, axis=0)
                deleted += ids.size

        dataset = VectorDataset(rows, distance_kind=D.distance_kind, normalized=D.normalized)
        summary = UpdateSummary(
            inserted=inserted,
            deleted=deleted,
            n_before=D.n,
            n_after=dataset.n,
            dataset_hash=dataset_hash(dataset),
        )
        logger.info(f"Atualização aplicada: +{inserted} -{deleted} linhas, n={D.n} -> {dataset.n}")
        return UpdateResult(dataset=dataset, layout=new_layout, tree=CountTree(dataset), summary=summary)

    def check_drift(self, model: SelNetModel, workload: Workload, D_updated: VectorDataset, delta_u: float,
                    relabeled: Optional[Workload] = None,
                    layout: Optional[PartitionLayout] = None) -> DriftReport:
        """
        Mede a deriva do MAE de validação após a atualização.

        Args:
            model: Modelo atual.
            workload: Carga com os rótulos antigos.
            D_updated: Dataset atualizado.
            delta_u: Limite de deriva δ_U.
            relabeled: Carga já re-rotulada sobre D_updated (evita recontar).
            layout: Layout atualizado para os gates das estimativas novas
                    (padrão: o layout do modelo).

        Returns:
            DriftReport: retrain é verdadeiro sse |MAE novo − MAE antigo| > δ_U.
        """
        if relabeled is None:
            relabeled = self.workload_service.relabel(D_updated, workload, layout)
        X, t, y_old, _ = workload.arrays("val")
        _, _, y_new, _ = relabeled.arrays("val")

        mae_before = compute_metrics(y_old, model.estimate_batch(X, t)).mae
        after_layout = layout or model.layout
        est_after = model.forward(X, t, gate_batch(after_layout, X, t)).est
        mae_after = compute_metrics(y_new, est_after).mae
        report = DriftReport(
            mae_before=mae_before,
            mae_after_relabel=mae_after,
            delta_u=delta_u,
            retrain=abs(mae_after - mae_before) > delta_u,
        )
        logger.info(
            f"Deriva: MAE {mae_before:.4f} -> {mae_after:.4f} (δ_U={delta_u}), retreinar={report.retrain}"
        )
        return report

    @staticmethod
    def incremental_config(max_epochs: int = 100, patience: int = 3, seed: int = 0) -> TrainConfig:
        """Configuração do treino incremental: sem pré-treino local, paciência sobre o MAE."""
        return TrainConfig(
            max_epochs=max_epochs,
            patience=patience,
            pretrain_epochs=0,
            monitor="mae",
            strategy="pretrain_joint",
            seed=seed,
        )

    @measure_time
    def incremental_train(self, model: SelNetModel, workload_relabeled: Workload,
                          config: Optional[TrainConfig] = None) -> TrainResult:
        """
        Continua o treino a partir do modelo atual sobre a carga re-rotulada.

        O snapshot devolvido tem MAE de validação menor ou igual ao do início.
        """
        config = config or self.incremental_config()
        logger.info(f"Treino incremental: até {config.max_epochs} épocas, paciência {config.patience}")
        return train(model, workload_relabeled, config, monitor="mae")

    def retrain_in_background(self, model: SelNetModel, workload_relabeled: Workload,
                              config: Optional[TrainConfig] = None) -> Future:
        """
        Retreina uma cópia do modelo em background.

        O modelo original continua respondendo estimativas; ao terminar, a cópia
        treinada é instalada via `swap_model`. O Future resolve para o TrainResult.
        """
        candidate = copy.deepcopy(model)

        def task() -> TrainResult:
            result = self.incremental_train(candidate, workload_relabeled, config)
            self.swap_model(result.model)
            return result

        return self.concurrency_service.submit_background_task(task)

    @measure_time
    def run_stream(self, model: SelNetModel, D: VectorDataset, workload: Workload, ops: Sequence[UpdateOp],
                   delta_u: float = 20.0, config: Optional[TrainConfig] = None,
                   monotonicity_queries: int = 50, monotonicity_thresholds: int = 100,
                   seed: int = 0) -> StreamResult:
        """
        Processa um stream de operações, uma por passo.

        Em cada passo: aplica a operação, re-rotula a carga (com rótulos por
        cluster), mede a deriva, troca o layout do modelo, retreina se preciso e
        registra métricas de teste e a monotonicidade empírica.
        """
        result = StreamResult(model=model, dataset=D, workload=workload)
        for step, op in enumerate(ops, start=1):
            update = self.apply_update(result.dataset, model.layout, [op])
            relabeled = self.workload_service.relabel(update.dataset, result.workload, update.layout)
            drift = self.check_drift(model, result.workload, update.dataset, delta_u,
                                     relabeled=relabeled, layout=update.layout)
            model.replace_layout(update.layout)

            epochs = 0
            validation_mae = drift.mae_after_relabel
            if drift.retrain:
                trained = self.incremental_train(model, relabeled, config)
                epochs = len(trained.log) - 1
                validation_mae = trained.best_score

            X_test, t_test, y_test, _ = relabeled.arrays("test")
            test_report = compute_metrics(y_test, model.estimate_batch(X_test, t_test))
            objects = np.unique(X_test, axis=0)[:monotonicity_queries]
            monotonicity = empirical_monotonicity(model, objects, monotonicity_thresholds, seed=seed + step)

            report = StreamStepReport(
                step=step,
                op=op.kind,
                records=op.size,
                n=update.dataset.n,
                drift=drift,
                retrained=drift.retrain,
                validation_mae=validation_mae,
                test=test_report,
                monotonicity=monotonicity,
                epochs=epochs,
            )
            result.reports.append(report)
            result.dataset = update.dataset
            result.workload = relabeled
            logger.info(
                f"Passo {step} ({op.kind} {op.size}): n={update.dataset.n}, retreino={drift.retrain}, "
                f"MAE val={validation_mae:.4f}, MSE teste={test_report.mse:.4f}, monotonicidade={monotonicity:.2f}"
            )
        return result
