"""
Laços de treinamento: pré-treino do autoencoder e treino do estimador.

O treino usa lotes embaralhados com semente fixa, o otimizador adaptativo de
`nnet`, gates pré-calculados e parada antecipada por paciência. O modelo
devolvido é sempre o snapshot com a melhor métrica de validação vista.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from selest.core.estimator import AutoEncoder, LossWeights, SelNetModel, TrainingBatch, loss_and_grads
from selest.core.exceptions import ConfigurationError
from selest.core.metrics import compute_metrics
from selest.core.models import MetricReport, TrainConfig, VectorDataset, Workload
from selest.core.nnet import OptimizerState, optimizer_step
from selest.core.partition import gate_batch
from selest.infrastructure.logging_config import get_logger
from selest.utils.helpers import measure_time

logger = get_logger(__name__)

AE_HOLDOUT_FRACTION = 0.05
AE_MIN_ROWS_FOR_HOLDOUT = 20


@dataclass
class EpochRecord:
    """Uma linha do log de treinamento."""

    epoch: int
    stage: str
    train_loss: float
    val_mse: float
    val_mae: float
    val_mape: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epoch": self.epoch,
            "stage": self.stage,
            "train_loss": None if np.isnan(self.train_loss) else self.train_loss,
            "val_mse": self.val_mse,
            "val_mae": self.val_mae,
            "val_mape": self.val_mape,
        }


@dataclass
class TrainResult:
    """
    Resultado do treinamento.

    Attributes:
        model: Modelo com o melhor snapshot de validação restaurado.
        log: Registros por época (a época 0 é o estado inicial).
        best_epoch: Época do snapshot devolvido.
        best_score: Valor da métrica monitorada no snapshot.
        stopped_early: True se a paciência esgotou antes de max_epochs.
    """

    model: SelNetModel
    log: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_score: float = float("inf")
    stopped_early: bool = False


def _ae_snapshot(ae: AutoEncoder) -> Dict[str, np.ndarray]:
    return {name: value.copy() for name, value in ae.parameters().items()}


def _ae_restore(ae: AutoEncoder, snapshot: Dict[str, np.ndarray]) -> None:
    params = ae.parameters()
    for name, value in snapshot.items():
        params[name][...] = value
    ae.bump_version()


@measure_time
def pretrain_autoencoder(ae: AutoEncoder, D: VectorDataset, epochs: int, seed: int = 0,
                         learning_rate: float = 1e-3, batch_size: int = 512) -> AutoEncoder:
    """
    Pré-treina o autoencoder sobre as linhas de D.

    5% das linhas ficam de fora para acompanhar o erro de reconstrução (todas
    as linhas são usadas nos dois papéis quando n < 20). O snapshot com o menor
    erro nessa parte, incluindo o estado inicial, é o que fica no autoencoder.

    Args:
        ae: Autoencoder (modificado no lugar).
        D: Dataset.
        epochs: Número de épocas; 0 não altera o autoencoder.
        seed: Semente da divisão e do embaralhamento.
        learning_rate: Taxa de aprendizado.
        batch_size: Tamanho do lote.

    Returns:
        AutoEncoder: O mesmo objeto, treinado.

    Raises:
        ConfigurationError: Dataset vazio.
    """
    if D.n == 0:
        raise ConfigurationError("pretrain_autoencoder exige um dataset não vazio")
    if epochs <= 0:
        return ae

    rng = np.random.default_rng(seed)
    rows = D.rows
    if D.n >= AE_MIN_ROWS_FOR_HOLDOUT:
        perm = rng.permutation(D.n)
        n_hold = max(1, int(AE_HOLDOUT_FRACTION * D.n))
        held, fit = rows[perm[:n_hold]], rows[perm[n_hold:]]
    else:
        held, fit = rows, rows

    state = OptimizerState(learning_rate=learning_rate)
    best_loss = ae.reconstruction_loss(held)
    best = _ae_snapshot(ae)
    initial_loss = best_loss
    for epoch in range(1, epochs + 1):
        order = rng.permutation(fit.shape[0])
        for start in range(0, order.size, batch_size):
            _, grads = ae.reconstruction_loss_and_grads(fit[order[start:start + batch_size]])
            optimizer_step(ae, grads, state)
        held_loss = ae.reconstruction_loss(held)
        if held_loss < best_loss:
            best_loss = held_loss
            best = _ae_snapshot(ae)
        logger.debug(f"Pré-treino AE época {epoch}: reconstrução {held_loss:.6f}")

    _ae_restore(ae, best)
    logger.info(f"Pré-treino do autoencoder: reconstrução {initial_loss:.6f} -> {best_loss:.6f}")
    return ae


def _stage_weights(model: SelNetModel, config: TrainConfig, epoch: int):
    hyper = model.hyper
    if model.K == 1:
        return "global", LossWeights.standard(hyper)
    if config.strategy == "global":
        return "global", LossWeights.standard(hyper)
    if config.strategy == "local":
        return "local", LossWeights.local(hyper)
    if epoch <= config.pretrain_epochs:
        return "local", LossWeights.local(hyper)
    return "joint", LossWeights.joint(hyper)


def _validate(model: SelNetModel, X: np.ndarray, t: np.ndarray, y: np.ndarray,
              gates: np.ndarray) -> MetricReport:
    return compute_metrics(y, model.forward(X, t, gates).est)


@measure_time
def train(model: SelNetModel, workload: Workload, config: TrainConfig,
          monitor: Optional[str] = None) -> TrainResult:
    """
    Treina o modelo sobre a carga de trabalho.

    Com a estratégia "pretrain_joint" (e K > 1) as primeiras `pretrain_epochs`
    épocas treinam só as perdas locais e as seguintes a perda conjunta. A
    paciência só conta fora do pré-treino local. O estado inicial do modelo
    também concorre ao melhor snapshot, então um warm start nunca piora a
    métrica de validação.

    Args:
        model: Modelo (modificado no lugar).
        workload: Carga com treino e validação rotulados.
        config: Configuração do laço.
        monitor: Métrica monitorada ("mse" ou "mae"); padrão é config.monitor.

    Returns:
        TrainResult: Modelo com o melhor snapshot, log e a época escolhida.

    Raises:
        ConfigurationError: Divisão vazia ou rótulos por cluster ausentes.
    """
    monitor = monitor or config.monitor
    if monitor not in ("mse", "mae"):
        raise ConfigurationError(f"Métrica monitorada desconhecida: {monitor}")

    X, t, y, Yc = workload.arrays("train")
    Xv, tv, yv, _ = workload.arrays("val")
    needs_cluster_labels = model.K > 1 and config.strategy in ("local", "pretrain_joint")
    if needs_cluster_labels and Yc is None:
        raise ConfigurationError("A estratégia de treino exige rótulos por cluster na divisão de treino")

    full = TrainingBatch.from_arrays(model, X, t, y, Yc if needs_cluster_labels else None)
    val_gates = gate_batch(model.layout, Xv, tv)
    rng = np.random.default_rng(config.seed)
    state = OptimizerState(learning_rate=model.hyper.learning_rate)
    batch_size = model.hyper.batch_size
    n = full.X.shape[0]

    report = _validate(model, Xv, tv, yv, val_gates)
    result = TrainResult(model=model)
    result.log.append(EpochRecord(0, "init", float("nan"), report.mse, report.mae, report.mape))
    result.best_score = getattr(report, monitor)
    best_state = model.get_state()
    stale = 0
    stage = "init"

    logger.info(
        f"Iniciando treino: {n} consultas de treino, {Xv.shape[0]} de validação, K={model.K}, "
        f"estratégia={config.strategy}, {monitor} inicial={result.best_score:.4f}"
    )

    for epoch in range(1, config.max_epochs + 1):
        new_stage, weights = _stage_weights(model, config, epoch)
        if new_stage != stage:
            stale = 0
            stage = new_stage

        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            batch = full.subset(order[start:start + batch_size])
            loss, grads = loss_and_grads(model, batch, weights)
            optimizer_step(model, grads, state)
            epoch_loss += loss
            logger.debug(f"Época {epoch}, lote {start // batch_size}: perda {loss:.6f}")

        report = _validate(model, Xv, tv, yv, val_gates)
        record = EpochRecord(epoch, stage, epoch_loss / n, report.mse, report.mae, report.mape)
        result.log.append(record)
        if epoch % config.log_every == 0:
            logger.info(
                f"Época {epoch} ({stage}): perda {record.train_loss:.6f}, val MSE {report.mse:.4f}, "
                f"MAE {report.mae:.4f}, MAPE {report.mape:.4f}"
            )

        score = getattr(report, monitor)
        if score < result.best_score:
            result.best_score = score
            result.best_epoch = epoch
            best_state = model.get_state()
            stale = 0
        elif not (stage == "local" and config.strategy == "pretrain_joint"):
            stale += 1
            if stale >= config.patience:
                result.stopped_early = epoch < config.max_epochs
                logger.info(f"Parada antecipada na época {epoch}: {stale} épocas sem melhora")
                break

    model.set_state(best_state)
    logger.info(f"Treino concluído: melhor época {result.best_epoch} ({monitor}={result.best_score:.4f})")
    return result
