"""
Serviço de geração de datasets e cargas de trabalho do Selest.

Este módulo implementa o protocolo experimental: dataset sintético de mistura
de gaussianas, alvos de seletividade em progressão geométrica, o menor limiar
que atinge cada alvo, rótulos exatos (globais e por cluster) e a divisão 8:1:1
por objeto de consulta. A rotulagem é distribuída entre as consultas pelo
ConcurrencyService e verificada pela CountTree.
"""

from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import blake3
import numpy as np

from selest.core.exceptions import ConfigurationError, ContractViolationError
from selest.core.models import DEFAULT_T_MAX, LabeledQuery, PartitionLayout, VectorDataset, Workload
from selest.core.oracle import CountTree, distances_to
from selest.infrastructure.concurrency import ConcurrencyService
from selest.infrastructure.logging_config import get_logger
from selest.utils.helpers import measure_time

logger = get_logger(__name__)

T_MAX_OBSERVED_FACTOR = 1.05


def gen_synthetic(n: int, d: int, components: int, seed: int = 0, distance_kind: str = "euclidean",
                  scale_range: Tuple[float, float] = (0.05, 0.3)) -> VectorDataset:
    """
    Amostra um dataset de mistura de gaussianas.

    Médias uniformes em [−1, 1]^d e desvio por componente uniforme em
    `scale_range`. Os valores são arredondados para float32, a precisão do
    arquivo VECD. Com distância cosseno as linhas são normalizadas.

    Raises:
        ConfigurationError: n, d ou components menores que 1.
    """
    if n < 1 or d < 1 or components < 1:
        raise ConfigurationError(f"gen_synthetic exige n, d, components >= 1 (n={n}, d={d}, components={components})")
    lo, hi = scale_range
    if not 0.0 <= lo <= hi:
        raise ConfigurationError(f"Faixa de escala inválida: {scale_range}")

    rng = np.random.default_rng(seed)
    means = rng.uniform(-1.0, 1.0, size=(components, d))
    scales = rng.uniform(lo, hi, size=components)
    labels = rng.integers(0, components, size=n)
    rows = means[labels] + rng.standard_normal((n, d)) * scales[labels, None]
    rows = rows.astype(np.float32).astype(np.float64)
    dataset = VectorDataset(rows, distance_kind=distance_kind, normalized=distance_kind == "cosine")
    logger.info(f"Dataset sintético gerado: n={n}, d={d}, {components} componentes, distância={distance_kind}")
    return dataset


def dataset_hash(D: VectorDataset) -> str:
    """Impressão digital BLAKE3 das linhas (float32) e do tipo de distância."""
    hasher = blake3.blake3()
    hasher.update(np.ascontiguousarray(D.rows, dtype="<f4").tobytes())
    hasher.update(f"{D.n}:{D.d}:{D.distance_kind}:{int(D.normalized)}".encode("utf-8"))
    return hasher.hexdigest()


def selectivity_targets(n: int, count: int = 40, max_fraction: float = 0.01) -> List[int]:
    """
    Alvos de seletividade em progressão geométrica sobre [1, max_fraction·n].

    Os valores são arredondados, deduplicados e ordenados.

    Raises:
        ConfigurationError: Faixa vazia (max_fraction·n < 1) ou count < 1.
    """
    upper = max_fraction * n
    if upper < 1.0:
        raise ConfigurationError(f"Dataset pequeno demais para alvos de seletividade: {max_fraction}·{n} < 1")
    if count < 1:
        raise ConfigurationError("count precisa ser positivo")
    raw = np.geomspace(1.0, upper, num=count)
    targets = np.unique(np.clip(np.rint(raw), 1, np.floor(upper)).astype(np.int64))
    return [int(v) for v in targets]


def _thresholds_from_sorted(sorted_d: np.ndarray, targets: Sequence[int]) -> List[Tuple[float, int]]:
    out = []
    for y in targets:
        t = max(float(sorted_d[y - 1]), 0.0)
        out.append((t, int(np.searchsorted(sorted_d, t, side="right"))))
    return out


def thresholds_for_query(D: VectorDataset, x: np.ndarray, targets: Sequence[int]) -> List[Tuple[float, int]]:
    """
    Menor limiar que atinge cada alvo e a contagem exata nesse limiar.

    t é a y-ésima menor distância (1-indexada); o rótulo é a contagem com
    dist ≤ t, que pode passar de y quando há empates.

    Raises:
        ConfigurationError: Alvo fora de [1, n].
    """
    if len(targets) and (min(targets) < 1 or max(targets) > D.n):
        raise ConfigurationError(f"Alvos precisam estar em [1, {D.n}]")
    sorted_d = np.sort(distances_to(D.rows, x, D.distance_kind))
    return _thresholds_from_sorted(sorted_d, targets)


def _cluster_index(layout: PartitionLayout, n: int) -> np.ndarray:
    owner = np.full(n, -1, dtype=np.int64)
    for k, cluster in enumerate(layout.clusters):
        owner[cluster.member_indices] = k
    if np.any(owner < 0):
        raise ConfigurationError("O layout não cobre todas as linhas do dataset")
    return owner


def _per_cluster_counts(d: np.ndarray, t: float, owner: np.ndarray, k: int) -> np.ndarray:
    return np.bincount(owner[d <= t], minlength=k).astype(np.float64)


class WorkloadService:
    """
    Serviço de construção e re-rotulagem de cargas de trabalho.

    A rotulagem de cada objeto de consulta é uma tarefa independente executada
    pelo ConcurrencyService; os resultados voltam na ordem das consultas.
    """

    def __init__(self, concurrency_service: Optional[ConcurrencyService] = None):
        """
        Inicializa o serviço.

        Args:
            concurrency_service: Pool usado na rotulagem (padrão: um novo ConcurrencyService).
        """
        self.concurrency_service = concurrency_service or ConcurrencyService()
        logger.debug("WorkloadService inicializado")

    @measure_time
    def build_workload(self, D: VectorDataset, m: int, targets: Sequence[int],
                       split: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0,
                       layout: Optional[PartitionLayout] = None, eval_thresholds: int = 3,
                       noise_std: float = 0.0, train_fraction: float = 1.0,
                       t_max_mode: str = "fixed", t_max: Optional[float] = None,
                       verify: bool = True) -> Workload:
        """
        Gera e rotula a carga de trabalho.

        Args:
            D: Dataset (os rótulos são sempre calculados sobre D inteiro).
            m: Número de objetos de consulta amostrados de D.
            targets: Alvos de seletividade (ordenados).
            split: Frações treino/validação/teste por objeto de consulta.
            seed: Semente de amostragem.
            layout: Layout para os rótulos por cluster (opcional).
            eval_thresholds: Limiares sorteados por consulta de validação/teste.
            noise_std: Desvio do ruído gaussiano somado às consultas.
            train_fraction: Fração dos objetos de treino mantidos.
            t_max_mode: "fixed" (54 euclidiana, 1 cosseno) ou "observed" (maior limiar ×1.05).
            t_max: Valor explícito, que tem precedência sobre o modo.
            verify: Recontar cada rótulo pela CountTree.

        Returns:
            Workload: A carga com proveniência.

        Raises:
            ConfigurationError: m < 10, m > n, alvos inválidos ou limiar acima de t_max.
            ContractViolationError: Rótulo divergente da CountTree.
        """
        if m < 10:
            raise ConfigurationError(f"São necessários pelo menos 10 objetos de consulta (recebido {m})")
        if m > D.n:
            raise ConfigurationError(f"m={m} maior que o dataset (n={D.n})")
        if not targets:
            raise ConfigurationError("Lista de alvos vazia")
        if max(targets) > D.n or min(targets) < 1:
            raise ConfigurationError(f"Alvos precisam estar em [1, {D.n}]")
        if len(split) != 3 or any(f < 0 for f in split) or abs(sum(split) - 1.0) > 1e-9:
            raise ConfigurationError(f"Frações de divisão inválidas: {split}")
        if not 0.0 < train_fraction <= 1.0:
            raise ConfigurationError(f"train_fraction fora de (0, 1]: {train_fraction}")

        rng = np.random.default_rng(seed)
        rows = rng.choice(D.n, size=m, replace=False)
        X = D.rows[rows].copy()
        if noise_std > 0.0:
            X += rng.normal(0.0, noise_std, size=X.shape)

        n_val = max(1, int(split[1] * m))
        n_test = max(1, int(split[2] * m))
        n_train = m - n_val - n_test
        n_train_kept = max(1, int(np.ceil(train_fraction * n_train)))
        roles = ["train"] * n_train_kept + ["skip"] * (n_train - n_train_kept) + ["val"] * n_val + ["test"] * n_test

        n_targets = len(targets)
        eval_k = min(eval_thresholds, n_targets)
        picks = [
            np.sort(rng.choice(n_targets, size=eval_k, replace=False)) if role in ("val", "test") else None
            for role in roles
        ]

        owner = _cluster_index(layout, D.n) if layout is not None else None
        tree = CountTree(D, seed=seed) if verify else None

        def label_task(i: int):
            x = X[i]
            d = distances_to(D.rows, x, D.distance_kind)
            sorted_d = np.sort(d)
            pairs = _thresholds_from_sorted(sorted_d, targets)
            if picks[i] is not None:
                pairs = [pairs[j] for j in picks[i]]
            out = []
            for t, y in pairs:
                if tree is not None and tree.count(x, t) != y:
                    raise ContractViolationError(f"Rótulo da consulta {i} em t={t} diverge da CountTree")
                per_cluster = _per_cluster_counts(d, t, owner, layout.k) if owner is not None else None
                out.append((t, y, per_cluster))
            return out

        active = [i for i, role in enumerate(roles) if role != "skip"]
        labeled = self.concurrency_service.map(label_task, active)

        max_t = max(t for entries in labeled for t, _, _ in entries)
        resolved_t_max = self._resolve_t_max(D, max_t, t_max_mode, t_max)

        splits: Dict[str, List[LabeledQuery]] = {"train": [], "val": [], "test": []}
        for i, entries in zip(active, labeled):
            for t, y, per_cluster in entries:
                splits[roles[i]].append(
                    LabeledQuery(x=X[i], t=t, y=y, split=roles[i], query_id=i, per_cluster_y=per_cluster)
                )

        provenance: Dict[str, Any] = {
            "dataset_hash": dataset_hash(D),
            "n": D.n,
            "d": D.d,
            "distance_kind": D.distance_kind,
            "t_max": resolved_t_max,
            "t_max_mode": "explicit" if t_max is not None else t_max_mode,
            "targets": [int(v) for v in targets],
            "queries": m,
            "seed": seed,
            "noise_std": noise_std,
            "train_fraction": train_fraction,
            "eval_thresholds": eval_k,
        }
        if layout is not None:
            provenance["layout_k"] = layout.k

        workload = Workload(
            train=splits["train"],
            validation=splits["val"],
            test=splits["test"],
            split_fractions=tuple(float(f) for f in split),
            seed=seed,
            provenance=provenance,
        )
        logger.info(
            f"Carga gerada: {len(workload.train)}/{len(workload.validation)}/{len(workload.test)} "
            f"consultas rotuladas, t_max={resolved_t_max:.4f}"
        )
        return workload

    @staticmethod
    def _resolve_t_max(D: VectorDataset, max_t: float, mode: str, explicit: Optional[float]) -> float:
        if explicit is not None:
            t_max = float(explicit)
        elif mode == "fixed":
            t_max = DEFAULT_T_MAX[D.distance_kind]
        elif mode == "observed":
            t_max = max_t * T_MAX_OBSERVED_FACTOR if max_t > 0.0 else 1.0
        else:
            raise ConfigurationError(f"Modo de t_max desconhecido: {mode}")
        if max_t > t_max:
            raise ConfigurationError(
                f"Limiar gerado {max_t:.4f} excede t_max={t_max:.4f}; use t_max_mode='observed' ou um t_max maior"
            )
        return t_max

    @measure_time
    def relabel(self, D: VectorDataset, workload: Workload,
                layout: Optional[PartitionLayout] = None) -> Workload:
        """
        Recalcula os rótulos (e os rótulos por cluster, se houver layout) sobre D.

        Os limiares e objetos de consulta são mantidos; a proveniência recebe o novo hash.
        """
        owner = _cluster_index(layout, D.n) if layout is not None else None

        def relabel_split(queries: List[LabeledQuery]) -> List[LabeledQuery]:
            by_object: Dict[int, List[int]] = {}
            for pos, q in enumerate(queries):
                by_object.setdefault(q.query_id, []).append(pos)

            def task(positions: List[int]):
                x = queries[positions[0]].x
                d = distances_to(D.rows, x, D.distance_kind)
                out = []
                for pos in positions:
                    t = queries[pos].t
                    per_cluster = _per_cluster_counts(d, t, owner, layout.k) if owner is not None else None
                    out.append((pos, int(np.count_nonzero(d <= t)), per_cluster))
                return out

            groups = list(by_object.values())
            results = self.concurrency_service.map(task, groups)
            relabeled = list(queries)
            for entries in results:
                for pos, y, per_cluster in entries:
                    relabeled[pos] = replace(queries[pos], y=float(y), per_cluster_y=per_cluster)
            return relabeled

        provenance = dict(workload.provenance)
        provenance["dataset_hash"] = dataset_hash(D)
        provenance["n"] = D.n
        if layout is not None:
            provenance["layout_k"] = layout.k
        return Workload(
            train=relabel_split(workload.train),
            validation=relabel_split(workload.validation),
            test=relabel_split(workload.test),
            split_fractions=workload.split_fractions,
            seed=workload.seed,
            provenance=provenance,
        )

    def attach_cluster_labels(self, D: VectorDataset, workload: Workload, layout: PartitionLayout) -> Workload:
        """Adiciona rótulos por cluster a uma carga gerada sem layout."""
        return self.relabel(D, workload, layout)


def build_workload(D: VectorDataset, m: int, targets: Sequence[int], split: Sequence[float] = (0.8, 0.1, 0.1),
                   seed: int = 0, layout: Optional[PartitionLayout] = None, **options) -> Workload:
    """Atalho para WorkloadService().build_workload com um pool próprio."""
    with ConcurrencyService() as pool:
        return WorkloadService(pool).build_workload(D, m, targets, split, seed, layout, **options)
