"""
Oráculos de seletividade exata.

Funções de distância, contagem exata por varredura linear e a CountTree, uma
árvore de bolas com contagens por nó que poda subárvores inteiras (exclusão e
inclusão) e só calcula distâncias exatas nas folhas. A CountTree reutiliza a
hierarquia de bolas do particionador e, nas folhas, a mesma função de distância
da varredura linear, de modo que as duas contagens são idênticas.

Comparações com o limiar são inclusivas (≤).
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from selest.core.exceptions import ConfigurationError, DomainError, ShapeError
from selest.core.models import VectorDataset, normalize_rows
from selest.core.partition import BOUNDARY_SLACK, COSINE_SLACK, BallNode, build_ball_hierarchy
from selest.infrastructure.logging_config import get_logger
from selest.utils.helpers import measure_time

logger = get_logger(__name__)


def dist(a: np.ndarray, b: np.ndarray, kind: str = "euclidean") -> float:
    """
    Distância entre dois vetores.

    Args:
        a: Primeiro vetor.
        b: Segundo vetor.
        kind: "euclidean" (norma 2 de a − b) ou "cosine" (1 − cos(a, b)).

    Raises:
        ShapeError: Dimensões diferentes.
        DomainError: Vetor nulo com distância cosseno.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"Dimensões diferentes: {a.shape} e {b.shape}")
    return float(distances_to(a[None, :], b, kind)[0])


def distances_to(rows: np.ndarray, x: np.ndarray, kind: str = "euclidean") -> np.ndarray:
    """
    Distâncias de cada linha até x.

    Cada distância depende apenas da sua linha, então o resultado para um
    subconjunto de linhas é bit a bit igual ao da matriz completa.
    """
    x = np.asarray(x, dtype=np.float64)
    if rows.shape[1] != x.shape[0]:
        raise ShapeError(f"Consulta com dimensão {x.shape[0]}, dataset com dimensão {rows.shape[1]}")
    if kind == "euclidean":
        diff = rows - x
        return np.sqrt((diff * diff).sum(axis=1))
    if kind == "cosine":
        x_norm = np.sqrt((x * x).sum())
        row_norms = np.sqrt((rows * rows).sum(axis=1))
        if x_norm == 0.0 or np.any(row_norms == 0.0):
            raise DomainError("Vetor nulo não tem distância cosseno definida")
        cos = (rows * x).sum(axis=1) / (row_norms * x_norm)
        return 1.0 - cos
    raise ConfigurationError(f"Tipo de distância desconhecido: {kind}")


def cosine_threshold_to_l2(s: float) -> float:
    """
    Converte um limiar de similaridade cosseno s em distância euclidiana entre vetores unitários.

    cos(u, v) ≥ s equivale a ‖u − v‖ ≤ sqrt(2(1 − s)).

    Raises:
        DomainError: s fora de [−1, 1].
    """
    if not -1.0 <= s <= 1.0:
        raise DomainError(f"Similaridade cosseno fora de [-1, 1]: {s}")
    return float(np.sqrt(2.0 * (1.0 - s)))


def cosine_distance_to_l2(t: float) -> float:
    """Converte um limiar de distância cosseno (1 − s) em distância euclidiana unitária."""
    return float(np.sqrt(2.0 * max(float(t), 0.0)))


def selectivity_bruteforce(D: VectorDataset, x: np.ndarray, t: float) -> int:
    """
    Seletividade exata |{o ∈ D : dist(x, o) ≤ t}| por varredura linear.
    """
    return int(np.count_nonzero(distances_to(D.rows, x, D.distance_kind) <= t))


@dataclass
class CountStats:
    """Nós visitados por uma contagem na árvore."""

    nodes_visited: int = 0
    leaves_scanned: int = 0
    included_whole: int = 0
    pruned: int = 0


class CountTree:
    """
    Árvore de contagem por intervalo sobre um dataset imutável.

    Para distância cosseno a hierarquia é construída sobre as linhas normalizadas
    (distância euclidiana) e o limiar é convertido nas podas; as folhas usam a
    distância cosseno exata.
    """

    @measure_time
    def __init__(self, dataset: VectorDataset, leaf_size: int = 32, seed: int = 0):
        """
        Constrói a árvore.

        Args:
            dataset: Base de dados.
            leaf_size: Nós com até este número de linhas viram folhas.
            seed: Semente da escolha do centro da raiz.
        """
        if leaf_size < 1:
            raise ConfigurationError("leaf_size precisa ser positivo")
        self.dataset = dataset
        self.distance_kind = dataset.distance_kind
        self.leaf_size = leaf_size
        if dataset.distance_kind == "cosine" and not dataset.normalized:
            self._points = normalize_rows(dataset.rows)
        else:
            self._points = dataset.rows
        self.root: Optional[BallNode] = None
        if dataset.n > 0:
            self.root = build_ball_hierarchy(
                self._points, np.arange(dataset.n), leaf_threshold=leaf_size, seed=seed
            )
        logger.debug(f"CountTree construída sobre {dataset.n} linhas (leaf_size={leaf_size})")

    @property
    def n(self) -> int:
        return self.dataset.n

    def _query_point(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dataset.d,):
            raise ShapeError(f"Consulta com shape {x.shape}, esperado ({self.dataset.d},)")
        if self.distance_kind == "cosine":
            norm = np.sqrt((x * x).sum())
            if norm == 0.0:
                raise DomainError("Vetor nulo não tem distância cosseno definida")
            return x / norm
        return x

    def count_with_stats(self, x: np.ndarray, t: float) -> Tuple[int, CountStats]:
        """
        Conta exatamente as linhas com dist(x, o) ≤ t e retorna as estatísticas de visita.
        """
        stats = CountStats()
        if self.root is None:
            return 0, stats

        q = self._query_point(x)
        t_tree = cosine_distance_to_l2(t) if self.distance_kind == "cosine" else float(t)
        extra_slack = COSINE_SLACK if self.distance_kind == "cosine" else 0.0
        rows = self.dataset.rows
        total = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            stats.nodes_visited += 1
            diff = q - node.center
            d_center = float(np.sqrt((diff * diff).sum()))
            slack = BOUNDARY_SLACK * (1.0 + t_tree + node.radius + d_center) + extra_slack
            if d_center - node.radius > t_tree + slack:
                stats.pruned += 1
                continue
            if d_center + node.radius <= t_tree - slack:
                stats.included_whole += 1
                total += node.count
                continue
            if node.is_leaf:
                stats.leaves_scanned += 1
                d_rows = distances_to(rows[node.indices], x, self.distance_kind)
                total += int(np.count_nonzero(d_rows <= t))
            else:
                stack.extend(reversed(node.children))
        return total, stats

    def count(self, x: np.ndarray, t: float) -> int:
        return self.count_with_stats(x, t)[0]


def selectivity_tree(tree: CountTree, x: np.ndarray, t: float,
                     distance_kind: Optional[str] = None) -> int:
    """
    Seletividade exata pela CountTree.

    Args:
        tree: Árvore construída sobre o dataset.
        x: Objeto de consulta.
        t: Limiar.
        distance_kind: Distância esperada pelo chamador (opcional).

    Raises:
        ConfigurationError: Se distance_kind diferir da distância da árvore.
    """
    if distance_kind is not None and distance_kind != tree.distance_kind:
        raise ConfigurationError(
            f"Árvore construída para '{tree.distance_kind}', consulta pediu '{distance_kind}'"
        )
    return tree.count(x, t)
