"""
Particionamento da base de dados para os modelos locais.

Constrói uma hierarquia de bolas no estilo cover tree (divisão pelo ponto mais
distante, raio dos filhos até metade do raio do pai, no máximo 8 filhos),
interrompida pela razão de partição r; une as folhas gulosamente em K clusters
balanceados e avalia o gate f_c, que indica se a bola de consulta (x, t) pode
intersectar cada cluster. Distâncias não métricas usam partição aleatória.

Datasets com distância cosseno são normalizados e particionados com distância
euclidiana; o gate converte o limiar cosseno para a distância euclidiana
equivalente entre vetores unitários.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from selest.core.exceptions import ConfigurationError, DomainError, ShapeError, UnsupportedOperationError
from selest.core.models import (
    BallRegion,
    Cluster,
    HyperParams,
    PartitionLayout,
    VectorDataset,
    normalize_rows,
)
from selest.infrastructure.logging_config import get_logger
from selest.utils.helpers import measure_time

logger = get_logger(__name__)

MAX_CHILDREN = 8
MIN_RADIUS = 1e-9

# Folga relativa dos testes de interseção; fronteiras contam como interseção
BOUNDARY_SLACK = 1e-9

# Folga absoluta extra no cosseno: cobre o arredondamento de 1 − cos perto de 0
COSINE_SLACK = 1e-6


@dataclass
class BallNode:
    """
    Nó da hierarquia de bolas.

    Attributes:
        center: Centro (um ponto da base).
        radius: Maior distância de um membro ao centro.
        indices: Posições das linhas cobertas pelo nó.
        center_index: Posição da linha usada como centro.
        children: Filhos (vazio em folhas).
    """

    center: np.ndarray
    radius: float
    indices: np.ndarray
    center_index: int
    children: List["BallNode"] = field(default_factory=list)

    @property
    def count(self) -> int:
        return int(self.indices.size)

    @property
    def is_leaf(self) -> bool:
        return not self.children


def _euclidean_to(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    diff = points - center
    return np.sqrt((diff * diff).sum(axis=1))


def _make_node(points: np.ndarray, indices: np.ndarray, center_index: int) -> BallNode:
    center = points[center_index].copy()
    radius = float(_euclidean_to(points[indices], center).max())
    return BallNode(center=center, radius=radius, indices=indices, center_index=int(center_index))


def _split(points: np.ndarray, node: BallNode, max_children: int) -> List[BallNode]:
    member_points = points[node.indices]
    first = int(np.flatnonzero(node.indices == node.center_index)[0])
    centers = [first]
    min_dist = _euclidean_to(member_points, member_points[first])
    nearest = np.zeros(node.indices.size, dtype=np.int64)

    # Centros por ponto mais distante até cobrir com metade do raio
    while len(centers) < max_children:
        far = int(np.argmax(min_dist))
        if min_dist[far] <= node.radius / 2.0:
            break
        centers.append(far)
        d_new = _euclidean_to(member_points, member_points[far])
        closer = d_new < min_dist
        nearest[closer] = len(centers) - 1
        min_dist = np.where(closer, d_new, min_dist)

    # Cada ponto fica com o centro mais próximo
    children = []
    for k, c in enumerate(centers):
        members = node.indices[nearest == k]
        children.append(_make_node(points, members, int(node.indices[c])))
    return children


def build_ball_hierarchy(points: np.ndarray, indices: np.ndarray, leaf_threshold: float,
                         seed: int = 0, max_children: int = MAX_CHILDREN) -> BallNode:
    """
    Constrói a hierarquia de bolas sobre as linhas indicadas (distância euclidiana).

    Um nó é folha quando tem no máximo `leaf_threshold` linhas ou raio < 1e-9.
    O primeiro filho reaproveita o centro do pai; os demais são escolhidos pelo
    ponto mais distante dos centros já escolhidos, até todos os pontos ficarem a
    no máximo metade do raio do pai ou até `max_children` filhos. Cada ponto vai
    para o centro mais próximo e o raio do filho é a distância máxima real.

    Args:
        points: Matriz com todas as linhas.
        indices: Posições das linhas a organizar.
        leaf_threshold: Tamanho máximo de uma folha.
        seed: Semente da escolha do centro da raiz.
        max_children: Número máximo de filhos por nó.

    Returns:
        BallNode: A raiz.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise ConfigurationError("Não é possível construir uma hierarquia sem linhas")

    rng = np.random.default_rng(seed)
    root = _make_node(points, indices, int(indices[rng.integers(indices.size)]))

    # Divisão em profundidade até as folhas
    stack = [root]
    while stack:
        node = stack.pop()
        if node.count <= leaf_threshold or node.radius < MIN_RADIUS:
            continue
        node.children = _split(points, node, max_children)
        stack.extend(node.children)
    return root


def _leaves(root: BallNode) -> List[BallNode]:
    leaves = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            leaves.append(node)
        else:
            stack.extend(reversed(node.children))
    return leaves


@measure_time
def build_tree(D: VectorDataset, r: float, seed: int = 0) -> List[BallRegion]:
    """
    Decompõe D em regiões-bola, parando quando um nó tem no máximo r·|D| linhas.

    Args:
        D: Base de dados com distância euclidiana.
        r: Razão de partição em (0, 1].
        seed: Semente da escolha do centro da raiz.

    Returns:
        List[BallRegion]: As folhas (K′ regiões), em pré-ordem.

    Raises:
        UnsupportedOperationError: Distância não euclidiana (use partition_random ou build_layout).
        ConfigurationError: r fora de (0, 1] ou D vazio.
    """
    if D.distance_kind != "euclidean":
        raise UnsupportedOperationError(
            f"build_tree exige distância métrica euclidiana, recebido '{D.distance_kind}'"
        )
    if not 0.0 < r <= 1.0:
        raise ConfigurationError(f"Razão de partição fora de (0, 1]: {r}")

    root = build_ball_hierarchy(D.rows, np.arange(D.n), leaf_threshold=r * D.n, seed=seed)
    regions = [
        BallRegion(member_indices=np.sort(leaf.indices), center=leaf.center, radius=leaf.radius)
        for leaf in _leaves(root)
    ]
    logger.debug(f"build_tree: {len(regions)} regiões para n={D.n}, r={r}")
    return regions


def merge_regions(regions: Sequence[BallRegion], K: int, ratio: float = 1.0,
                  distance_kind: str = "euclidean") -> PartitionLayout:
    """
    Une as regiões em K clusters, da maior para a menor, sempre no cluster menor.

    Regiões de mesmo tamanho mantêm a ordem de entrada; clusters de mesmo
    tamanho desempatam pelo menor índice. Clusters que ficam vazios são
    descartados (o K efetivo diminui).

    Args:
        regions: Regiões-bola.
        K: Número de clusters pedido.
        ratio: Razão de partição registrada no layout.
        distance_kind: Distância do dataset original.

    Returns:
        PartitionLayout: Layout métrico.
    """
    if K < 1:
        raise ConfigurationError(f"K precisa ser >= 1, recebido {K}")
    if not regions:
        raise ConfigurationError("merge_regions precisa de pelo menos uma região")

    # Maior região primeiro, sempre no cluster menor
    order = sorted(range(len(regions)), key=lambda i: -regions[i].size)
    sizes = [0] * K
    assigned: List[List[BallRegion]] = [[] for _ in range(K)]
    for i in order:
        target = min(range(K), key=lambda k: (sizes[k], k))
        assigned[target].append(regions[i])
        sizes[target] += regions[i].size

    clusters = [
        Cluster(member_indices=np.sort(np.concatenate([b.member_indices for b in balls])), balls=list(balls))
        for balls in assigned if balls
    ]
    if len(clusters) < K:
        logger.warning(f"Apenas {len(clusters)} regiões para K={K}; K efetivo reduzido para {len(clusters)}")
    return PartitionLayout(clusters=clusters, kind="metric", ratio=ratio,
                           distance_kind=distance_kind, requested_k=K)


def partition_random(D: VectorDataset, K: int, seed: int = 0) -> PartitionLayout:
    """
    Partição aleatória uniforme em K clusters de tamanhos que diferem no máximo em 1.

    Raises:
        ConfigurationError: K < 1.
    """
    if K < 1:
        raise ConfigurationError(f"K precisa ser >= 1, recebido {K}")
    perm = np.random.default_rng(seed).permutation(D.n)
    clusters = [Cluster(member_indices=np.sort(part)) for part in np.array_split(perm, K) if part.size > 0]
    return PartitionLayout(clusters=clusters, kind="random", ratio=1.0,
                           distance_kind=D.distance_kind, requested_k=K)


def build_layout(D: VectorDataset, hyper: HyperParams, seed: Optional[int] = None) -> PartitionLayout:
    """
    Constrói o layout pedido pelos hiperparâmetros.

    K efetivo 1 gera um único cluster com gate sempre 1. O método "cover_tree"
    normaliza datasets cosseno antes da decomposição.
    """
    seed = hyper.seed if seed is None else seed
    k = hyper.effective_k
    if k == 1:
        return partition_random(D, 1, seed)
    if hyper.partition_method == "random":
        return partition_random(D, k, seed)

    if D.distance_kind == "cosine":
        view = VectorDataset(normalize_rows(D.rows), distance_kind="euclidean")
    else:
        view = D
    regions = build_tree(view, hyper.r, seed)
    layout = merge_regions(regions, k, ratio=hyper.r, distance_kind=D.distance_kind)
    logger.info(f"Layout construído: K={layout.k}, K'={len(regions)}, tamanhos={layout.sizes}")
    return layout


def _gate_points(layout: PartitionLayout, X: np.ndarray, t: np.ndarray):
    if layout.distance_kind == "cosine":
        norms = np.sqrt((X * X).sum(axis=1))
        if np.any(norms == 0.0):
            raise DomainError("Vetor nulo não tem distância cosseno definida")
        return X / norms[:, None], np.sqrt(2.0 * np.maximum(t, 0.0)), COSINE_SLACK
    return X, t, 0.0


def gate_batch(layout: PartitionLayout, X: np.ndarray, t: np.ndarray) -> np.ndarray:
    """
    Gate f_c para um lote de consultas.

    Args:
        layout: Layout de partição.
        X: Consultas (B, d).
        t: Limiares (B,).

    Returns:
        np.ndarray: Matriz (B, K) de 0.0/1.0; bit i = 1 sse alguma bola do
                    cluster i satisfaz dist(x, centro) ≤ t + raio.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (X.shape[0],))
    B = X.shape[0]
    if layout.kind == "random":
        return np.ones((B, layout.k))

    # Cosseno vira L2 sobre vetores normalizados
    Q, t_eff, extra = _gate_points(layout, X, t)
    gates = np.zeros((B, layout.k))
    for k, cluster in enumerate(layout.clusters):
        if not cluster.balls:
            continue
        centers = np.stack([b.center for b in cluster.balls])
        radii = np.array([b.radius for b in cluster.balls])
        if centers.shape[1] != Q.shape[1]:
            raise ShapeError(f"Consulta com dimensão {Q.shape[1]}, layout com dimensão {centers.shape[1]}")
        # A bola intercepta a esfera de consulta sse dist(x, c) ≤ t + raio
        diff = Q[:, None, :] - centers[None, :, :]
        d_center = np.sqrt((diff * diff).sum(axis=2))
        bound = t_eff[:, None] + radii[None, :]
        # Folga relativa para o arredondamento na fronteira
        slack = BOUNDARY_SLACK * (1.0 + bound + d_center) + extra
        gates[:, k] = np.any(d_center <= bound + slack, axis=1)
    return gates


def gate(layout: PartitionLayout, x: np.ndarray, t: float) -> np.ndarray:
    """
    Gate f_c de uma consulta: vetor de bits de tamanho K.

    Layouts aleatórios retornam sempre o vetor de uns.
    """
    if t < 0:
        raise DomainError(f"Limiar negativo: {t}")
    return gate_batch(layout, np.asarray(x, dtype=np.float64)[None, :], np.array([t]))[0].astype(np.int8)


def layout_to_dict(layout: PartitionLayout) -> Dict[str, Any]:
    """Representação JSON do layout para inspeção."""
    return {
        "kind": layout.kind,
        "distance_kind": layout.distance_kind,
        "ratio": layout.ratio,
        "requested_k": layout.requested_k,
        "effective_k": layout.k,
        "cluster_sizes": layout.sizes,
        "clusters": [
            {
                "size": cluster.size,
                "balls": [
                    {"size": ball.size, "radius": ball.radius, "center": ball.center.tolist()}
                    for ball in cluster.balls
                ],
            }
            for cluster in layout.clusters
        ],
    }


def _copy_layout(layout: PartitionLayout) -> PartitionLayout:
    clusters = [
        Cluster(
            member_indices=c.member_indices.copy(),
            balls=[BallRegion(b.member_indices.copy(), b.center.copy(), b.radius) for b in c.balls],
        )
        for c in layout.clusters
    ]
    return PartitionLayout(clusters=clusters, kind=layout.kind, ratio=layout.ratio,
                           distance_kind=layout.distance_kind, requested_k=layout.requested_k)


def insert_rows(layout: PartitionLayout, vectors: np.ndarray, first_index: int) -> PartitionLayout:
    """
    Atribui linhas inseridas a clusters existentes, sem reparticionar.

    Layouts métricos: cada linha entra na bola de centro mais próximo, cujo raio
    cresce se necessário. Layouts aleatórios: a linha entra no menor cluster.

    Args:
        layout: Layout atual (não é modificado).
        vectors: Linhas inseridas (m, d).
        first_index: Posição da primeira linha inserida no dataset atualizado.

    Returns:
        PartitionLayout: Novo layout.
    """
    new_layout = _copy_layout(layout)
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))

    if new_layout.kind == "random":
        for offset in range(vectors.shape[0]):
            target = min(range(new_layout.k), key=lambda k: (new_layout.clusters[k].size, k))
            cluster = new_layout.clusters[target]
            cluster.member_indices = np.append(cluster.member_indices, first_index + offset)
        return new_layout

    # Pares (cluster, bola) candidatos
    owners = [(k, j) for k, c in enumerate(new_layout.clusters) for j in range(len(c.balls))]
    if not owners:
        raise ConfigurationError("Layout métrico sem bolas não aceita inserções")
    Q, _, _ = _gate_points(new_layout, vectors, np.zeros(vectors.shape[0]))
    for offset, q in enumerate(Q):
        centers = np.stack([new_layout.clusters[k].balls[j].center for k, j in owners])
        d_center = _euclidean_to(centers, q)
        k, j = owners[int(np.argmin(d_center))]
        ball = new_layout.clusters[k].balls[j]
        row = first_index + offset
        ball.member_indices = np.append(ball.member_indices, row)
        # O raio cresce para cobrir a nova linha
        ball.radius = max(ball.radius, float(d_center.min()))
        new_layout.clusters[k].member_indices = np.append(new_layout.clusters[k].member_indices, row)
    return new_layout


def remove_rows(layout: PartitionLayout, deleted: Sequence[int]) -> PartitionLayout:
    """
    Remove linhas do layout e renumera as posições restantes.

    Bolas que ficam vazias são descartadas (os raios restantes continuam cobrindo
    os membros). Clusters vazios são mantidos, com gate sempre 0.
    """
    new_layout = _copy_layout(layout)
    deleted_sorted = np.unique(np.asarray(deleted, dtype=np.int64))

    def remap(indices: np.ndarray) -> np.ndarray:
        # Posições posteriores a cada remoção descem uma unidade
        kept = indices[~np.isin(indices, deleted_sorted)]
        return kept - np.searchsorted(deleted_sorted, kept)

    for cluster in new_layout.clusters:
        cluster.member_indices = remap(cluster.member_indices)
        balls = []
        for ball in cluster.balls:
            ball.member_indices = remap(ball.member_indices)
            if ball.size > 0:
                balls.append(ball)
        cluster.balls = balls
    return new_layout
