"""
Modelos de dados centrais do domínio do Selest.

Este módulo define as estruturas de dados principais utilizadas pelo sistema:
o dataset vetorial, os parâmetros da função linear por partes, as regiões e o
layout de partição, as consultas rotuladas e a carga de trabalho, as operações
de atualização e os relatórios. Estruturas de dados são dataclasses; os
hiperparâmetros e a configuração de treino são modelos pydantic, validados na
construção.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from selest.core.exceptions import ConfigurationError, DomainError, ShapeError

DISTANCE_KINDS = ("euclidean", "cosine")

# Limiar máximo padrão para distância euclidiana e para cosseno
DEFAULT_T_MAX = {"euclidean": 54.0, "cosine": 1.0}


@dataclass
class VectorDataset:
    """
    Base de dados D: n vetores d-dimensionais e o tipo de distância.

    Attributes:
        rows: Matriz n × d (float64).
        distance_kind: "euclidean" ou "cosine".
        normalized: Se True (apenas cosseno), as linhas têm norma 2 unitária.
    """

    rows: np.ndarray
    distance_kind: str = "euclidean"
    normalized: bool = False

    def __post_init__(self):
        self.rows = np.ascontiguousarray(np.asarray(self.rows, dtype=np.float64))
        if self.rows.ndim != 2:
            raise ShapeError(f"Dataset precisa ser uma matriz n × d, recebido shape {self.rows.shape}")
        if self.distance_kind not in DISTANCE_KINDS:
            raise ConfigurationError(f"Tipo de distância desconhecido: {self.distance_kind}")
        if self.normalized:
            if self.distance_kind != "cosine":
                raise ConfigurationError("Apenas datasets com distância cosseno podem ser normalizados")
            self.rows = normalize_rows(self.rows)

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    @property
    def d(self) -> int:
        return int(self.rows.shape[1])


def normalize_rows(rows: np.ndarray) -> np.ndarray:
    """
    Normaliza cada linha para norma 2 unitária.

    Raises:
        DomainError: Se alguma linha for o vetor nulo.
    """
    norms = np.sqrt((rows * rows).sum(axis=1))
    if np.any(norms == 0.0):
        raise DomainError("Vetor nulo não pode ser normalizado para distância cosseno")
    return np.ascontiguousarray(rows / norms[:, None])


class HyperParams(BaseModel):
    """
    Hiperparâmetros do modelo.

    As larguras ocultas são configuração, não contrato: os presets de desktop
    usam redes bem menores.
    """

    model_config = ConfigDict(extra="forbid")

    L: int = Field(50, ge=1)
    K: int = Field(3, ge=1)
    r: float = Field(0.05, gt=0.0, le=1.0)
    partition_method: Literal["cover_tree", "random"] = "cover_tree"
    use_partitioning: bool = True
    query_dependent_tau: bool = True
    z_dim: int = Field(64, ge=1)
    h_dim: int = Field(100, ge=1)
    tau_hidden: List[int] = Field(default_factory=lambda: [512, 512])
    m_hidden: List[int] = Field(default_factory=lambda: [512, 512, 512, 256])
    ae_hidden: List[int] = Field(default_factory=lambda: [512, 512, 512])
    t_max: float = Field(54.0, gt=0.0)
    eps_norm: float = Field(1e-6, gt=0.0)
    eps_pad_ratio: float = Field(1e-6, gt=0.0)
    eps_log: float = Field(1.0, gt=0.0)
    delta_huber: float = Field(1.345, gt=0.0)
    lambda_ae: float = Field(0.1, ge=0.0)
    beta_joint: float = Field(0.1, ge=0.0)
    learning_rate: float = Field(1e-4, gt=0.0)
    batch_size: int = Field(512, ge=1)
    seed: int = 0

    @field_validator("tau_hidden", "m_hidden", "ae_hidden")
    @classmethod
    def _positive_widths(cls, value: List[int]) -> List[int]:
        if any(width < 1 for width in value):
            raise ValueError("Larguras ocultas precisam ser inteiros positivos")
        return value

    @property
    def eps_pad(self) -> float:
        """Folga do último ponto de controle, proporcional a t_max."""
        return self.eps_pad_ratio * self.t_max

    @property
    def effective_k(self) -> int:
        """K pedido, ou 1 quando o particionamento está desligado."""
        return self.K if self.use_partitioning else 1


class TrainConfig(BaseModel):
    """
    Configuração do laço de treinamento.

    Attributes:
        max_epochs: Número máximo de épocas.
        patience: Épocas sem melhora na validação antes da parada antecipada.
        pretrain_epochs: Épocas T de pré-treino dos modelos locais.
        seed: Semente do embaralhamento dos lotes.
        log_every: Cadência (em épocas) do log INFO.
        monitor: Métrica de validação monitorada ("mse" ou "mae").
        strategy: "global", "local" ou "pretrain_joint" (padrão).
        ae_pretrain_epochs: Épocas de pré-treino do autoencoder sobre D.
        ae_learning_rate: Taxa de aprendizado do pré-treino do autoencoder.
    """

    model_config = ConfigDict(extra="forbid")

    max_epochs: int = Field(1500, ge=0)
    patience: int = Field(5, ge=1)
    pretrain_epochs: int = Field(300, ge=0)
    seed: int = 0
    log_every: int = Field(1, ge=1)
    monitor: Literal["mse", "mae"] = "mse"
    strategy: Literal["global", "local", "pretrain_joint"] = "pretrain_joint"
    ae_pretrain_epochs: int = Field(20, ge=0)
    ae_learning_rate: float = Field(1e-3, gt=0.0)


@dataclass
class PlfParams:
    """
    Parâmetros Θ = {(τ_i, p_i)} da função linear por partes de uma consulta.

    Attributes:
        tau: Pontos de controle τ_0..τ_{L+1} (unidades de distância).
        p: Valores de controle p_0..p_{L+1} (contagens).
        t_max: Maior limiar suportado.
    """

    tau: np.ndarray
    p: np.ndarray
    t_max: float

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=np.float64)
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.tau.ndim != 1 or self.tau.shape != self.p.shape or self.tau.size < 2:
            raise ShapeError(f"tau e p precisam ter o mesmo tamanho L+2 (tau={self.tau.shape}, p={self.p.shape})")

    @property
    def L(self) -> int:
        return int(self.tau.size - 2)

    def is_valid(self) -> bool:
        """Verifica τ_0 = 0, τ estritamente crescente, τ_{L+1} > t_max e p não decrescente."""
        return bool(
            self.tau[0] == 0.0
            and np.all(np.diff(self.tau) > 0)
            and self.tau[-1] > self.t_max
            and self.p[0] >= 0.0
            and np.all(np.diff(self.p) >= 0)
        )


@dataclass
class BallRegion:
    """
    Bola de cobertura: membros, centro e raio.

    Attributes:
        member_indices: Ids (posição) das linhas cobertas, ordenados.
        center: Centro da bola.
        radius: Maior distância de um membro ao centro.
    """

    member_indices: np.ndarray
    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.member_indices = np.asarray(self.member_indices, dtype=np.int64)
        self.center = np.asarray(self.center, dtype=np.float64)
        self.radius = float(self.radius)

    @property
    def size(self) -> int:
        return int(self.member_indices.size)


@dataclass
class Cluster:
    """Cluster D_i do layout: membros e as bolas que o compõem."""

    member_indices: np.ndarray
    balls: List[BallRegion] = field(default_factory=list)

    def __post_init__(self):
        self.member_indices = np.asarray(self.member_indices, dtype=np.int64)

    @property
    def size(self) -> int:
        return int(self.member_indices.size)


@dataclass
class PartitionLayout:
    """
    Partição disjunta da base em K clusters, com metadados para o gate f_c.

    Attributes:
        clusters: Os K clusters.
        kind: "metric" (gate pelas bolas) ou "random" (gate sempre 1).
        ratio: Razão de partição r usada na construção.
        distance_kind: Distância do dataset; em "cosine" o gate converte o limiar.
        requested_k: K pedido antes de descartar clusters vazios.
    """

    clusters: List[Cluster]
    kind: str = "metric"
    ratio: float = 1.0
    distance_kind: str = "euclidean"
    requested_k: int = 1

    @property
    def k(self) -> int:
        return len(self.clusters)

    @property
    def sizes(self) -> List[int]:
        return [cluster.size for cluster in self.clusters]

    @property
    def n(self) -> int:
        return int(sum(self.sizes))


@dataclass
class LabeledQuery:
    """
    Consulta rotulada (x, t, y).

    Attributes:
        x: Objeto de consulta.
        t: Limiar.
        y: Seletividade exata em D.
        split: "train", "val" ou "test".
        query_id: Índice do objeto de consulta dentro da carga.
        per_cluster_y: Seletividade exata restrita a cada cluster (opcional).
    """

    x: np.ndarray
    t: float
    y: float
    split: str = "train"
    query_id: int = 0
    per_cluster_y: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.t = float(self.t)
        self.y = float(self.y)
        if self.per_cluster_y is not None:
            self.per_cluster_y = np.asarray(self.per_cluster_y, dtype=np.float64)


@dataclass
class Workload:
    """
    Conjunto de consultas rotuladas dividido em treino, validação e teste.

    Attributes:
        train: Consultas de treino.
        validation: Consultas de validação.
        test: Consultas de teste.
        split_fractions: Frações da divisão por objeto de consulta.
        seed: Semente de geração.
        provenance: Hash do dataset, t_max e demais parâmetros de geração.
    """

    train: List[LabeledQuery]
    validation: List[LabeledQuery]
    test: List[LabeledQuery]
    split_fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def t_max(self) -> float:
        return float(self.provenance["t_max"])

    def split(self, name: str) -> List[LabeledQuery]:
        """Retorna a divisão pelo nome ("train", "val"/"validation" ou "test")."""
        if name == "train":
            return self.train
        if name in ("val", "validation"):
            return self.validation
        if name == "test":
            return self.test
        raise ConfigurationError(f"Divisão desconhecida: {name}")

    def arrays(self, name: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray, Optional[np.ndarray]]:
        """
        Empilha uma divisão em arrays (X, t, y, Y_cluster).

        Y_cluster é None se alguma consulta não tiver rótulos por cluster.
        """
        queries = self.split(name)
        if not queries:
            raise ConfigurationError(f"Divisão '{name}' está vazia")
        X = np.stack([q.x for q in queries])
        t = np.array([q.t for q in queries], dtype=np.float64)
        y = np.array([q.y for q in queries], dtype=np.float64)
        if all(q.per_cluster_y is not None for q in queries):
            Yc = np.stack([q.per_cluster_y for q in queries])
        else:
            Yc = None
        return X, t, y, Yc

    def all_queries(self) -> List[LabeledQuery]:
        return [*self.train, *self.validation, *self.test]


@dataclass
class UpdateOp:
    """
    Operação de atualização da base.

    Attributes:
        kind: "insert" ou "delete".
        vectors: Vetores inseridos (insert).
        ids: Posições das linhas removidas (delete).
    """

    kind: str
    vectors: Optional[np.ndarray] = None
    ids: Optional[List[int]] = None

    def __post_init__(self):
        if self.kind not in ("insert", "delete"):
            raise ConfigurationError(f"Operação de atualização desconhecida: {self.kind}")
        if self.kind == "insert":
            if self.vectors is None:
                raise ConfigurationError("Operação insert sem vetores")
            self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        else:
            if self.ids is None:
                raise ConfigurationError("Operação delete sem ids")
            self.ids = [int(i) for i in self.ids]

    @property
    def size(self) -> int:
        return int(self.vectors.shape[0]) if self.kind == "insert" else len(self.ids)


@dataclass
class UpdateSummary:
    """Resumo das linhas alteradas por um lote de atualizações."""

    inserted: int
    deleted: int
    n_before: int
    n_after: int
    dataset_hash: str


@dataclass
class DriftReport:
    """
    Resultado da verificação de deriva após uma atualização.

    retrain é verdadeiro exatamente quando |mae_after_relabel − mae_before| > delta_u.
    """

    mae_before: float
    mae_after_relabel: float
    delta_u: float
    retrain: bool


@dataclass
class MetricReport:
    """
    Métricas de erro de um estimador.

    Attributes:
        mse: Erro quadrático médio.
        mae: Erro absoluto médio.
        mape: Erro percentual absoluto médio (apenas y > 0).
        count: Número de pares avaliados.
        mape_excluded: Pares com y = 0 excluídos do MAPE.
    """

    mse: float
    mae: float
    mape: float
    count: int
    mape_excluded: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mse": self.mse,
            "mae": self.mae,
            "mape": self.mape,
            "count": self.count,
            "mape_excluded": self.mape_excluded,
        }


@dataclass
class GradReport:
    """
    Relatório da verificação de gradientes por diferenças finitas.

    Attributes:
        group_errors: Maior erro relativo por grupo de parâmetros.
        tolerance: Tolerância usada.
        passed: True se todos os grupos ficaram dentro da tolerância.
    """

    group_errors: Dict[str, float]
    tolerance: float
    passed: bool

    @property
    def max_error(self) -> float:
        return max(self.group_errors.values()) if self.group_errors else 0.0

    @property
    def failed_groups(self) -> List[str]:
        return [name for name, err in self.group_errors.items() if err > self.tolerance]
