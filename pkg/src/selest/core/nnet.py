"""
Rede densa feed-forward mínima, com forward/backward explícitos.

Este módulo é o substrato de todas as redes do Selest (autoencoder, cabeças de
pontos de controle e de valores de controle): inicialização de parâmetros,
forward que grava uma fita com as pré-ativações, backward pela regra da cadeia,
o otimizador adaptativo com momentos corrigidos de viés e um verificador de
gradientes por diferenças centrais.

Toda a matemática de treino é feita em float64. Entradas podem ser um vetor
(in,) ou um lote (B, in); gradientes de parâmetros são somados sobre o lote.
"""

import itertools
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from selest.core.exceptions import (
    ConfigurationError,
    ContractViolationError,
    NumericError,
    NumericInputError,
    ShapeError,
)
from selest.core.models import GradReport
from selest.infrastructure.logging_config import get_logger

logger = get_logger(__name__)

ACTIVATIONS = ("relu", "identity")

_net_ids = itertools.count(1)


@dataclass
class DenseLayer:
    """Camada afim seguida de ativação (relu ou identity)."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.weight = np.ascontiguousarray(np.asarray(self.weight, dtype=np.float64))
        self.bias = np.ascontiguousarray(np.asarray(self.bias, dtype=np.float64))
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"Ativação desconhecida: {self.activation}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"Camada inconsistente: weight {self.weight.shape}, bias {self.bias.shape}")

    @property
    def in_dim(self) -> int:
        return int(self.weight.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.weight.shape[0])


class DenseNet:
    """
    Rede densa: lista ordenada de camadas cujas dimensões encadeiam.

    Os parâmetros são expostos por `parameters()` como referências vivas,
    nomeadas "layers.{i}.weight" e "layers.{i}.bias". A versão é incrementada a
    cada passo do otimizador, invalidando fitas de forward anteriores.
    """

    def __init__(self, layers: Sequence[DenseLayer]):
        if not layers:
            raise ConfigurationError("Uma DenseNet precisa de pelo menos uma camada")
        for i in range(len(layers) - 1):
            if layers[i].out_dim != layers[i + 1].in_dim:
                raise ShapeError(
                    f"Camadas {i} e {i + 1} não encadeiam: {layers[i].out_dim} != {layers[i + 1].in_dim}"
                )
        self.layers: List[DenseLayer] = list(layers)
        self.uid = next(_net_ids)
        self.version = 0

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def layer_sizes(self) -> List[int]:
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        params: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for i, layer in enumerate(self.layers):
            params[f"layers.{i}.weight"] = layer.weight
            params[f"layers.{i}.bias"] = layer.bias
        return params

    def bump_version(self) -> None:
        self.version += 1

    def weight_count(self) -> int:
        """Número de pesos (sem vieses)."""
        return int(sum(layer.weight.size for layer in self.layers))

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))

    def copy(self) -> "DenseNet":
        return DenseNet([DenseLayer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])


@dataclass
class ForwardTape:
    """
    Cache de um forward: entradas e pré-ativações de cada camada.

    Attributes:
        net_uid: Identificador da rede que produziu a fita.
        net_version: Versão da rede no momento do forward.
        inputs: Entrada (2-D) de cada camada.
        pre_activations: Pré-ativação (2-D) de cada camada.
        single: True se a entrada original era um vetor.
    """

    net_uid: int
    net_version: int
    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)
    single: bool = False


class Parametrized(Protocol):
    """Qualquer objeto que expõe parâmetros nomeados (DenseNet, SelNetModel...)."""

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        ...


def init_params(layer_sizes: Sequence[int], seed: int,
                activations: Optional[Sequence[str]] = None) -> DenseNet:
    """
    Cria uma DenseNet com pesos N(0, 2/fan_in) e vieses zero.

    Args:
        layer_sizes: Dimensões [entrada, ocultas..., saída] (pelo menos 2).
        seed: Semente do gerador; mesma semente, mesmos parâmetros.
        activations: Ativação de cada camada. Padrão: relu nas ocultas e
                     identity na última.

    Returns:
        DenseNet: A rede inicializada.

    Raises:
        ConfigurationError: Se layer_sizes tiver menos de 2 entradas ou valores não positivos.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ConfigurationError(f"layer_sizes inválido: {list(layer_sizes)}")

    n_layers = len(sizes) - 1
    if activations is None:
        activations = ["relu"] * (n_layers - 1) + ["identity"]
    if len(activations) != n_layers:
        raise ConfigurationError(f"Esperadas {n_layers} ativações, recebidas {len(activations)}")

    rng = np.random.default_rng(seed)
    layers = []
    for i in range(n_layers):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        weight = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
        layers.append(DenseLayer(weight, np.zeros(fan_out), activations[i]))
    return DenseNet(layers)


def _as_batch(x: np.ndarray, dim: int, what: str) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != dim:
        raise ShapeError(f"{what}: esperada dimensão {dim}, recebido shape {x.shape}")
    return batch, single


def ffn_forward(net: DenseNet, x: np.ndarray) -> Tuple[np.ndarray, ForwardTape]:
    """
    Forward da rede.

    Args:
        net: A rede.
        x: Vetor (input_dim,) ou lote (B, input_dim).

    Returns:
        Tuple[np.ndarray, ForwardTape]: Saída com o mesmo posto da entrada e a fita.

    Raises:
        ShapeError: Dimensão de entrada incompatível.
        NumericInputError: Entrada com NaN/Inf.
    """
    h, single = _as_batch(x, net.input_dim, "ffn_forward")
    if not np.all(np.isfinite(h)):
        raise NumericInputError("Entrada da rede contém valores não finitos")

    tape = ForwardTape(net_uid=net.uid, net_version=net.version, single=single)
    for layer in net.layers:
        tape.inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        tape.pre_activations.append(z)
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z

    return (h[0] if single else h), tape


def ffn_backward(net: DenseNet, tape: ForwardTape,
                 output_grad: np.ndarray) -> Tuple["OrderedDict[str, np.ndarray]", np.ndarray]:
    """
    Backward da rede a partir do gradiente da saída.

    A derivada da relu em 0 é 0.

    Args:
        net: A mesma rede (e versão) usada no forward.
        tape: Fita do forward.
        output_grad: Gradiente da perda em relação à saída (mesmo shape da saída).

    Returns:
        Tuple: (gradientes por parâmetro, gradiente da entrada).

    Raises:
        ContractViolationError: Fita de outra rede ou de uma versão anterior.
        ShapeError: output_grad com shape incompatível.
    """
    if tape.net_uid != net.uid or tape.net_version != net.version:
        raise ContractViolationError(
            f"Fita obsoleta ou de outra rede (fita {tape.net_uid}/v{tape.net_version}, "
            f"rede {net.uid}/v{net.version})"
        )

    g = np.asarray(output_grad, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    batch = tape.inputs[0].shape[0]
    if g.shape != (batch, net.output_dim):
        raise ShapeError(f"output_grad com shape {np.shape(output_grad)}, esperado ({batch}, {net.output_dim})")

    grads: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        if layer.activation == "relu":
            g = g * (tape.pre_activations[i] > 0.0)
        grads[f"layers.{i}.bias"] = g.sum(axis=0)
        grads[f"layers.{i}.weight"] = g.T @ tape.inputs[i]
        g = g @ layer.weight

    ordered = OrderedDict((name, grads[name]) for name in net.parameters())
    return ordered, (g[0] if tape.single else g)


@dataclass
class OptimizerState:
    """
    Estado do otimizador adaptativo (momentos com correção de viés).

    Os acumuladores são criados no primeiro passo para cada parâmetro que
    recebe gradiente; parâmetros sem gradiente ficam congelados.
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate precisa ser positivo")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigurationError("As taxas de decaimento precisam estar em (0, 1)")


def optimizer_step(net: Parametrized, grads: Dict[str, np.ndarray],
                   state: OptimizerState) -> Tuple[Parametrized, OptimizerState]:
    """
    Aplica um passo do otimizador adaptativo, atualizando os parâmetros no lugar.

    Args:
        net: Objeto com `parameters()` (DenseNet ou modelo composto).
        grads: Gradientes por nome de parâmetro.
        state: Estado do otimizador (modificado no lugar).

    Returns:
        Tuple: (net, state) atualizados.

    Raises:
        ShapeError: Gradiente de parâmetro desconhecido ou com shape diferente.
        NumericError: Gradiente não finito; nada é alterado.
    """
    params = net.parameters()
    for name, grad in grads.items():
        if name not in params:
            raise ShapeError(f"Gradiente para parâmetro desconhecido: {name}")
        if np.shape(grad) != params[name].shape:
            raise ShapeError(f"Gradiente de '{name}' com shape {np.shape(grad)}, esperado {params[name].shape}")
        if not np.all(np.isfinite(grad)):
            raise NumericError(name)

    state.step += 1
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step

    for name, grad in grads.items():
        param = params[name]
        m = state.first_moment.get(name)
        if m is None:
            m = np.zeros_like(param)
            state.first_moment[name] = m
            state.second_moment[name] = np.zeros_like(param)
        v = state.second_moment[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        param -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.eps)

    bump = getattr(net, "bump_version", None)
    if bump is not None:
        bump()
    return net, state


LossFn = Callable[[Parametrized], Tuple[float, Dict[str, np.ndarray]]]


def grad_check(loss_fn: LossFn, net: Parametrized, tol: float = 1e-4,
               step: float = 1e-5, floor: float = 1e-4,
               groups: Optional[Sequence[str]] = None) -> GradReport:
    """
    Compara gradientes analíticos com diferenças centrais, por grupo de parâmetros.

    O erro relativo de cada entrada é |a − n| / max(|a|, |n|, floor); o erro do
    grupo é o maior erro das suas entradas. O chamador escolhe um ponto de
    avaliação longe de dobras da relu.

    Args:
        loss_fn: Função que recebe `net` e retorna (perda, gradientes analíticos).
        net: Objeto com `parameters()`; os parâmetros são perturbados no lugar e restaurados.
        tol: Tolerância do erro relativo.
        step: Passo da diferença central.
        floor: Piso do denominador do erro relativo.
        groups: Grupos a verificar (padrão: todos).

    Returns:
        GradReport: Erros por grupo e o veredito.
    """
    _, analytic = loss_fn(net)
    params = net.parameters()
    names = list(groups) if groups is not None else list(params)

    group_errors: Dict[str, float] = {}
    for name in names:
        param = params[name]
        flat = param.reshape(-1)
        grad = np.asarray(analytic.get(name, np.zeros_like(param))).reshape(-1)
        worst = 0.0
        for j in range(flat.size):
            original = flat[j]
            flat[j] = original + step
            plus, _ = loss_fn(net)
            flat[j] = original - step
            minus, _ = loss_fn(net)
            flat[j] = original
            numeric = (plus - minus) / (2.0 * step)
            err = abs(grad[j] - numeric) / max(abs(grad[j]), abs(numeric), floor)
            worst = max(worst, err)
        group_errors[name] = float(worst)

    report = GradReport(group_errors=group_errors, tolerance=tol,
                        passed=all(err <= tol for err in group_errors.values()))
    if not report.passed:
        logger.warning(f"Verificação de gradiente falhou nos grupos: {report.failed_groups}")
    return report
