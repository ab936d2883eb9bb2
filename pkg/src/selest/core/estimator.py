"""
Estimador de seletividade consistente (modelo, funções lineares por partes e perdas).

Para cada objeto de consulta x o modelo produz, por cluster do layout, os pontos
de controle τ (cabeça τ + Norm_l2 + soma de prefixos) e os valores de controle p
(modelo M: L+2 embeddings decodificados por transformações lineares, relu e soma
de prefixos). A estimativa é a soma, sobre os clusters cujo gate é 1, da
interpolação linear por partes em t. Como τ é estritamente crescente e p é não
decrescente para quaisquer parâmetros, a estimativa é monótona em t.

O backward é manual e em lote: os gradientes das perdas são somados sobre o lote.
"""

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from selest.core.exceptions import ConfigurationError, DomainError, OutOfRangeError, ShapeError
from selest.core.models import HyperParams, PartitionLayout, PlfParams
from selest.core.nnet import DenseNet, ForwardTape, ffn_backward, ffn_forward, init_params
from selest.core.partition import gate_batch
from selest.infrastructure.logging_config import get_logger
from selest.utils.helpers import derive_seeds

logger = get_logger(__name__)


def norm_l2(raw: np.ndarray, eps: float) -> np.ndarray:
    """
    Quadrado normalizado: (raw_j² + eps/m) / (Σ raw_k² + eps), sobre o último eixo.

    Todos os componentes são estritamente positivos e somam 1.
    """
    raw = np.asarray(raw, dtype=np.float64)
    m = raw.shape[-1]
    sq = raw * raw
    return (sq + eps / m) / (sq.sum(axis=-1, keepdims=True) + eps)


def norm_l2_backward(raw: np.ndarray, w: np.ndarray, dw: np.ndarray, eps: float) -> np.ndarray:
    """Gradiente de norm_l2 em relação a raw, dado o gradiente da saída."""
    total = (raw * raw).sum(axis=-1, keepdims=True) + eps
    return 2.0 * raw / total * (dw - (dw * w).sum(axis=-1, keepdims=True))


def prefix_sum(v: np.ndarray) -> np.ndarray:
    """Soma de prefixos sobre o último eixo (produto pela matriz triangular inferior de uns)."""
    return np.cumsum(np.asarray(v, dtype=np.float64), axis=-1)


def _reverse_cumsum(v: np.ndarray) -> np.ndarray:
    return np.flip(np.cumsum(np.flip(v, axis=-1), axis=-1), axis=-1)


def tau_from_weights(w: np.ndarray, t_max: float, eps_pad: float) -> np.ndarray:
    """
    Pontos de controle a partir dos pesos de Norm_l2 (L+1 por linha).

    τ_0 = 0, τ_i = t_max·(w_0 + … + w_{i−1}) para i em [1, L] e τ_{L+1} = t_max + eps_pad.
    """
    w = np.atleast_2d(w)
    L = w.shape[1] - 1
    tau = np.empty((w.shape[0], L + 2))
    tau[:, 0] = 0.0
    tau[:, 1:L + 1] = np.cumsum(w[:, :L] * t_max, axis=1)
    tau[:, L + 1] = t_max + eps_pad
    return tau


def plf_forward(tau: np.ndarray, p: np.ndarray, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Avalia funções lineares por partes em lote.

    Args:
        tau: Pontos de controle (B, L+2).
        p: Valores de controle (B, L+2).
        t: Limiares (B,), já validados em [0, t_max].

    Returns:
        Tuple: (estimativas (B,), índice i do segmento [τ_{i−1}, τ_i), posição s no segmento).
    """
    # Segmento de cada limiar: primeiro τ_i acima de t
    rows = np.arange(tau.shape[0])
    idx = np.count_nonzero(tau <= t[:, None], axis=1)
    lo = idx - 1
    t_lo, t_hi = tau[rows, lo], tau[rows, idx]
    p_lo, p_hi = p[rows, lo], p[rows, idx]
    s = (t - t_lo) / (t_hi - t_lo)
    # est ≤ p_i mesmo com arredondamento
    est = np.minimum(p_lo + s * (p_hi - p_lo), p_hi)
    return est, idx, s


def plf_backward(tau: np.ndarray, p: np.ndarray, idx: np.ndarray, s: np.ndarray,
                 dest: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradientes (dτ, dp) da interpolação dado o gradiente das estimativas."""
    rows = np.arange(tau.shape[0])
    lo = idx - 1
    width = tau[rows, idx] - tau[rows, lo]
    rise = p[rows, idx] - p[rows, lo]

    dp = np.zeros_like(p)
    dtau = np.zeros_like(tau)
    # Só as duas pontas do segmento recebem gradiente
    dp[rows, lo] += dest * (1.0 - s)
    dp[rows, idx] += dest * s
    dtau[rows, lo] += dest * rise * (s - 1.0) / width
    dtau[rows, idx] -= dest * rise * s / width
    return dtau, dp


def plf_eval(params: PlfParams, t: float) -> float:
    """
    Interpolação linear por partes em t.

    Localiza i com t ∈ [τ_{i−1}, τ_i) e retorna p_{i−1} + (t − τ_{i−1})/(τ_i − τ_{i−1})·(p_i − p_{i−1}).

    Raises:
        OutOfRangeError: t < 0 ou t > t_max.
    """
    if not 0.0 <= t <= params.t_max:
        raise OutOfRangeError(f"Limiar {t} fora de [0, {params.t_max}]")
    est, _, _ = plf_forward(params.tau[None, :], params.p[None, :], np.array([float(t)]))
    return float(est[0])


def huber_log_loss(y: Union[float, np.ndarray], y_hat: Union[float, np.ndarray],
                   delta: float = 1.345, eps_log: float = 1.0) -> Union[float, np.ndarray]:
    """
    Perda de Huber sobre r = ln(y + eps) − ln(ŷ + eps).

    r²/2 se |r| ≤ δ, senão δ(|r| − δ/2). Aceita escalares ou arrays (elemento a elemento).

    Raises:
        DomainError: y ou ŷ negativos.
    """
    y_arr = np.asarray(y, dtype=np.float64)
    yh_arr = np.asarray(y_hat, dtype=np.float64)
    if np.any(y_arr < 0) or np.any(yh_arr < 0):
        raise DomainError("huber_log_loss exige y e ŷ não negativos")
    r = np.log(y_arr + eps_log) - np.log(yh_arr + eps_log)
    abs_r = np.abs(r)
    loss = np.where(abs_r <= delta, 0.5 * r * r, delta * (abs_r - 0.5 * delta))
    return float(loss) if loss.ndim == 0 else loss


def huber_log_grad(y: np.ndarray, y_hat: np.ndarray, delta: float = 1.345, eps_log: float = 1.0) -> np.ndarray:
    """Derivada de huber_log_loss em relação a ŷ."""
    r = np.log(y + eps_log) - np.log(y_hat + eps_log)
    return -np.clip(r, -delta, delta) / (y_hat + eps_log)


def _prefixed(prefix: str, params: "OrderedDict[str, np.ndarray]") -> "OrderedDict[str, np.ndarray]":
    return OrderedDict((f"{prefix}.{name}", value) for name, value in params.items())


class AutoEncoder:
    """Autoencoder compartilhado: encoder d → z_dim e decoder z_dim → d."""

    def __init__(self, encoder: DenseNet, decoder: DenseNet):
        if encoder.output_dim != decoder.input_dim or decoder.output_dim != encoder.input_dim:
            raise ShapeError(
                f"Autoencoder inconsistente: encoder {encoder.layer_sizes}, decoder {decoder.layer_sizes}"
            )
        self.encoder = encoder
        self.decoder = decoder

    @classmethod
    def build(cls, d: int, hidden: Sequence[int], z_dim: int, seed: int) -> "AutoEncoder":
        enc_seed, dec_seed = derive_seeds(seed, 2)
        encoder = init_params([d, *hidden, z_dim], enc_seed)
        decoder = init_params([z_dim, *reversed(list(hidden)), d], dec_seed)
        return cls(encoder, decoder)

    @property
    def z_dim(self) -> int:
        return self.encoder.output_dim

    @property
    def d(self) -> int:
        return self.encoder.input_dim

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        params = _prefixed("encoder", self.encoder.parameters())
        params.update(_prefixed("decoder", self.decoder.parameters()))
        return params

    def bump_version(self) -> None:
        self.encoder.bump_version()
        self.decoder.bump_version()

    def encode(self, X: np.ndarray) -> np.ndarray:
        return ffn_forward(self.encoder, X)[0]

    def reconstruction_loss(self, X: np.ndarray) -> float:
        """Erro quadrático médio de reconstrução."""
        X = np.atleast_2d(X)
        recon = ffn_forward(self.decoder, self.encode(X))[0]
        return float(np.mean((recon - X) ** 2))

    def reconstruction_loss_and_grads(self, X: np.ndarray) -> Tuple[float, "OrderedDict[str, np.ndarray]"]:
        """Erro quadrático médio de reconstrução e seus gradientes."""
        X = np.atleast_2d(X)
        z, tape_enc = ffn_forward(self.encoder, X)
        recon, tape_dec = ffn_forward(self.decoder, z)
        diff = recon - X
        loss = float(np.mean(diff * diff))
        g_dec, dz = ffn_backward(self.decoder, tape_dec, 2.0 * diff / diff.size)
        g_enc, _ = ffn_backward(self.encoder, tape_enc, dz)
        grads = _prefixed("encoder", g_enc)
        grads.update(_prefixed("decoder", g_dec))
        return loss, grads


@dataclass
class LocalForward:
    """Cache do forward de um estimador local sobre um lote."""

    tau_input: np.ndarray
    raw: np.ndarray
    w: np.ndarray
    tau: np.ndarray
    H: np.ndarray
    a: np.ndarray
    p: np.ndarray
    tape_tau: ForwardTape
    tape_m: ForwardTape
    idx: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None


class LocalEstimator:
    """
    Estimador local: cabeça τ ([x; z] → L+1 incrementos brutos), rede M
    ([x; z] → (L+2)·h embeddings) e o decoder linear por slot (w_i, b_i).

    Com query_dependent_tau=False a cabeça τ recebe um vetor constante de uns.
    """

    def __init__(self, tau_net: DenseNet, m_net: DenseNet, dec_w: np.ndarray, dec_b: np.ndarray,
                 query_dependent_tau: bool = True):
        L = tau_net.output_dim - 1
        h_dim = dec_w.shape[1]
        if L < 1:
            raise ConfigurationError("A cabeça τ precisa de pelo menos 2 saídas (L >= 1)")
        if dec_w.shape != (L + 2, h_dim) or dec_b.shape != (L + 2,):
            raise ShapeError(f"Decoder com shapes {dec_w.shape}/{dec_b.shape}, esperado ({L + 2}, h)/({L + 2},)")
        if m_net.output_dim != (L + 2) * h_dim:
            raise ShapeError(f"Rede M com saída {m_net.output_dim}, esperado {(L + 2) * h_dim}")
        if tau_net.input_dim != m_net.input_dim:
            raise ShapeError("Cabeça τ e rede M precisam da mesma entrada [x; z]")
        self.tau_net = tau_net
        self.m_net = m_net
        self.dec_w = np.ascontiguousarray(dec_w, dtype=np.float64)
        self.dec_b = np.ascontiguousarray(dec_b, dtype=np.float64)
        self.query_dependent_tau = query_dependent_tau

    @classmethod
    def build(cls, in_dim: int, L: int, h_dim: int, tau_hidden: Sequence[int], m_hidden: Sequence[int],
              seed: int, query_dependent_tau: bool = True) -> "LocalEstimator":
        tau_seed, m_seed, dec_seed = derive_seeds(seed, 3)
        tau_net = init_params([in_dim, *tau_hidden, L + 1], tau_seed)
        m_net = init_params([in_dim, *m_hidden, (L + 2) * h_dim], m_seed)
        rng = np.random.default_rng(dec_seed)
        dec_w = rng.standard_normal((L + 2, h_dim)) * np.sqrt(2.0 / h_dim)
        return cls(tau_net, m_net, dec_w, np.zeros(L + 2), query_dependent_tau)

    @property
    def L(self) -> int:
        return self.tau_net.output_dim - 1

    @property
    def h_dim(self) -> int:
        return int(self.dec_w.shape[1])

    @property
    def in_dim(self) -> int:
        return self.tau_net.input_dim

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        params = _prefixed("tau_net", self.tau_net.parameters())
        params.update(_prefixed("m_net", self.m_net.parameters()))
        params["decoder.weight"] = self.dec_w
        params["decoder.bias"] = self.dec_b
        return params

    def bump_version(self) -> None:
        self.tau_net.bump_version()
        self.m_net.bump_version()

    def weight_count(self) -> int:
        return self.tau_net.weight_count() + self.m_net.weight_count() + self.dec_w.size + self.dec_b.size

    def forward(self, x_aug: np.ndarray, t_max: float, eps_norm: float, eps_pad: float) -> LocalForward:
        x_aug = np.atleast_2d(x_aug)
        B = x_aug.shape[0]
        # Pontos de controle a partir da rede τ
        tau_input = x_aug if self.query_dependent_tau else np.ones_like(x_aug)
        raw, tape_tau = ffn_forward(self.tau_net, tau_input)
        w = norm_l2(raw, eps_norm)
        tau = tau_from_weights(w, t_max, eps_pad)

        # Valores de controle: incrementos não negativos acumulados
        m_out, tape_m = ffn_forward(self.m_net, x_aug)
        H = m_out.reshape(B, self.L + 2, self.h_dim)
        a = np.einsum("bih,ih->bi", H, self.dec_w) + self.dec_b
        p = np.cumsum(np.maximum(a, 0.0), axis=1)
        return LocalForward(tau_input, raw, w, tau, H, a, p, tape_tau, tape_m)

    def backward(self, cache: LocalForward, dtau: np.ndarray, dp: np.ndarray,
                 t_max: float, eps_norm: float) -> Tuple["OrderedDict[str, np.ndarray]", np.ndarray]:
        """
        Propaga (dτ, dp) até os parâmetros e a entrada [x; z].

        Returns:
            Tuple: (gradientes com os mesmos nomes de `parameters()`, gradiente de x_aug).
        """
        B = cache.p.shape[0]
        L = self.L

        # Ramo dos valores até a rede M
        da = _reverse_cumsum(dp) * (cache.a > 0.0)
        g_dec_w = np.einsum("bi,bih->ih", da, cache.H)
        g_dec_b = da.sum(axis=0)
        dH = da[:, :, None] * self.dec_w[None, :, :]
        g_m, dx_m = ffn_backward(self.m_net, cache.tape_m, dH.reshape(B, -1))

        # Ramo dos pontos até a rede τ; w_L não entra em τ
        dw = np.zeros_like(cache.w)
        dw[:, :L] = t_max * _reverse_cumsum(dtau[:, 1:L + 1])
        draw = norm_l2_backward(cache.raw, cache.w, dw, eps_norm)
        g_tau, dx_tau = ffn_backward(self.tau_net, cache.tape_tau, draw)

        grads = _prefixed("tau_net", g_tau)
        grads.update(_prefixed("m_net", g_m))
        grads["decoder.weight"] = g_dec_w
        grads["decoder.bias"] = g_dec_b
        dx_aug = dx_m + dx_tau if self.query_dependent_tau else dx_m
        return grads, dx_aug


def control_points(local: LocalEstimator, x_aug: np.ndarray, hyper: HyperParams) -> np.ndarray:
    """Pontos de controle τ (L+2,) do estimador local para uma entrada aumentada."""
    cache = local.forward(np.asarray(x_aug, dtype=np.float64)[None, :], hyper.t_max, hyper.eps_norm, hyper.eps_pad)
    return cache.tau[0]


def control_values(local: LocalEstimator, x_aug: np.ndarray, hyper: Optional[HyperParams] = None) -> np.ndarray:
    """Valores de controle p (L+2,) do estimador local para uma entrada aumentada."""
    hyper = hyper or HyperParams(L=local.L)
    cache = local.forward(np.asarray(x_aug, dtype=np.float64)[None, :], hyper.t_max, hyper.eps_norm, hyper.eps_pad)
    return cache.p[0]


@dataclass
class ModelForward:
    """Cache do forward do modelo completo sobre um lote."""

    X: np.ndarray
    t: np.ndarray
    gates: np.ndarray
    z: np.ndarray
    tape_enc: ForwardTape
    locals: List[LocalForward] = field(default_factory=list)
    est_local: Optional[np.ndarray] = None
    est: Optional[np.ndarray] = None


class SelNetModel:
    """
    Modelo completo: autoencoder compartilhado, K estimadores locais, o layout
    de partição e os hiperparâmetros.
    """

    def __init__(self, ae: AutoEncoder, locals_: Sequence[LocalEstimator], layout: PartitionLayout,
                 hyper: HyperParams):
        if len(locals_) != layout.k:
            raise ConfigurationError(f"{len(locals_)} estimadores locais para um layout com K={layout.k}")
        in_dim = ae.d + ae.z_dim
        for local in locals_:
            if local.in_dim != in_dim or local.L != hyper.L:
                raise ShapeError("Estimadores locais precisam consumir [x; z] e ter o L dos hiperparâmetros")
        self.ae = ae
        self.locals: List[LocalEstimator] = list(locals_)
        self.layout = layout
        self.hyper = hyper

    @classmethod
    def build(cls, hyper: HyperParams, d: int, layout: PartitionLayout,
              seed: Optional[int] = None) -> "SelNetModel":
        """
        Inicializa um modelo com parâmetros aleatórios determinísticos.

        Args:
            hyper: Hiperparâmetros.
            d: Dimensão dos vetores.
            layout: Layout de partição (define K).
            seed: Semente (padrão: hyper.seed).
        """
        seed = hyper.seed if seed is None else seed
        seeds = derive_seeds(seed, 1 + layout.k)
        ae = AutoEncoder.build(d, hyper.ae_hidden, hyper.z_dim, seeds[0])
        locals_ = [
            LocalEstimator.build(d + hyper.z_dim, hyper.L, hyper.h_dim, hyper.tau_hidden, hyper.m_hidden,
                                 seeds[1 + k], hyper.query_dependent_tau)
            for k in range(layout.k)
        ]
        return cls(ae, locals_, layout, hyper)

    @property
    def K(self) -> int:
        return len(self.locals)

    @property
    def L(self) -> int:
        return self.hyper.L

    @property
    def d(self) -> int:
        return self.ae.d

    @property
    def t_max(self) -> float:
        return self.hyper.t_max

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        params = _prefixed("ae", self.ae.parameters())
        for k, local in enumerate(self.locals):
            params.update(_prefixed(f"locals.{k}", local.parameters()))
        return params

    def bump_version(self) -> None:
        self.ae.bump_version()
        for local in self.locals:
            local.bump_version()

    def get_state(self) -> "OrderedDict[str, np.ndarray]":
        """Cópia de todos os parâmetros (snapshot)."""
        return OrderedDict((name, value.copy()) for name, value in self.parameters().items())

    def set_state(self, state: Dict[str, np.ndarray]) -> None:
        """Restaura um snapshot, copiando os valores para os arrays existentes."""
        params = self.parameters()
        if set(state) != set(params):
            raise ShapeError("Snapshot com parâmetros diferentes dos do modelo")
        for name, value in state.items():
            params[name][...] = value
        self.bump_version()

    def weight_count(self) -> int:
        """Pesos (sem vieses das redes), como na contagem de complexidade."""
        return (self.ae.encoder.weight_count() + self.ae.decoder.weight_count()
                + sum(local.weight_count() for local in self.locals))

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))

    def replace_layout(self, layout: PartitionLayout) -> None:
        """Troca o layout mantendo os modelos locais (o K precisa ser o mesmo)."""
        if layout.k != self.K:
            raise ConfigurationError(f"Layout com K={layout.k}, modelo com K={self.K}")
        self.layout = layout

    def _check_inputs(self, X: np.ndarray, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ShapeError(f"Consultas com shape {X.shape}, esperado (B, {self.d})")
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (X.shape[0],)).copy()
        if not np.all(np.isfinite(t)) or np.any(t < 0.0) or np.any(t > self.t_max):
            bad = t[~((t >= 0.0) & (t <= self.t_max))]
            raise OutOfRangeError(f"Limiar fora de [0, {self.t_max}]: {bad[:5].tolist()}")
        return X, t

    def forward(self, X: np.ndarray, t: np.ndarray, gates: Optional[np.ndarray] = None) -> ModelForward:
        """Forward completo com cache para o backward."""
        X, t = self._check_inputs(X, t)
        if gates is None:
            gates = gate_batch(self.layout, X, t)
        # Entrada aumentada [x; z]
        z, tape_enc = ffn_forward(self.ae.encoder, X)
        x_aug = np.hstack([X, z])

        cache = ModelForward(X=X, t=t, gates=gates, z=z, tape_enc=tape_enc)
        est_local = np.zeros((X.shape[0], self.K))
        for k, local in enumerate(self.locals):
            lf = local.forward(x_aug, self.t_max, self.hyper.eps_norm, self.hyper.eps_pad)
            est_local[:, k], lf.idx, lf.s = plf_forward(lf.tau, lf.p, t)
            cache.locals.append(lf)

        # Combinação pelos gates f_c
        est = np.zeros(X.shape[0])
        for k in range(self.K):
            est = est + gates[:, k] * est_local[:, k]
        cache.est_local = est_local
        cache.est = est
        return cache

    def estimate_batch(self, X: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Estimativas para um lote de consultas (B,)."""
        return self.forward(X, t).est

    def estimate(self, x: np.ndarray, t: float) -> float:
        """
        Estimativa de seletividade de (x, t).

        Raises:
            OutOfRangeError: t fora de [0, t_max].
        """
        return float(self.estimate_batch(np.asarray(x, dtype=np.float64)[None, :], np.array([t]))[0])

    def local_params(self, x: np.ndarray) -> List[PlfParams]:
        """Parâmetros Θ de cada estimador local para a consulta x."""
        X, _ = self._check_inputs(x, np.zeros(1))
        x_aug = np.hstack([X, self.ae.encode(X)])
        out = []
        for local in self.locals:
            lf = local.forward(x_aug, self.t_max, self.hyper.eps_norm, self.hyper.eps_pad)
            out.append(PlfParams(tau=lf.tau[0], p=lf.p[0], t_max=self.t_max))
        return out

    def estimate_curve(self, x: np.ndarray, ts: np.ndarray) -> np.ndarray:
        """
        Estimativas de uma mesma consulta em vários limiares, com um único forward das redes.
        """
        ts = np.asarray(ts, dtype=np.float64)
        X, ts = self._check_inputs(np.asarray(x, dtype=np.float64)[None, :].repeat(ts.size, axis=0), ts)
        params = self.local_params(X[0])
        gates = gate_batch(self.layout, X, ts)
        est = np.zeros(ts.size)
        for k, theta in enumerate(params):
            tau = np.broadcast_to(theta.tau, (ts.size, theta.tau.size))
            p = np.broadcast_to(theta.p, (ts.size, theta.p.size))
            est = est + gates[:, k] * plf_forward(tau, p, ts)[0]
        return est


def ffn_complexity(sizes: Sequence[int]) -> int:
    """Número de pesos de uma FFN: soma dos produtos de tamanhos consecutivos."""
    return int(sum(sizes[i] * sizes[i + 1] for i in range(len(sizes) - 1)))


def model_complexity(hyper: HyperParams, d: int, k: Optional[int] = None) -> int:
    """
    Tamanho do modelo em forma fechada.

    |AE| + K·(|FFN([x;z] → τ)| + |FFN([x;z] → H)| + (L+2)·h + (L+2)).
    """
    k = hyper.effective_k if k is None else k
    x_dim = d + hyper.z_dim
    ae = (ffn_complexity([d, *hyper.ae_hidden, hyper.z_dim])
          + ffn_complexity([hyper.z_dim, *reversed(hyper.ae_hidden), d]))
    local = (ffn_complexity([x_dim, *hyper.tau_hidden, hyper.L + 1])
             + ffn_complexity([x_dim, *hyper.m_hidden, (hyper.L + 2) * hyper.h_dim])
             + (hyper.L + 2) * hyper.h_dim + (hyper.L + 2))
    return ae + k * local


@dataclass
class LossWeights:
    """
    Pesos da perda combinada.

    J = global_weight·J_est(f̂) + local_weight·Σ_i J_est(f̂_i) + lambda_ae·J_AE.
    """

    global_weight: float = 1.0
    local_weight: float = 0.0
    lambda_ae: float = 0.1

    @classmethod
    def standard(cls, hyper: HyperParams) -> "LossWeights":
        return cls(1.0, 0.0, hyper.lambda_ae)

    @classmethod
    def joint(cls, hyper: HyperParams) -> "LossWeights":
        return cls(1.0, hyper.beta_joint, hyper.lambda_ae)

    @classmethod
    def local(cls, hyper: HyperParams) -> "LossWeights":
        return cls(0.0, 1.0, hyper.lambda_ae)


@dataclass
class TrainingBatch:
    """Lote de treino com gates pré-calculados e rótulos por cluster opcionais."""

    X: np.ndarray
    t: np.ndarray
    y: np.ndarray
    gates: np.ndarray
    y_cluster: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.X.shape[0] == 0:
            raise ConfigurationError("Lote de treino vazio")

    @classmethod
    def from_arrays(cls, model: SelNetModel, X: np.ndarray, t: np.ndarray, y: np.ndarray,
                    y_cluster: Optional[np.ndarray] = None) -> "TrainingBatch":
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        t = np.asarray(t, dtype=np.float64)
        return cls(X, t, np.asarray(y, dtype=np.float64), gate_batch(model.layout, X, t), y_cluster)

    def subset(self, rows: np.ndarray) -> "TrainingBatch":
        return TrainingBatch(self.X[rows], self.t[rows], self.y[rows], self.gates[rows],
                             None if self.y_cluster is None else self.y_cluster[rows])


def _cluster_labels(model: SelNetModel, batch: TrainingBatch) -> np.ndarray:
    if batch.y_cluster is not None:
        if batch.y_cluster.shape != (batch.X.shape[0], model.K):
            raise ConfigurationError(
                f"Rótulos por cluster com shape {batch.y_cluster.shape}, esperado ({batch.X.shape[0]}, {model.K})"
            )
        return batch.y_cluster
    if model.K == 1:
        return batch.y[:, None]
    raise ConfigurationError("Rótulos por cluster são obrigatórios quando o peso das perdas locais é positivo")


def loss_and_grads(model: SelNetModel, batch: TrainingBatch,
                   weights: Optional[LossWeights] = None,
                   need_grads: bool = True) -> Tuple[float, "OrderedDict[str, np.ndarray]"]:
    """
    Perda combinada e seus gradientes em relação a todos os parâmetros do modelo.

    J_est é a soma da perda Huber-log sobre o lote; J_AE é o erro quadrático
    médio de reconstrução das consultas do lote. As perdas locais comparam a
    estimativa do cluster (com gate) ao rótulo do cluster.

    Raises:
        ConfigurationError: Peso local positivo sem rótulos por cluster (K > 1).
    """
    weights = weights or LossWeights.standard(model.hyper)
    hyper = model.hyper
    fw = model.forward(batch.X, batch.t, batch.gates)
    B = fw.X.shape[0]

    # Gradiente da perda em relação à estimativa de cada cluster
    total = 0.0
    dest_local = np.zeros((B, model.K))
    if weights.global_weight > 0.0:
        total += weights.global_weight * float(np.sum(huber_log_loss(batch.y, fw.est, hyper.delta_huber, hyper.eps_log)))
        g = weights.global_weight * huber_log_grad(batch.y, fw.est, hyper.delta_huber, hyper.eps_log)
        dest_local += g[:, None]
    if weights.local_weight > 0.0:
        y_cluster = _cluster_labels(model, batch)
        gated = batch.gates * fw.est_local
        total += weights.local_weight * float(np.sum(huber_log_loss(y_cluster, gated, hyper.delta_huber, hyper.eps_log)))
        dest_local += weights.local_weight * huber_log_grad(y_cluster, gated, hyper.delta_huber, hyper.eps_log)
    dest_local *= batch.gates

    # Reconstrução das consultas do lote
    recon, tape_dec = ffn_forward(model.ae.decoder, fw.z)
    diff = recon - fw.X
    total += weights.lambda_ae * float(np.mean(diff * diff))

    if not need_grads:
        return total, OrderedDict()

    grads: "OrderedDict[str, np.ndarray]" = OrderedDict()
    local_grads = []
    # Backward de cada estimador local, acumulando o gradiente de [x; z]
    dx_aug = np.zeros((B, model.d + model.ae.z_dim))
    for k, (local, lf) in enumerate(zip(model.locals, fw.locals)):
        dtau, dp = plf_backward(lf.tau, lf.p, lf.idx, lf.s, dest_local[:, k])
        g_local, dx = local.backward(lf, dtau, dp, model.t_max, hyper.eps_norm)
        local_grads.append(_prefixed(f"locals.{k}", g_local))
        dx_aug += dx

    # O encoder recebe o gradiente dos locais e o da reconstrução
    g_dec, dz_ae = ffn_backward(model.ae.decoder, tape_dec, weights.lambda_ae * 2.0 * diff / diff.size)
    g_enc, _ = ffn_backward(model.ae.encoder, fw.tape_enc, dx_aug[:, model.d:] + dz_ae)

    grads.update(_prefixed("ae.encoder", g_enc))
    grads.update(_prefixed("ae.decoder", g_dec))
    for g_local in local_grads:
        grads.update(g_local)
    return total, grads


def total_loss(model: SelNetModel, batch: TrainingBatch, weights: Optional[LossWeights] = None) -> float:
    """Valor da perda combinada, sem gradientes."""
    return loss_and_grads(model, batch, weights, need_grads=False)[0]
