"""
Demonstração unidimensional: pontos de controle aprendidos contra fixos.

Ajusta y = exp(t)/10 em [0, 10] a partir de 80 amostras com 8 pontos de
controle. O modelo "learned" aprende τ e p; o modelo "fixed" mantém τ
igualmente espaçado e aprende só p. Ambos partem da mesma inicialização.
"""

import io
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from selest.core.estimator import LocalEstimator, plf_backward, plf_forward
from selest.core.models import PlfParams
from selest.core.nnet import OptimizerState, optimizer_step
from selest.infrastructure.logging_config import get_logger
from selest.utils.helpers import measure_time

logger = get_logger(__name__)

TOY_T_MAX = 10.0
TOY_INTERIOR_POINTS = 6
TOY_SAMPLES = 80
TOY_H_DIM = 4
TOY_EPS_NORM = 1e-6
GRID_POINTS = 201


def toy_function(t: np.ndarray) -> np.ndarray:
    return np.exp(t) / 10.0


@dataclass
class ToyFit:
    """Resultado do ajuste de uma variante."""

    name: str
    params: PlfParams
    mse: float


@dataclass
class ToyDemoResult:
    """Curvas e métricas das duas variantes."""

    grid: np.ndarray
    truth: np.ndarray
    learned: ToyFit
    fixed: ToyFit
    learned_curve: np.ndarray
    fixed_curve: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        return {
            name: {"tau": fit.params.tau.tolist(), "p": fit.params.p.tolist(), "mse": fit.mse}
            for name, fit in (("learned", self.learned), ("fixed", self.fixed))
        }

    def to_csv(self) -> str:
        """CSV plotável com as colunas t, truth, learned, fixed."""
        buffer = io.StringIO()
        buffer.write("t,truth,learned,fixed\n")
        for row in zip(self.grid, self.truth, self.learned_curve, self.fixed_curve):
            buffer.write(",".join(repr(float(v)) for v in row) + "\n")
        return buffer.getvalue()


class ToyDemoService:
    """Executa a demonstração de pontos de controle."""

    def __init__(self, epochs: int = 3000, learning_rate: float = 0.02, seed: int = 0):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.seed = seed
        logger.debug(f"ToyDemoService inicializado (epochs={epochs}, lr={learning_rate}, seed={seed})")

    def _initial_estimator(self) -> LocalEstimator:
        local = LocalEstimator.build(1, TOY_INTERIOR_POINTS, TOY_H_DIM, [], [], self.seed)
        tau_layer = local.tau_net.layers[0]
        tau_layer.weight[...] = 0.0
        tau_layer.bias[...] = 1.0
        local.dec_w *= 0.01
        local.dec_b[...] = 0.1
        local.bump_version()
        return local

    def _fit(self, name: str, t: np.ndarray, y: np.ndarray, learn_tau: bool) -> ToyFit:
        local = self._initial_estimator()
        x_aug = np.ones((t.size, 1))
        state = OptimizerState(learning_rate=self.learning_rate)

        def evaluate():
            cache = local.forward(x_aug, TOY_T_MAX, TOY_EPS_NORM, TOY_EPS_NORM * TOY_T_MAX)
            est, idx, s = plf_forward(cache.tau, cache.p, t)
            return cache, est, idx, s

        best_mse = np.inf
        best = None
        for _ in range(self.epochs + 1):
            cache, est, idx, s = evaluate()
            diff = est - y
            mse = float(np.mean(diff * diff))
            if mse < best_mse:
                best_mse = mse
                best = {k: v.copy() for k, v in local.parameters().items()}
            dtau, dp = plf_backward(cache.tau, cache.p, idx, s, 2.0 * diff / t.size)
            grads, _ = local.backward(cache, dtau, dp, TOY_T_MAX, TOY_EPS_NORM)
            if not learn_tau:
                grads = {k: g for k, g in grads.items() if not k.startswith("tau_net.")}
            optimizer_step(local, grads, state)

        params = local.parameters()
        for k, v in best.items():
            params[k][...] = v
        local.bump_version()
        cache, _, _, _ = evaluate()
        theta = PlfParams(tau=cache.tau[0], p=cache.p[0], t_max=TOY_T_MAX)
        logger.info(f"Variante {name}: MSE normalizado {best_mse:.3e}")
        return ToyFit(name=name, params=theta, mse=best_mse)

    @measure_time
    def run(self) -> ToyDemoResult:
        """
        Ajusta as duas variantes e amostra as curvas numa grade de 201 pontos.

        Os alvos são normalizados pelo maior valor durante o ajuste; MSEs,
        valores de controle e curvas são devolvidos na escala original.
        """
        t = np.linspace(0.0, TOY_T_MAX, TOY_SAMPLES)
        y = toy_function(t)
        scale = float(y.max())

        fits = {}
        for name, learn_tau in (("learned", True), ("fixed", False)):
            fit = self._fit(name, t, y / scale, learn_tau)
            fits[name] = ToyFit(
                name=name,
                params=PlfParams(tau=fit.params.tau, p=fit.params.p * scale, t_max=TOY_T_MAX),
                mse=fit.mse * scale * scale,
            )

        grid = np.linspace(0.0, TOY_T_MAX, GRID_POINTS)

        def curve(fit: ToyFit) -> np.ndarray:
            tau = np.broadcast_to(fit.params.tau, (grid.size, fit.params.tau.size))
            p = np.broadcast_to(fit.params.p, (grid.size, fit.params.p.size))
            return plf_forward(tau, p, grid)[0]

        result = ToyDemoResult(
            grid=grid,
            truth=toy_function(grid),
            learned=fits["learned"],
            fixed=fits["fixed"],
            learned_curve=curve(fits["learned"]),
            fixed_curve=curve(fits["fixed"]),
        )
        logger.info(
            f"Demo: MSE aprendido {result.learned.mse:.4f}, MSE fixo {result.fixed.mse:.4f} "
            f"(razão {result.learned.mse / max(result.fixed.mse, 1e-300):.3f})"
        )
        return result
