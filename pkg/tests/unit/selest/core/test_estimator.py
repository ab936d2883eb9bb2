"""
Testes unitários para o estimador consistente (selest.core.estimator).

Cobrem as peças da função linear por partes, a perda Huber-log, o modelo
completo (monotonicidade, gates, contagem de parâmetros) e os gradientes da
perda combinada contra diferenças finitas.
"""

import numpy as np
import pytest

from selest.core.estimator import (
    AutoEncoder,
    LocalEstimator,
    LossWeights,
    SelNetModel,
    TrainingBatch,
    control_points,
    control_values,
    ffn_complexity,
    huber_log_grad,
    huber_log_loss,
    loss_and_grads,
    model_complexity,
    norm_l2,
    norm_l2_backward,
    plf_backward,
    plf_eval,
    plf_forward,
    prefix_sum,
    tau_from_weights,
    total_loss,
)
from selest.core.exceptions import ConfigurationError, DomainError, OutOfRangeError, ShapeError
from selest.core.models import HyperParams, PlfParams, VectorDataset
from selest.core.nnet import grad_check
from selest.core.oracle import distances_to
from selest.core.partition import build_layout, partition_random


def _tiny_hyper(**overrides):
    values = dict(L=4, K=2, r=0.3, z_dim=3, h_dim=4, tau_hidden=[8], m_hidden=[8], ae_hidden=[8],
                  t_max=10.0, seed=0)
    values.update(overrides)
    return HyperParams(**values)


def _tiny_dataset(n=60, d=6, seed=0):
    return VectorDataset(np.random.default_rng(seed).normal(size=(n, d)))


def _labeled_batch(model, D, size=10, seed=1):
    """Lote com rótulos exatos globais e por cluster."""
    rng = np.random.default_rng(seed)
    X = D.rows[:size] + rng.normal(scale=0.1, size=(size, D.d))
    t = rng.uniform(0.5, 5.0, size=size)
    owner = np.empty(D.n, dtype=np.int64)
    for k, cluster in enumerate(model.layout.clusters):
        owner[cluster.member_indices] = k
    y = np.empty(size)
    y_cluster = np.zeros((size, model.K))
    for i in range(size):
        inside = distances_to(D.rows, X[i], D.distance_kind) <= t[i]
        y[i] = np.count_nonzero(inside)
        y_cluster[i] = np.bincount(owner[inside], minlength=model.K)
    return TrainingBatch.from_arrays(model, X, t, y, y_cluster)


class TestNormL2:
    """Testes para norm_l2 e seu backward."""

    def test_sums_to_one_and_positive(self):
        """Testa soma 1 e positividade estrita em 10.000 parametrizações."""
        # Arrange
        raw = np.random.default_rng(0).normal(scale=3.0, size=(10_000, 51))
        raw[:10] = 0.0

        # Act
        w = norm_l2(raw, 1e-6)

        # Assert
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(w > 0.0)

    def test_backward_matches_finite_differences(self):
        """Testa o gradiente de norm_l2 contra diferenças centrais."""
        # Arrange
        rng = np.random.default_rng(1)
        raw = rng.normal(size=(1, 6))
        coeffs = rng.normal(size=(1, 6))
        w = norm_l2(raw, 1e-6)

        # Act
        analytic = norm_l2_backward(raw, w, coeffs, 1e-6)
        numeric = np.zeros_like(raw)
        for j in range(raw.shape[1]):
            plus, minus = raw.copy(), raw.copy()
            plus[0, j] += 1e-6
            minus[0, j] -= 1e-6
            numeric[0, j] = (np.sum(coeffs * norm_l2(plus, 1e-6)) - np.sum(coeffs * norm_l2(minus, 1e-6))) / 2e-6

        # Assert
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)


class TestPrefixSumAndControlPoints:
    """Testes para prefix_sum e tau_from_weights."""

    def test_prefix_sum_matches_triangular_matrix(self):
        """Testa a igualdade exata com o produto pela matriz triangular inferior de uns."""
        # Arrange
        v = np.random.default_rng(2).integers(-5, 6, size=12).astype(np.float64)
        m_psum = np.tril(np.ones((12, 12)))

        # Act & Assert
        np.testing.assert_array_equal(prefix_sum(v), m_psum @ v)

    def test_tau_structure(self):
        """Testa τ_0 = 0, τ estritamente crescente e τ_{L+1} = t_max + eps_pad."""
        # Arrange
        raw = np.random.default_rng(3).normal(scale=3.0, size=(10_000, 51))
        w = norm_l2(raw, 1e-6)

        # Act
        tau = tau_from_weights(w, 54.0, 54e-6)

        # Assert
        assert tau.shape == (10_000, 52)
        assert np.all(tau[:, 0] == 0.0)
        assert np.all(np.diff(tau, axis=1) > 0.0)
        np.testing.assert_array_equal(tau[:, -1], 54.0 + 54e-6)
        assert np.all(tau[:, -2] < 54.0 + 54e-6)


class TestPiecewiseLinear:
    """Testes para plf_eval, plf_forward e plf_backward."""

    @pytest.fixture
    def params(self):
        return PlfParams(tau=[0.0, 1.0, 2.0, 3.000001], p=[0.0, 2.0, 4.0, 5.0], t_max=3.0)

    @pytest.mark.parametrize("t, expected", [(0.0, 0.0), (0.5, 1.0), (1.0, 2.0), (1.5, 3.0), (2.0, 4.0)])
    def test_interpolation(self, params, t, expected):
        """Testa valores interpolados dentro e nas bordas dos segmentos."""
        assert plf_eval(params, t) == pytest.approx(expected)

    def test_t_max_is_inside_last_segment(self, params):
        """Testa que t_max fica antes do último ponto de controle."""
        assert plf_eval(params, 3.0) == pytest.approx(5.0, abs=1e-5)
        assert plf_eval(params, 3.0) <= 5.0

    @pytest.mark.parametrize("t", [-0.1, 3.5])
    def test_out_of_range(self, params, t):
        """Testa OutOfRangeError fora de [0, t_max]."""
        with pytest.raises(OutOfRangeError):
            plf_eval(params, t)

    def test_valid_params(self, params):
        """Testa a verificação estrutural de PlfParams."""
        assert params.is_valid()
        assert not PlfParams(tau=[0.0, 2.0, 1.0, 4.0], p=[0, 1, 2, 3], t_max=3.0).is_valid()

    def test_backward_matches_finite_differences(self):
        """Testa (dτ, dp) contra diferenças centrais, longe dos pontos de controle."""
        # Arrange
        tau = np.array([[0.0, 1.0, 2.5, 4.0, 5.000001]] * 4)
        p = np.array([[0.5, 1.0, 3.0, 3.5, 7.0]] * 4)
        t = np.array([0.5, 1.7, 3.0, 4.5])
        coeffs = np.array([1.0, -2.0, 0.5, 3.0])
        _, idx, s = plf_forward(tau, p, t)

        def f(tau_, p_):
            return float(np.sum(coeffs * plf_forward(tau_, p_, t)[0]))

        # Act
        dtau, dp = plf_backward(tau, p, idx, s, coeffs)
        num_tau = np.zeros_like(tau)
        num_p = np.zeros_like(p)
        for i in range(4):
            for j in range(5):
                for target, out in ((tau, num_tau), (p, num_p)):
                    original = target[i, j]
                    target[i, j] = original + 1e-7
                    plus = f(tau, p)
                    target[i, j] = original - 1e-7
                    minus = f(tau, p)
                    target[i, j] = original
                    out[i, j] = (plus - minus) / 2e-7

        # Assert
        np.testing.assert_allclose(dtau, num_tau, atol=1e-6)
        np.testing.assert_allclose(dp, num_p, atol=1e-6)


class TestHuberLog:
    """Testes para huber_log_loss e huber_log_grad."""

    def test_zero_when_equal(self):
        assert huber_log_loss(10.0, 10.0) == 0.0

    def test_quadratic_region(self):
        """Testa r = 1 (região quadrática): r²/2."""
        assert huber_log_loss(np.e - 1.0, 0.0) == pytest.approx(0.5)

    def test_linear_region(self):
        """Testa r = 3 (região linear): δ(|r| − δ/2)."""
        assert huber_log_loss(np.exp(3.0) - 1.0, 0.0) == pytest.approx(1.345 * (3.0 - 1.345 / 2.0))

    def test_array_input(self):
        """Testa a avaliação elemento a elemento."""
        out = huber_log_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
        assert isinstance(out, np.ndarray)
        np.testing.assert_array_equal(out, [0.0, 0.0])

    def test_negative_inputs(self):
        """Testa DomainError para entradas negativas."""
        with pytest.raises(DomainError):
            huber_log_loss(-1.0, 2.0)
        with pytest.raises(DomainError):
            huber_log_loss(1.0, -2.0)

    def test_grad_matches_finite_differences(self):
        """Testa a derivada em relação a ŷ nas duas regiões."""
        # Arrange
        y = np.array([5.0, 100.0, 0.0, 3.0])
        y_hat = np.array([4.0, 1.0, 50.0, 3.5])

        # Act
        analytic = huber_log_grad(y, y_hat)
        numeric = (huber_log_loss(y, y_hat + 1e-6) - huber_log_loss(y, y_hat - 1e-6)) / 2e-6

        # Assert
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5)


class TestLocalEstimator:
    """Testes para LocalEstimator, control_points e control_values."""

    @pytest.fixture
    def local(self):
        return LocalEstimator.build(in_dim=9, L=4, h_dim=4, tau_hidden=[8], m_hidden=[8], seed=3)

    def test_control_values_non_decreasing(self, local):
        """Testa p não decrescente e p_0 ≥ 0 em 10.000 entradas."""
        # Arrange
        x_aug = np.random.default_rng(0).normal(scale=2.0, size=(10_000, 9))

        # Act
        cache = local.forward(x_aug, 10.0, 1e-6, 1e-5)

        # Assert
        assert np.all(cache.p[:, 0] >= 0.0)
        assert np.all(np.diff(cache.p, axis=1) >= 0.0)
        assert np.all(np.diff(cache.tau, axis=1) > 0.0)

    def test_control_points_and_values_for_single_input(self, local):
        """Testa os atalhos para uma única entrada."""
        # Arrange
        hyper = _tiny_hyper()
        x_aug = np.ones(9)

        # Act
        tau = control_points(local, x_aug, hyper)
        p = control_values(local, x_aug, hyper)

        # Assert
        assert tau.shape == (6,) and p.shape == (6,)
        assert PlfParams(tau, p, hyper.t_max).is_valid()

    def test_constant_tau_input_ignores_query(self):
        """Testa que, sem τ dependente da consulta, τ é o mesmo para toda entrada."""
        # Arrange
        local = LocalEstimator.build(9, 4, 4, [8], [8], seed=3, query_dependent_tau=False)
        hyper = _tiny_hyper()

        # Act
        a = control_points(local, np.zeros(9), hyper)
        b = control_points(local, np.full(9, 3.0), hyper)

        # Assert
        np.testing.assert_array_equal(a, b)

    def test_decoder_shape_is_validated(self, local):
        """Testa ShapeError para decoder incompatível."""
        with pytest.raises(ShapeError):
            LocalEstimator(local.tau_net, local.m_net, np.zeros((5, 4)), np.zeros(5))


class TestSelNetModel:
    """Testes para o modelo completo."""

    @pytest.fixture
    def dataset(self):
        return _tiny_dataset()

    @pytest.fixture
    def model(self, dataset):
        hyper = _tiny_hyper()
        return SelNetModel.build(hyper, dataset.d, build_layout(dataset, hyper))

    def test_estimates_are_monotone_in_t(self, model):
        """Testa a monotonicidade das estimativas num grade de limiares para várias consultas."""
        # Arrange
        queries = np.random.default_rng(5).normal(size=(50, 6))
        ts = np.linspace(0.0, model.t_max, 200)

        # Act & Assert
        for x in queries:
            est = model.estimate_curve(x, ts)
            assert np.all(est >= 0.0)
            assert np.all(np.diff(est) >= 0.0)

    def test_estimate_curve_matches_batch(self, model):
        """Testa que estimate_curve coincide com estimate_batch."""
        # Arrange
        x = np.random.default_rng(6).normal(size=6)
        ts = np.linspace(0.0, model.t_max, 30)

        # Act
        curve = model.estimate_curve(x, ts)
        batch = model.estimate_batch(np.repeat(x[None, :], ts.size, axis=0), ts)

        # Assert
        np.testing.assert_allclose(curve, batch, rtol=1e-10, atol=1e-12)

    def test_estimate_single_query(self, model):
        """Testa estimate para uma consulta isolada."""
        value = model.estimate(np.zeros(6), 2.0)
        assert isinstance(value, float)
        assert value >= 0.0

    @pytest.mark.parametrize("t", [-0.5, 10.5, float("nan")])
    def test_threshold_out_of_range(self, model, t):
        """Testa OutOfRangeError para limiares fora de [0, t_max]."""
        with pytest.raises(OutOfRangeError):
            model.estimate(np.zeros(6), t)

    def test_dimension_mismatch(self, model):
        """Testa ShapeError para consulta com dimensão errada."""
        with pytest.raises(ShapeError):
            model.estimate(np.zeros(5), 1.0)

    def test_zero_gates_contribute_nothing(self, model):
        """Testa que clusters com gate 0 não contribuem para a estimativa."""
        # Arrange
        X = np.random.default_rng(7).normal(size=(5, 6))
        t = np.full(5, 3.0)
        gates = np.zeros((5, model.K))
        gates[:, 0] = 1.0

        # Act
        fw = model.forward(X, t, gates)

        # Assert
        np.testing.assert_array_equal(fw.est, fw.est_local[:, 0])

    def test_local_params_are_valid(self, model):
        """Testa que os parâmetros locais satisfazem a estrutura de Θ."""
        for theta in model.local_params(np.ones(6)):
            assert theta.is_valid()

    def test_state_round_trip(self, model):
        """Testa get_state/set_state."""
        # Arrange
        state = model.get_state()
        x = np.ones(6)
        before = model.estimate(x, 3.0)
        for value in model.parameters().values():
            value += 0.1
        model.bump_version()

        # Act
        model.set_state(state)

        # Assert
        assert model.estimate(x, 3.0) == before

    def test_set_state_with_wrong_keys(self, model):
        """Testa ShapeError para snapshot de outro modelo."""
        with pytest.raises(ShapeError):
            model.set_state({"ae.encoder.layers.0.weight": np.zeros(1)})

    def test_replace_layout_requires_same_k(self, model, dataset):
        """Testa a troca de layout com K diferente."""
        with pytest.raises(ConfigurationError):
            model.replace_layout(partition_random(dataset, model.K + 1))

    def test_parameter_names(self, model):
        """Testa os prefixos dos nomes dos parâmetros."""
        names = list(model.parameters())
        assert names[0] == "ae.encoder.layers.0.weight"
        assert "locals.0.decoder.weight" in names
        assert f"locals.{model.K - 1}.tau_net.layers.0.bias" in names


class TestModelComplexity:
    """Testes para ffn_complexity e model_complexity."""

    def test_ffn_complexity(self):
        assert ffn_complexity([3, 5, 2]) == 3 * 5 + 5 * 2

    def test_closed_form_matches_built_model(self):
        """Testa a igualdade entre a forma fechada e os pesos do modelo construído."""
        # Arrange
        D = _tiny_dataset()
        hyper = _tiny_hyper(L=7, h_dim=5, tau_hidden=[16, 8], m_hidden=[12])

        # Act
        model = SelNetModel.build(hyper, D.d, build_layout(D, hyper))

        # Assert
        assert model.weight_count() == model_complexity(hyper, D.d, model.K)
        assert model.parameter_count() > model.weight_count()

    def test_default_k_comes_from_hyperparameters(self):
        """Testa que K padrão é o K efetivo dos hiperparâmetros."""
        hyper = _tiny_hyper(use_partitioning=False)
        assert model_complexity(hyper, 6) == model_complexity(hyper, 6, k=1)


class TestLoss:
    """Testes para a perda combinada e seus gradientes."""

    @pytest.fixture
    def setup(self):
        D = _tiny_dataset()
        hyper = _tiny_hyper()
        model = SelNetModel.build(hyper, D.d, build_layout(D, hyper))
        return model, _labeled_batch(model, D)

    def test_gradients_match_finite_differences(self, setup):
        """Testa todos os grupos de parâmetros com a perda conjunta (global + locais + AE)."""
        # Arrange
        model, batch = setup
        weights = LossWeights.joint(model.hyper)

        # Act
        report = grad_check(lambda m: loss_and_grads(m, batch, weights), model, tol=1e-4, step=1e-5)

        # Assert
        assert report.passed, {k: v for k, v in report.group_errors.items() if v > 1e-4}
        assert set(report.group_errors) == set(model.parameters())

    def test_gradient_keys_match_parameters(self, setup):
        """Testa que os gradientes cobrem exatamente os parâmetros, com os mesmos shapes."""
        model, batch = setup
        _, grads = loss_and_grads(model, batch)
        params = model.parameters()
        assert list(grads) != [] and set(grads) == set(params)
        for name, grad in grads.items():
            assert grad.shape == params[name].shape

    def test_total_loss_matches(self, setup):
        """Testa que total_loss é o valor retornado por loss_and_grads."""
        model, batch = setup
        weights = LossWeights.joint(model.hyper)
        assert total_loss(model, batch, weights) == loss_and_grads(model, batch, weights)[0]

    def test_local_loss_requires_cluster_labels(self, setup):
        """Testa ConfigurationError para perdas locais sem rótulos por cluster."""
        # Arrange
        model, batch = setup
        unlabeled = TrainingBatch(batch.X, batch.t, batch.y, batch.gates)

        # Act & Assert
        with pytest.raises(ConfigurationError):
            loss_and_grads(model, unlabeled, LossWeights.local(model.hyper))

    def test_empty_batch(self):
        """Testa que um lote vazio é rejeitado."""
        with pytest.raises(ConfigurationError):
            TrainingBatch(np.zeros((0, 3)), np.zeros(0), np.zeros(0), np.zeros((0, 1)))

    def test_loss_weights_constructors(self):
        """Testa os pesos de cada estratégia."""
        hyper = _tiny_hyper(lambda_ae=0.2, beta_joint=0.3)
        assert LossWeights.standard(hyper) == LossWeights(1.0, 0.0, 0.2)
        assert LossWeights.joint(hyper) == LossWeights(1.0, 0.3, 0.2)
        assert LossWeights.local(hyper) == LossWeights(0.0, 1.0, 0.2)


class TestAutoEncoder:
    """Testes para o autoencoder."""

    def test_reconstruction_gradients(self):
        """Testa os gradientes do erro de reconstrução."""
        # Arrange
        ae = AutoEncoder.build(d=5, hidden=[6], z_dim=2, seed=0)
        X = np.random.default_rng(8).normal(size=(7, 5))

        # Act
        report = grad_check(lambda a: a.reconstruction_loss_and_grads(X), ae)

        # Assert
        assert report.passed, report.group_errors
        assert ae.reconstruction_loss(X) == pytest.approx(ae.reconstruction_loss_and_grads(X)[0])

    def test_dimensions(self):
        ae = AutoEncoder.build(d=5, hidden=[6, 4], z_dim=2, seed=0)
        assert ae.d == 5 and ae.z_dim == 2
        assert ae.encode(np.zeros((3, 5))).shape == (3, 2)
