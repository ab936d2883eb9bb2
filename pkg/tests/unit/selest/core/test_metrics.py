"""
Testes unitários para as métricas e o baseline RS (selest.core.metrics).
"""

import json

import numpy as np
import pytest

from selest.core.exceptions import ConfigurationError, ShapeError
from selest.core.metrics import (
    RsEstimator,
    build_rs_baseline,
    compute_metrics,
    empirical_monotonicity,
    format_report_table,
    reports_to_json,
    rs_estimate,
)
from selest.core.models import VectorDataset
from selest.core.oracle import selectivity_bruteforce


class TestComputeMetrics:
    """Testes para compute_metrics."""

    def test_known_values(self):
        """Testa MSE, MAE e MAPE de um exemplo calculado à mão."""
        # Act
        report = compute_metrics([1, 2, 3], [1, 2, 5])

        # Assert
        assert report.mse == pytest.approx(4.0 / 3.0)
        assert report.mae == pytest.approx(2.0 / 3.0)
        assert report.mape == pytest.approx(2.0 / 9.0)
        assert report.count == 3

    def test_zero_targets_excluded_from_mape(self):
        """Testa que pares com y = 0 ficam fora do MAPE mas entram no MSE."""
        report = compute_metrics([0, 4], [1, 2])
        assert report.mape == pytest.approx(0.5)
        assert report.mape_excluded == 1
        assert report.mse == pytest.approx(2.5)

    def test_empty_input(self):
        with pytest.raises(ConfigurationError):
            compute_metrics([], [])

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            compute_metrics([1, 2], [1])


class TestEmpiricalMonotonicity:
    """Testes para empirical_monotonicity."""

    def test_increasing_function_scores_100(self):
        queries = np.zeros((3, 2))
        score = empirical_monotonicity(lambda x, ts: 2.0 * ts, queries, thresholds_per_query=20, t_max=5.0)
        assert score == pytest.approx(100.0)

    def test_decreasing_function_scores_0(self):
        queries = np.zeros((2, 2))
        score = empirical_monotonicity(lambda x, ts: -ts, queries, thresholds_per_query=10, t_max=5.0)
        assert score == pytest.approx(0.0)

    def test_constant_function_counts_ties_as_consistent(self):
        score = empirical_monotonicity(lambda x, ts: np.ones_like(ts), np.zeros((1, 2)), 10, t_max=1.0)
        assert score == pytest.approx(100.0)

    def test_t_max_required(self):
        """Testa ConfigurationError quando não há t_max no estimador nem no argumento."""
        with pytest.raises(ConfigurationError):
            empirical_monotonicity(lambda x, ts: ts, np.zeros((1, 2)))

    def test_too_few_thresholds(self):
        with pytest.raises(ConfigurationError):
            empirical_monotonicity(lambda x, ts: ts, np.zeros((1, 2)), thresholds_per_query=1, t_max=1.0)


class TestRsBaseline:
    """Testes para o baseline de amostragem aleatória."""

    @pytest.fixture
    def dataset(self):
        return VectorDataset(np.random.default_rng(0).normal(size=(200, 3)))

    def test_full_sample_is_exact(self, dataset):
        """Testa que fração 1 reproduz a contagem exata."""
        # Arrange
        baseline = build_rs_baseline(dataset, 1.0)
        x = dataset.rows[0]

        # Act & Assert
        for t in (0.0, 0.5, 1.5, 3.0):
            assert rs_estimate(baseline, dataset, x, t) == selectivity_bruteforce(dataset, x, t)

    def test_sample_size_and_scaling(self, dataset):
        """Testa o tamanho da amostra e a escala por 1/fração."""
        baseline = build_rs_baseline(dataset, 0.1, seed=2)
        assert baseline.sample_indices.size == 20
        assert baseline.sample_fraction == pytest.approx(0.1)
        assert rs_estimate(baseline, dataset, dataset.rows[0], 1e6) == pytest.approx(200.0)

    def test_curve_matches_point_estimates(self, dataset):
        """Testa que estimate_curve coincide com estimate ponto a ponto e é monótona."""
        # Arrange
        estimator = RsEstimator(build_rs_baseline(dataset, 0.3, seed=1), dataset, t_max=4.0)
        x = dataset.rows[5]
        ts = np.linspace(0.0, 4.0, 25)

        # Act
        curve = estimator.estimate_curve(x, ts)

        # Assert
        np.testing.assert_allclose(curve, [estimator.estimate(x, t) for t in ts])
        assert np.all(np.diff(curve) >= 0)
        assert empirical_monotonicity(estimator, dataset.rows[:5], 10) == pytest.approx(100.0)

    @pytest.mark.parametrize("fraction", [0.0, 1.2])
    def test_invalid_fraction(self, dataset, fraction):
        with pytest.raises(ConfigurationError):
            build_rs_baseline(dataset, fraction)


class TestReports:
    """Testes para a serialização e a tabela de relatórios."""

    def test_json_and_table(self):
        # Arrange
        reports = {"selnet": compute_metrics([1, 2], [1, 3]), "rs": compute_metrics([1, 2], [2, 2])}
        mono = {"selnet": 100.0}

        # Act
        data = json.loads(reports_to_json(reports, mono))
        table = format_report_table(reports, mono)

        # Assert
        assert data["selnet"]["monotonicity"] == 100.0
        assert "monotonicity" not in data["rs"]
        lines = table.splitlines()
        assert lines[0].split() == ["estimator", "mse", "mae", "mape", "count", "monotonicity"]
        assert lines[1].startswith("selnet") and lines[1].endswith("100.0000")
        assert lines[2].split()[-1] == "-"
