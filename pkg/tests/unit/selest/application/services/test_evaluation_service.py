"""
Testes unitários para o serviço de avaliação.
"""

import numpy as np
import pytest

from selest.application.services.evaluation_service import EvaluationService
from selest.application.services.workload_service import WorkloadService, gen_synthetic, selectivity_targets
from selest.core.estimator import SelNetModel
from selest.core.models import HyperParams
from selest.core.partition import build_layout
from selest.infrastructure.concurrency import ConcurrencyService


@pytest.fixture(scope="module")
def scenario():
    D = gen_synthetic(200, 3, 3, seed=1)
    workload = WorkloadService(ConcurrencyService(max_workers=1)).build_workload(
        D, 20, selectivity_targets(200, 6, 0.1), t_max_mode="observed"
    )
    hyper = HyperParams(L=4, K=2, r=0.2, z_dim=2, h_dim=4, tau_hidden=[6], m_hidden=[6], ae_hidden=[6],
                        t_max=workload.t_max)
    model = SelNetModel.build(hyper, D.d, build_layout(D, hyper))
    return D, workload, model


class TestEvaluationService:
    """Testes para EvaluationService."""

    def test_evaluate_with_baseline(self, scenario):
        """Testa as métricas do modelo e do RS e a monotonicidade de ambos."""
        # Arrange
        D, workload, model = scenario

        # Act
        report = EvaluationService().evaluate(model, workload, "test", dataset=D, rs_fraction=1.0,
                                              monotonicity_queries=5, monotonicity_thresholds=10)

        # Assert
        assert set(report.metrics) == {"selnet", "rs"}
        assert report.metrics["selnet"].count == len(workload.test)
        assert report.metrics["rs"].mse == 0.0
        assert report.monotonicity["selnet"] == pytest.approx(100.0)
        assert report.monotonicity["rs"] == pytest.approx(100.0)

    def test_evaluate_without_dataset(self, scenario):
        _, workload, model = scenario
        report = EvaluationService().evaluate(model, workload, "val", monotonicity_queries=2,
                                              monotonicity_thresholds=5)
        assert list(report.metrics) == ["selnet"]
        assert report.to_dict()["split"] == "val"
        assert report.to_table().splitlines()[1].startswith("selnet")

    def test_monotonicity_objects_are_supplemented(self, scenario):
        """Testa que os objetos distintos da divisão são completados com linhas do dataset."""
        # Arrange
        D, workload, _ = scenario

        # Act
        objects = EvaluationService.monotonicity_objects(workload, "test", 10, dataset=D)
        without = EvaluationService.monotonicity_objects(workload, "test", 10)

        # Assert
        assert without.shape[0] == 2
        assert objects.shape == (10, D.d)
        np.testing.assert_array_equal(objects[:2], without)
