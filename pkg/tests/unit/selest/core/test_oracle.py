"""
Testes unitários para os oráculos exatos (selest.core.oracle).
"""

import numpy as np
import pytest

from selest.core.exceptions import ConfigurationError, DomainError, ShapeError
from selest.core.models import VectorDataset
from selest.core.oracle import (
    CountTree,
    cosine_threshold_to_l2,
    dist,
    distances_to,
    selectivity_bruteforce,
    selectivity_tree,
)


class TestDistances:
    """Testes para dist e distances_to."""

    def test_euclidean(self):
        assert dist([0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)

    def test_cosine(self):
        """Testa a distância cosseno para vetores paralelos e ortogonais."""
        assert dist([1.0, 0.0], [2.0, 0.0], "cosine") == pytest.approx(0.0)
        assert dist([1.0, 0.0], [0.0, 3.0], "cosine") == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            dist([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_zero_vector_with_cosine(self):
        """Testa DomainError para o vetor nulo."""
        with pytest.raises(DomainError):
            dist([0.0, 0.0], [1.0, 0.0], "cosine")

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            distances_to(np.ones((2, 2)), np.ones(2), "manhattan")

    def test_subset_matches_full_matrix(self):
        """Testa que a distância de um subconjunto é bit a bit igual à da matriz completa."""
        rows = np.random.default_rng(0).normal(size=(50, 7))
        x = np.random.default_rng(1).normal(size=7)
        full = distances_to(rows, x)
        np.testing.assert_array_equal(distances_to(rows[10:20], x), full[10:20])


class TestCosineConversion:
    """Testes para cosine_threshold_to_l2."""

    @pytest.mark.parametrize("s,expected", [(1.0, 0.0), (0.0, np.sqrt(2.0)), (-1.0, 2.0)])
    def test_values(self, s, expected):
        assert cosine_threshold_to_l2(s) == pytest.approx(expected)

    @pytest.mark.parametrize("s", [1.5, -1.01])
    def test_out_of_range(self, s):
        with pytest.raises(DomainError):
            cosine_threshold_to_l2(s)

    def test_equivalence_on_unit_vectors(self):
        """Testa que cos ≥ s equivale a ‖u − v‖ ≤ sqrt(2(1 − s)) para vetores unitários."""
        # Arrange
        rng = np.random.default_rng(2)
        U = rng.normal(size=(200, 4))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        v = U[0]
        s = 0.3

        # Act
        by_cosine = (U @ v) >= s
        by_l2 = np.linalg.norm(U - v, axis=1) <= cosine_threshold_to_l2(s)

        # Assert
        np.testing.assert_array_equal(by_cosine, by_l2)


class TestBruteforce:
    """Testes para selectivity_bruteforce."""

    def test_inclusive_threshold(self):
        """Testa que a comparação com o limiar é inclusiva."""
        D = VectorDataset(np.array([[0.0], [1.0], [2.0], [3.0]]))
        assert selectivity_bruteforce(D, np.array([0.0]), 2.0) == 3
        assert selectivity_bruteforce(D, np.array([0.0]), 0.0) == 1
        assert selectivity_bruteforce(D, np.array([10.0]), 1.0) == 0


class TestCountTree:
    """Testes para CountTree e selectivity_tree."""

    @pytest.fixture
    def dataset(self):
        rng = np.random.default_rng(3)
        centers = rng.uniform(-4, 4, size=(5, 6))
        rows = centers[rng.integers(0, 5, size=600)] + rng.normal(scale=0.6, size=(600, 6))
        return VectorDataset(rows)

    def test_matches_bruteforce(self, dataset):
        """Testa a igualdade exata com a varredura linear, inclusive em limiares iguais a distâncias de linhas."""
        # Arrange
        tree = CountTree(dataset, leaf_size=16, seed=0)
        rng = np.random.default_rng(4)

        # Act & Assert
        for _ in range(40):
            x = dataset.rows[rng.integers(dataset.n)] + rng.normal(scale=0.3, size=dataset.d)
            d = distances_to(dataset.rows, x)
            for t in (0.0, float(np.sort(d)[rng.integers(dataset.n)]), float(rng.uniform(0, 8))):
                assert tree.count(x, t) == selectivity_bruteforce(dataset, x, t)

    def test_matches_reference_ball_tree(self, dataset):
        """Testa as contagens contra a BallTree do scikit-learn em limiares contínuos."""
        # Arrange
        neighbors = pytest.importorskip("sklearn.neighbors")
        reference = neighbors.BallTree(dataset.rows, leaf_size=16)
        tree = CountTree(dataset, leaf_size=16, seed=1)
        rng = np.random.default_rng(5)
        queries = rng.uniform(-5, 5, size=(30, dataset.d))
        radii = rng.uniform(0.5, 6.0, size=30)

        # Act
        expected = reference.query_radius(queries, r=radii, count_only=True)

        # Assert
        assert [tree.count(x, t) for x, t in zip(queries, radii)] == expected.tolist()

    def test_huge_threshold_includes_root(self, dataset):
        """Testa que um limiar enorme inclui a raiz inteira com uma única visita."""
        # Arrange
        tree = CountTree(dataset)

        # Act
        count, stats = tree.count_with_stats(np.zeros(dataset.d), 1e6)

        # Assert
        assert count == dataset.n
        assert stats.nodes_visited == 1
        assert stats.included_whole == 1

    def test_far_query_is_pruned(self, dataset):
        tree = CountTree(dataset)
        count, stats = tree.count_with_stats(np.full(dataset.d, 1e3), 1.0)
        assert count == 0 and stats.pruned == 1

    def test_cosine_tree_matches_bruteforce(self):
        """Testa a árvore com distância cosseno sobre linhas não normalizadas."""
        # Arrange
        rng = np.random.default_rng(5)
        D = VectorDataset(rng.normal(size=(300, 5)) + 0.5, distance_kind="cosine")
        tree = CountTree(D, leaf_size=8)

        # Act & Assert
        for _ in range(30):
            x = rng.normal(size=5)
            t = float(rng.uniform(0.0, 1.0))
            assert tree.count(x, t) == selectivity_bruteforce(D, x, t)

    def test_empty_dataset(self):
        tree = CountTree(VectorDataset(np.zeros((0, 3))))
        assert tree.count(np.zeros(3), 1.0) == 0

    def test_query_shape(self, dataset):
        with pytest.raises(ShapeError):
            CountTree(dataset).count(np.zeros(3), 1.0)

    def test_distance_kind_mismatch(self, dataset):
        """Testa ConfigurationError quando a consulta pede outra distância."""
        tree = CountTree(dataset)
        with pytest.raises(ConfigurationError):
            selectivity_tree(tree, np.zeros(dataset.d), 1.0, distance_kind="cosine")
        assert selectivity_tree(tree, np.zeros(dataset.d), 1e6, distance_kind="euclidean") == dataset.n

    def test_invalid_leaf_size(self, dataset):
        with pytest.raises(ConfigurationError):
            CountTree(dataset, leaf_size=0)
