"""
Testes unitários para as funções auxiliares (selest.utils.helpers).
"""

import logging
from unittest import mock

from selest.utils.helpers import derive_seeds, measure_time


class TestMeasureTime:
    """Testes para o decorador measure_time."""

    def test_returns_result_and_logs(self):
        """Testa que o valor é repassado e o tempo é registrado em DEBUG."""
        # Arrange
        logger = mock.Mock(spec=logging.Logger)

        @measure_time(logger=logger)
        def soma(a, b=0):
            return a + b

        # Act
        result = soma(2, b=3)

        # Assert
        assert result == 5
        logger.debug.assert_called_once()
        assert "soma" in logger.debug.call_args[0][0]

    def test_bare_decorator_keeps_metadata(self):
        @measure_time
        def dobro(x):
            """Dobra x."""
            return 2 * x

        assert dobro(4) == 8
        assert dobro.__name__ == "dobro"
        assert dobro.__doc__ == "Dobra x."


class TestDeriveSeeds:
    """Testes para derive_seeds."""

    def test_deterministic_and_distinct(self):
        seeds = derive_seeds(7, 5)
        assert seeds == derive_seeds(7, 5)
        assert len(set(seeds)) == 5
        assert seeds != derive_seeds(8, 5)
        assert all(isinstance(s, int) for s in seeds)
