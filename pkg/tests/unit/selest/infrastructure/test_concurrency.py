"""
Testes unitários para o módulo de concorrência.

Verificam a ordem dos resultados, o modo sequencial com um worker, tarefas em
background e a resolução do número de workers.
"""

import threading
from concurrent.futures import Future
from unittest.mock import patch

import pytest

from selest.infrastructure.concurrency import ConcurrencyService


class TestConcurrencyService:
    """Testes para a classe ConcurrencyService."""

    def test_init_custom_values(self):
        """Testa a inicialização com valores explícitos."""
        # Arrange & Act
        service = ConcurrencyService(max_workers=5)

        # Assert
        assert service.max_workers == 5
        assert service._executor is None

    def test_init_from_threads_setting(self):
        """Testa que max_workers vem de get_threads quando não informado."""
        with patch("selest.infrastructure.concurrency.get_threads", return_value=3):
            assert ConcurrencyService().max_workers == 3

    def test_init_falls_back_to_cpu_count(self):
        with patch("selest.infrastructure.concurrency.get_threads", return_value=None), \
             patch("selest.infrastructure.concurrency.os.cpu_count", return_value=6):
            assert ConcurrencyService().max_workers == 6

    def test_invalid_workers(self):
        with pytest.raises(ValueError):
            ConcurrencyService(max_workers=0)

    def test_run_parallel_preserves_order(self):
        """Testa que os resultados voltam na ordem das tarefas."""
        # Arrange
        service = ConcurrencyService(max_workers=4)

        # Act
        results = service.run_parallel([lambda i=i: i * i for i in range(20)])
        service.shutdown()

        # Assert
        assert results == [i * i for i in range(20)]

    def test_single_worker_runs_in_caller_thread(self):
        """Testa que com um worker as tarefas rodam na thread chamadora, sem executor."""
        # Arrange
        service = ConcurrencyService(max_workers=1)
        caller = threading.get_ident()

        # Act
        idents = service.run_parallel([threading.get_ident, threading.get_ident])

        # Assert
        assert idents == [caller, caller]
        assert service._executor is None

    def test_run_parallel_propagates_errors(self):
        """Testa que a exceção de uma tarefa é repassada ao chamador."""
        def failing():
            raise RuntimeError("falhou")

        with ConcurrencyService(max_workers=2) as service:
            with pytest.raises(RuntimeError):
                service.run_parallel([lambda: 1, failing])

    def test_map_preserves_order(self):
        """Testa que map aplica a função a cada item e preserva a ordem."""
        with ConcurrencyService(max_workers=3) as service:
            assert service.map(lambda v: v + 1, [5, 1, 9, 3]) == [6, 2, 10, 4]

    def test_submit_background_task(self):
        """Testa que a tarefa em background devolve um Future com o resultado."""
        # Arrange
        service = ConcurrencyService(max_workers=2)

        # Act
        future = service.submit_background_task(lambda a, b: a + b, 2, b=3)

        # Assert
        assert isinstance(future, Future)
        assert future.result(timeout=5) == 5
        service.shutdown()
        assert service._executor is None
