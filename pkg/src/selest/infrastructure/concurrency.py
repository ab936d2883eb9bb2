"""
Pool de threads do Selest.

Usado na rotulagem de consultas contra o oráculo exato, na re-rotulagem após
atualizações e no retreino em background. As contagens são dominadas por
operações numpy, que liberam o GIL. Os resultados voltam na ordem das entradas,
então as saídas não dependem do número de workers.
"""

import os
from concurrent.futures import Future, ThreadPoolExecutor
from functools import partial
from typing import Callable, Iterable, List, Optional, TypeVar

from selest.config import get_threads
from selest.infrastructure.logging_config import get_logger

T = TypeVar("T")
R = TypeVar("R")

logger = get_logger(__name__)


class ConcurrencyService:
    """
    Executa tarefas independentes num ThreadPoolExecutor criado sob demanda.

    Com max_workers == 1 as tarefas rodam na thread chamadora.
    """

    def __init__(self, max_workers: Optional[int] = None):
        """
        Args:
            max_workers: Número de threads. Se None, usa SELEST_THREADS,
                         runtime.threads ou o número de CPUs, nessa ordem.

        Raises:
            ValueError: max_workers menor que 1.
        """
        if max_workers is None:
            max_workers = get_threads() or os.cpu_count() or 4
        if max_workers < 1:
            raise ValueError(f"max_workers precisa ser positivo, recebido {max_workers}")

        self._max_workers = max_workers
        self._executor: Optional[ThreadPoolExecutor] = None
        logger.debug(f"ConcurrencyService inicializado com {max_workers} workers")

    @property
    def max_workers(self) -> int:
        return self._max_workers

    def _pool(self) -> ThreadPoolExecutor:
        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self._max_workers, thread_name_prefix="selest")
        return self._executor

    def run_parallel(self, tasks: Iterable[Callable[[], T]]) -> List[T]:
        """
        Executa funções sem argumentos e devolve os resultados na ordem das tarefas.

        A primeira exceção levantada por uma tarefa é repassada ao chamador.
        """
        task_list = list(tasks)
        if self._max_workers == 1 or len(task_list) <= 1:
            return [task() for task in task_list]

        logger.debug(f"{len(task_list)} tarefas em {self._max_workers} workers")
        try:
            return list(self._pool().map(lambda task: task(), task_list))
        except Exception as e:
            logger.error(f"Tarefa paralela falhou: {e}")
            raise

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """Aplica `fn` a cada item em paralelo, preservando a ordem."""
        return self.run_parallel([partial(fn, item) for item in items])

    def submit_background_task(self, task: Callable[..., R], *args, **kwargs) -> Future:
        """Submete uma tarefa ao pool e devolve o Future correspondente."""
        logger.debug(f"Tarefa em background: {getattr(task, '__name__', repr(task))}")
        return self._pool().submit(task, *args, **kwargs)

    def shutdown(self, wait: bool = True) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=wait)
            self._executor = None

    def __enter__(self) -> "ConcurrencyService":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.shutdown(wait=True)

    def __del__(self):
        self.shutdown(wait=False)
