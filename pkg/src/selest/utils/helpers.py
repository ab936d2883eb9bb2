"""
Funções auxiliares genéricas para o Selest.

Este módulo contém funções utilitárias sem dependências de outros módulos do
Selest além do logging.
"""

import logging
import time
from functools import wraps
from typing import Callable, List, Optional, TypeVar

import numpy as np

T = TypeVar("T")


def measure_time(func: Optional[Callable[..., T]] = None, *,
                 logger: Optional[logging.Logger] = None) -> Callable:
    """
    Decorador que registra em DEBUG o tempo de execução da função.

    Pode ser usado como `@measure_time` ou `@measure_time(logger=meu_logger)`.
    """
    def decorator(target: Callable[..., T]) -> Callable[..., T]:
        log = logger or logging.getLogger(target.__module__)

        @wraps(target)
        def wrapper(*args, **kwargs) -> T:
            start_time = time.perf_counter()
            result = target(*args, **kwargs)
            elapsed = time.perf_counter() - start_time
            log.debug(f"Função {target.__name__} executada em {elapsed:.4f} segundos")
            return result

        return wrapper

    if func is not None:
        return decorator(func)
    return decorator


def derive_seeds(seed: int, count: int) -> List[int]:
    """
    Deriva `count` sementes independentes e determinísticas a partir de uma semente.
    """
    state = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint32)
    return [int(s) for s in state]
