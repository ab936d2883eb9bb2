"""
Hierarquia de exceções do Selest.

Cada classe também deriva da exceção embutida equivalente (ValueError, IOError,
KeyError...), de modo que o chamador pode capturar tanto a exceção específica
quanto a genérica.
"""


class SelestError(Exception):
    """Raiz de todas as exceções do Selest."""


class ConfigurationError(SelestError, ValueError):
    """Configuração inválida, divisões vazias ou rótulos ausentes."""


class ShapeError(SelestError, ValueError):
    """Dimensões incompatíveis entre entradas, parâmetros ou gradientes."""


class NumericInputError(SelestError, ValueError):
    """Entrada com valores não finitos (NaN ou Inf)."""


class NumericError(SelestError, ArithmeticError):
    """
    Gradiente não finito detectado durante um passo do otimizador.

    Attributes:
        group: Nome do grupo de parâmetros que contém o valor inválido.
    """

    def __init__(self, group: str, message: str = ""):
        self.group = group
        super().__init__(message or f"Gradiente não finito no grupo de parâmetros '{group}'")


class ContractViolationError(SelestError, RuntimeError):
    """Uso fora de contrato, como uma fita de forward obsoleta ou de outra rede."""


class OutOfRangeError(SelestError, ValueError):
    """Limiar fora do intervalo suportado [0, t_max]."""


class DomainError(SelestError, ValueError):
    """Violação de domínio matemático (vetor nulo no cosseno, perda com entrada negativa...)."""


class UnsupportedOperationError(SelestError, NotImplementedError):
    """Operação não suportada para a configuração pedida (ex.: árvore sobre distância não métrica)."""


class RowNotFoundError(SelestError, KeyError):
    """Remoção de uma linha inexistente na base de dados."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "Linha inexistente"


class FileFormatError(SelestError, IOError):
    """Arquivo de modelo ou dataset com formato inválido."""


class ChecksumError(FileFormatError):
    """CRC32 do arquivo não confere com o conteúdo."""


class UnsupportedVersionError(FileFormatError):
    """Versão de formato mais nova do que a suportada por este código."""


class TruncatedFileError(FileFormatError):
    """Arquivo menor do que o tamanho declarado no cabeçalho."""
