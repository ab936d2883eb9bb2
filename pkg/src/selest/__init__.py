"""
Selest - estimador de seletividade consistente para vetores de alta dimensão.

Este pacote aprende, para cada objeto de consulta, uma função linear por partes
monótona no limiar de distância, e fornece os oráculos exatos, particionadores,
geradores de carga, tratamento de atualizações e métricas necessários para
treinar e verificar o estimador de ponta a ponta.
"""

__version__ = "0.1.0"
