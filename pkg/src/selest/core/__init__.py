"""
Camada de domínio do Selest.

Contém os modelos de dados, a rede densa mínima, o estimador, o particionador,
o oráculo exato e as métricas.
"""
