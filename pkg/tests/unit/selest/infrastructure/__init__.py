"""
Testes unitários para a camada de infraestrutura do Selest.
"""
