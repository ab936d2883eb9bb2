"""
Testes unitários para a camada de aplicação do Selest.
"""
