"""
Camada de aplicação do Selest.
"""
