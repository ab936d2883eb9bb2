"""
Testes unitários para o pacote Selest.
"""
