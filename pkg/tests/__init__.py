"""
Testes para o pacote Selest.
"""
