"""
Testes unitários para os utilitários do Selest.
"""
