"""
Testes unitários para os módulos do Selest.
"""
