"""
Testes de integração do Selest.
"""
