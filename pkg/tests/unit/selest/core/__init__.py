"""
Testes unitários para o módulo core do Selest.
"""
