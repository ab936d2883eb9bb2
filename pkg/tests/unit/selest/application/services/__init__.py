"""
Testes unitários para os serviços de aplicação do Selest.
"""
