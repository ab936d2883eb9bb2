"""
Testes de integração para o pacote Selest.

Verificam os serviços e a linha de comando trabalhando em conjunto sobre datasets
sintéticos pequenos.
"""
