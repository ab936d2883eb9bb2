"""
Testes de backend automatizados para os cenários UAT do Selest.

Validam os cenários de aceitação chamando diretamente os serviços, os módulos do
núcleo e a linha de comando.
"""
