"""
Serviços de aplicação: geração de cargas de trabalho, atualizações, avaliação e
a demonstração unidimensional.
"""
