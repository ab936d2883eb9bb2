"""
Camada de infraestrutura do Selest.

Logging, concorrência, escrita atômica de arquivos e os formatos binários/JSONL
de datasets, cargas de trabalho e modelos.
"""
