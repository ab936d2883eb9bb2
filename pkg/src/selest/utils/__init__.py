"""
Utilitários genéricos do Selest.
"""
