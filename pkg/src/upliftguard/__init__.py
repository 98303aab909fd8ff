"""Guardrailed uplift targeting: CATE estimation, constrained allocation, offline evaluation."""
__version__ = "0.1.0"
