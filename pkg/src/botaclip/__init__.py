"""Contrastive alignment of precomputed image embeddings with species-cover
tables, trained with lightweight adapters, plus the downstream evaluation
stack (spatially buffered splits, random forests, ecological metrics and
nonparametric tests)."""

__version__ = "0.1.0"
