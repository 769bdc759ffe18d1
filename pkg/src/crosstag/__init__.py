"""crosstag: linear-chain CRF sequence labeling with log-linear and
character-level neural scorers, plus cross-lingual transfer training."""

__version__ = "0.1.0"
