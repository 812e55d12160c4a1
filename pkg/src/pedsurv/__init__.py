"""Carrier survival estimation from partially genotyped, ascertained pedigrees."""

__version__ = "0.1.0"
