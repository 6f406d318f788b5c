"""Numerical M-summability for strongly regular sequences."""
