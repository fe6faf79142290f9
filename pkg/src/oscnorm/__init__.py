"""Oscillation seminorms, A1 weights and maximal functions on intervals."""
