"""Heuristic-estimation toolkit: pairing-structure hafnian estimators,
approximately multiaccurate merges, permanent estimators, accuracy checks
and the #3SAT-to-pairing-intersection reduction."""

__version__ = "0.1.0"
