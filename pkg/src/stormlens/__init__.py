"""Interpretable solar-storm prediction toolkit.

Trains an LSTM classifier with additive attention on windowed active-region
feature time series and explains it with exact/kernel/gradient Shapley
attribution, local surrogate explanations, feature-interaction analysis, and
deterministic SVG plot renderers.
"""

__version__ = "0.1.0"
