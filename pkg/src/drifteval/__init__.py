"""Concept-drift evaluation for time-stamped text classification.

Sliding-window retraining protocol, corpus drift diagnostics, weekly
sentiment indexing, and a synthetic drift generator for verifying all of
it at desk scale.
"""

__version__ = "0.1.0"
