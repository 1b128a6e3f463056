"""Maritime vessel-tracking intelligence toolkit.

Turns raw AIS broadcast CSVs into stratified vessel contexts, synthetic
Q&A training data with deterministic oracle quality gates, evaluation
reports with proportion statistics, training-configuration numerics, and a
streaming query service.
"""

__version__ = "0.1.0"
