"""stratkit: temporal cohort stratification benchmark toolkit.

Learns fixed-size embeddings from multivariate clinical time series
(statistical and recurrent), clusters them, and evaluates cluster quality
against a four-level code taxonomy via flat stratification, iterative
hierarchical rediscovery, and interpretable cluster labeling.
"""

__version__ = "0.1.0"
CONFIG_SCHEMA_VERSION = 1
