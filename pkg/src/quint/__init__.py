"""quint: qualitative interval abstraction and rare-interaction discovery.

The library turns irregularly sampled multivariate time series into
state/gradient interval patterns, builds per-object interaction graphs over
those patterns, and fits an exponential prior via EM to surface the rare
interaction subgraphs most associated with a cohort outcome.
"""

__version__ = "0.1.0"
