"""Desk-scale federated active learning simulation harness.

Core library modules:

- ``data``: dataset CSV ingestion, synthetic Gaussian-mixture generation,
  Dirichlet non-IID client partitioning
- ``geometry``: pairwise distances, K-nearest neighbors, typicality, k-means
- ``model``: linear / one-hidden-layer softmax classifiers with SGD training
- ``federation``: annotation bookkeeping, FedAvg, round orchestration
- ``strategies``: the eight acquisition strategies
- ``evaluation``: metrics, paired t-test win rates, typicality shift analysis

The FastAPI app in ``falsim.service`` wraps the library behind a small HTTP
API; the ``falsim`` command line is a thin client for it.
"""

__version__ = "0.1.0"
