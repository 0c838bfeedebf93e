"""Human-in-the-loop triage engine for vacant, abandoned, and deteriorated
(VAD) parcels: feature engineering, seeded random forests, active-learning
batch composition, label auditing, model interpretation, a five-metric
evaluation framework, and a synthetic-municipality generator."""

__version__ = "0.1.0"
