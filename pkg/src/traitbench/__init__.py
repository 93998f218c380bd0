"""Benchmark toolkit for predicting trait labels and scores from
landmark geometry, face-texture descriptors, and fingerprint minutiae.

Subpackages follow the pipeline order: ``dataset`` (manifest loading,
labels, synthetic controls), ``geometry`` (landmark normalization and
the structural / fingerprint features), ``imaging`` (alignment, crop,
mask, warp, pyramid), ``descriptors`` (texture descriptor bank),
``reduce`` (PCA, dimension selection, fusion), ``learners``
(classifier / regressor bank), ``evaluate`` (repeated cross-validation
and metrics), and ``experiment`` / ``cli`` (configuration-driven runs).
"""

__version__ = "0.1.0"
