"""Latent distribution-matching toolkit: thin wrapper over the compiled core.

The heavy lifting lives in the `_ldm` extension module (entropy estimators,
alignment terms, Kalman filtering, generators, metrics, and the experiment
runner). This package re-exports it under a stable name.
"""

from _ldm import (  # noqa: F401
    affine_probe_r2,
    alignment_plane_gaussian,
    alignment_sphere_vmf,
    entropy_kde,
    entropy_kde_corrected,
    entropy_knn,
    entropy_knn_corrected,
    entropy_logdet,
    entropy_logdet_corrected,
    gen_ica,
    gen_swirl_frames,
    grad_cosine,
    kalman_filter,
    matching_prob_to_beta,
    run_experiment,
    source_recovery_score,
    validate_config,
)

__all__ = [
    "affine_probe_r2",
    "alignment_plane_gaussian",
    "alignment_sphere_vmf",
    "entropy_kde",
    "entropy_kde_corrected",
    "entropy_knn",
    "entropy_knn_corrected",
    "entropy_logdet",
    "entropy_logdet_corrected",
    "gen_ica",
    "gen_swirl_frames",
    "grad_cosine",
    "kalman_filter",
    "matching_prob_to_beta",
    "run_experiment",
    "source_recovery_score",
    "validate_config",
]
