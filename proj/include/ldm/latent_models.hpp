#pragma once

#include "ldm/tensor.hpp"

namespace ldm {

enum class LatentFamily { PlaneGaussian, SphereVmf, SimplexDirichlet, Categorical, EmpiricalPriorVmf };

/// Prior + conditional family for the latent model P(z), P(z'|z). Only the
/// parameters used by the chosen family are meaningful.
struct LatentModel {
    LatentFamily family = LatentFamily::PlaneGaussian;
    double sigma2 = 1.0;       // Gaussian conditional variance
    double beta = 1.0;         // vMF / categorical concentration
    double tau = 1.0;          // Dirichlet precision; also vMF concentration for the empirical-prior family
    int64_t n_categories = 2;  // categorical family

    void validate() const;
};

// Batch-averaged model log-likelihood terms (additive constants dropped).

/// -(1/(2 sigma^2)) * mean_i ||z_i - z'_i||^2
Tensor alignment_plane_gaussian(const Tensor& z, const Tensor& zp, double sigma2);
/// beta * mean_i z_i . z'_i ; rows must be unit-norm within 1e-6.
Tensor alignment_sphere_vmf(const Tensor& z, const Tensor& zp, double beta);
/// mean_i [tau * z_i . log z'_i - sum_k lgamma(tau z_ik + 1)]; rows on the simplex.
/// z' is clamped to >= 1e-12 before the log (smoothing at the boundary).
Tensor alignment_simplex_dirichlet(const Tensor& z, const Tensor& zp, double tau);
/// beta * mean_i sum_k p_ik p'_ik ; rows are probability vectors.
Tensor alignment_categorical(const Tensor& p, const Tensor& pp, double beta);

/// Dispatch on the model family (EmpiricalPriorVmf scores with tau).
Tensor alignment(const LatentModel& model, const Tensor& z, const Tensor& zp);

/// beta = log(p (n-1) / (1-p)) for same-category probability p in (1/n, 1).
double matching_prob_to_beta(double p_theta, int64_t n);
double beta_to_matching_prob(double beta, int64_t n);

}  // namespace ldm
