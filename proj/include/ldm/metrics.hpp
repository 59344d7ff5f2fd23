#pragma once

#include <span>
#include <vector>

#include "ldm/nets.hpp"
#include "ldm/tensor.hpp"

namespace ldm {

struct ProbeResult {
    std::vector<double> weights;       // [k, d+1] affine map, last column is the intercept
    std::vector<double> r2_per_dim;    // on the held-out split
    double r2_overall = 0.0;
    std::vector<double> residual_cov;  // [k,k] on the held-out split
    bool ridge_fallback = false;
};

/// Ordinary least squares with intercept on a seeded 80/20 split; R^2 = 1 -
/// SSE/SST evaluated on the held-out 20%. Rank-deficient designs fall back to
/// a 1e-8 ridge and set the flag.
ProbeResult affine_probe(const Tensor& z, const Tensor& target, uint64_t seed);

/// g1.g2 / (|g1| |g2|); zero when either norm is below 1e-12.
double grad_cosine(std::span<const double> g1, std::span<const double> g2);

/// Descending eigenvalues of the sample covariance, clamped at zero.
std::vector<double> eigenspectrum(const Tensor& z);

struct JacobianRankResult {
    std::vector<int> per_sample;
    double mean_rank = 0.0;
};

/// Numeric rank of the encoder Jacobian at each sample: one reverse-mode pass
/// per output dimension, then singular values thresholded at tol * sigma_max.
JacobianRankResult jacobian_rank(const Mlp& encoder, const Tensor& x_batch, double tol = 1e-5);

/// Mean over true sources of |corr| with the best one-to-one assignment of
/// estimated sources (exact assignment by subset dynamic programming).
double source_recovery_score(const Tensor& s_hat, const Tensor& s_true);

}  // namespace ldm
