#pragma once

#include <functional>

#include "ldm/tensor.hpp"

namespace ldm {

enum class KdeKernel { Gaussian, Vmf };
enum class LogDetMode { Exact, Taylor, VarianceCovariance };

struct EntropyEstimator {
    enum class Kind { Kde, Knn, LogDet, StopGradPlugin };
    Kind kind = Kind::Knn;

    double bandwidth = 1.0;  // kde
    KdeKernel kernel = KdeKernel::Gaussian;

    int64_t k = 3;  // knn
    double p_norm = 2.0;
    double discard_top_frac = 0.10;

    LogDetMode mode = LogDetMode::Exact;  // logdet

    void validate() const;
};

struct KnnStats {
    int64_t duplicates_excluded = 0;  // eps <= 1e-12 after dedup tolerance
    int64_t discarded_top = 0;
    int64_t kept = 0;
};

// Loss-form estimators: differentiable w.r.t. z, additive constants dropped.

/// -(1/N) sum_i log sum_{j != i} kernel(d(z_i, z_j)/h).
/// Gaussian kernel uses squared euclidean distance; vmf expects unit rows and
/// scores inner products with concentration 1/h.
Tensor entropy_kde(const Tensor& z, double h, KdeKernel kernel);

/// (d/M) * sum over kept samples of log eps_ik, the p-norm distance to the
/// k-th nearest neighbor; the largest discard_top_frac of the eps values are
/// dropped. Gradient flows through the realized neighbor distances.
Tensor entropy_knn(const Tensor& z, int64_t k, double p_norm, double discard_top_frac, KnnStats* stats = nullptr);

/// Parametric Gaussian estimate from the sample covariance (1/(N-1)).
/// Exact mode returns (1/2) log|cov|; Taylor mode returns the near-diagonal
/// expansion of the full log|cov|; VarianceCovariance returns the negated
/// hinge-variance + squared-off-diagonal surrogate.
Tensor entropy_logdet(const Tensor& z, LogDetMode mode);

/// Conditional-entropy plug-in: negates the mean predictive log-density that
/// the closure computes with stop-gradient already applied to predictor
/// parameters and past latents.
Tensor entropy_conditional_plugin(const std::function<Tensor()>& mean_logp_sg);

/// Gaussian predictive plug-in: -(1/N) sum_i log N(z_i; sg(mean_i), sg(sigma2) I),
/// constants included. Gradient flows only through z.
Tensor gaussian_plugin_entropy(const Tensor& z, const Tensor& mean, const Tensor& log_sigma2);

/// Loss-form dispatch (StopGradPlugin is assembled by the objectives layer).
Tensor marginal_entropy(const EntropyEstimator& est, const Tensor& z);

// Constant-corrected forms for accuracy benchmarks (not differentiable).

/// Gaussian-kernel KDE with the (N-1), bandwidth, and kernel normalizers.
double entropy_kde_corrected(const Tensor& z, double h);
/// Kozachenko-Leonenko constants: + psi(N) - psi(k) + log V_{d,p}.
double entropy_knn_corrected(const Tensor& z, int64_t k, double p_norm);
/// Exact log-det plus the Gaussian constant d/2 (1 + log 2 pi).
double entropy_logdet_corrected(const Tensor& z);
double corrected_entropy(const EntropyEstimator& est, const Tensor& z);

}  // namespace ldm
