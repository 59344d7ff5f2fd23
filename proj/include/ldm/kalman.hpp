#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ldm/nets.hpp"
#include "ldm/tensor.hpp"

namespace ldm {

/// Linear-Gaussian latent predictor. Noise diagonals are parameterized as
/// softplus(raw) + 1e-6, so degenerate zero-noise limits are unreachable.
/// The observation map can be held fixed (selector mode) or learned.
struct KalmanModel {
    Tensor transition;  // F [n,n]
    Tensor q_raw;       // process-noise parameter [n]
    Tensor obs_map;     // A [m,n]
    Tensor r_raw;       // observation-noise parameter [m]
    Tensor h0;          // initial mean [n]
    Tensor p0_chol;     // initial covariance factor L, P0 = L L^T + 1e-6 I
    std::optional<Mlp> noise_net;  // per-step diagonal Robs from inputs (softplus head)

    KalmanModel() = default;
    KalmanModel(int64_t hidden_dim, int64_t obs_dim, bool learn_obs_map, uint64_t seed);

    /// Freeze the noise diagonals at given values (softplus-floored form is kept).
    void fix_noise(double q_value, double r_value);

    int64_t hidden_dim() const { return transition.dim(0); }
    int64_t obs_dim() const { return obs_map.dim(0); }

    Tensor process_noise() const;                    // Q [n,n]
    Tensor obs_noise() const;                        // Robs [m,m]
    Tensor obs_noise_from(const Tensor& x_row) const;  // per-input diagonal [m,m]
    Tensor initial_cov() const;                      // P0 [n,n]

    NamedParams named_params(const std::string& prefix = "kalman") const;
};

struct KalmanState {
    Tensor h;  // posterior mean [n]
    Tensor p;  // posterior covariance [n,n], SPD
    int64_t t = 0;
};

struct KalmanPrediction {
    Tensor h_pred;     // [n]
    Tensor p_pred;     // [n,n]
    Tensor z_mean;     // [m]
    Tensor innov_cov;  // prediction-error covariance [m,m]
};

KalmanState kalman_initial_state(const KalmanModel& model);
KalmanPrediction kalman_predict(const KalmanModel& model, const KalmanState& state);
/// Measurement update; gain computed by solving against the innovation
/// covariance (never an explicit inverse). Covariance is re-symmetrized.
KalmanState kalman_update(const KalmanModel& model, const KalmanState& state, const KalmanPrediction& pred,
                          const Tensor& z_obs);

struct SequenceLoglik {
    Tensor total;                  // scalar
    std::vector<Tensor> per_step;  // scalar per step
    std::vector<Tensor> h_filt;    // posterior means per step [n]
    std::vector<Tensor> p_filt;    // posterior covariances per step [n,n]
    std::vector<Tensor> z_mean;    // predictive means per step [m]
};

/// Gaussian predictive log-density of each step given the strict past, with
/// the (m/2) log 2 pi constant included; differentiable in the observations
/// and every model parameter. z_seq is [T,m].
SequenceLoglik kalman_sequence_loglik(const KalmanModel& model, const Tensor& z_seq);

struct BatchedFilter {
    Tensor total_loglik;                // scalar, summed over t, averaged over batch
    std::vector<Tensor> per_step;       // mean log-density per step
    std::vector<Tensor> h_filt;         // [b,n] per step
    std::vector<Tensor> z_mean;         // [b,m] per step (pre-update prediction)
    std::vector<Tensor> innov_cov;      // [m,m] per step (shared across batch)
};

/// Filters a batch of sequences at once. With input-independent noise the
/// covariance recursion is data-independent and shared across the batch.
/// z_seq[t] is [b,m]. When the model carries a noise net, xs[t] ([b,x_dim])
/// provides the inputs and the filter runs per batch element.
BatchedFilter kalman_filter_batched(const KalmanModel& model, std::span<const Tensor> z_seq,
                                    std::span<const Tensor> xs = {});

/// 95% interval of an affine probe w z + c of the state: mean +- 1.959964 *
/// sqrt(diag(W P W^T)).
std::pair<std::vector<double>, std::vector<double>> confidence_interval(const KalmanState& state,
                                                                        const Tensor& probe_w,
                                                                        const Tensor& probe_c,
                                                                        double level = 0.95);
/// Nonlinear probe fallback: percentile interval over draws from N(h, P)
/// pushed through the probe network.
std::pair<std::vector<double>, std::vector<double>> confidence_interval_sampled(const KalmanState& state,
                                                                                const Mlp& probe, int n_draws,
                                                                                uint64_t seed,
                                                                                double level = 0.95);

}  // namespace ldm
