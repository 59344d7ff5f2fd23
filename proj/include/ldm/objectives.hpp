#pragma once

#include <span>

#include "ldm/entropy.hpp"
#include "ldm/kalman.hpp"
#include "ldm/latent_models.hpp"
#include "ldm/nets.hpp"
#include "ldm/tensor.hpp"

namespace ldm {

enum class ObjectiveFlavor { PairLdm, PairMi, TemporalLdm, TemporalMi, TemporalStopGrad, LinearIca };

/// Full training objective: latent family, entropy estimator, and whether the
/// mutual-information variant (marginal entropies) is used. Losses decompose
/// additively as loss = -(alignment + entropy_term), with both addends exposed.
struct Objective {
    ObjectiveFlavor flavor = ObjectiveFlavor::PairMi;
    LatentModel latent;
    EntropyEstimator estimator;

    void validate() const;
};

struct LossParts {
    Tensor loss;
    Tensor alignment;
    Tensor entropy_term;
};

/// Paired-view loss. PairLdm scores the joint entropy of the column-concatenated
/// batch [z | z']; PairMi scores the two marginal entropies H[z] + H[z'].
LossParts loss_pair(const Objective& obj, const Tensor& z, const Tensor& zp);

/// Gaussian predictor with a recurrent mean and a learned scalar log variance.
struct GaussianRnnPredictor {
    Rnn net;
    Tensor log_sigma2;

    GaussianRnnPredictor() = default;
    GaussianRnnPredictor(int64_t dim, int64_t hidden, const std::vector<int64_t>& head_hidden, uint64_t seed);
    NamedParams named_params(const std::string& prefix = "pred") const;
};

/// Temporal loss over z_seq[t] = [b,d] with a recurrent Gaussian predictor.
/// Alignment runs over t >= 1 (empirical prior on the first step). The entropy
/// term is the marginal estimator per step (TemporalMi) or the gradient-isolated
/// conditional plug-in (TemporalLdm / TemporalStopGrad).
LossParts loss_temporal_rnn(const Objective& obj, std::span<const Tensor> z_seq,
                            const GaussianRnnPredictor& pred);

/// Temporal loss with a Kalman predictor; alignment is the filter's predictive
/// log-density, which covers t=0 through the learned initial state.
LossParts loss_temporal_kalman(const Objective& obj, std::span<const Tensor> z_seq, const KalmanModel& model,
                               std::span<const Tensor> xs = {});

enum class SourceDensity { LaplaceUnit, GaussianUnit };

/// -( mean_i sum_k log p_source((W x_i)_k) + (1/2) log |W W^T| ); W square.
LossParts loss_linear_ica(const Tensor& w, const Tensor& x, SourceDensity density);

/// Temporal pair objective for Gaussian sources with known per-source AR(1)
/// coefficients; with volume-preserving W the entropy term is constant, so the
/// loss is the negated conditional log-density alone.
LossParts loss_gaussian_ou_pair(const Tensor& w, const Tensor& x_t, const Tensor& x_next,
                                std::span<const double> ar_coef);

}  // namespace ldm
