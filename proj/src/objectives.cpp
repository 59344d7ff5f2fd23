#include "ldm/objectives.hpp"

#include <cmath>

#include "ldm/common.hpp"

namespace ldm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

bool is_temporal(ObjectiveFlavor f) {
    return f == ObjectiveFlavor::TemporalLdm || f == ObjectiveFlavor::TemporalMi ||
           f == ObjectiveFlavor::TemporalStopGrad;
}

LossParts assemble(const Tensor& alignment, const Tensor& entropy_term) {
    return {neg(add(alignment, entropy_term)), alignment, entropy_term};
}

// -(1/N) sum_i log N(z_i; sg(mean_i), sg(S)) via the innovation covariance
Tensor kalman_plugin_entropy(const Tensor& z, const Tensor& z_mean, const Tensor& innov_cov) {
    int64_t m = z.dim(1);
    Tensor mean_sg = stopgrad(z_mean);
    Tensor cov_sg = stopgrad(innov_cov);
    Tensor resid = sub(z, mean_sg);
    Tensor xsol = solve(cov_sg, transpose(resid));
    Tensor quad = mean(rowwise_sum(mul(resid, transpose(xsol))));
    auto [sign, lad] = slogdet(cov_sg);
    return mul_scalar(add(add(quad, lad), Tensor::scalar(double(m) * kLog2Pi)), 0.5);
}

}  // namespace

void Objective::validate() const {
    latent.validate();
    estimator.validate();
    if (flavor == ObjectiveFlavor::TemporalStopGrad || flavor == ObjectiveFlavor::TemporalLdm) {
        if (estimator.kind != EntropyEstimator::Kind::StopGradPlugin)
            fail(ErrorKind::ConfigInvalid,
                 "temporal_ldm / temporal_stopgrad use the stop-gradient conditional plug-in estimator");
        if (latent.family == LatentFamily::Categorical || latent.family == LatentFamily::SimplexDirichlet)
            fail(ErrorKind::ConfigInvalid, "stop-gradient flavors need a predictor-bearing latent family");
    }
    if (!is_temporal(flavor) && estimator.kind == EntropyEstimator::Kind::StopGradPlugin)
        fail(ErrorKind::ConfigInvalid, "the conditional plug-in estimator requires a temporal flavor");
}

LossParts loss_pair(const Objective& obj, const Tensor& z, const Tensor& zp) {
    if (obj.flavor != ObjectiveFlavor::PairLdm && obj.flavor != ObjectiveFlavor::PairMi)
        fail(ErrorKind::ConfigInvalid, "loss_pair needs a pair flavor");
    obj.validate();
    Tensor align = alignment(obj.latent, z, zp);
    Tensor ent;
    if (obj.flavor == ObjectiveFlavor::PairLdm) {
        ent = marginal_entropy(obj.estimator, concat_cols(z, zp));
    } else {
        ent = add(marginal_entropy(obj.estimator, z), marginal_entropy(obj.estimator, zp));
    }
    return assemble(align, ent);
}

GaussianRnnPredictor::GaussianRnnPredictor(int64_t dim, int64_t hidden, const std::vector<int64_t>& head_hidden,
                                           uint64_t seed) {
    net = Rnn(dim, hidden, head_hidden, dim);
    init_params(net, seed);
    log_sigma2 = Tensor::param({std::log(0.5)}, {});
}

NamedParams GaussianRnnPredictor::named_params(const std::string& prefix) const {
    NamedParams p = net.named_params(prefix);
    p.emplace_back(prefix + ".log_sigma2", log_sigma2);
    return p;
}

LossParts loss_temporal_rnn(const Objective& obj, std::span<const Tensor> z_seq,
                            const GaussianRnnPredictor& pred) {
    if (!is_temporal(obj.flavor)) fail(ErrorKind::ConfigInvalid, "loss_temporal_rnn needs a temporal flavor");
    obj.validate();
    if (z_seq.size() < 2) fail(ErrorKind::ShapeMismatch, "loss_temporal_rnn: need T >= 2");
    int64_t b = z_seq[0].dim(0), d = z_seq[0].dim(1);

    std::vector<Tensor> means = pred.net.forward_seq(z_seq);
    Tensor ls = pred.log_sigma2;
    Tensor inv_s2 = exp(neg(ls));

    Tensor align = Tensor::scalar(0.0);
    Tensor ent = Tensor::scalar(0.0);
    for (size_t t = 1; t < z_seq.size(); ++t) {
        Tensor quad = mul_scalar(sum(square(sub(z_seq[t], means[t]))), 1.0 / (2.0 * double(b)));
        Tensor step = neg(add(mul(quad, inv_s2), mul_scalar(add_scalar(ls, kLog2Pi), 0.5 * double(d))));
        align = add(align, step);
        if (obj.flavor == ObjectiveFlavor::TemporalMi) {
            ent = add(ent, marginal_entropy(obj.estimator, z_seq[t]));
        } else {
            ent = add(ent, gaussian_plugin_entropy(z_seq[t], means[t], ls));
        }
    }
    return assemble(align, ent);
}

LossParts loss_temporal_kalman(const Objective& obj, std::span<const Tensor> z_seq, const KalmanModel& model,
                               std::span<const Tensor> xs) {
    if (!is_temporal(obj.flavor)) fail(ErrorKind::ConfigInvalid, "loss_temporal_kalman needs a temporal flavor");
    obj.validate();
    BatchedFilter bf = kalman_filter_batched(model, z_seq, xs);

    Tensor align = bf.total_loglik;
    Tensor ent = Tensor::scalar(0.0);
    if (obj.flavor == ObjectiveFlavor::TemporalMi) {
        for (const auto& z_t : z_seq) ent = add(ent, marginal_entropy(obj.estimator, z_t));
    } else {
        for (size_t t = 0; t < z_seq.size(); ++t) {
            if (!bf.innov_cov[t].defined())
                fail(ErrorKind::ConfigInvalid,
                     "conditional plug-in entropy is unavailable with input-dependent observation noise; "
                     "use temporal_mi");
            ent = add(ent, kalman_plugin_entropy(z_seq[t], bf.z_mean[t], bf.innov_cov[t]));
        }
    }
    return assemble(align, ent);
}

LossParts loss_linear_ica(const Tensor& w, const Tensor& x, SourceDensity density) {
    if (w.rank() != 2 || w.dim(0) != w.dim(1)) fail(ErrorKind::ShapeMismatch, "loss_linear_ica: W must be square");
    if (x.rank() != 2 || x.dim(1) != w.dim(1)) fail(ErrorKind::ShapeMismatch, "loss_linear_ica: x dim mismatch");
    int64_t b = x.dim(0);
    Tensor z = matmul(x, transpose(w));
    Tensor logp;
    if (density == SourceDensity::LaplaceUnit) {
        logp = neg(add_scalar(abs(z), std::log(2.0)));
    } else {
        logp = neg(add_scalar(mul_scalar(square(z), 0.5), 0.5 * kLog2Pi));
    }
    Tensor align = mul_scalar(sum(logp), 1.0 / double(b));
    auto [sign, lad] = slogdet(w);
    if (sign == 0.0) fail(ErrorKind::SingularMatrix, "loss_linear_ica: W is singular");
    return assemble(align, lad);  // (1/2) log |W W^T| = log |det W|
}

LossParts loss_gaussian_ou_pair(const Tensor& w, const Tensor& x_t, const Tensor& x_next,
                                std::span<const double> ar_coef) {
    if (w.rank() != 2 || w.dim(0) != w.dim(1)) fail(ErrorKind::ShapeMismatch, "loss_gaussian_ou_pair: W square");
    int64_t b = x_t.dim(0), d = w.dim(0);
    if (int64_t(ar_coef.size()) != d) fail(ErrorKind::ShapeMismatch, "loss_gaussian_ou_pair: one AR coefficient per source");
    Tensor z = matmul(x_t, transpose(w));
    Tensor zn = matmul(x_next, transpose(w));
    std::vector<double> coef(ar_coef.begin(), ar_coef.end());
    std::vector<double> inv_two_var(static_cast<size_t>(d));
    std::vector<double> log_norm(static_cast<size_t>(d));
    for (int64_t i = 0; i < d; ++i) {
        double v = 1.0 - coef[size_t(i)] * coef[size_t(i)];  // stationary unit variance
        inv_two_var[size_t(i)] = 1.0 / (2.0 * v);
        log_norm[size_t(i)] = 0.5 * (std::log(v) + kLog2Pi);
    }
    Tensor pred_mean = mul(z, Tensor::from_data(coef, {d}));
    Tensor sq = square(sub(zn, pred_mean));
    Tensor quad = sum(mul(sq, Tensor::from_data(inv_two_var, {d})));
    double norm_total = 0.0;
    for (double ln : log_norm) norm_total += ln;
    Tensor align = neg(add_scalar(mul_scalar(quad, 1.0 / double(b)), norm_total));
    // entropy of W x shifts by log|det W| (zero-valued under the volume
    // constraint, but its gradient keeps W away from collapse)
    auto [sign, lad] = slogdet(w);
    return assemble(align, lad);
}

}  // namespace ldm
