#include <cmath>

#include "doctest.h"
#include "ldm/objectives.hpp"
#include "ldm/optim.hpp"
#include "oracles.hpp"
#include "reference_losses.hpp"

using namespace ldm;

namespace {

std::vector<double> random_sphere(int64_t n, int64_t d, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(n * d));
    for (int64_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (int64_t c = 0; c < d; ++c) {
            v[size_t(i * d + c)] = rng.normal();
            norm += v[size_t(i * d + c)] * v[size_t(i * d + c)];
        }
        norm = std::sqrt(norm);
        for (int64_t c = 0; c < d; ++c) v[size_t(i * d + c)] /= norm;
    }
    return v;
}

}  // namespace

TEST_SUITE("objectives") {

TEST_CASE("pair loss decomposes additively and exposes both addends") {
    Rng rng(3);
    std::vector<double> zv(32), pv(32);
    for (auto& x : zv) x = rng.normal();
    for (auto& x : pv) x = rng.normal();
    Objective obj;
    obj.flavor = ObjectiveFlavor::PairLdm;
    obj.latent.family = LatentFamily::PlaneGaussian;
    obj.latent.sigma2 = 0.7;
    obj.estimator.kind = EntropyEstimator::Kind::LogDet;
    obj.estimator.mode = LogDetMode::Exact;
    Tensor z = Tensor::from_data(zv, {16, 2});
    Tensor zp = Tensor::from_data(pv, {16, 2});
    auto parts = loss_pair(obj, z, zp);
    CHECK(parts.loss.item() == -(parts.alignment.item() + parts.entropy_term.item()));

    // identical views: alignment is exactly zero, loss = -entropy_term
    // (kde handles the degenerate joint that identical views produce)
    Objective kde_obj = obj;
    kde_obj.estimator.kind = EntropyEstimator::Kind::Kde;
    kde_obj.estimator.bandwidth = 0.5;
    auto same = loss_pair(kde_obj, z, z);
    CHECK(same.alignment.item() == 0.0);
    CHECK(same.loss.item() == -same.entropy_term.item());
}

TEST_CASE("assembled contrastive loss matches the hand-written form") {
    Rng rng(7);
    int64_t n = 64, d = 8;
    double beta = 4.0;
    Objective obj;
    obj.flavor = ObjectiveFlavor::PairMi;
    obj.latent.family = LatentFamily::SphereVmf;
    obj.latent.beta = beta;
    obj.estimator.kind = EntropyEstimator::Kind::Kde;
    obj.estimator.kernel = KdeKernel::Vmf;
    obj.estimator.bandwidth = 1.0 / beta;
    for (int trial = 0; trial < 5; ++trial) {
        auto zv = random_sphere(n, d, rng);
        auto pv = random_sphere(n, d, rng);
        auto parts = loss_pair(obj, Tensor::from_data(zv, {n, d}), Tensor::from_data(pv, {n, d}));
        double want = reference::simclr_form_loss(zv, pv, n, d, beta);
        CHECK(std::fabs(parts.loss.item() - want) < 1e-6);
    }
}

TEST_CASE("assembled variance-covariance loss matches the hand-written form") {
    Rng rng(11);
    int64_t n = 64, d = 6;
    double sigma2 = 0.5;
    Objective obj;
    obj.flavor = ObjectiveFlavor::PairMi;
    obj.latent.family = LatentFamily::PlaneGaussian;
    obj.latent.sigma2 = sigma2;
    obj.estimator.kind = EntropyEstimator::Kind::LogDet;
    obj.estimator.mode = LogDetMode::VarianceCovariance;
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> zv(size_t(n * d)), pv(size_t(n * d));
        for (auto& x : zv) x = rng.normal();
        for (size_t i = 0; i < pv.size(); ++i) pv[i] = zv[i] + 0.3 * rng.normal();
        auto parts = loss_pair(obj, Tensor::from_data(zv, {n, d}), Tensor::from_data(pv, {n, d}));
        double want = reference::vicreg_form_loss(zv, pv, n, d, sigma2);
        CHECK(std::fabs(parts.loss.item() - want) < 1e-6);
    }
}

TEST_CASE("linear ica loss values") {
    // W = I on whitened gaussian data with a gaussian source model
    Rng rng(13);
    int64_t n = 4000, d = 2;
    std::vector<double> xv(static_cast<size_t>(n * d));
    for (auto& x : xv) x = rng.normal();
    Tensor x = Tensor::from_data(xv, {n, d});
    Tensor w_eye = Tensor::from_data({1, 0, 0, 1}, {2, 2});
    auto parts = loss_linear_ica(w_eye, x, SourceDensity::GaussianUnit);
    double want = 0.5 * double(d) * (1.0 + std::log(2.0 * M_PI));
    CHECK(parts.loss.item() == doctest::Approx(want).epsilon(0.03));

    // log-det term of W = 2 I
    Tensor w2 = Tensor::from_data({2, 0, 0, 2}, {2, 2});
    auto parts2 = loss_linear_ica(w2, x, SourceDensity::GaussianUnit);
    CHECK(parts2.entropy_term.item() == doctest::Approx(std::log(4.0)));

    CHECK_THROWS_AS(loss_linear_ica(Tensor::zeros({2, 2}), x, SourceDensity::GaussianUnit), Error);
}

TEST_CASE("linear ica gradient matches finite differences") {
    Rng rng(17);
    std::vector<double> xv(200), wv = {1.2, 0.3, -0.2, 0.9};
    for (auto& x : xv) x = rng.laplace();
    Tensor x = Tensor::from_data(xv, {100, 2});
    Tensor w = Tensor::param(wv, {2, 2});
    auto loss_fn = [&] { return loss_linear_ica(w, x, SourceDensity::LaplaceUnit).loss; };
    backward(loss_fn());
    auto fd = oracles::finite_diff_grad([&] { return loss_fn().item(); }, w);
    CHECK(oracles::max_grad_rel_err(w.grad(), fd) < 1e-4);
}

TEST_CASE("closed-form gaussian check: -KL = alignment + entropy, affine invariant") {
    // R = N(m1, s1^2), P = N(m2, s2^2), all closed form
    auto neg_kl = [](double m1, double s1, double m2, double s2) {
        return -(std::log(s2 / s1) + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2.0 * s2 * s2) - 0.5);
    };
    auto cross_entropy_alignment = [](double m1, double s1, double m2, double s2) {
        return -0.5 * std::log(2.0 * M_PI * s2 * s2) - (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2.0 * s2 * s2);
    };
    auto entropy = [](double s1) { return 0.5 * std::log(2.0 * M_PI * M_E * s1 * s1); };

    double m1 = 0.3, s1 = 0.8, m2 = -0.5, s2 = 1.7;
    double lhs = neg_kl(m1, s1, m2, s2);
    double align = cross_entropy_alignment(m1, s1, m2, s2);
    double ent = entropy(s1);
    CHECK(lhs == doctest::Approx(align + ent).epsilon(1e-12));

    // same invertible affine map applied to both distributions
    for (auto [a, b] : {std::pair{2.0, 1.0}, std::pair{0.25, -3.0}, std::pair{-1.5, 0.2}}) {
        double am1 = a * m1 + b, as1 = std::fabs(a) * s1;
        double am2 = a * m2 + b, as2 = std::fabs(a) * s2;
        double kl2 = neg_kl(am1, as1, am2, as2);
        CHECK(kl2 == doctest::Approx(lhs).epsilon(1e-12));  // -KL unchanged
        double align2 = cross_entropy_alignment(am1, as1, am2, as2);
        double ent2 = entropy(as1);
        // alignment and entropy shift by canceling log-jacobian amounts
        CHECK(align2 - align == doctest::Approx(-std::log(std::fabs(a))).epsilon(1e-9));
        CHECK(ent2 - ent == doctest::Approx(std::log(std::fabs(a))).epsilon(1e-9));
    }
}

TEST_CASE("temporal rnn loss: zero residuals leave only the normalizer") {
    int64_t T = 5, b = 3, d = 2;
    Objective obj;
    obj.flavor = ObjectiveFlavor::TemporalStopGrad;
    obj.latent.family = LatentFamily::PlaneGaussian;
    obj.estimator.kind = EntropyEstimator::Kind::StopGradPlugin;
    GaussianRnnPredictor pred(d, 4, {4}, 21);
    // zero everything so predictions are exactly zero
    for (auto& [name, t] : pred.net.named_params())
        for (double& x : t.data_mut()) x = 0.0;
    std::vector<Tensor> z_seq;
    for (int64_t t = 0; t < T; ++t) z_seq.push_back(Tensor::zeros({b, d}));
    auto parts = loss_temporal_rnn(obj, z_seq, pred);
    double sigma2 = std::exp(pred.log_sigma2.item());
    double want_align = -double(T - 1) * 0.5 * double(d) * std::log(2.0 * M_PI * sigma2);
    CHECK(parts.alignment.item() == doctest::Approx(want_align).epsilon(1e-12));
}

TEST_CASE("swapping the entropy flavor changes only the uniformity term") {
    Rng rng(23);
    int64_t T = 4, b = 6, d = 2;
    std::vector<Tensor> z_seq;
    for (int64_t t = 0; t < T; ++t) {
        std::vector<double> v(static_cast<size_t>(b * d));
        for (auto& x : v) x = rng.normal();
        z_seq.push_back(Tensor::from_data(v, {b, d}));
    }
    GaussianRnnPredictor pred(d, 5, {6}, 29);

    Objective mi;
    mi.flavor = ObjectiveFlavor::TemporalMi;
    mi.latent.family = LatentFamily::PlaneGaussian;
    mi.estimator.kind = EntropyEstimator::Kind::Knn;
    mi.estimator.k = 1;
    mi.estimator.discard_top_frac = 0.0;

    Objective sg;
    sg.flavor = ObjectiveFlavor::TemporalStopGrad;
    sg.latent.family = LatentFamily::PlaneGaussian;
    sg.estimator.kind = EntropyEstimator::Kind::StopGradPlugin;

    auto parts_mi = loss_temporal_rnn(mi, z_seq, pred);
    auto parts_sg = loss_temporal_rnn(sg, z_seq, pred);
    CHECK(parts_mi.alignment.item() == parts_sg.alignment.item());  // bit-identical
    CHECK(parts_mi.entropy_term.item() != parts_sg.entropy_term.item());
}

TEST_CASE("stop-gradient flavor sends no entropy gradient to the predictor") {
    Rng rng(31);
    int64_t T = 4, b = 8, d = 2;
    std::vector<Tensor> z_seq;
    for (int64_t t = 0; t < T; ++t) {
        std::vector<double> v(static_cast<size_t>(b * d));
        for (auto& x : v) x = rng.normal();
        z_seq.push_back(Tensor::param(v, {b, d}));
    }
    GaussianRnnPredictor pred(d, 5, {6}, 37);
    Objective sg;
    sg.flavor = ObjectiveFlavor::TemporalStopGrad;
    sg.latent.family = LatentFamily::PlaneGaussian;
    sg.estimator.kind = EntropyEstimator::Kind::StopGradPlugin;

    auto parts = loss_temporal_rnn(sg, z_seq, pred);
    backward(parts.entropy_term);
    for (auto& [name, t] : pred.named_params()) CHECK_MESSAGE(t.grad().empty(), name);
    CHECK(!z_seq[1].grad().empty());  // but the representations do get gradient
}

TEST_CASE("temporal kalman loss decomposes and rejects bad configs") {
    Rng rng(41);
    int64_t T = 4, b = 3, m = 2;
    std::vector<Tensor> z_seq;
    for (int64_t t = 0; t < T; ++t) {
        std::vector<double> v(static_cast<size_t>(b * m));
        for (auto& x : v) x = rng.normal();
        z_seq.push_back(Tensor::param(v, {b, m}));
    }
    KalmanModel model(3, 2, false, 43);

    Objective mi;
    mi.flavor = ObjectiveFlavor::TemporalMi;
    mi.latent.family = LatentFamily::PlaneGaussian;
    mi.estimator.kind = EntropyEstimator::Kind::Knn;
    mi.estimator.k = 1;
    mi.estimator.discard_top_frac = 0.0;
    auto parts = loss_temporal_kalman(mi, z_seq, model);
    CHECK(parts.loss.item() == -(parts.alignment.item() + parts.entropy_term.item()));

    Objective sg;
    sg.flavor = ObjectiveFlavor::TemporalStopGrad;
    sg.latent.family = LatentFamily::PlaneGaussian;
    sg.estimator.kind = EntropyEstimator::Kind::StopGradPlugin;
    auto parts_sg = loss_temporal_kalman(sg, z_seq, model);
    CHECK(parts_sg.alignment.item() == parts.alignment.item());

    backward(parts_sg.entropy_term);
    CHECK(model.transition.grad().empty());  // plug-in entropy is isolated from the filter

    Objective bad;
    bad.flavor = ObjectiveFlavor::PairMi;
    bad.estimator.kind = EntropyEstimator::Kind::StopGradPlugin;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("ou pair loss prefers the true unmixing direction") {
    // 2 gaussian OU sources with distinct time constants, mixed; the loss at
    // the identity unmixing (on sources) beats a rotated unmixing
    Rng rng(47);
    int64_t n = 4000;
    double a0 = 0.95, a1 = 0.5;
    std::vector<double> st(size_t(n * 2)), sn(size_t(n * 2));
    double s0 = 0, s1 = 0;
    // stationary start
    s0 = rng.normal();
    s1 = rng.normal();
    for (int64_t i = 0; i < n; ++i) {
        st[size_t(2 * i)] = s0;
        st[size_t(2 * i + 1)] = s1;
        s0 = a0 * s0 + std::sqrt(1 - a0 * a0) * rng.normal();
        s1 = a1 * s1 + std::sqrt(1 - a1 * a1) * rng.normal();
        sn[size_t(2 * i)] = s0;
        sn[size_t(2 * i + 1)] = s1;
    }
    Tensor xt = Tensor::from_data(st, {n, 2});
    Tensor xn = Tensor::from_data(sn, {n, 2});
    std::vector<double> coef = {a0, a1};

    Tensor w_true = Tensor::from_data({1, 0, 0, 1}, {2, 2});
    double c = std::cos(0.6), s = std::sin(0.6);
    Tensor w_rot = Tensor::from_data({c, -s, s, c}, {2, 2});
    double loss_true = loss_gaussian_ou_pair(w_true, xt, xn, coef).loss.item();
    double loss_rot = loss_gaussian_ou_pair(w_rot, xt, xn, coef).loss.item();
    CHECK(loss_true < loss_rot);
}

TEST_CASE("adam optimizer minimizes a quadratic") {
    Tensor w = Tensor::param({5.0, -3.0}, {2});
    AdamOptimizer opt({w}, 0.1);
    for (int i = 0; i < 400; ++i) {
        opt.zero_grad();
        backward(sum(square(w)));
        opt.step();
    }
    CHECK(std::fabs(w.at(0)) < 1e-3);
    CHECK(std::fabs(w.at(1)) < 1e-3);
    CHECK(opt.grad_norm() >= 0.0);
}

}  // TEST_SUITE
