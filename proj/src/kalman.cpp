#include "ldm/kalman.hpp"

#include <algorithm>
#include <cmath>

#include "ldm/common.hpp"
#include "ldm/linalg.hpp"

namespace ldm {

namespace {

void check_finite(const Tensor& t, const char* what) {
    for (double x : t.data())
        if (!std::isfinite(x)) fail(ErrorKind::NumericalBlowup, std::string("kalman: non-finite ") + what);
}

Tensor symmetrize(const Tensor& p) { return mul_scalar(add(p, transpose(p)), 0.5); }

Tensor eye(int64_t n) {
    Tensor t = Tensor::zeros({n, n});
    auto d = t.data_mut();
    for (int64_t i = 0; i < n; ++i) d[size_t(i * n + i)] = 1.0;
    return t;
}

Tensor solve_innovation(const Tensor& innov_cov, const Tensor& rhs) {
    try {
        return solve(innov_cov, rhs);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::SingularMatrix)
            fail(ErrorKind::SingularInnovation, "kalman: innovation covariance is singular");
        throw;
    }
}

constexpr double kLog2Pi = 1.8378770664093454836;

}  // namespace

KalmanModel::KalmanModel(int64_t hidden_dim, int64_t obs_dim, bool learn_obs_map, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> f(size_t(hidden_dim * hidden_dim), 0.0);
    for (int64_t i = 0; i < hidden_dim; ++i) f[size_t(i * hidden_dim + i)] = 0.9;
    Rng fr = rng.fork("f");
    for (auto& x : f) x += 0.05 * fr.normal();
    transition = Tensor::param(f, {hidden_dim, hidden_dim});

    // softplus(0.54) ~ 1.0; noise starts near unit scale
    q_raw = Tensor::param(std::vector<double>(size_t(hidden_dim), 0.54), {hidden_dim});
    r_raw = Tensor::param(std::vector<double>(size_t(obs_dim), 0.54), {obs_dim});

    std::vector<double> a(size_t(obs_dim * hidden_dim), 0.0);
    for (int64_t i = 0; i < obs_dim; ++i) a[size_t(i * hidden_dim + i)] = 1.0;  // selector
    obs_map = learn_obs_map ? Tensor::param(a, {obs_dim, hidden_dim}) : Tensor::from_data(a, {obs_dim, hidden_dim});

    h0 = Tensor::param(std::vector<double>(size_t(hidden_dim), 0.0), {hidden_dim});
    std::vector<double> l(size_t(hidden_dim * hidden_dim), 0.0);
    for (int64_t i = 0; i < hidden_dim; ++i) l[size_t(i * hidden_dim + i)] = 1.0;
    p0_chol = Tensor::param(l, {hidden_dim, hidden_dim});
}

Tensor KalmanModel::process_noise() const { return diag_matrix(add_scalar(softplus(q_raw), 1e-6)); }
Tensor KalmanModel::obs_noise() const { return diag_matrix(add_scalar(softplus(r_raw), 1e-6)); }

Tensor KalmanModel::obs_noise_from(const Tensor& x_row) const {
    if (!noise_net) return obs_noise();
    Tensor raw = noise_net->forward(x_row);  // [1, m]
    return diag_matrix(add_scalar(softplus(reshape(raw, {raw.dim(1)})), 1e-6));
}

Tensor KalmanModel::initial_cov() const {
    int64_t n = hidden_dim();
    return add(matmul(p0_chol, transpose(p0_chol)), mul_scalar(eye(n), 1e-6));
}

void KalmanModel::fix_noise(double q_value, double r_value) {
    auto raw_for = [](double v) {
        double t = v - 1e-6;
        return t > 30.0 ? t : std::log(std::expm1(std::max(t, 1e-12)));
    };
    q_raw = Tensor::from_data(std::vector<double>(size_t(hidden_dim()), raw_for(q_value)), {hidden_dim()});
    r_raw = Tensor::from_data(std::vector<double>(size_t(obs_dim()), raw_for(r_value)), {obs_dim()});
}

NamedParams KalmanModel::named_params(const std::string& prefix) const {
    NamedParams p{{prefix + ".F", transition}, {prefix + ".h0", h0}, {prefix + ".p0_chol", p0_chol}};
    if (q_raw.requires_grad()) p.emplace_back(prefix + ".q_raw", q_raw);
    if (r_raw.requires_grad()) p.emplace_back(prefix + ".r_raw", r_raw);
    if (obs_map.requires_grad()) p.emplace_back(prefix + ".A", obs_map);
    if (noise_net) {
        auto np = noise_net->named_params(prefix + ".noise_net");
        p.insert(p.end(), np.begin(), np.end());
    }
    return p;
}

KalmanState kalman_initial_state(const KalmanModel& model) { return {model.h0, model.initial_cov(), 0}; }

KalmanPrediction kalman_predict(const KalmanModel& model, const KalmanState& state) {
    check_finite(state.h, "state mean");
    check_finite(state.p, "state covariance");
    int64_t n = model.hidden_dim();
    Tensor h_col = reshape(state.h, {n, 1});
    Tensor h_pred = reshape(matmul(model.transition, h_col), {n});
    Tensor p_pred = add(matmul(matmul(model.transition, state.p), transpose(model.transition)),
                        model.process_noise());
    p_pred = symmetrize(p_pred);
    Tensor z_mean = reshape(matmul(model.obs_map, reshape(h_pred, {n, 1})), {model.obs_dim()});
    Tensor innov_cov = add(matmul(matmul(model.obs_map, p_pred), transpose(model.obs_map)), model.obs_noise());
    innov_cov = symmetrize(innov_cov);
    check_finite(innov_cov, "innovation covariance");
    return {h_pred, p_pred, z_mean, innov_cov};
}

KalmanState kalman_update(const KalmanModel& model, const KalmanState& state, const KalmanPrediction& pred,
                          const Tensor& z_obs) {
    int64_t n = model.hidden_dim();
    // K = P_pred A^T S^-1  ==  (S^-1 A P_pred)^T for symmetric S, P_pred
    Tensor ap = matmul(model.obs_map, pred.p_pred);          // [m,n]
    Tensor gain = transpose(solve_innovation(pred.innov_cov, ap));  // [n,m]
    Tensor innov = sub(z_obs, pred.z_mean);                  // [m]
    Tensor h_new = add(pred.h_pred, reshape(matmul(gain, reshape(innov, {model.obs_dim(), 1})), {n}));
    Tensor p_new = matmul(sub(eye(n), matmul(gain, model.obs_map)), pred.p_pred);
    p_new = symmetrize(p_new);
    check_finite(h_new, "updated mean");
    return {h_new, p_new, state.t + 1};
}

SequenceLoglik kalman_sequence_loglik(const KalmanModel& model, const Tensor& z_seq) {
    if (z_seq.rank() != 2 || z_seq.dim(1) != model.obs_dim())
        fail(ErrorKind::ShapeMismatch, "kalman_sequence_loglik: z_seq must be [T,m]");
    int64_t T = z_seq.dim(0), m = model.obs_dim();
    if (T < 1) fail(ErrorKind::ShapeMismatch, "kalman_sequence_loglik: empty sequence");

    SequenceLoglik out;
    KalmanState state = kalman_initial_state(model);
    Tensor total = Tensor::scalar(0.0);
    for (int64_t t = 0; t < T; ++t) {
        KalmanPrediction pred = kalman_predict(model, state);
        Tensor z_t = reshape(gather_rows(z_seq, {t}), {m});
        Tensor resid = sub(z_t, pred.z_mean);
        Tensor x = solve_innovation(pred.innov_cov, reshape(resid, {m, 1}));
        Tensor quad = sum(mul(resid, reshape(x, {m})));
        auto [sign, lad] = slogdet(pred.innov_cov);
        Tensor step = mul_scalar(add(add(quad, lad), Tensor::scalar(double(m) * kLog2Pi)), -0.5);
        out.per_step.push_back(step);
        total = add(total, step);
        state = kalman_update(model, state, pred, z_t);
        out.h_filt.push_back(state.h);
        out.p_filt.push_back(state.p);
        out.z_mean.push_back(pred.z_mean);
    }
    check_finite(total, "total log-likelihood");
    out.total = total;
    return out;
}

BatchedFilter kalman_filter_batched(const KalmanModel& model, std::span<const Tensor> z_seq,
                                    std::span<const Tensor> xs) {
    if (z_seq.empty()) fail(ErrorKind::ShapeMismatch, "kalman_filter_batched: empty sequence");
    int64_t b = z_seq[0].dim(0), m = model.obs_dim(), n = model.hidden_dim();

    if (model.noise_net && !xs.empty()) {
        // input-dependent noise: covariances differ per element, filter each one
        BatchedFilter out;
        out.total_loglik = Tensor::scalar(0.0);
        size_t T = z_seq.size();
        std::vector<Tensor> step_acc(T, Tensor::scalar(0.0));
        std::vector<std::vector<Tensor>> h_rows(T), zm_rows(T);
        for (int64_t e = 0; e < b; ++e) {
            KalmanState state = kalman_initial_state(model);
            for (size_t t = 0; t < T; ++t) {
                Tensor x_row = gather_rows(xs[t], {e});
                Tensor robs = model.obs_noise_from(x_row);
                KalmanPrediction pred = kalman_predict(model, state);
                pred.innov_cov = symmetrize(add(
                    matmul(matmul(model.obs_map, pred.p_pred), transpose(model.obs_map)), robs));
                Tensor z_t = reshape(gather_rows(z_seq[t], {e}), {m});
                Tensor resid = sub(z_t, pred.z_mean);
                Tensor xsol = solve_innovation(pred.innov_cov, reshape(resid, {m, 1}));
                Tensor quad = sum(mul(resid, reshape(xsol, {m})));
                auto [sign, lad] = slogdet(pred.innov_cov);
                Tensor step = mul_scalar(add(add(quad, lad), Tensor::scalar(double(m) * kLog2Pi)), -0.5);
                step_acc[t] = add(step_acc[t], mul_scalar(step, 1.0 / double(b)));
                state = kalman_update(model, state, pred, z_t);
                h_rows[t].push_back(reshape(state.h, {1, n}));
                zm_rows[t].push_back(reshape(pred.z_mean, {1, m}));
            }
        }
        for (size_t t = 0; t < T; ++t) {
            out.per_step.push_back(step_acc[t]);
            out.total_loglik = add(out.total_loglik, step_acc[t]);
            Tensor h = h_rows[t][0], zm = zm_rows[t][0];
            for (int64_t e = 1; e < b; ++e) {
                h = concat_rows(h, h_rows[t][size_t(e)]);
                zm = concat_rows(zm, zm_rows[t][size_t(e)]);
            }
            out.h_filt.push_back(h);
            out.z_mean.push_back(zm);
            out.innov_cov.push_back(Tensor());  // per-element; not shared
        }
        return out;
    }

    // shared covariance recursion: P_t and S_t are data-independent
    Tensor h = add(Tensor::zeros({b, n}), model.h0);  // [b,n]
    Tensor p = model.initial_cov();
    Tensor total = Tensor::scalar(0.0);
    BatchedFilter out;
    for (size_t t = 0; t < z_seq.size(); ++t) {
        check_finite(h, "batched state mean");
        Tensor h_pred = matmul(h, transpose(model.transition));  // [b,n]
        Tensor p_pred = symmetrize(add(
            matmul(matmul(model.transition, p), transpose(model.transition)), model.process_noise()));
        Tensor z_mean = matmul(h_pred, transpose(model.obs_map));  // [b,m]
        Tensor innov_cov = symmetrize(add(
            matmul(matmul(model.obs_map, p_pred), transpose(model.obs_map)), model.obs_noise()));

        Tensor resid = sub(z_seq[t], z_mean);                       // [b,m]
        Tensor xsol = solve_innovation(innov_cov, transpose(resid));  // [m,b]
        Tensor quad = rowwise_sum(mul(resid, transpose(xsol)));     // [b]
        auto [sign, lad] = slogdet(innov_cov);
        Tensor step = mul_scalar(add(add(mean(quad), lad), Tensor::scalar(double(m) * kLog2Pi)), -0.5);

        Tensor ap = matmul(model.obs_map, p_pred);
        Tensor gain = transpose(solve_innovation(innov_cov, ap));  // [n,m]
        h = add(h_pred, matmul(resid, transpose(gain)));
        p = symmetrize(matmul(sub(eye(n), matmul(gain, model.obs_map)), p_pred));

        total = add(total, step);
        out.per_step.push_back(step);
        out.h_filt.push_back(h);
        out.z_mean.push_back(z_mean);
        out.innov_cov.push_back(innov_cov);
    }
    check_finite(total, "batched log-likelihood");
    out.total_loglik = total;
    return out;
}

std::pair<std::vector<double>, std::vector<double>> confidence_interval(const KalmanState& state,
                                                                        const Tensor& probe_w,
                                                                        const Tensor& probe_c, double level) {
    NoGradGuard off;
    if (level != 0.95) fail(ErrorKind::OutOfRange, "confidence_interval: only the 95% level is tabulated");
    const double zq = 1.959964;
    int64_t k = probe_w.dim(0), n = probe_w.dim(1);
    Tensor mean_t = matmul(probe_w, reshape(state.h, {n, 1}));
    Tensor cov = matmul(matmul(probe_w, state.p), transpose(probe_w));
    std::vector<double> lo(static_cast<size_t>(k)), hi(static_cast<size_t>(k));
    for (int64_t i = 0; i < k; ++i) {
        double mu = mean_t.at(i, 0) + (probe_c.defined() ? probe_c.at(i) : 0.0);
        double half = zq * std::sqrt(std::max(0.0, cov.at(i, i)));
        lo[size_t(i)] = mu - half;
        hi[size_t(i)] = mu + half;
    }
    return {lo, hi};
}

std::pair<std::vector<double>, std::vector<double>> confidence_interval_sampled(const KalmanState& state,
                                                                                const Mlp& probe, int n_draws,
                                                                                uint64_t seed, double level) {
    NoGradGuard off;
    int64_t n = state.h.dim(0);
    auto chol = linalg::cholesky(state.p.data().data(), n);
    Rng rng(seed);
    std::vector<double> draws(size_t(n_draws) * size_t(n));
    for (int i = 0; i < n_draws; ++i) {
        std::vector<double> xi(static_cast<size_t>(n));
        for (auto& x : xi) x = rng.normal();
        for (int64_t r = 0; r < n; ++r) {
            double s = state.h.at(r);
            for (int64_t c = 0; c <= r; ++c) s += chol[size_t(r * n + c)] * xi[size_t(c)];
            draws[size_t(i) * size_t(n) + size_t(r)] = s;
        }
    }
    Tensor pushed = probe.forward(Tensor::from_data(std::move(draws), {n_draws, n}));
    int64_t k = pushed.dim(1);
    std::vector<double> lo(static_cast<size_t>(k)), hi(static_cast<size_t>(k));
    double alpha = (1.0 - level) / 2.0;
    for (int64_t j = 0; j < k; ++j) {
        std::vector<double> col(static_cast<size_t>(n_draws));
        for (int i = 0; i < n_draws; ++i) col[size_t(i)] = pushed.at(i, j);
        std::sort(col.begin(), col.end());
        lo[size_t(j)] = col[size_t(int64_t(alpha * n_draws))];
        hi[size_t(j)] = col[size_t(std::min<int64_t>(n_draws - 1, int64_t((1.0 - alpha) * n_draws)))];
    }
    return {lo, hi};
}

}  // namespace ldm
