#include "ldm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ldm/common.hpp"
#include "ldm/linalg.hpp"

namespace ldm {

ProbeResult affine_probe(const Tensor& z, const Tensor& target, uint64_t seed) {
    if (z.rank() != 2 || target.rank() != 2 || z.dim(0) != target.dim(0))
        fail(ErrorKind::ShapeMismatch, "affine_probe: need matching [N,d] and [N,k]");
    int64_t n = z.dim(0), d = z.dim(1), k = target.dim(1);
    if (n <= d + 1) fail(ErrorKind::DegenerateBatch, "affine_probe: need N > d + 1");
    NoGradGuard off;

    // seeded 80/20 split
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (int64_t i = n - 1; i > 0; --i) std::swap(order[size_t(i)], order[size_t(rng.next_u64() % uint64_t(i + 1))]);
    int64_t n_train = std::max<int64_t>(d + 2, (n * 8) / 10);
    n_train = std::min(n_train, n - 1);

    int64_t de = d + 1;  // design with intercept
    std::vector<double> xtx(static_cast<size_t>(de * de), 0.0), xty(static_cast<size_t>(de * k), 0.0);
    for (int64_t r = 0; r < n_train; ++r) {
        int64_t i = order[size_t(r)];
        std::vector<double> row(static_cast<size_t>(de));
        for (int64_t c = 0; c < d; ++c) row[size_t(c)] = z.at(i, c);
        row[size_t(d)] = 1.0;
        for (int64_t a = 0; a < de; ++a) {
            for (int64_t b = 0; b < de; ++b) xtx[size_t(a * de + b)] += row[size_t(a)] * row[size_t(b)];
            for (int64_t c = 0; c < k; ++c) xty[size_t(a * k + c)] += row[size_t(a)] * target.at(i, c);
        }
    }

    ProbeResult res;
    std::vector<double> beta(static_cast<size_t>(de * k));
    try {
        auto lu = linalg::lu_decompose(xtx.data(), de);
        linalg::lu_solve(lu, xty.data(), beta.data(), k);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::SingularMatrix) throw;
        res.ridge_fallback = true;
        for (int64_t a = 0; a < de; ++a) xtx[size_t(a * de + a)] += 1e-8;
        auto lu = linalg::lu_decompose(xtx.data(), de);
        linalg::lu_solve(lu, xty.data(), beta.data(), k);
    }
    // store as [k, d+1]
    res.weights.resize(static_cast<size_t>(k * de));
    for (int64_t c = 0; c < k; ++c)
        for (int64_t a = 0; a < de; ++a) res.weights[size_t(c * de + a)] = beta[size_t(a * k + c)];

    // held-out evaluation
    int64_t n_test = n - n_train;
    std::vector<double> mean_y(static_cast<size_t>(k), 0.0);
    for (int64_t r = n_train; r < n; ++r)
        for (int64_t c = 0; c < k; ++c) mean_y[size_t(c)] += target.at(order[size_t(r)], c) / double(n_test);
    std::vector<double> sse(static_cast<size_t>(k), 0.0), sst(static_cast<size_t>(k), 0.0);
    res.residual_cov.assign(static_cast<size_t>(k * k), 0.0);
    std::vector<double> resid(static_cast<size_t>(k));
    for (int64_t r = n_train; r < n; ++r) {
        int64_t i = order[size_t(r)];
        for (int64_t c = 0; c < k; ++c) {
            double pred = res.weights[size_t(c * de + d)];
            for (int64_t a = 0; a < d; ++a) pred += res.weights[size_t(c * de + a)] * z.at(i, a);
            double e = target.at(i, c) - pred;
            resid[size_t(c)] = e;
            sse[size_t(c)] += e * e;
            double dy = target.at(i, c) - mean_y[size_t(c)];
            sst[size_t(c)] += dy * dy;
        }
        for (int64_t a = 0; a < k; ++a)
            for (int64_t b = 0; b < k; ++b) res.residual_cov[size_t(a * k + b)] += resid[size_t(a)] * resid[size_t(b)] / double(n_test);
    }
    double sse_total = 0.0, sst_total = 0.0;
    for (int64_t c = 0; c < k; ++c) {
        res.r2_per_dim.push_back(sst[size_t(c)] > 0 ? 1.0 - sse[size_t(c)] / sst[size_t(c)] : 0.0);
        sse_total += sse[size_t(c)];
        sst_total += sst[size_t(c)];
    }
    res.r2_overall = sst_total > 0 ? 1.0 - sse_total / sst_total : 0.0;
    return res;
}

double grad_cosine(std::span<const double> g1, std::span<const double> g2) {
    if (g1.size() != g2.size()) fail(ErrorKind::ShapeMismatch, "grad_cosine: length mismatch");
    double dot = 0.0, n1 = 0.0, n2 = 0.0;
    for (size_t i = 0; i < g1.size(); ++i) {
        dot += g1[i] * g2[i];
        n1 += g1[i] * g1[i];
        n2 += g2[i] * g2[i];
    }
    n1 = std::sqrt(n1);
    n2 = std::sqrt(n2);
    if (n1 < 1e-12 || n2 < 1e-12) return 0.0;
    return dot / (n1 * n2);
}

std::vector<double> eigenspectrum(const Tensor& z) {
    if (z.rank() != 2 || z.dim(0) <= 2) fail(ErrorKind::DegenerateBatch, "eigenspectrum: need N > 2");
    NoGradGuard off;
    int64_t n = z.dim(0), d = z.dim(1);
    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) mean[size_t(j)] += z.at(i, j) / double(n);
    std::vector<double> cov(static_cast<size_t>(d * d), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t a = 0; a < d; ++a)
            for (int64_t b = 0; b < d; ++b)
                cov[size_t(a * d + b)] += (z.at(i, a) - mean[size_t(a)]) * (z.at(i, b) - mean[size_t(b)]) / double(n - 1);
    auto eig = linalg::jacobi_eigenvalues(cov.data(), d);
    std::reverse(eig.begin(), eig.end());
    for (auto& e : eig) e = std::max(0.0, e);
    return eig;
}

JacobianRankResult jacobian_rank(const Mlp& encoder, const Tensor& x_batch, double tol) {
    int64_t n = x_batch.dim(0), d_in = x_batch.dim(1);
    int64_t d_out = encoder.out_dim();
    JacobianRankResult out;
    out.per_sample.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        std::vector<double> row(static_cast<size_t>(d_in));
        for (int64_t c = 0; c < d_in; ++c) row[size_t(c)] = x_batch.at(i, c);
        Tensor x = Tensor::param(row, {1, d_in});
        std::vector<double> jac(static_cast<size_t>(d_out * d_in));
        for (int64_t k = 0; k < d_out; ++k) {
            x.zero_grad();
            Tensor y = encoder.forward(x);
            std::vector<double> pick(static_cast<size_t>(d_out), 0.0);
            pick[size_t(k)] = 1.0;
            backward(sum(mul(y, Tensor::from_data(pick, {1, d_out}))));
            auto g = x.grad();
            for (int64_t c = 0; c < d_in; ++c) jac[size_t(k * d_in + c)] = g.empty() ? 0.0 : g[size_t(c)];
        }
        auto sv = linalg::singular_values(jac.data(), d_out, d_in);
        int rank = 0;
        for (double s : sv)
            if (s > tol * sv.front()) ++rank;
        if (sv.front() <= 0.0) rank = 0;
        out.per_sample.push_back(rank);
    }
    double acc = 0.0;
    for (int r : out.per_sample) acc += r;
    out.mean_rank = acc / double(n);
    return out;
}

double source_recovery_score(const Tensor& s_hat, const Tensor& s_true) {
    if (s_hat.shape() != s_true.shape()) fail(ErrorKind::ShapeMismatch, "source_recovery_score: shape mismatch");
    NoGradGuard off;
    int64_t n = s_hat.dim(0), d = s_hat.dim(1);
    if (d > 20) fail(ErrorKind::OutOfRange, "source_recovery_score: exact assignment limited to d <= 20");

    // |corr| matrix
    auto column_stats = [&](const Tensor& t, int64_t j, double& mean, double& sd) {
        mean = 0.0;
        for (int64_t i = 0; i < n; ++i) mean += t.at(i, j) / double(n);
        double acc = 0.0;
        for (int64_t i = 0; i < n; ++i) acc += (t.at(i, j) - mean) * (t.at(i, j) - mean);
        sd = std::sqrt(acc);
    };
    std::vector<double> corr(static_cast<size_t>(d * d), 0.0);
    for (int64_t a = 0; a < d; ++a) {
        double ma, sa;
        column_stats(s_true, a, ma, sa);
        for (int64_t b = 0; b < d; ++b) {
            double mb, sb;
            column_stats(s_hat, b, mb, sb);
            double dot = 0.0;
            for (int64_t i = 0; i < n; ++i) dot += (s_true.at(i, a) - ma) * (s_hat.at(i, b) - mb);
            corr[size_t(a * d + b)] = (sa > 1e-12 && sb > 1e-12) ? std::fabs(dot / (sa * sb)) : 0.0;
        }
    }

    // exact assignment by DP over subsets of assigned estimated sources
    size_t full = size_t(1) << d;
    std::vector<double> dp(full, -1.0);
    dp[0] = 0.0;
    for (size_t mask = 0; mask < full; ++mask) {
        if (dp[mask] < 0) continue;
        int64_t row = int64_t(__builtin_popcountll(mask));
        if (row == d) continue;
        for (int64_t b = 0; b < d; ++b) {
            if (mask & (size_t(1) << b)) continue;
            size_t next = mask | (size_t(1) << b);
            double cand = dp[mask] + corr[size_t(row * d + b)];
            if (cand > dp[next]) dp[next] = cand;
        }
    }
    return dp[full - 1] / double(d);
}

}  // namespace ldm
