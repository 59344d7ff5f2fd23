#include "ldm/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ldm/common.hpp"
#include "ldm/linalg.hpp"

namespace ldm {

namespace {

constexpr double kDedupTol = 1e-12;

double pnorm_dist(const double* a, const double* b, int64_t d, double p) {
    if (p == 2.0) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            double t = a[j] - b[j];
            s += t * t;
        }
        return std::sqrt(s);
    }
    double s = 0.0;
    for (int64_t j = 0; j < d; ++j) s += std::pow(std::fabs(a[j] - b[j]), p);
    return std::pow(s, 1.0 / p);
}

struct Neighbor {
    double dist;
    int64_t idx;
};

// Exact k-th nearest neighbor per sample. Uniform-grid search for d <= 3
// (ring expansion with an L-inf lower bound), brute force otherwise.
std::vector<Neighbor> kth_neighbors(const double* z, int64_t n, int64_t d, int64_t k, double p) {
    std::vector<Neighbor> out(static_cast<size_t>(n));

    auto brute_for = [&](int64_t i, const std::vector<int64_t>& candidates, std::vector<Neighbor>& heap) {
        // keep the k smallest in a simple insertion buffer (k is small)
        for (int64_t j : candidates) {
            if (j == i) continue;
            double dist = pnorm_dist(z + i * d, z + j * d, d, p);
            if (int64_t(heap.size()) < k) {
                heap.push_back({dist, j});
                std::push_heap(heap.begin(), heap.end(), [](auto& a, auto& b) { return a.dist < b.dist; });
            } else if (dist < heap.front().dist) {
                std::pop_heap(heap.begin(), heap.end(), [](auto& a, auto& b) { return a.dist < b.dist; });
                heap.back() = {dist, j};
                std::push_heap(heap.begin(), heap.end(), [](auto& a, auto& b) { return a.dist < b.dist; });
            }
        }
    };

    if (d > 3 || n < 256) {
        std::vector<int64_t> all(static_cast<size_t>(n));
        std::iota(all.begin(), all.end(), 0);
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) {
            std::vector<Neighbor> heap;
            heap.reserve(size_t(k + 1));
            brute_for(i, all, heap);
            out[size_t(i)] = heap.front();
        }
        return out;
    }

    // grid covering the bounding box, ~4 points per cell
    std::vector<double> lo(size_t(d), 1e300), hi(size_t(d), -1e300);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) {
            lo[size_t(j)] = std::min(lo[size_t(j)], z[i * d + j]);
            hi[size_t(j)] = std::max(hi[size_t(j)], z[i * d + j]);
        }
    int64_t side = std::max<int64_t>(1, int64_t(std::floor(std::pow(double(n) / 4.0, 1.0 / double(d)))));
    std::vector<double> cell(static_cast<size_t>(d));
    for (int64_t j = 0; j < d; ++j) {
        double span = hi[size_t(j)] - lo[size_t(j)];
        cell[size_t(j)] = span > 0 ? span / double(side) : 1.0;
    }
    auto cell_of = [&](int64_t i, int64_t axis) {
        int64_t c = int64_t((z[i * d + axis] - lo[size_t(axis)]) / cell[size_t(axis)]);
        return std::clamp<int64_t>(c, 0, side - 1);
    };
    int64_t ncells = 1;
    for (int64_t j = 0; j < d; ++j) ncells *= side;
    auto flat_cell = [&](const std::vector<int64_t>& c) {
        int64_t f = 0;
        for (int64_t j = 0; j < d; ++j) f = f * side + c[size_t(j)];
        return f;
    };
    std::vector<std::vector<int64_t>> buckets(static_cast<size_t>(ncells));
    for (int64_t i = 0; i < n; ++i) {
        std::vector<int64_t> c(static_cast<size_t>(d));
        for (int64_t j = 0; j < d; ++j) c[size_t(j)] = cell_of(i, j);
        buckets[size_t(flat_cell(c))].push_back(i);
    }
    double min_cell = *std::min_element(cell.begin(), cell.end());

#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        std::vector<int64_t> home(static_cast<size_t>(d));
        for (int64_t j = 0; j < d; ++j) home[size_t(j)] = cell_of(i, j);
        std::vector<Neighbor> heap;
        heap.reserve(size_t(k + 1));
        for (int64_t ring = 0; ring < side; ++ring) {
            // cells at L-inf ring distance `ring` from the home cell
            std::vector<int64_t> cands;
            std::vector<int64_t> c(static_cast<size_t>(d));
            std::function<void(int64_t, bool)> walk = [&](int64_t axis, bool on_shell) {
                if (axis == d) {
                    if (on_shell || ring == 0) {
                        int64_t f = flat_cell(c);
                        const auto& b = buckets[size_t(f)];
                        cands.insert(cands.end(), b.begin(), b.end());
                    }
                    return;
                }
                for (int64_t off = -ring; off <= ring; ++off) {
                    int64_t cc = home[size_t(axis)] + off;
                    if (cc < 0 || cc >= side) continue;
                    c[size_t(axis)] = cc;
                    walk(axis + 1, on_shell || std::llabs(off) == ring);
                }
            };
            walk(0, false);
            brute_for(i, cands, heap);
            // points beyond this ring are at least (ring)*min_cell away in L-inf,
            // which lower-bounds every p-norm
            if (int64_t(heap.size()) == k && heap.front().dist <= double(ring) * min_cell) break;
        }
        if (int64_t(heap.size()) < k) {
            // sparse corner case: fall back to scanning everything
            std::vector<int64_t> all(static_cast<size_t>(n));
            std::iota(all.begin(), all.end(), 0);
            heap.clear();
            brute_for(i, all, heap);
        }
        out[size_t(i)] = heap.front();
    }
    return out;
}

Tensor covariance(const Tensor& z) {
    int64_t n = z.dim(0);
    Tensor centered = sub(z, colwise_mean(z));
    return mul_scalar(matmul(transpose(centered), centered), 1.0 / double(n - 1));
}

}  // namespace

void EntropyEstimator::validate() const {
    switch (kind) {
        case Kind::Kde:
            if (bandwidth <= 0.0) fail(ErrorKind::OutOfRange, "estimator: bandwidth must be > 0");
            break;
        case Kind::Knn:
            if (k < 1) fail(ErrorKind::OutOfRange, "estimator: k must be >= 1");
            if (p_norm < 1.0) fail(ErrorKind::OutOfRange, "estimator: p_norm must be >= 1");
            if (discard_top_frac < 0.0 || discard_top_frac >= 0.5)
                fail(ErrorKind::OutOfRange, "estimator: discard_top_frac must lie in [0, 0.5)");
            break;
        case Kind::LogDet:
        case Kind::StopGradPlugin: break;
    }
}

Tensor entropy_kde(const Tensor& z, double h, KdeKernel kernel) {
    if (z.rank() != 2) fail(ErrorKind::ShapeMismatch, "entropy_kde: need [N,d]");
    int64_t n = z.dim(0);
    if (n < 2) fail(ErrorKind::DegenerateBatch, "entropy_kde: need at least 2 samples");
    if (h <= 0.0) fail(ErrorKind::OutOfRange, "entropy_kde: bandwidth must be > 0");

    Tensor logits;
    if (kernel == KdeKernel::Gaussian) {
        logits = mul_scalar(pairwise_sqdist(z), -1.0 / (2.0 * h * h));
    } else {
        Tensor gram = matmul(z, transpose(z));
        for (int64_t i = 0; i < n; ++i)
            if (std::fabs(std::sqrt(gram.at(i, i)) - 1.0) > 1e-6)
                fail(ErrorKind::NotNormalized, "entropy_kde: vmf kernel needs unit rows");
        logits = mul_scalar(gram, 1.0 / h);
    }
    logits = set_diag(logits, -1e30);  // exclude self-comparisons
    return mul_scalar(sum(logsumexp_rows(logits)), -1.0 / double(n));
}

Tensor entropy_knn(const Tensor& z, int64_t k, double p_norm, double discard_top_frac, KnnStats* stats) {
    if (z.rank() != 2) fail(ErrorKind::ShapeMismatch, "entropy_knn: need [N,d]");
    int64_t n = z.dim(0), d = z.dim(1);
    if (n <= k + 1) fail(ErrorKind::DegenerateBatch, "entropy_knn: need N > k + 1");
    if (k < 1 || p_norm < 1.0 || discard_top_frac < 0.0 || discard_top_frac >= 0.5)
        fail(ErrorKind::OutOfRange, "entropy_knn: bad hyperparameters");

    std::vector<Neighbor> kth;
    {
        NoGradGuard off;
        kth = kth_neighbors(z.data().data(), n, d, k, p_norm);
    }
    struct Entry {
        double eps;
        int64_t i;
    };
    std::vector<Entry> valid;
    int64_t duplicates = 0;
    for (int64_t i = 0; i < n; ++i) {
        if (kth[size_t(i)].dist <= kDedupTol) {
            ++duplicates;
            continue;
        }
        valid.push_back({kth[size_t(i)].dist, i});
    }
    if (valid.empty()) fail(ErrorKind::DegenerateBatch, "entropy_knn: all neighbor distances degenerate");
    std::sort(valid.begin(), valid.end(), [](const Entry& a, const Entry& b) {
        return a.eps != b.eps ? a.eps < b.eps : a.i < b.i;
    });
    int64_t n_drop = int64_t(std::floor(discard_top_frac * double(valid.size())));
    int64_t kept = int64_t(valid.size()) - n_drop;
    if (stats) {
        stats->duplicates_excluded = duplicates;
        stats->discarded_top = n_drop;
        stats->kept = kept;
    }

    std::vector<int64_t> idx_i, idx_j;
    idx_i.reserve(static_cast<size_t>(kept));
    idx_j.reserve(static_cast<size_t>(kept));
    for (int64_t r = 0; r < kept; ++r) {
        idx_i.push_back(valid[size_t(r)].i);
        idx_j.push_back(kth[size_t(valid[size_t(r)].i)].idx);
    }
    // differentiable distance through the frozen neighbor pairs
    Tensor diff = abs(sub(gather_rows(z, idx_i), gather_rows(z, idx_j)));
    Tensor dist_pow = rowwise_sum(pow_scalar(diff, p_norm));  // ||.||_p^p per kept pair
    Tensor log_eps = mul_scalar(log(dist_pow), 1.0 / p_norm);
    return mul_scalar(sum(log_eps), double(d) / double(kept));
}

Tensor entropy_logdet(const Tensor& z, LogDetMode mode) {
    if (z.rank() != 2) fail(ErrorKind::ShapeMismatch, "entropy_logdet: need [N,d]");
    int64_t n = z.dim(0), d = z.dim(1);
    if (n < 2) fail(ErrorKind::DegenerateBatch, "entropy_logdet: need at least 2 samples");

    if (mode == LogDetMode::Exact) {
        if (n <= d) fail(ErrorKind::DegenerateBatch, "entropy_logdet: exact mode needs N > d");
        Tensor cov = covariance(z);
        {
            NoGradGuard off;
            auto eig = linalg::jacobi_eigenvalues(cov.data().data(), d);
            if (eig.front() < 1e-10)
                fail(ErrorKind::RankDeficient, "entropy_logdet: covariance eigenvalue below 1e-10");
        }
        auto [sign, lad] = slogdet(cov);
        return mul_scalar(lad, 0.5);
    }
    if (mode == LogDetMode::Taylor) {
        Tensor cov = covariance(z);
        Tensor diag = take_diag(cov);
        Tensor t1 = sum(log(diag));
        Tensor outer = matmul(reshape(diag, {d, 1}), reshape(diag, {1, d}));
        Tensor ratio = div(square(cov), outer);
        // sum_{i != j} cov_ij^2/(cov_ii cov_jj); diagonal of ratio is exactly 1
        Tensor t2 = add_scalar(sum(ratio), -double(d));
        return sub(t1, mul_scalar(t2, 0.5));
    }
    // VarianceCovariance: hinge-variance + squared off-diagonal covariance,
    // negated so that "more entropy" is numerically larger.
    Tensor cov = covariance(z);
    Tensor diag = take_diag(cov);
    Tensor std_dev = sqrt(add_scalar(diag, 1e-4));
    Tensor hinge = mean(relu(sub(Tensor::full({d}, 1.0), std_dev)));
    Tensor off = mul_scalar(sub(sum(square(cov)), sum(square(diag))), 1.0 / double(d));
    return neg(add(hinge, off));
}

Tensor entropy_conditional_plugin(const std::function<Tensor()>& mean_logp_sg) { return neg(mean_logp_sg()); }

Tensor gaussian_plugin_entropy(const Tensor& z, const Tensor& mean, const Tensor& log_sigma2) {
    if (z.shape() != mean.shape()) fail(ErrorKind::ShapeMismatch, "gaussian_plugin_entropy: shape mismatch");
    int64_t n = z.dim(0), d = z.dim(1);
    Tensor m_sg = stopgrad(mean);
    Tensor ls_sg = stopgrad(log_sigma2);
    double sigma2 = std::exp(ls_sg.item());
    Tensor quad = mul_scalar(sum(square(sub(z, m_sg))), 1.0 / (2.0 * sigma2 * double(n)));
    double const_term = 0.5 * double(d) * (std::log(2.0 * M_PI) + ls_sg.item());
    return add_scalar(quad, const_term);
}

Tensor marginal_entropy(const EntropyEstimator& est, const Tensor& z) {
    est.validate();
    switch (est.kind) {
        case EntropyEstimator::Kind::Kde: return entropy_kde(z, est.bandwidth, est.kernel);
        case EntropyEstimator::Kind::Knn: return entropy_knn(z, est.k, est.p_norm, est.discard_top_frac);
        case EntropyEstimator::Kind::LogDet: return entropy_logdet(z, est.mode);
        case EntropyEstimator::Kind::StopGradPlugin:
            fail(ErrorKind::ConfigInvalid, "stop-gradient plug-in needs a predictor; assembled by objectives");
    }
    fail(ErrorKind::ConfigInvalid, "unknown estimator kind");
}

double entropy_kde_corrected(const Tensor& z, double h) {
    NoGradGuard off;
    int64_t n = z.dim(0), d = z.dim(1);
    double prop = entropy_kde(z, h, KdeKernel::Gaussian).item();
    return prop + std::log(double(n - 1)) + 0.5 * double(d) * std::log(2.0 * M_PI * h * h);
}

double entropy_knn_corrected(const Tensor& z, int64_t k, double p_norm) {
    NoGradGuard off;
    int64_t n = z.dim(0), d = z.dim(1);
    double prop = entropy_knn(z, k, p_norm, 0.0).item();
    double log_ball = double(d) * std::log(2.0 * std::exp(linalg::lanczos_lgamma(1.0 / p_norm + 1.0))) -
                      linalg::lanczos_lgamma(double(d) / p_norm + 1.0);
    return prop + linalg::digamma(double(n)) - linalg::digamma(double(k)) + log_ball;
}

double entropy_logdet_corrected(const Tensor& z) {
    NoGradGuard off;
    int64_t d = z.dim(1);
    return entropy_logdet(z, LogDetMode::Exact).item() + 0.5 * double(d) * (1.0 + std::log(2.0 * M_PI));
}

double corrected_entropy(const EntropyEstimator& est, const Tensor& z) {
    est.validate();
    switch (est.kind) {
        case EntropyEstimator::Kind::Kde: return entropy_kde_corrected(z, est.bandwidth);
        case EntropyEstimator::Kind::Knn: return entropy_knn_corrected(z, est.k, est.p_norm);
        case EntropyEstimator::Kind::LogDet: return entropy_logdet_corrected(z);
        case EntropyEstimator::Kind::StopGradPlugin:
            fail(ErrorKind::ConfigInvalid, "stop-gradient plug-in has no corrected marginal form");
    }
    fail(ErrorKind::ConfigInvalid, "unknown estimator kind");
}

}  // namespace ldm
