#include "ldm/latent_models.hpp"

#include <cmath>

#include "ldm/common.hpp"

namespace ldm {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape() != b.shape())
        fail(ErrorKind::ShapeMismatch, std::string(op) + ": paired batches must share shape [b,d]");
}

void check_unit_rows(const Tensor& z, const char* op) {
    int64_t n = z.dim(0), d = z.dim(1);
    for (int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) s += z.at(i, j) * z.at(i, j);
        if (std::fabs(std::sqrt(s) - 1.0) > 1e-6)
            fail(ErrorKind::NotNormalized, std::string(op) + ": row " + std::to_string(i) + " is not unit norm");
    }
}

void check_simplex_rows(const Tensor& z, const char* op) {
    int64_t n = z.dim(0), d = z.dim(1);
    for (int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            double v = z.at(i, j);
            if (v < -1e-9) fail(ErrorKind::NotOnSimplex, std::string(op) + ": negative coordinate");
            s += v;
        }
        if (std::fabs(s - 1.0) > 1e-6)
            fail(ErrorKind::NotOnSimplex, std::string(op) + ": row " + std::to_string(i) + " does not sum to 1");
    }
}

Tensor clamp_min(const Tensor& x, double lo) { return add_scalar(relu(add_scalar(x, -lo)), lo); }

}  // namespace

void LatentModel::validate() const {
    if (sigma2 <= 0.0) fail(ErrorKind::OutOfRange, "latent model: sigma2 must be > 0");
    if (beta <= 0.0) fail(ErrorKind::OutOfRange, "latent model: beta must be > 0");
    if (tau < 0.0) fail(ErrorKind::OutOfRange, "latent model: tau must be >= 0");
    if (family == LatentFamily::Categorical && n_categories < 2)
        fail(ErrorKind::OutOfRange, "latent model: n_categories must be >= 2");
}

Tensor alignment_plane_gaussian(const Tensor& z, const Tensor& zp, double sigma2) {
    check_same_shape(z, zp, "alignment_plane_gaussian");
    if (sigma2 <= 0.0) fail(ErrorKind::OutOfRange, "alignment_plane_gaussian: sigma2 must be > 0");
    double b = double(z.dim(0));
    return mul_scalar(sum(square(sub(z, zp))), -1.0 / (2.0 * sigma2 * b));
}

Tensor alignment_sphere_vmf(const Tensor& z, const Tensor& zp, double beta) {
    check_same_shape(z, zp, "alignment_sphere_vmf");
    check_unit_rows(z, "alignment_sphere_vmf");
    check_unit_rows(zp, "alignment_sphere_vmf");
    double b = double(z.dim(0));
    return mul_scalar(sum(mul(z, zp)), beta / b);
}

Tensor alignment_simplex_dirichlet(const Tensor& z, const Tensor& zp, double tau) {
    check_same_shape(z, zp, "alignment_simplex_dirichlet");
    check_simplex_rows(z, "alignment_simplex_dirichlet");
    check_simplex_rows(zp, "alignment_simplex_dirichlet");
    double b = double(z.dim(0));
    Tensor cross = sum(mul(z, log(clamp_min(zp, 1e-12))));
    Tensor lg = sum(lgamma(add_scalar(mul_scalar(z, tau), 1.0)));
    return mul_scalar(sub(mul_scalar(cross, tau), lg), 1.0 / b);
}

Tensor alignment_categorical(const Tensor& p, const Tensor& pp, double beta) {
    check_same_shape(p, pp, "alignment_categorical");
    check_simplex_rows(p, "alignment_categorical");
    check_simplex_rows(pp, "alignment_categorical");
    double b = double(p.dim(0));
    return mul_scalar(sum(mul(p, pp)), beta / b);
}

Tensor alignment(const LatentModel& model, const Tensor& z, const Tensor& zp) {
    switch (model.family) {
        case LatentFamily::PlaneGaussian: return alignment_plane_gaussian(z, zp, model.sigma2);
        case LatentFamily::SphereVmf: return alignment_sphere_vmf(z, zp, model.beta);
        case LatentFamily::SimplexDirichlet: return alignment_simplex_dirichlet(z, zp, model.tau);
        case LatentFamily::Categorical: return alignment_categorical(z, zp, model.beta);
        case LatentFamily::EmpiricalPriorVmf: return alignment_sphere_vmf(z, zp, model.tau);
    }
    fail(ErrorKind::ConfigInvalid, "unknown latent family");
}

double matching_prob_to_beta(double p_theta, int64_t n) {
    if (n < 2) fail(ErrorKind::OutOfRange, "matching_prob_to_beta: n must be >= 2");
    if (!(p_theta > 1.0 / double(n)) || !(p_theta < 1.0))
        fail(ErrorKind::OutOfRange, "matching_prob_to_beta: p must lie in (1/n, 1)");
    return std::log(p_theta * double(n - 1) / (1.0 - p_theta));
}

double beta_to_matching_prob(double beta, int64_t n) {
    double e = std::exp(beta);
    return e / (e + double(n - 1));
}

}  // namespace ldm
