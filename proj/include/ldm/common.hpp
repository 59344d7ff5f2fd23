#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ldm {

enum class ErrorKind {
    ShapeMismatch,
    DomainError,
    SingularMatrix,
    NotScalar,
    DisconnectedTape,
    NotNormalized,
    NotOnSimplex,
    OutOfRange,
    DegenerateBatch,
    RankDeficient,
    SingularInnovation,
    NumericalBlowup,
    OriginSingularity,
    ConfigInvalid,
};

/// All library errors carry a kind tag so callers can branch on failure class
/// (e.g. RankDeficient -> fall back to the Taylor estimator).
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Deterministic counter-free PRNG (splitmix64 core). Normal deviates via
/// Box-Muller so streams are bit-identical across platforms.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    /// Derive an independent substream, e.g. rng.fork("data") vs rng.fork("init").
    Rng fork(std::string_view tag) const {
        uint64_t mixed = state_ ^ (fnv1a64(tag) + 0x9e3779b97f4a7c15ull);
        return Rng(mixed * 0xbf58476d1ce4e5b9ull + 1);
    }

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    /// Zero-mean, unit-scale Laplace (variance 2).
    double laplace() {
        double u = uniform() - 0.5;
        return (u < 0 ? 1.0 : -1.0) * std::log(1.0 - 2.0 * std::fabs(u));
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang.
    double gamma(double shape) {
        if (shape < 1.0) {
            double u;
            do {
                u = uniform();
            } while (u <= 0.0);
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Generalized Gaussian with given shape parameter, unit variance.
    /// shape=2 is Gaussian, shape=1 is Laplace, large shape approaches uniform.
    double generalized_gaussian(double shape) {
        // |x| = alpha * G^(1/shape), G ~ Gamma(1/shape); alpha chosen for unit variance.
        double alpha = std::sqrt(std::exp(std::lgamma(1.0 / shape) - std::lgamma(3.0 / shape)));
        double g = gamma(1.0 / shape);
        double mag = alpha * std::pow(g, 1.0 / shape);
        return (next_u64() & 1) ? mag : -mag;
    }

private:
    uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace ldm
