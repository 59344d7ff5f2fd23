#pragma once

#include <cstdint>
#include <vector>

#include "ldm/tensor.hpp"

namespace ldm {

enum class IcaSourceFamily { Laplace, Uniform, OuProcess };

struct IcaTask {
    int64_t n_sources = 2;
    IcaSourceFamily source_family = IcaSourceFamily::Laplace;
    std::vector<double> ou_thetas;  // per-source rates (OuProcess)
    double ou_dt = 1.0;
    int64_t n_samples = 10000;
    double max_condition = 100.0;
    uint64_t seed = 0;
};

struct IcaData {
    Tensor x;       // [N,d] mixtures
    Tensor s_true;  // [N,d] unit-variance sources (temporally ordered for OU)
    Tensor mixing;  // [d,d]
};

/// x = s_true * mixing^T with a condition-bounded random mixing matrix.
IcaData gen_ica(const IcaTask& task);

/// One Euler step of the flower-drift system with optional Gaussian noise.
/// r and theta are taken from the current point; theta0 fixes the petal phase.
std::vector<double> swirl_step(const std::vector<double>& xy, double theta0, double a, double noise_scale,
                               double dt, Rng& rng, int64_t k = 4);

/// Gaussian dot on a res x res frame. The point is first pushed through the
/// plane swirl deformation (angle grows as strength * exp(-r/radius)), then
/// mapped into pixel coordinates by the world box [-world_half, world_half]^2.
std::vector<double> render_frame(const std::vector<double>& xy, int64_t res, double blob_sigma,
                                 double pixel_noise, double warp_strength, double world_half, Rng& rng);

enum class TrajectoryNoise { Gaussian, GeneralizedGaussian };

struct VideoTask {
    int64_t latent_dim = 2;
    double rot_angle = 0.25;
    double damping = 0.99;
    double process_noise = 0.0;   // the base task uses noiseless latent dynamics
    double init_radius = 0.9;     // initial conditions drawn from this disk
    int64_t res = 10;
    double blob_sigma = 1.0;
    double pixel_noise = 0.05;
    bool variable_pixel_noise = false;  // per-step level drawn from noise_levels
    std::vector<double> noise_levels = {0.02, 0.4};
    double warp_strength = 0.0;
    bool square_trajectory = false;
    double square_speed = 0.08;  // perimeter fraction per step
    int64_t T = 20;
    int64_t n_sequences = 800;
    uint64_t seed = 0;
};

struct SequenceDataset {
    int64_t n_seq = 0, T = 0, obs_dim = 0;
    std::vector<double> frames;        // [n_seq * T * obs_dim]
    std::vector<double> positions;     // [n_seq * T * 2] ground-truth world coordinates
    std::vector<double> extras;        // per-step scalar (pixel-noise level or square phase); may be empty
    double world_half = 1.0;

    const double* frame(int64_t s, int64_t t) const { return frames.data() + (s * T + t) * obs_dim; }
    const double* pos(int64_t s, int64_t t) const { return positions.data() + (s * T + t) * 2; }
};

/// Dot videos driven by a stable linear latent system (or the square path).
SequenceDataset gen_video(const VideoTask& task);

struct SwirlTask {
    int64_t k = 4;
    double a = 0.15;
    double radius_lo = 0.6, radius_hi = 1.1;
    double dt = 0.15;
    double noise_scale = 0.05;
    TrajectoryNoise noise_family = TrajectoryNoise::Gaussian;
    double gg_shape = 2.0;        // generalized-gaussian shape
    double gg_anisotropy = 2.0;   // y-noise scale multiplier (non-isotropic variant)
    int64_t res = 10;
    double blob_sigma = 1.0;
    double pixel_noise = 0.02;
    double warp_strength = 1.5;
    int64_t T = 16;
    int64_t n_sequences = 10000;
    uint64_t seed = 0;
};

SequenceDataset gen_swirl(const SwirlTask& task);

struct BlobTask {
    int64_t n_classes = 4;
    double separation = 6.0;
    double noise = 0.7;
    int64_t n_pairs = 2000;
    uint64_t seed = 0;
};

struct PairDataset {
    Tensor x1, x2;                // [N,2] noisy views of the same blob center
    std::vector<int64_t> labels;  // blob index per pair
};

/// Class centers on a circle; each pair is two independent noisy draws.
PairDataset gen_blobs(const BlobTask& task);

}  // namespace ldm
