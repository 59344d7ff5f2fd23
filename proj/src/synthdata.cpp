#include "ldm/synthdata.hpp"

#include <algorithm>
#include <cmath>

#include "ldm/common.hpp"
#include "ldm/linalg.hpp"

namespace ldm {

namespace {

std::vector<double> random_conditioned_matrix(int64_t d, double max_condition, Rng& rng) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<double> m(static_cast<size_t>(d * d));
        for (auto& x : m) x = rng.normal();
        auto sv = linalg::singular_values(m.data(), d, d);
        if (sv.back() > 1e-12 && sv.front() / sv.back() < max_condition) return m;
    }
    fail(ErrorKind::NumericalBlowup, "gen_ica: could not sample a well-conditioned mixing matrix");
}

}  // namespace

IcaData gen_ica(const IcaTask& task) {
    int64_t n = task.n_samples, d = task.n_sources;
    Rng root(task.seed);
    Rng mix_rng = root.fork("mixing");
    Rng src_rng = root.fork("sources");

    std::vector<double> s(static_cast<size_t>(n * d));
    switch (task.source_family) {
        case IcaSourceFamily::Laplace: {
            // unit variance: laplace(b) has variance 2 b^2
            double scale = 1.0 / std::sqrt(2.0);
            for (auto& x : s) x = scale * src_rng.laplace();
            break;
        }
        case IcaSourceFamily::Uniform: {
            double half = std::sqrt(3.0);
            for (auto& x : s) x = src_rng.uniform(-half, half);
            break;
        }
        case IcaSourceFamily::OuProcess: {
            if (int64_t(task.ou_thetas.size()) != d)
                fail(ErrorKind::ConfigInvalid, "gen_ica: ou_thetas must list one rate per source");
            // exact AR(1) discretization with unit stationary variance
            std::vector<double> state(static_cast<size_t>(d));
            for (auto& x : state) x = src_rng.normal();
            for (int64_t i = 0; i < n; ++i) {
                for (int64_t j = 0; j < d; ++j) {
                    s[size_t(i * d + j)] = state[size_t(j)];
                    double a = std::exp(-task.ou_thetas[size_t(j)] * task.ou_dt);
                    state[size_t(j)] = a * state[size_t(j)] + std::sqrt(1.0 - a * a) * src_rng.normal();
                }
            }
            break;
        }
    }

    std::vector<double> mix = random_conditioned_matrix(d, task.max_condition, mix_rng);
    std::vector<double> x(static_cast<size_t>(n * d), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t r = 0; r < d; ++r) {
            double acc = 0.0;
            for (int64_t c = 0; c < d; ++c) acc += mix[size_t(r * d + c)] * s[size_t(i * d + c)];
            x[size_t(i * d + r)] = acc;
        }
    return {Tensor::from_data(std::move(x), {n, d}), Tensor::from_data(std::move(s), {n, d}),
            Tensor::from_data(std::move(mix), {d, d})};
}

std::vector<double> swirl_step(const std::vector<double>& xy, double theta0, double a, double noise_scale,
                               double dt, Rng& rng, int64_t k) {
    double x = xy[0], y = xy[1];
    double r = std::sqrt(x * x + y * y);
    if (r < 1e-9) fail(ErrorKind::OriginSingularity, "swirl_step: state at the origin");
    double theta = std::atan2(y, x);
    double petal = std::cos(double(k) * (theta - theta0));
    double dx = a * double(k) * std::cos(theta) * petal - r * std::sin(theta);
    double dy = a * double(k) * std::sin(theta) * petal + r * std::cos(theta);
    double sn = noise_scale * std::sqrt(dt);
    double nx = noise_scale > 0.0 ? sn * rng.normal() : 0.0;
    double ny = noise_scale > 0.0 ? sn * rng.normal() : 0.0;
    return {x + dt * dx + nx, y + dt * dy + ny};
}

std::vector<double> render_frame(const std::vector<double>& xy, int64_t res, double blob_sigma,
                                 double pixel_noise, double warp_strength, double world_half, Rng& rng) {
    double x = xy[0], y = xy[1];
    if (warp_strength != 0.0) {
        double r = std::sqrt(x * x + y * y);
        if (r > 1e-12) {
            double phi = std::atan2(y, x) + warp_strength * std::exp(-r / world_half);
            x = r * std::cos(phi);
            y = r * std::sin(phi);
        }
    }
    // world [-world_half, world_half] -> pixel [0, res-1]
    double px = (x + world_half) / (2.0 * world_half) * double(res - 1);
    double py = (y + world_half) / (2.0 * world_half) * double(res - 1);
    std::vector<double> frame(static_cast<size_t>(res * res));
    double inv2s2 = 1.0 / (2.0 * blob_sigma * blob_sigma);
    for (int64_t i = 0; i < res; ++i)
        for (int64_t j = 0; j < res; ++j) {
            double dy2 = (double(i) - py) * (double(i) - py);
            double dx2 = (double(j) - px) * (double(j) - px);
            frame[size_t(i * res + j)] = std::exp(-(dx2 + dy2) * inv2s2);
        }
    if (pixel_noise > 0.0)
        for (auto& v : frame) v += pixel_noise * rng.normal();
    return frame;
}

SequenceDataset gen_video(const VideoTask& task) {
    if (task.latent_dim != 2) fail(ErrorKind::ConfigInvalid, "gen_video: latent_dim must be 2");
    Rng root(task.seed);
    SequenceDataset out;
    out.n_seq = task.n_sequences;
    out.T = task.T;
    out.obs_dim = task.res * task.res;
    out.frames.resize(static_cast<size_t>(out.n_seq * out.T * out.obs_dim));
    out.positions.resize(static_cast<size_t>(out.n_seq * out.T * 2));
    if (task.variable_pixel_noise || task.square_trajectory)
        out.extras.resize(static_cast<size_t>(out.n_seq * out.T));

    double c = std::cos(task.rot_angle), s = std::sin(task.rot_angle);
    double f00 = task.damping * c, f01 = -task.damping * s;
    double f10 = task.damping * s, f11 = task.damping * c;
    // frame sized by the initial-condition disk plus the noise-driven spread
    double stat_std = task.process_noise / std::sqrt(std::max(1e-12, 1.0 - task.damping * task.damping));
    out.world_half = task.square_trajectory ? 1.3 : 1.25 * task.init_radius + 3.0 * stat_std;

    for (int64_t q = 0; q < task.n_sequences; ++q) {
        Rng rng = root.fork("seq" + std::to_string(q));
        double x = 0.0, y = 0.0, phase = 0.0;
        if (task.square_trajectory) {
            phase = rng.uniform(0.0, 4.0);
        } else {
            double r = task.init_radius * std::sqrt(rng.uniform());
            double ang = rng.uniform(0.0, 2.0 * M_PI);
            x = r * std::cos(ang);
            y = r * std::sin(ang);
        }
        for (int64_t t = 0; t < task.T; ++t) {
            if (task.square_trajectory) {
                // perimeter position -> corner-to-corner walk on the unit square
                double u = phase - std::floor(phase / 4.0) * 4.0;
                int side = int(u);
                double frac = u - side;
                switch (side) {
                    case 0: x = -1.0 + 2.0 * frac; y = -1.0; break;
                    case 1: x = 1.0; y = -1.0 + 2.0 * frac; break;
                    case 2: x = 1.0 - 2.0 * frac; y = 1.0; break;
                    default: x = -1.0; y = 1.0 - 2.0 * frac; break;
                }
                out.extras[size_t(q * task.T + t)] = u;
                phase += task.square_speed * 4.0;
            }
            out.positions[size_t((q * task.T + t) * 2)] = x;
            out.positions[size_t((q * task.T + t) * 2 + 1)] = y;
            double level = task.pixel_noise;
            if (task.variable_pixel_noise) {
                size_t pick = size_t(rng.next_u64() % task.noise_levels.size());
                level = task.noise_levels[pick];
                out.extras[size_t(q * task.T + t)] = level;
            }
            auto frame = render_frame({x, y}, task.res, task.blob_sigma, level, task.warp_strength,
                                      out.world_half, rng);
            std::copy(frame.begin(), frame.end(), out.frames.begin() + (q * task.T + t) * out.obs_dim);
            if (!task.square_trajectory) {
                double nx = f00 * x + f01 * y;
                double ny = f10 * x + f11 * y;
                if (task.process_noise > 0.0) {
                    nx += task.process_noise * rng.normal();
                    ny += task.process_noise * rng.normal();
                }
                x = nx;
                y = ny;
            }
        }
    }
    return out;
}

SequenceDataset gen_swirl(const SwirlTask& task) {
    Rng root(task.seed);
    SequenceDataset out;
    out.n_seq = task.n_sequences;
    out.T = task.T;
    out.obs_dim = task.res * task.res;
    out.positions.resize(static_cast<size_t>(out.n_seq * out.T * 2));

    // pass 1: trajectories (also determines the world box)
    double max_abs = 1e-6;
    for (int64_t q = 0; q < task.n_sequences; ++q) {
        Rng rng = root.fork("traj" + std::to_string(q));
        double theta0 = rng.uniform(0.0, 2.0 * M_PI);
        double r0 = rng.uniform(task.radius_lo, task.radius_hi);
        double ang0 = rng.uniform(0.0, 2.0 * M_PI);
        std::vector<double> p = {r0 * std::cos(ang0), r0 * std::sin(ang0)};
        for (int64_t t = 0; t < task.T; ++t) {
            out.positions[size_t((q * task.T + t) * 2)] = p[0];
            out.positions[size_t((q * task.T + t) * 2 + 1)] = p[1];
            max_abs = std::max({max_abs, std::fabs(p[0]), std::fabs(p[1])});
            if (task.noise_family == TrajectoryNoise::Gaussian) {
                p = swirl_step(p, theta0, task.a, task.noise_scale, task.dt, rng, task.k);
            } else {
                p = swirl_step(p, theta0, task.a, 0.0, task.dt, rng, task.k);
                double sn = task.noise_scale * std::sqrt(task.dt);
                p[0] += sn * rng.generalized_gaussian(task.gg_shape);
                p[1] += sn * task.gg_anisotropy * rng.generalized_gaussian(task.gg_shape);
            }
        }
    }
    out.world_half = 1.05 * max_abs;

    // pass 2: rendering
    out.frames.resize(static_cast<size_t>(out.n_seq * out.T * out.obs_dim));
    for (int64_t q = 0; q < task.n_sequences; ++q) {
        Rng rng = root.fork("render" + std::to_string(q));
        for (int64_t t = 0; t < task.T; ++t) {
            auto frame = render_frame({out.pos(q, t)[0], out.pos(q, t)[1]}, task.res, task.blob_sigma,
                                      task.pixel_noise, task.warp_strength, out.world_half, rng);
            std::copy(frame.begin(), frame.end(), out.frames.begin() + (q * task.T + t) * out.obs_dim);
        }
    }
    return out;
}

PairDataset gen_blobs(const BlobTask& task) {
    Rng root(task.seed);
    Rng rng = root.fork("pairs");
    int64_t n = task.n_pairs;
    std::vector<double> x1(static_cast<size_t>(n * 2)), x2(static_cast<size_t>(n * 2));
    std::vector<int64_t> labels(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        int64_t cls = int64_t(rng.next_u64() % uint64_t(task.n_classes));
        labels[size_t(i)] = cls;
        double ang = 2.0 * M_PI * double(cls) / double(task.n_classes);
        double cx = task.separation * std::cos(ang), cy = task.separation * std::sin(ang);
        x1[size_t(2 * i)] = cx + task.noise * rng.normal();
        x1[size_t(2 * i + 1)] = cy + task.noise * rng.normal();
        x2[size_t(2 * i)] = cx + task.noise * rng.normal();
        x2[size_t(2 * i + 1)] = cy + task.noise * rng.normal();
    }
    return {Tensor::from_data(std::move(x1), {n, 2}), Tensor::from_data(std::move(x2), {n, 2}),
            std::move(labels)};
}

}  // namespace ldm
