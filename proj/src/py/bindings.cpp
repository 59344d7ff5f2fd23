#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ldm/config.hpp"
#include "ldm/entropy.hpp"
#include "ldm/experiments.hpp"
#include "ldm/kalman.hpp"
#include "ldm/latent_models.hpp"
#include "ldm/metrics.hpp"
#include "ldm/synthdata.hpp"
#include "ldm/tensor.hpp"

namespace py = pybind11;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

ldm::Tensor tensor_from_array(const DoubleArray& arr) {
    std::vector<int64_t> shape(static_cast<size_t>(arr.ndim()));
    for (ssize_t i = 0; i < arr.ndim(); ++i) shape[size_t(i)] = arr.shape(i);
    std::vector<double> data(arr.data(), arr.data() + arr.size());
    return ldm::Tensor::from_data(std::move(data), std::move(shape));
}

py::array_t<double> array_from(const std::vector<double>& data, const std::vector<ssize_t>& shape) {
    py::array_t<double> out(shape);
    std::copy(data.begin(), data.end(), out.mutable_data());
    return out;
}

ldm::KdeKernel kernel_from(const std::string& name) {
    return name == "vmf" ? ldm::KdeKernel::Vmf : ldm::KdeKernel::Gaussian;
}

}  // namespace

PYBIND11_MODULE(_ldm, m) {
    m.doc() = "latent distribution-matching core: entropy estimators, alignment terms, "
              "Kalman predictor, generators, and the experiment runner";

    // entropy estimators
    m.def(
        "entropy_kde",
        [](DoubleArray z, double bandwidth, const std::string& kernel) {
            ldm::NoGradGuard off;
            return ldm::entropy_kde(tensor_from_array(z), bandwidth, kernel_from(kernel)).item();
        },
        py::arg("z"), py::arg("bandwidth"), py::arg("kernel") = "gaussian",
        "Proportional KDE entropy (loss form, constants dropped)");
    m.def(
        "entropy_kde_corrected",
        [](DoubleArray z, double bandwidth) {
            return ldm::entropy_kde_corrected(tensor_from_array(z), bandwidth);
        },
        py::arg("z"), py::arg("bandwidth"));
    m.def(
        "entropy_knn",
        [](DoubleArray z, int64_t k, double p_norm, double discard_top_frac) {
            ldm::NoGradGuard off;
            return ldm::entropy_knn(tensor_from_array(z), k, p_norm, discard_top_frac).item();
        },
        py::arg("z"), py::arg("k") = 3, py::arg("p_norm") = 2.0, py::arg("discard_top_frac") = 0.0,
        "Proportional nearest-neighbor entropy (loss form)");
    m.def(
        "entropy_knn_corrected",
        [](DoubleArray z, int64_t k, double p_norm) {
            return ldm::entropy_knn_corrected(tensor_from_array(z), k, p_norm);
        },
        py::arg("z"), py::arg("k") = 3, py::arg("p_norm") = 2.0);
    m.def(
        "entropy_logdet",
        [](DoubleArray z, const std::string& mode) {
            ldm::NoGradGuard off;
            ldm::LogDetMode md = mode == "taylor" ? ldm::LogDetMode::Taylor
                                                  : (mode == "variance_covariance"
                                                         ? ldm::LogDetMode::VarianceCovariance
                                                         : ldm::LogDetMode::Exact);
            return ldm::entropy_logdet(tensor_from_array(z), md).item();
        },
        py::arg("z"), py::arg("mode") = "exact");
    m.def(
        "entropy_logdet_corrected",
        [](DoubleArray z) { return ldm::entropy_logdet_corrected(tensor_from_array(z)); }, py::arg("z"));

    // alignment terms
    m.def(
        "alignment_plane_gaussian",
        [](DoubleArray z, DoubleArray zp, double sigma2) {
            ldm::NoGradGuard off;
            return ldm::alignment_plane_gaussian(tensor_from_array(z), tensor_from_array(zp), sigma2).item();
        },
        py::arg("z"), py::arg("z_prime"), py::arg("sigma2") = 1.0);
    m.def(
        "alignment_sphere_vmf",
        [](DoubleArray z, DoubleArray zp, double beta) {
            ldm::NoGradGuard off;
            return ldm::alignment_sphere_vmf(tensor_from_array(z), tensor_from_array(zp), beta).item();
        },
        py::arg("z"), py::arg("z_prime"), py::arg("beta") = 1.0);
    m.def("matching_prob_to_beta", &ldm::matching_prob_to_beta, py::arg("p_theta"), py::arg("n"));

    // kalman filtering of one sequence with explicit model matrices
    m.def(
        "kalman_filter",
        [](DoubleArray transition, DoubleArray q_diag, DoubleArray obs_map, DoubleArray r_diag,
           DoubleArray z_seq) {
            ldm::NoGradGuard off;
            int64_t n = transition.shape(0), mdim = obs_map.shape(0);
            ldm::KalmanModel model(n, mdim, false, 0);
            auto raw_for = [](double v) {
                double t = v - 1e-6;
                return t > 30.0 ? t : std::log(std::expm1(std::max(t, 1e-12)));
            };
            auto ft = model.transition.data_mut();
            for (ssize_t i = 0; i < transition.size(); ++i) ft[size_t(i)] = transition.data()[i];
            auto at = model.obs_map.data_mut();
            for (ssize_t i = 0; i < obs_map.size(); ++i) at[size_t(i)] = obs_map.data()[i];
            for (int64_t i = 0; i < n; ++i) model.q_raw.data_mut()[size_t(i)] = raw_for(q_diag.data()[i]);
            for (int64_t i = 0; i < mdim; ++i) model.r_raw.data_mut()[size_t(i)] = raw_for(r_diag.data()[i]);
            auto res = ldm::kalman_sequence_loglik(model, tensor_from_array(z_seq));
            int64_t T = z_seq.shape(0);
            std::vector<double> h_flat, per_step;
            for (int64_t t = 0; t < T; ++t) {
                per_step.push_back(res.per_step[size_t(t)].item());
                for (int64_t c = 0; c < n; ++c) h_flat.push_back(res.h_filt[size_t(t)].at(c));
            }
            py::dict out;
            out["total_loglik"] = res.total.item();
            out["per_step"] = array_from(per_step, {ssize_t(T)});
            out["h_filtered"] = array_from(h_flat, {ssize_t(T), ssize_t(n)});
            return out;
        },
        py::arg("transition"), py::arg("q_diag"), py::arg("obs_map"), py::arg("r_diag"), py::arg("z_seq"),
        "Filter one sequence; returns the predictive log-density and filtered states");

    // metrics
    m.def(
        "affine_probe_r2",
        [](DoubleArray z, DoubleArray target, uint64_t seed) {
            auto res = ldm::affine_probe(tensor_from_array(z), tensor_from_array(target), seed);
            py::dict out;
            out["r2_overall"] = res.r2_overall;
            out["r2_per_dim"] = res.r2_per_dim;
            out["ridge_fallback"] = res.ridge_fallback;
            return out;
        },
        py::arg("z"), py::arg("target"), py::arg("seed") = 0);
    m.def(
        "source_recovery_score",
        [](DoubleArray s_hat, DoubleArray s_true) {
            return ldm::source_recovery_score(tensor_from_array(s_hat), tensor_from_array(s_true));
        },
        py::arg("s_hat"), py::arg("s_true"));
    m.def(
        "grad_cosine",
        [](const std::vector<double>& a, const std::vector<double>& b) { return ldm::grad_cosine(a, b); },
        py::arg("g1"), py::arg("g2"));

    // generators
    m.def(
        "gen_ica",
        [](int64_t n_sources, const std::string& family, int64_t n_samples, uint64_t seed,
           std::vector<double> ou_thetas) {
            ldm::IcaTask task;
            task.n_sources = n_sources;
            task.source_family = family == "uniform"
                                     ? ldm::IcaSourceFamily::Uniform
                                     : (family == "ou_process" ? ldm::IcaSourceFamily::OuProcess
                                                               : ldm::IcaSourceFamily::Laplace);
            task.ou_thetas = std::move(ou_thetas);
            task.n_samples = n_samples;
            task.seed = seed;
            auto data = ldm::gen_ica(task);
            py::dict out;
            out["x"] = array_from({data.x.data().begin(), data.x.data().end()},
                                  {ssize_t(n_samples), ssize_t(n_sources)});
            out["s_true"] = array_from({data.s_true.data().begin(), data.s_true.data().end()},
                                       {ssize_t(n_samples), ssize_t(n_sources)});
            out["mixing"] = array_from({data.mixing.data().begin(), data.mixing.data().end()},
                                       {ssize_t(n_sources), ssize_t(n_sources)});
            return out;
        },
        py::arg("n_sources") = 2, py::arg("family") = "laplace", py::arg("n_samples") = 10000,
        py::arg("seed") = 0, py::arg("ou_thetas") = std::vector<double>{});
    m.def(
        "gen_swirl_frames",
        [](int64_t n_sequences, int64_t T, uint64_t seed) {
            ldm::SwirlTask task;
            task.n_sequences = n_sequences;
            task.T = T;
            task.seed = seed;
            auto d = ldm::gen_swirl(task);
            py::dict out;
            out["frames"] = array_from(d.frames, {ssize_t(d.n_seq * d.T), ssize_t(d.obs_dim)});
            out["positions"] = array_from(d.positions, {ssize_t(d.n_seq * d.T), 2});
            out["world_half"] = d.world_half;
            return out;
        },
        py::arg("n_sequences") = 16, py::arg("T") = 16, py::arg("seed") = 0);

    // config + runner
    m.def(
        "validate_config",
        [](const std::string& config_json) {
            auto v = ldm::validate_config(nlohmann::json::parse(config_json));
            py::dict out;
            out["violations"] = v.violations;
            out["warnings"] = v.warnings;
            out["ok"] = v.ok();
            return out;
        },
        py::arg("config_json"));
    m.def(
        "run_experiment",
        [](const std::string& config_json) {
            auto report = ldm::run_experiment(nlohmann::json::parse(config_json));
            py::dict out;
            out["experiment"] = report.experiment;
            out["config_hash"] = report.config_hash;
            out["output_dir"] = report.output_dir;
            out["final_metrics"] = report.final_metrics.dump();
            out["status"] = report.status;
            out["wall_time_s"] = report.wall_time_s;
            return out;
        },
        py::arg("config_json"), "Run one experiment config (json text); returns the report");
}
