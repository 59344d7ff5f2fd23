#include "ldm/config.hpp"

#include <fstream>
#include <set>

#include "ldm/common.hpp"
#include "ldm/io.hpp"

namespace ldm {

namespace {

const std::set<std::string> kExperiments = {"ica",   "kalman_video",  "kalman_noise_aware",
                                            "square", "swirl",        "entropy_bench",
                                            "categorical_blobs"};

void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed,
                Validation& v) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) v.violations.push_back(path + "." + it.key() + ": unknown key");
    }
}

double num_or(const json& j, const char* key, double def) {
    return j.contains(key) ? j[key].get<double>() : def;
}

std::string str_or(const json& j, const char* key, const std::string& def) {
    return j.contains(key) ? j[key].get<std::string>() : def;
}

void validate_positive(const json& j, const std::string& path, const char* key, Validation& v,
                       bool strict = true) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) {
        v.violations.push_back(path + "." + key + " must be a number");
        return;
    }
    double x = j[key].get<double>();
    if (strict ? (x <= 0.0) : (x < 0.0)) v.violations.push_back(path + "." + key + " must be > 0");
}

void validate_data(const std::string& experiment, const json& d, Validation& v) {
    const std::string p = "data";
    if (experiment == "ica") {
        check_keys(d, p, {"n_sources", "source_family", "ou_thetas", "ou_dt", "n_samples", "max_condition", "whiten"}, v);
        if (d.contains("n_sources") && d["n_sources"].get<int64_t>() < 2)
            v.violations.push_back("data.n_sources must be >= 2");
        std::string fam = str_or(d, "source_family", "laplace");
        if (fam != "laplace" && fam != "uniform" && fam != "ou_process")
            v.violations.push_back("data.source_family: unknown family '" + fam + "'");
        if (fam == "ou_process") {
            if (!d.contains("ou_thetas"))
                v.violations.push_back("data.ou_thetas required for ou_process sources");
            else if (d.contains("n_sources") &&
                     int64_t(d["ou_thetas"].size()) != d["n_sources"].get<int64_t>())
                v.violations.push_back("data.ou_thetas must list one rate per source");
        }
        validate_positive(d, p, "n_samples", v);
        validate_positive(d, p, "max_condition", v);
    } else if (experiment == "kalman_video" || experiment == "kalman_noise_aware" || experiment == "square") {
        check_keys(d, p,
                   {"n_sequences", "T", "res", "blob_sigma", "pixel_noise", "rot_angle", "damping",
                    "process_noise", "init_radius", "warp_strength", "noise_levels", "square_speed"},
                   v);
        validate_positive(d, p, "n_sequences", v);
        validate_positive(d, p, "T", v);
        validate_positive(d, p, "blob_sigma", v);
        if (d.contains("damping") && std::fabs(d["damping"].get<double>()) > 1.0)
            v.violations.push_back("data.damping must have magnitude <= 1 (stable dynamics)");
        validate_positive(d, p, "pixel_noise", v, false);
    } else if (experiment == "swirl") {
        check_keys(d, p,
                   {"n_sequences", "T", "k", "a", "radius_lo", "radius_hi", "dt", "noise_scale",
                    "noise_family", "gg_shape", "gg_anisotropy", "res", "blob_sigma", "pixel_noise",
                    "warp_strength"},
                   v);
        validate_positive(d, p, "n_sequences", v);
        validate_positive(d, p, "T", v);
        validate_positive(d, p, "dt", v);
        std::string fam = str_or(d, "noise_family", "gaussian");
        if (fam != "gaussian" && fam != "generalized_gaussian")
            v.violations.push_back("data.noise_family: unknown family '" + fam + "'");
        if (fam == "generalized_gaussian") validate_positive(d, p, "gg_shape", v);
    } else if (experiment == "entropy_bench") {
        check_keys(d, p, {"n_values"}, v);
        if (d.contains("n_values"))
            for (const auto& n : d["n_values"])
                if (n.get<int64_t>() < 10) v.violations.push_back("data.n_values entries must be >= 10");
    } else if (experiment == "categorical_blobs") {
        check_keys(d, p, {"n_classes", "separation", "noise", "n_pairs"}, v);
        if (d.contains("n_classes") && d["n_classes"].get<int64_t>() < 2)
            v.violations.push_back("data.n_classes must be >= 2");
        validate_positive(d, p, "n_pairs", v);
        validate_positive(d, p, "noise", v);
    }
}

void validate_estimator(const json& e, Validation& v, const std::string& latent_family) {
    const std::string p = "model.estimator";
    check_keys(e, p, {"kind", "bandwidth", "kernel", "k", "p_norm", "discard_top_frac", "mode"}, v);
    std::string kind = str_or(e, "kind", "knn");
    if (kind != "kde" && kind != "knn" && kind != "logdet" && kind != "stopgrad_plugin") {
        v.violations.push_back(p + ".kind: unknown estimator '" + kind + "'");
        return;
    }
    if (kind == "kde") {
        validate_positive(e, p, "bandwidth", v);
        std::string kernel = str_or(e, "kernel", "gaussian");
        if (kernel != "gaussian" && kernel != "vmf")
            v.violations.push_back(p + ".kernel: unknown kernel '" + kernel + "'");
    }
    if (kind == "knn") {
        if (e.contains("k") && e["k"].get<int64_t>() < 1) v.violations.push_back(p + ".k must be >= 1");
        if (e.contains("p_norm") && e["p_norm"].get<double>() < 1.0)
            v.violations.push_back(p + ".p_norm must be >= 1");
        if (e.contains("discard_top_frac")) {
            double f = e["discard_top_frac"].get<double>();
            if (f < 0.0 || f >= 0.5) v.violations.push_back(p + ".discard_top_frac must lie in [0, 0.5)");
        }
    }
    if (kind == "logdet") {
        std::string mode = str_or(e, "mode", "exact");
        if (mode != "exact" && mode != "taylor" && mode != "variance_covariance")
            v.violations.push_back(p + ".mode: unknown mode '" + mode + "'");
        if (mode == "exact" && (latent_family == "sphere_vmf" || latent_family == "empirical_vmf"))
            v.warnings.push_back(
                p + ": exact log-det is a biased entropy model for spherical latents; kept for comparison");
    }
}

void validate_model(const std::string& experiment, const json& m, Validation& v) {
    const std::string p = "model";
    check_keys(m, p, {"encoder", "predictor", "latent", "estimator", "flavor", "track_grad_cosine"}, v);

    std::string latent_family = "plane_gaussian";
    if (m.contains("latent")) {
        const json& l = m["latent"];
        check_keys(l, p + ".latent",
                   {"family", "sigma2", "beta", "tau", "n_categories", "matching_prob", "anneal_matching_prob"},
                   v);
        latent_family = str_or(l, "family", "plane_gaussian");
        if (latent_family != "plane_gaussian" && latent_family != "sphere_vmf" &&
            latent_family != "simplex_dirichlet" && latent_family != "categorical" &&
            latent_family != "empirical_vmf")
            v.violations.push_back(p + ".latent.family: unknown family '" + latent_family + "'");
        if (l.contains("sigma2") && l["sigma2"].get<double>() <= 0.0)
            v.violations.push_back("model.latent.sigma2 must be > 0");
        validate_positive(l, p + ".latent", "beta", v);
        validate_positive(l, p + ".latent", "tau", v);
        if (l.contains("matching_prob")) {
            double mp = l["matching_prob"].get<double>();
            int64_t n = l.contains("n_categories") ? l["n_categories"].get<int64_t>() : 2;
            if (!(mp > 1.0 / double(n)) || !(mp < 1.0))
                v.violations.push_back("model.latent.matching_prob must lie in (1/n_categories, 1)");
        }
    }
    if (m.contains("encoder")) {
        const json& e = m["encoder"];
        check_keys(e, p + ".encoder",
                   {"type", "hidden", "activation", "output", "out_dim", "bias", "volume_preserving", "init"},
                   v);
        std::string type = str_or(e, "type", "mlp");
        if (type != "linear" && type != "mlp")
            v.violations.push_back(p + ".encoder.type: unknown type '" + type + "'");
        std::string act = str_or(e, "activation", "relu");
        if (act != "relu" && act != "tanh") v.violations.push_back(p + ".encoder.activation must be relu|tanh");
        std::string out = str_or(e, "output", "identity");
        if (out != "identity" && out != "l2_normalize" && out != "softmax")
            v.violations.push_back(p + ".encoder.output must be identity|l2_normalize|softmax");
    }
    if (m.contains("predictor")) {
        const json& pr = m["predictor"];
        check_keys(pr, p + ".predictor",
                   {"type", "hidden_dim", "head_hidden", "learn_obs_map", "noise_net_hidden", "learn_noise",
                    "q_init", "r_init"},
                   v);
        std::string type = str_or(pr, "type", "kalman");
        if (type != "kalman" && type != "rnn")
            v.violations.push_back(p + ".predictor.type: unknown type '" + type + "'");
        validate_positive(pr, p + ".predictor", "hidden_dim", v);
    }
    if (m.contains("estimator")) validate_estimator(m["estimator"], v, latent_family);

    std::string flavor = str_or(m, "flavor", "");
    if (!flavor.empty()) {
        static const std::set<std::string> kFlavors = {"pair_ldm",    "pair_mi",          "temporal_ldm",
                                                       "temporal_mi", "temporal_stopgrad", "linear_ica",
                                                       "gaussian_ou"};
        if (!kFlavors.count(flavor)) v.violations.push_back("model.flavor: unknown flavor '" + flavor + "'");
        std::string kind = m.contains("estimator") ? str_or(m["estimator"], "kind", "knn") : "knn";
        if ((flavor == "temporal_stopgrad" || flavor == "temporal_ldm") && kind != "stopgrad_plugin")
            v.violations.push_back("model.estimator.kind must be stopgrad_plugin for " + flavor);
        if ((flavor == "pair_ldm" || flavor == "pair_mi" || flavor == "temporal_mi") &&
            kind == "stopgrad_plugin")
            v.violations.push_back("model.estimator.kind stopgrad_plugin needs a stop-gradient flavor");
    }
    if (experiment == "kalman_noise_aware") {
        bool has_noise_net = m.contains("predictor") && m["predictor"].contains("noise_net_hidden");
        if (!has_noise_net)
            v.violations.push_back("model.predictor.noise_net_hidden required for kalman_noise_aware");
        if (flavor == "temporal_stopgrad" || flavor == "temporal_ldm")
            v.violations.push_back(
                "model.flavor: input-dependent observation noise supports temporal_mi only");
    }
}

}  // namespace

Validation validate_config(const json& config) {
    Validation v;
    check_keys(config, "config", {"experiment", "seed", "output_dir", "data", "model", "optim"}, v);
    if (!config.contains("experiment")) {
        v.violations.push_back("experiment: required field missing");
        return v;
    }
    std::string experiment = config["experiment"].get<std::string>();
    if (!kExperiments.count(experiment)) {
        v.violations.push_back("experiment: unknown experiment name '" + experiment + "'");
        return v;
    }
    if (config.contains("data")) validate_data(experiment, config["data"], v);
    if (config.contains("model")) validate_model(experiment, config["model"], v);
    if (config.contains("optim")) {
        const json& o = config["optim"];
        check_keys(o, "optim", {"lr", "lr_inner", "batch", "steps", "n_inner", "warmup_inner", "weight_decay", "grad_clip", "log_every", "checkpoint_every"}, v);
        validate_positive(o, "optim", "lr_inner", v);
        validate_positive(o, "optim", "lr", v);
        if (o.contains("batch") && o["batch"].get<int64_t>() < 2)
            v.violations.push_back("optim.batch must be >= 2");
        if (o.contains("steps") && o["steps"].get<int64_t>() < 0)
            v.violations.push_back("optim.steps must be >= 0");
        if (o.contains("n_inner") && o["n_inner"].get<int64_t>() < 1)
            v.violations.push_back("optim.n_inner must be >= 1");
    }
    return v;
}

void require_valid(const json& config) {
    Validation v = validate_config(config);
    if (!v.ok()) fail(ErrorKind::ConfigInvalid, "config invalid: " + v.violations.front());
}

std::string config_hash(const json& config) { return io::hash_hex(io::json_content_hash(config)); }

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::ConfigInvalid, "cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail(ErrorKind::ConfigInvalid, std::string("config parse error: ") + e.what());
    }
    return j;
}

}  // namespace ldm
