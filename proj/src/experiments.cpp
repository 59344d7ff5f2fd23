#include "ldm/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "ldm/config.hpp"
#include "ldm/entropy.hpp"
#include "ldm/io.hpp"
#include "ldm/kalman.hpp"
#include "ldm/latent_models.hpp"
#include "ldm/metrics.hpp"
#include "ldm/nets.hpp"
#include "ldm/objectives.hpp"
#include "ldm/optim.hpp"
#include "ldm/synthdata.hpp"
#include "ldm/linalg.hpp"
#include "ldm/tensor.hpp"

namespace fs = std::filesystem;

namespace ldm {

namespace {

using nlohmann::json;

template <typename T>
T get_or(const json& j, const char* key, T def) {
    return j.contains(key) ? j[key].get<T>() : def;
}

json section(const json& cfg, const char* key) { return cfg.contains(key) ? cfg[key] : json::object(); }

struct OptimConfig {
    double lr = 1e-3;
    double lr_inner = -1.0;  // predictor fast-timescale rate; defaults to lr
    int64_t batch = 64;
    int64_t steps = 1000;
    int64_t n_inner = 5;
    int64_t warmup_inner = 0;  // predictor-only steps before training starts
    double weight_decay = 0.0;
    double grad_clip = 0.0;  // global-norm clip; 0 disables
    int64_t log_every = 50;
    int64_t checkpoint_every = 1000;
};

OptimConfig parse_optim(const json& cfg) {
    json o = section(cfg, "optim");
    OptimConfig out;
    out.lr = get_or(o, "lr", out.lr);
    out.lr_inner = get_or(o, "lr_inner", out.lr);
    out.batch = get_or(o, "batch", out.batch);
    out.steps = get_or(o, "steps", out.steps);
    out.n_inner = get_or(o, "n_inner", out.n_inner);
    out.warmup_inner = get_or(o, "warmup_inner", out.warmup_inner);
    out.weight_decay = get_or(o, "weight_decay", out.weight_decay);
    out.grad_clip = get_or(o, "grad_clip", out.grad_clip);
    out.log_every = get_or(o, "log_every", out.log_every);
    out.checkpoint_every = get_or(o, "checkpoint_every", out.checkpoint_every);
    return out;
}

std::string resolve_output_dir(const json& cfg, const std::string& hash) {
    std::string dir = get_or<std::string>(cfg, "output_dir", "");
    if (dir.empty()) {
        const char* root = std::getenv("LDM_OUT_DIR");
        dir = std::string(root ? root : "runs") + "/" + cfg["experiment"].get<std::string>() + "-" +
              hash.substr(0, 8);
    }
    fs::create_directories(dir);
    fs::create_directories(dir + "/plots");
    fs::create_directories(dir + "/checkpoints");
    return dir;
}

std::string cache_root(const json& cfg) {
    std::string dir = get_or<std::string>(cfg, "output_dir", "");
    const char* root = std::getenv("LDM_OUT_DIR");
    std::string base = !dir.empty() ? fs::path(dir).parent_path().string() : std::string(root ? root : "runs");
    if (base.empty()) base = ".";
    std::string cache = base + "/_cache";
    fs::create_directories(cache);
    return cache;
}

// ---- latent model / estimator / flavor parsing ----

LatentModel parse_latent(const json& m) {
    json l = section(m, "latent");
    LatentModel out;
    std::string fam = get_or<std::string>(l, "family", "plane_gaussian");
    if (fam == "plane_gaussian") out.family = LatentFamily::PlaneGaussian;
    else if (fam == "sphere_vmf") out.family = LatentFamily::SphereVmf;
    else if (fam == "simplex_dirichlet") out.family = LatentFamily::SimplexDirichlet;
    else if (fam == "categorical") out.family = LatentFamily::Categorical;
    else out.family = LatentFamily::EmpiricalPriorVmf;
    out.sigma2 = get_or(l, "sigma2", 1.0);
    out.beta = get_or(l, "beta", 1.0);
    out.tau = get_or(l, "tau", 1.0);
    out.n_categories = get_or<int64_t>(l, "n_categories", 2);
    if (l.contains("matching_prob"))
        out.beta = matching_prob_to_beta(l["matching_prob"].get<double>(), out.n_categories);
    return out;
}

EntropyEstimator parse_estimator(const json& m) {
    json e = section(m, "estimator");
    EntropyEstimator out;
    std::string kind = get_or<std::string>(e, "kind", "knn");
    if (kind == "kde") out.kind = EntropyEstimator::Kind::Kde;
    else if (kind == "knn") out.kind = EntropyEstimator::Kind::Knn;
    else if (kind == "logdet") out.kind = EntropyEstimator::Kind::LogDet;
    else out.kind = EntropyEstimator::Kind::StopGradPlugin;
    out.bandwidth = get_or(e, "bandwidth", 1.0);
    out.kernel = get_or<std::string>(e, "kernel", "gaussian") == "vmf" ? KdeKernel::Vmf : KdeKernel::Gaussian;
    out.k = get_or<int64_t>(e, "k", 3);
    out.p_norm = get_or(e, "p_norm", 2.0);
    out.discard_top_frac = get_or(e, "discard_top_frac", 0.10);
    std::string mode = get_or<std::string>(e, "mode", "exact");
    out.mode = mode == "taylor" ? LogDetMode::Taylor
                                : (mode == "variance_covariance" ? LogDetMode::VarianceCovariance
                                                                 : LogDetMode::Exact);
    return out;
}

ObjectiveFlavor parse_flavor(const json& m, ObjectiveFlavor def) {
    std::string f = get_or<std::string>(m, "flavor", "");
    if (f == "pair_ldm") return ObjectiveFlavor::PairLdm;
    if (f == "pair_mi") return ObjectiveFlavor::PairMi;
    if (f == "temporal_ldm") return ObjectiveFlavor::TemporalLdm;
    if (f == "temporal_mi") return ObjectiveFlavor::TemporalMi;
    if (f == "temporal_stopgrad") return ObjectiveFlavor::TemporalStopGrad;
    if (f == "linear_ica") return ObjectiveFlavor::LinearIca;
    return def;
}

Mlp parse_mlp_encoder(const json& m, int64_t in_dim, uint64_t seed) {
    json e = section(m, "encoder");
    std::vector<int64_t> hidden = get_or<std::vector<int64_t>>(e, "hidden", {100});
    int64_t out_dim = get_or<int64_t>(e, "out_dim", 2);
    Activation act = get_or<std::string>(e, "activation", "relu") == "tanh" ? Activation::Tanh : Activation::Relu;
    std::string om = get_or<std::string>(e, "output", "identity");
    OutputMap map = om == "l2_normalize" ? OutputMap::L2Normalize
                                         : (om == "softmax" ? OutputMap::Softmax : OutputMap::Identity);
    Mlp enc(in_dim, hidden, out_dim, act, map);
    init_params(enc, seed);
    return enc;
}

// ---- dataset caching ----

SequenceDataset cached_sequences(const json& cfg, const json& task_tag,
                                 const std::function<SequenceDataset()>& make) {
    std::string dir = cache_root(cfg);
    std::string key = io::hash_hex(io::json_content_hash(task_tag));
    std::string path = dir + "/" + key + ".bin";
    if (fs::exists(path)) {
        auto [meta, arrays] = io::read_array_file(path);
        SequenceDataset d;
        d.n_seq = meta["n_seq"].get<int64_t>();
        d.T = meta["T"].get<int64_t>();
        d.obs_dim = meta["obs_dim"].get<int64_t>();
        d.world_half = meta["world_half"].get<double>();
        for (auto& a : arrays) {
            if (a.name == "frames") d.frames = std::move(a.data);
            else if (a.name == "positions") d.positions = std::move(a.data);
            else if (a.name == "extras") d.extras = std::move(a.data);
        }
        return d;
    }
    SequenceDataset d = make();
    json meta = task_tag;
    meta["n_seq"] = d.n_seq;
    meta["T"] = d.T;
    meta["obs_dim"] = d.obs_dim;
    meta["world_half"] = d.world_half;
    std::vector<io::NamedArray> arrays;
    arrays.push_back({"frames", {d.n_seq * d.T, d.obs_dim}, d.frames});
    arrays.push_back({"positions", {d.n_seq * d.T, 2}, d.positions});
    if (!d.extras.empty()) arrays.push_back({"extras", {int64_t(d.extras.size())}, d.extras});
    io::write_array_file(path, meta, arrays);
    return d;
}

// ---- shared training-loop plumbing ----

struct RunContext {
    json cfg;
    OptimConfig optim;
    std::string out_dir;
    std::string hash;
    io::CsvWriter csv;
    RunReport report;
    std::chrono::steady_clock::time_point t0;

    explicit RunContext(json config) : cfg(std::move(config)) {
        require_valid(cfg);
        optim = parse_optim(cfg);
        hash = config_hash(cfg);
        out_dir = resolve_output_dir(cfg, hash);
        csv = io::CsvWriter(out_dir + "/metrics.csv", {"step", "loss", "alignment", "entropy_term", "grad_norm"});
        report.experiment = cfg["experiment"].get<std::string>();
        report.config_hash = hash;
        report.output_dir = out_dir;
        report.metrics_csv = out_dir + "/metrics.csv";
        t0 = std::chrono::steady_clock::now();
    }

    uint64_t seed() const { return get_or<uint64_t>(cfg, "seed", 0); }

    bool should_log(int64_t step) const {
        return step % optim.log_every == 0 || step + 1 == optim.steps;
    }

    void log(int64_t step, const LossParts& parts, double grad_norm) {
        csv.row({double(step), parts.loss.item(), parts.alignment.item(), parts.entropy_term.item(), grad_norm});
    }

    void maybe_checkpoint(int64_t step, const NamedParams& params) {
        if (optim.checkpoint_every > 0 && step > 0 && step % optim.checkpoint_every == 0) {
            std::string path = out_dir + "/checkpoints/step" + std::to_string(step) + ".bin";
            io::save_checkpoint(path, params);
            report.checkpoint = path;
        }
    }

    void finish(json metrics) {
        csv.flush();
        report.final_metrics = std::move(metrics);
        report.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        json rj;
        rj["experiment"] = report.experiment;
        rj["config_hash"] = report.config_hash;
        rj["seed"] = seed();
        rj["output_dir"] = report.output_dir;
        rj["metrics_csv"] = report.metrics_csv;
        rj["plots"] = report.plots;
        rj["final_metrics"] = report.final_metrics;
        rj["wall_time_s"] = report.wall_time_s;
        rj["status"] = report.status;
        if (!report.checkpoint.empty()) rj["last_checkpoint"] = report.checkpoint;
        io::write_text_file(report.output_dir + "/report.json", rj.dump(2) + "\n");
    }
};

std::vector<int64_t> sample_indices(Rng& rng, int64_t n, int64_t count) {
    std::vector<int64_t> idx(static_cast<size_t>(count));
    for (auto& i : idx) i = int64_t(rng.next_u64() % uint64_t(n));
    return idx;
}

// Encode a batch of sequences in one pass; returns per-step views [b, d].
struct EncodedBatch {
    Tensor x_flat;               // [b*T, obs] constant input rows, (seq, t) order
    std::vector<Tensor> z_seq;   // per t: [b, d]
    std::vector<Tensor> x_seq;   // per t: [b, obs] (shares x_flat storage lineage)
};

EncodedBatch encode_sequences(const Mlp& enc, const SequenceDataset& data, const std::vector<int64_t>& seqs,
                              bool need_inputs_per_step) {
    int64_t b = int64_t(seqs.size()), T = data.T, obs = data.obs_dim;
    std::vector<double> flat(static_cast<size_t>(b * T * obs));
    for (int64_t s = 0; s < b; ++s)
        for (int64_t t = 0; t < T; ++t)
            std::copy(data.frame(seqs[size_t(s)], t), data.frame(seqs[size_t(s)], t) + obs,
                      flat.begin() + (s * T + t) * obs);
    EncodedBatch out;
    out.x_flat = Tensor::from_data(std::move(flat), {b * T, obs});
    Tensor z_flat = enc.forward(out.x_flat);
    for (int64_t t = 0; t < T; ++t) {
        std::vector<int64_t> rows(static_cast<size_t>(b));
        for (int64_t s = 0; s < b; ++s) rows[size_t(s)] = s * T + t;
        out.z_seq.push_back(gather_rows(z_flat, rows));
        if (need_inputs_per_step) out.x_seq.push_back(gather_rows(out.x_flat, rows));
    }
    return out;
}

Tensor positions_tensor(const SequenceDataset& data, int64_t max_seq) {
    int64_t n = std::min<int64_t>(max_seq, data.n_seq);
    std::vector<double> p(data.positions.begin(), data.positions.begin() + n * data.T * 2);
    return Tensor::from_data(std::move(p), {n * data.T, 2});
}

std::vector<double> flatten_grads(const NamedParams& params) {
    std::vector<double> g;
    for (const auto& [name, t] : params) {
        auto gr = t.grad();
        if (gr.empty()) g.insert(g.end(), size_t(t.size()), 0.0);
        else g.insert(g.end(), gr.begin(), gr.end());
    }
    return g;
}

void zero_params(const NamedParams& params) {
    for (const auto& [name, t] : params) const_cast<Tensor&>(t).zero_grad();
}

double angle_hue(double x, double y) { return (std::atan2(y, x) + M_PI) / (2.0 * M_PI); }

// ---- experiment: linear ica (laplace/uniform sources and gaussian ou pairs) ----

RunReport run_ica(RunContext& ctx) {
    json data_cfg = section(ctx.cfg, "data");
    IcaTask task;
    task.n_sources = get_or<int64_t>(data_cfg, "n_sources", 2);
    std::string fam = get_or<std::string>(data_cfg, "source_family", "laplace");
    task.source_family = fam == "uniform" ? IcaSourceFamily::Uniform
                                          : (fam == "ou_process" ? IcaSourceFamily::OuProcess
                                                                 : IcaSourceFamily::Laplace);
    task.ou_thetas = get_or<std::vector<double>>(data_cfg, "ou_thetas", {});
    task.ou_dt = get_or(data_cfg, "ou_dt", 1.0);
    task.n_samples = get_or<int64_t>(data_cfg, "n_samples", 20000);
    task.max_condition = get_or(data_cfg, "max_condition", 100.0);
    task.seed = ctx.seed();
    IcaData data = gen_ica(task);

    bool ou_mode = task.source_family == IcaSourceFamily::OuProcess;
    int64_t d = task.n_sources;
    if (get_or(data_cfg, "whiten", ou_mode)) {
        // remove the mixing's overall scale so the volume-preserving class
        // contains the true unmixer (standard preprocessing)
        NoGradGuard off;
        int64_t n = task.n_samples;
        std::vector<double> mean(static_cast<size_t>(d), 0.0);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < d; ++j) mean[size_t(j)] += data.x.at(i, j) / double(n);
        std::vector<double> cov(static_cast<size_t>(d * d), 0.0);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t a = 0; a < d; ++a)
                for (int64_t b2 = 0; b2 < d; ++b2)
                    cov[size_t(a * d + b2)] += (data.x.at(i, a) - mean[size_t(a)]) *
                                               (data.x.at(i, b2) - mean[size_t(b2)]) / double(n - 1);
        std::vector<double> vecs;
        auto eig = linalg::jacobi_eigenvalues(cov.data(), d, &vecs);
        std::vector<double> wht(static_cast<size_t>(d * d), 0.0);
        for (int64_t i = 0; i < d; ++i)
            for (int64_t j = 0; j < d; ++j)
                for (int64_t k = 0; k < d; ++k)
                    wht[size_t(i * d + j)] += vecs[size_t(i * d + k)] / std::sqrt(eig[size_t(k)]) *
                                              vecs[size_t(j * d + k)];
        std::vector<double> xw(static_cast<size_t>(n * d), 0.0);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t r = 0; r < d; ++r) {
                double acc = 0.0;
                for (int64_t c = 0; c < d; ++c)
                    acc += wht[size_t(r * d + c)] * (data.x.at(i, c) - mean[size_t(c)]);
                xw[size_t(i * d + r)] = acc;
            }
        data.x = Tensor::from_data(std::move(xw), {n, d});
    }
    LinearEncoder enc(d, d);
    init_params(enc, Rng(ctx.seed()).fork("init").next_u64(), InitScheme::OrthogonalLinear);
    AdamOptimizer opt({enc.w}, ctx.optim.lr);

    std::vector<double> ar_coef;
    for (double th : task.ou_thetas) ar_coef.push_back(std::exp(-th * task.ou_dt));

    Rng batch_rng = Rng(ctx.seed()).fork("batches");
    NamedParams params = enc.named_params();
    for (int64_t step = 0; step < ctx.optim.steps; ++step) {
        int64_t limit = ou_mode ? task.n_samples - 1 : task.n_samples;
        auto idx = sample_indices(batch_rng, limit, ctx.optim.batch);
        Tensor x_b = gather_rows(data.x, idx);
        LossParts parts;
        if (ou_mode) {
            std::vector<int64_t> next(idx);
            for (auto& i : next) ++i;
            parts = loss_gaussian_ou_pair(enc.w, x_b, gather_rows(data.x, next), ar_coef);
        } else {
            parts = loss_linear_ica(enc.w, x_b, SourceDensity::LaplaceUnit);
        }
        opt.zero_grad();
        backward(parts.loss);
        double gn = opt.grad_norm();
        opt.step();
        if (ou_mode) enc.renormalize_volume();
        if (ctx.should_log(step)) ctx.log(step, parts, gn);
        ctx.maybe_checkpoint(step, params);
    }

    NoGradGuard off;
    Tensor s_hat = matmul(data.x, transpose(enc.w));
    double score = source_recovery_score(s_hat, data.s_true);
    auto spec = eigenspectrum(s_hat);
    io::Series spec_series{"recovered eigenspectrum", {}, {}};
    for (size_t i = 0; i < spec.size(); ++i) {
        spec_series.xs.push_back(double(i + 1));
        spec_series.ys.push_back(spec[i]);
    }
    std::string spec_path = ctx.out_dir + "/plots/eigenspectrum.svg";
    io::svg_line_plot(spec_path, {spec_series}, "recovered-source eigenspectrum");
    ctx.report.plots.push_back(spec_path);

    std::vector<double> xs, ys, hue;
    int64_t n_plot = std::min<int64_t>(1500, task.n_samples);
    for (int64_t i = 0; i < n_plot; ++i) {
        xs.push_back(s_hat.at(i, 0));
        ys.push_back(s_hat.at(i, d > 1 ? 1 : 0));
        hue.push_back(angle_hue(data.s_true.at(i, 0), data.s_true.at(i, d > 1 ? 1 : 0)));
    }
    std::string scatter_path = ctx.out_dir + "/plots/latent_scatter.svg";
    io::svg_scatter_plot(scatter_path, xs, ys, hue, "recovered sources, colored by truth");
    ctx.report.plots.push_back(scatter_path);

    io::save_checkpoint(ctx.out_dir + "/checkpoints/final.bin", params);
    json metrics;
    metrics["recovery_score"] = score;
    auto [sign, lad] = slogdet(enc.w);
    metrics["log_abs_det_w"] = lad.item();
    ctx.finish(metrics);
    return ctx.report;
}

// ---- experiment: kalman filtering of dot videos (plus square / noise-aware) ----

RunReport run_kalman_video(RunContext& ctx) {
    std::string experiment = ctx.cfg["experiment"].get<std::string>();
    json data_cfg = section(ctx.cfg, "data");
    VideoTask task;
    task.n_sequences = get_or<int64_t>(data_cfg, "n_sequences", 800);
    task.T = get_or<int64_t>(data_cfg, "T", 20);
    task.res = get_or<int64_t>(data_cfg, "res", 10);
    task.blob_sigma = get_or(data_cfg, "blob_sigma", 1.0);
    task.pixel_noise = get_or(data_cfg, "pixel_noise", 0.05);
    task.rot_angle = get_or(data_cfg, "rot_angle", 0.25);
    task.damping = get_or(data_cfg, "damping", 0.99);
    task.process_noise = get_or(data_cfg, "process_noise", 0.0);
    task.init_radius = get_or(data_cfg, "init_radius", 0.9);
    task.warp_strength = get_or(data_cfg, "warp_strength", 0.0);
    task.variable_pixel_noise = experiment == "kalman_noise_aware";
    task.noise_levels = get_or<std::vector<double>>(data_cfg, "noise_levels", {0.02, 0.4});
    task.square_trajectory = experiment == "square";
    task.square_speed = get_or(data_cfg, "square_speed", 0.08);
    task.seed = ctx.seed();
    json tag = data_cfg;
    tag["__kind"] = "video";
    tag["__experiment"] = experiment;
    tag["__seed"] = task.seed;
    SequenceDataset data = cached_sequences(ctx.cfg, tag, [&] { return gen_video(task); });

    json model_cfg = section(ctx.cfg, "model");
    Rng seeder(ctx.seed());
    Mlp enc = parse_mlp_encoder(model_cfg, data.obs_dim, seeder.fork("enc").next_u64());
    int64_t d = enc.out_dim();

    json pred_cfg = section(model_cfg, "predictor");
    int64_t hidden = get_or<int64_t>(pred_cfg, "hidden_dim", 4);
    bool learn_obs = get_or(pred_cfg, "learn_obs_map", false);
    KalmanModel kal(hidden, d, learn_obs, seeder.fork("kalman").next_u64());
    if (!get_or(pred_cfg, "learn_noise", true))
        kal.fix_noise(get_or(pred_cfg, "q_init", 0.005), get_or(pred_cfg, "r_init", 0.05));
    bool noise_aware = experiment == "kalman_noise_aware";
    if (noise_aware) {
        std::vector<int64_t> nh = get_or<std::vector<int64_t>>(pred_cfg, "noise_net_hidden", {32});
        Mlp noise_net(data.obs_dim, nh, d, Activation::Relu, OutputMap::Identity);
        init_params(noise_net, seeder.fork("noise_net").next_u64());
        kal.noise_net = std::move(noise_net);
    }

    Objective obj;
    obj.flavor = parse_flavor(model_cfg, ObjectiveFlavor::TemporalMi);
    obj.latent = parse_latent(model_cfg);
    obj.estimator = parse_estimator(model_cfg);
    obj.validate();
    bool stopgrad_flavor = obj.flavor == ObjectiveFlavor::TemporalStopGrad;
    bool joint = !stopgrad_flavor;
    bool track_cosine = get_or(model_cfg, "track_grad_cosine", false);

    NamedParams enc_params = enc.named_params("enc");
    NamedParams kal_params = kal.named_params("kalman");
    NamedParams all_params = enc_params;
    all_params.insert(all_params.end(), kal_params.begin(), kal_params.end());

    AdamOptimizer joint_opt =
        AdamOptimizer::for_params(all_params, ctx.optim.lr, ctx.optim.weight_decay, ctx.optim.grad_clip);
    AdamOptimizer enc_opt =
        AdamOptimizer::for_params(enc_params, ctx.optim.lr, ctx.optim.weight_decay, ctx.optim.grad_clip);
    AdamOptimizer kal_opt = AdamOptimizer::for_params(kal_params, ctx.optim.lr_inner);

    EntropyEstimator knn_probe;  // reference estimator for the gradient-cosine diagnostic
    knn_probe.kind = EntropyEstimator::Kind::Knn;

    Rng batch_rng = Rng(ctx.seed()).fork("batches");
    if (stopgrad_flavor && ctx.optim.warmup_inner > 0) {
        Rng warm_rng = Rng(ctx.seed()).fork("warmup");
        for (int64_t w = 0; w < ctx.optim.warmup_inner; ++w) {
            auto seqs = sample_indices(warm_rng, data.n_seq, ctx.optim.batch);
            std::vector<Tensor> z_const;
            std::vector<Tensor> x_const;
            {
                NoGradGuard off;
                EncodedBatch eb = encode_sequences(enc, data, seqs, noise_aware);
                for (auto& z : eb.z_seq) z_const.push_back(stopgrad(z));
                x_const = eb.x_seq;
            }
            BatchedFilter bf = kalman_filter_batched(kal, z_const, x_const);
            kal_opt.zero_grad();
            backward(neg(bf.total_loglik));
            kal_opt.step();
        }
    }
    std::vector<double> cosine_steps, cosine_vals;
    io::CsvWriter cosine_csv;
    if (track_cosine) cosine_csv = io::CsvWriter(ctx.out_dir + "/grad_cosine.csv", {"step", "cosine"});

    for (int64_t step = 0; step < ctx.optim.steps; ++step) {
        auto seqs = sample_indices(batch_rng, data.n_seq, ctx.optim.batch);

        if (stopgrad_flavor) {
            // predictor on the faster timescale: encoder frozen, fresh batches
            for (int64_t inner = 0; inner < ctx.optim.n_inner; ++inner) {
                auto inner_seqs = sample_indices(batch_rng, data.n_seq, ctx.optim.batch);
                std::vector<Tensor> z_const, x_const;
                {
                    NoGradGuard off;
                    EncodedBatch eb = encode_sequences(enc, data, inner_seqs, noise_aware);
                    for (auto& z : eb.z_seq) z_const.push_back(stopgrad(z));
                    x_const = eb.x_seq;
                }
                BatchedFilter bf = kalman_filter_batched(kal, z_const, x_const);
                kal_opt.zero_grad();
                backward(neg(bf.total_loglik));
                kal_opt.step();
            }
        }

        EncodedBatch eb = encode_sequences(enc, data, seqs, noise_aware);
        LossParts parts = loss_temporal_kalman(obj, eb.z_seq, kal, eb.x_seq);
        AdamOptimizer& opt = joint ? joint_opt : enc_opt;
        opt.zero_grad();
        if (stopgrad_flavor) zero_params(kal_params);
        backward(parts.loss);
        double gn = opt.grad_norm();
        opt.step();

        if (ctx.should_log(step)) {
            ctx.log(step, parts, gn);
            if (track_cosine) {
                // encoder gradients of the two uniformity estimators alone,
                // measured on a larger probe batch to tame estimator noise
                int64_t probe_b = std::max<int64_t>(ctx.optim.batch, 64);
                auto probe_seqs = sample_indices(batch_rng, data.n_seq, probe_b);
                zero_params(enc_params);
                zero_params(kal_params);
                EncodedBatch e1 = encode_sequences(enc, data, probe_seqs, false);
                Tensor h_knn = Tensor::scalar(0.0);
                for (auto& z : e1.z_seq) h_knn = add(h_knn, marginal_entropy(knn_probe, z));
                backward(h_knn);
                auto g1 = flatten_grads(enc_params);

                zero_params(enc_params);
                zero_params(kal_params);
                EncodedBatch e2 = encode_sequences(enc, data, probe_seqs, noise_aware);
                Objective plug = obj;
                plug.flavor = ObjectiveFlavor::TemporalStopGrad;
                plug.estimator = EntropyEstimator{};
                plug.estimator.kind = EntropyEstimator::Kind::StopGradPlugin;
                LossParts pp = loss_temporal_kalman(plug, e2.z_seq, kal, e2.x_seq);
                backward(pp.entropy_term);
                auto g2 = flatten_grads(enc_params);
                double cosine = grad_cosine(g1, g2);
                cosine_steps.push_back(double(step));
                cosine_vals.push_back(cosine);
                cosine_csv.row({double(step), cosine});
                zero_params(enc_params);
                zero_params(kal_params);
            }
        }
        ctx.maybe_checkpoint(step, all_params);
    }
    if (track_cosine) cosine_csv.flush();

    // ---- evaluation ----
    NoGradGuard off;
    int64_t eval_seq = std::min<int64_t>(data.n_seq, 800);
    std::vector<int64_t> eval_idx(static_cast<size_t>(eval_seq));
    for (int64_t i = 0; i < eval_seq; ++i) eval_idx[size_t(i)] = i;
    EncodedBatch eb = encode_sequences(enc, data, eval_idx, noise_aware);
    BatchedFilter bf = kalman_filter_batched(kal, eb.z_seq, eb.x_seq);

    // stack filtered states and encoder outputs as [eval_seq*T, .] in (seq, t) order
    int64_t rows = eval_seq * data.T;
    std::vector<double> hmat(static_cast<size_t>(rows * hidden));
    std::vector<double> zmat(static_cast<size_t>(rows * d));
    for (int64_t t = 0; t < data.T; ++t)
        for (int64_t s = 0; s < eval_seq; ++s) {
            for (int64_t c = 0; c < hidden; ++c)
                hmat[size_t((s * data.T + t) * hidden + c)] = bf.h_filt[size_t(t)].at(s, c);
            for (int64_t c = 0; c < d; ++c) zmat[size_t((s * data.T + t) * d + c)] = eb.z_seq[size_t(t)].at(s, c);
        }
    Tensor h_all = Tensor::from_data(std::move(hmat), {rows, hidden});
    Tensor z_all = Tensor::from_data(std::move(zmat), {rows, d});

    Tensor target;
    if (experiment == "square") {
        // surrogate sinusoid of the dot's perimeter phase
        std::vector<double> t_v(static_cast<size_t>(rows * 2));
        for (int64_t s = 0; s < eval_seq; ++s)
            for (int64_t t = 0; t < data.T; ++t) {
                double u = data.extras[size_t(s * data.T + t)] * (2.0 * M_PI / 4.0);
                t_v[size_t((s * data.T + t) * 2)] = std::sin(u);
                t_v[size_t((s * data.T + t) * 2 + 1)] = std::cos(u);
            }
        target = Tensor::from_data(std::move(t_v), {rows, 2});
    } else {
        target = positions_tensor(data, eval_seq);
    }
    uint64_t probe_seed = Rng(ctx.seed()).fork("probe").next_u64();
    ProbeResult probe_h = affine_probe(h_all, target, probe_seed);
    ProbeResult probe_z = affine_probe(z_all, target, probe_seed);

    json metrics;
    metrics["r2_hidden"] = probe_h.r2_overall;
    metrics["r2_z"] = probe_z.r2_overall;
    metrics["ridge_fallback"] = probe_h.ridge_fallback;
    if (track_cosine && !cosine_vals.empty()) {
        size_t n = cosine_vals.size();
        size_t tenth = std::max<size_t>(1, n / 10);
        double first = 0.0, last = 0.0;
        for (size_t i = 0; i < tenth; ++i) first += cosine_vals[i] / double(tenth);
        for (size_t i = n - tenth; i < n; ++i) last += cosine_vals[i] / double(tenth);
        metrics["grad_cosine_first"] = first;
        metrics["grad_cosine_last"] = last;
    }
    if (noise_aware) {
        // does the per-step inferred observation noise track the true level?
        std::vector<double> inferred, truth;
        for (int64_t s = 0; s < std::min<int64_t>(eval_seq, 64); ++s)
            for (int64_t t = 0; t < data.T; ++t) {
                Tensor x_row = gather_rows(eb.x_seq[size_t(t)], {s});
                Tensor robs = kal.obs_noise_from(x_row);
                double mean_diag = 0.0;
                for (int64_t c = 0; c < d; ++c) mean_diag += robs.at(c, c) / double(d);
                inferred.push_back(mean_diag);
                truth.push_back(data.extras[size_t(s * data.T + t)]);
            }
        double mi = 0, mt = 0;
        for (size_t i = 0; i < inferred.size(); ++i) {
            mi += inferred[i] / double(inferred.size());
            mt += truth[i] / double(truth.size());
        }
        double num = 0, di = 0, dt2 = 0;
        for (size_t i = 0; i < inferred.size(); ++i) {
            num += (inferred[i] - mi) * (truth[i] - mt);
            di += (inferred[i] - mi) * (inferred[i] - mi);
            dt2 += (truth[i] - mt) * (truth[i] - mt);
        }
        metrics["noise_corr"] = num / std::sqrt(di * dt2 + 1e-30);
    }

    // plots: decoded trajectory for the first sequence, spectrum, latent scatter
    {
        io::Series truth{"truth x", {}, {}}, decoded{"decoded x", {}, {}};
        for (int64_t t = 0; t < data.T; ++t) {
            truth.xs.push_back(double(t));
            truth.ys.push_back(target.at(t, 0));
            double pred = probe_h.weights[size_t(hidden)];
            for (int64_t c = 0; c < hidden; ++c)
                pred += probe_h.weights[size_t(c)] * h_all.at(t, c);
            decoded.xs.push_back(double(t));
            decoded.ys.push_back(pred);
        }
        std::string path = ctx.out_dir + "/plots/trajectory.svg";
        io::svg_line_plot(path, {truth, decoded}, "first-sequence position decode");
        ctx.report.plots.push_back(path);
    }
    {
        auto spec = eigenspectrum(z_all);
        io::Series s{"z eigenspectrum", {}, {}};
        for (size_t i = 0; i < spec.size(); ++i) {
            s.xs.push_back(double(i + 1));
            s.ys.push_back(std::max(spec[i], 1e-12));
        }
        std::string path = ctx.out_dir + "/plots/eigenspectrum.svg";
        io::svg_line_plot(path, {s}, "latent eigenspectrum", /*log_y=*/true);
        ctx.report.plots.push_back(path);
    }
    {
        std::vector<double> xs, ys, hue;
        for (int64_t i = 0; i < std::min<int64_t>(rows, 2000); ++i) {
            xs.push_back(z_all.at(i, 0));
            ys.push_back(z_all.at(i, d > 1 ? 1 : 0));
            hue.push_back(angle_hue(target.at(i, 0), target.at(i, 1)));
        }
        std::string path = ctx.out_dir + "/plots/latent_scatter.svg";
        io::svg_scatter_plot(path, xs, ys, hue, "latents colored by true position angle");
        ctx.report.plots.push_back(path);
    }
    // filter trace export for the first evaluation sequence
    {
        io::CsvWriter trace(ctx.out_dir + "/filter_trace.csv", [&] {
            std::vector<std::string> cols = {"t"};
            for (int64_t c = 0; c < hidden; ++c) cols.push_back("h" + std::to_string(c));
            for (int64_t c = 0; c < hidden; ++c) cols.push_back("p_diag" + std::to_string(c));
            for (int64_t c = 0; c < d; ++c) cols.push_back("z_obs" + std::to_string(c));
            for (int64_t c = 0; c < d; ++c) cols.push_back("z_mean" + std::to_string(c));
            cols.push_back("loglik");
            return cols;
        }());
        std::vector<double> z0(static_cast<size_t>(data.T * d));
        for (int64_t t = 0; t < data.T; ++t)
            for (int64_t c = 0; c < d; ++c) z0[size_t(t * d + c)] = eb.z_seq[size_t(t)].at(0, c);
        auto res = kalman_sequence_loglik(kal, Tensor::from_data(z0, {data.T, d}));
        for (int64_t t = 0; t < data.T; ++t) {
            std::vector<double> row = {double(t)};
            for (int64_t c = 0; c < hidden; ++c) row.push_back(res.h_filt[size_t(t)].at(c));
            for (int64_t c = 0; c < hidden; ++c) row.push_back(res.p_filt[size_t(t)].at(c, c));
            for (int64_t c = 0; c < d; ++c) row.push_back(z0[size_t(t * d + c)]);
            for (int64_t c = 0; c < d; ++c) row.push_back(res.z_mean[size_t(t)].at(c));
            row.push_back(res.per_step[size_t(t)].item());
            trace.row(row);
        }
        trace.flush();
    }

    io::save_checkpoint(ctx.out_dir + "/checkpoints/final.bin", all_params);
    ctx.finish(metrics);
    return ctx.report;
}

// ---- experiment: swirl system identification ----

RunReport run_swirl(RunContext& ctx) {
    json data_cfg = section(ctx.cfg, "data");
    SwirlTask task;
    task.k = get_or<int64_t>(data_cfg, "k", 4);
    task.a = get_or(data_cfg, "a", 0.15);
    task.radius_lo = get_or(data_cfg, "radius_lo", 0.6);
    task.radius_hi = get_or(data_cfg, "radius_hi", 1.1);
    task.dt = get_or(data_cfg, "dt", 0.15);
    task.noise_scale = get_or(data_cfg, "noise_scale", 0.05);
    task.noise_family = get_or<std::string>(data_cfg, "noise_family", "gaussian") == "generalized_gaussian"
                            ? TrajectoryNoise::GeneralizedGaussian
                            : TrajectoryNoise::Gaussian;
    task.gg_shape = get_or(data_cfg, "gg_shape", 2.0);
    task.gg_anisotropy = get_or(data_cfg, "gg_anisotropy", 2.0);
    task.res = get_or<int64_t>(data_cfg, "res", 10);
    task.blob_sigma = get_or(data_cfg, "blob_sigma", 1.0);
    task.pixel_noise = get_or(data_cfg, "pixel_noise", 0.02);
    task.warp_strength = get_or(data_cfg, "warp_strength", 1.5);
    task.T = get_or<int64_t>(data_cfg, "T", 16);
    task.n_sequences = get_or<int64_t>(data_cfg, "n_sequences", 10000);
    task.seed = ctx.seed();
    json tag = data_cfg;
    tag["__kind"] = "swirl";
    tag["__seed"] = task.seed;
    SequenceDataset data = cached_sequences(ctx.cfg, tag, [&] { return gen_swirl(task); });

    json model_cfg = section(ctx.cfg, "model");
    Rng seeder(ctx.seed());
    Mlp enc = parse_mlp_encoder(model_cfg, data.obs_dim, seeder.fork("enc").next_u64());
    int64_t d = enc.out_dim();
    json pred_cfg = section(model_cfg, "predictor");
    int64_t hidden = get_or<int64_t>(pred_cfg, "hidden_dim", 10);
    std::vector<int64_t> head = get_or<std::vector<int64_t>>(pred_cfg, "head_hidden", {20, 20});
    GaussianRnnPredictor pred(d, hidden, head, seeder.fork("pred").next_u64());

    Objective obj;
    obj.flavor = parse_flavor(model_cfg, ObjectiveFlavor::TemporalMi);
    obj.latent = parse_latent(model_cfg);
    obj.estimator = parse_estimator(model_cfg);
    obj.validate();
    bool stopgrad_flavor = obj.flavor == ObjectiveFlavor::TemporalStopGrad;

    NamedParams enc_params = enc.named_params("enc");
    NamedParams pred_params = pred.named_params("pred");
    NamedParams all_params = enc_params;
    all_params.insert(all_params.end(), pred_params.begin(), pred_params.end());
    AdamOptimizer joint_opt =
        AdamOptimizer::for_params(all_params, ctx.optim.lr, ctx.optim.weight_decay, ctx.optim.grad_clip);
    AdamOptimizer enc_opt =
        AdamOptimizer::for_params(enc_params, ctx.optim.lr, ctx.optim.weight_decay, ctx.optim.grad_clip);
    AdamOptimizer pred_opt = AdamOptimizer::for_params(pred_params, ctx.optim.lr_inner);

    Rng batch_rng = Rng(ctx.seed()).fork("batches");
    if (stopgrad_flavor && ctx.optim.warmup_inner > 0) {
        Rng warm_rng = Rng(ctx.seed()).fork("warmup");
        for (int64_t w = 0; w < ctx.optim.warmup_inner; ++w) {
            auto seqs = sample_indices(warm_rng, data.n_seq, ctx.optim.batch);
            std::vector<Tensor> z_const;
            {
                NoGradGuard off;
                EncodedBatch eb = encode_sequences(enc, data, seqs, false);
                for (auto& z : eb.z_seq) z_const.push_back(stopgrad(z));
            }
            LossParts ip = loss_temporal_rnn(obj, z_const, pred);
            pred_opt.zero_grad();
            backward(neg(ip.alignment));
            pred_opt.step();
        }
    }
    for (int64_t step = 0; step < ctx.optim.steps; ++step) {
        auto seqs = sample_indices(batch_rng, data.n_seq, ctx.optim.batch);
        if (stopgrad_flavor) {
            Objective inner_obj = obj;
            for (int64_t inner = 0; inner < ctx.optim.n_inner; ++inner) {
                auto inner_seqs = sample_indices(batch_rng, data.n_seq, ctx.optim.batch);
                std::vector<Tensor> z_const;
                {
                    NoGradGuard off;
                    EncodedBatch ebi = encode_sequences(enc, data, inner_seqs, false);
                    for (auto& z : ebi.z_seq) z_const.push_back(stopgrad(z));
                }
                LossParts ip = loss_temporal_rnn(inner_obj, z_const, pred);
                pred_opt.zero_grad();
                backward(neg(ip.alignment));
                pred_opt.step();
            }
        }
        EncodedBatch eb = encode_sequences(enc, data, seqs, false);
        LossParts parts = loss_temporal_rnn(obj, eb.z_seq, pred);
        AdamOptimizer& opt = stopgrad_flavor ? enc_opt : joint_opt;
        opt.zero_grad();
        if (stopgrad_flavor) zero_params(pred_params);
        backward(parts.loss);
        double gn = opt.grad_norm();
        opt.step();
        if (ctx.should_log(step)) ctx.log(step, parts, gn);
        ctx.maybe_checkpoint(step, all_params);
    }

    // ---- evaluation ----
    int64_t eval_seq = std::min<int64_t>(data.n_seq, 1200);
    int64_t rows = eval_seq * data.T;
    Tensor z_all, target;
    {
        NoGradGuard off;
        std::vector<int64_t> eval_idx(static_cast<size_t>(eval_seq));
        for (int64_t i = 0; i < eval_seq; ++i) eval_idx[size_t(i)] = i;
        EncodedBatch eb = encode_sequences(enc, data, eval_idx, false);
        std::vector<double> zmat(static_cast<size_t>(rows * d));
        for (int64_t t = 0; t < data.T; ++t)
            for (int64_t s = 0; s < eval_seq; ++s)
                for (int64_t c = 0; c < d; ++c)
                    zmat[size_t((s * data.T + t) * d + c)] = eb.z_seq[size_t(t)].at(s, c);
        z_all = Tensor::from_data(std::move(zmat), {rows, d});
        target = positions_tensor(data, eval_seq);
    }
    ProbeResult probe = affine_probe(z_all, target, Rng(ctx.seed()).fork("probe").next_u64());

    // jacobian rank of the encoder on data samples (runs on the tape)
    int64_t n_rank = 256;
    std::vector<double> sample(static_cast<size_t>(n_rank * data.obs_dim));
    Rng pick = Rng(ctx.seed()).fork("rank");
    for (int64_t i = 0; i < n_rank; ++i) {
        int64_t s = int64_t(pick.next_u64() % uint64_t(eval_seq));
        int64_t t = int64_t(pick.next_u64() % uint64_t(data.T));
        std::copy(data.frame(s, t), data.frame(s, t) + data.obs_dim, sample.begin() + i * data.obs_dim);
    }
    JacobianRankResult rank =
        jacobian_rank(enc, Tensor::from_data(std::move(sample), {n_rank, data.obs_dim}), 1e-5);
    NoGradGuard off;
    double frac_full = 0.0;
    for (int r : rank.per_sample)
        if (r >= d) frac_full += 1.0 / double(n_rank);

    json metrics;
    metrics["r2"] = probe.r2_overall;
    metrics["mean_jacobian_rank"] = rank.mean_rank;
    metrics["frac_full_rank"] = frac_full;

    {
        auto spec = eigenspectrum(z_all);
        io::Series s{"z eigenspectrum", {}, {}};
        for (size_t i = 0; i < spec.size(); ++i) {
            s.xs.push_back(double(i + 1));
            s.ys.push_back(std::max(spec[i], 1e-12));
        }
        std::string path = ctx.out_dir + "/plots/eigenspectrum.svg";
        io::svg_line_plot(path, {s}, "latent eigenspectrum", true);
        ctx.report.plots.push_back(path);
    }
    {
        std::vector<double> xs, ys, hue;
        for (int64_t i = 0; i < std::min<int64_t>(rows, 2500); ++i) {
            xs.push_back(z_all.at(i, 0));
            ys.push_back(z_all.at(i, 1));
            hue.push_back(angle_hue(target.at(i, 0), target.at(i, 1)));
        }
        std::string path = ctx.out_dir + "/plots/latent_scatter.svg";
        io::svg_scatter_plot(path, xs, ys, hue, "recovered latents colored by true angle");
        ctx.report.plots.push_back(path);
    }
    io::save_checkpoint(ctx.out_dir + "/checkpoints/final.bin", all_params);
    ctx.finish(metrics);
    return ctx.report;
}

// ---- experiment: categorical blobs ----

RunReport run_categorical(RunContext& ctx) {
    json data_cfg = section(ctx.cfg, "data");
    BlobTask task;
    task.n_classes = get_or<int64_t>(data_cfg, "n_classes", 4);
    task.separation = get_or(data_cfg, "separation", 6.0);
    task.noise = get_or(data_cfg, "noise", 0.7);
    task.n_pairs = get_or<int64_t>(data_cfg, "n_pairs", 2000);
    task.seed = ctx.seed();
    PairDataset data = gen_blobs(task);

    json model_cfg = section(ctx.cfg, "model");
    json latent_cfg = section(model_cfg, "latent");
    int64_t n_cat = get_or<int64_t>(latent_cfg, "n_categories", task.n_classes);
    Rng seeder(ctx.seed());
    json enc_cfg = section(model_cfg, "encoder");
    std::vector<int64_t> hidden = get_or<std::vector<int64_t>>(enc_cfg, "hidden", {32});
    Mlp enc(2, hidden, n_cat, Activation::Relu, OutputMap::Softmax);
    init_params(enc, seeder.fork("enc").next_u64());

    bool mi_flavor = parse_flavor(model_cfg, ObjectiveFlavor::PairLdm) == ObjectiveFlavor::PairMi;
    std::vector<double> anneal = get_or<std::vector<double>>(latent_cfg, "anneal_matching_prob", {0.8, 0.99});

    NamedParams params = enc.named_params("enc");
    AdamOptimizer opt = AdamOptimizer::for_params(params, ctx.optim.lr);
    Rng batch_rng = Rng(ctx.seed()).fork("batches");

    auto clamp_min_t = [](const Tensor& x, double lo) { return add_scalar(relu(add_scalar(x, -lo)), lo); };

    for (int64_t step = 0; step < ctx.optim.steps; ++step) {
        // matching probability annealed over the first half of training
        double frac = ctx.optim.steps > 1 ? std::min(1.0, double(step) / (0.5 * double(ctx.optim.steps))) : 1.0;
        double p_theta = anneal[0] + (anneal[1] - anneal[0]) * frac;
        double beta = matching_prob_to_beta(p_theta, n_cat);

        auto idx = sample_indices(batch_rng, task.n_pairs, ctx.optim.batch);
        Tensor p1 = enc.forward(gather_rows(data.x1, idx));
        Tensor p2 = enc.forward(gather_rows(data.x2, idx));
        Tensor align = alignment_categorical(p1, p2, beta);
        Tensor ent;
        if (mi_flavor) {
            // marginal categorical entropies of the batch-mean distributions
            Tensor m1 = colwise_mean(p1);
            Tensor m2 = colwise_mean(p2);
            ent = add(neg(sum(mul(m1, log(clamp_min_t(m1, 1e-12))))),
                      neg(sum(mul(m2, log(clamp_min_t(m2, 1e-12))))));
        } else {
            // joint categorical entropy of the pair assignment
            Tensor joint = mul_scalar(matmul(transpose(p1), p2), 1.0 / double(p1.dim(0)));
            ent = neg(sum(mul(joint, log(clamp_min_t(joint, 1e-12)))));
        }
        LossParts parts{neg(add(align, ent)), align, ent};
        opt.zero_grad();
        backward(parts.loss);
        double gn = opt.grad_norm();
        opt.step();
        if (ctx.should_log(step)) ctx.log(step, parts, gn);
        ctx.maybe_checkpoint(step, params);
    }

    // evaluation: best-permutation assignment accuracy of argmax categories
    NoGradGuard off;
    Tensor p_eval = enc.forward(data.x1);
    std::vector<std::vector<int64_t>> confusion(static_cast<size_t>(task.n_classes),
                                                std::vector<int64_t>(static_cast<size_t>(n_cat), 0));
    for (int64_t i = 0; i < task.n_pairs; ++i) {
        int64_t arg = 0;
        for (int64_t c = 1; c < n_cat; ++c)
            if (p_eval.at(i, c) > p_eval.at(i, arg)) arg = c;
        confusion[size_t(data.labels[size_t(i)])][size_t(arg)]++;
    }
    // exact assignment of categories to classes
    size_t full = size_t(1) << n_cat;
    std::vector<double> dp(full, -1.0);
    dp[0] = 0.0;
    for (size_t mask = 0; mask < full; ++mask) {
        if (dp[mask] < 0) continue;
        int64_t row = int64_t(__builtin_popcountll(mask));
        if (row >= task.n_classes) continue;
        for (int64_t c = 0; c < n_cat; ++c) {
            if (mask & (size_t(1) << c)) continue;
            size_t next = mask | (size_t(1) << c);
            double cand = dp[mask] + double(confusion[size_t(row)][size_t(c)]);
            if (cand > dp[next]) dp[next] = cand;
        }
    }
    double best = 0.0;
    for (size_t mask = 0; mask < full; ++mask)
        if (int64_t(__builtin_popcountll(mask)) == task.n_classes) best = std::max(best, dp[mask]);
    json metrics;
    metrics["accuracy"] = best / double(task.n_pairs);

    io::save_checkpoint(ctx.out_dir + "/checkpoints/final.bin", params);
    ctx.finish(metrics);
    return ctx.report;
}

// ---- experiment: entropy estimator bench ----

Tensor bench_samples(const std::string& target, int64_t n, Rng& rng) {
    if (target == "gaussian") {
        std::vector<double> v(static_cast<size_t>(n * 2));
        for (int64_t i = 0; i < n; ++i) {
            v[size_t(2 * i)] = rng.normal();
            v[size_t(2 * i + 1)] = 2.0 * rng.normal();
        }
        return Tensor::from_data(std::move(v), {n, 2});
    }
    if (target == "uniform") {
        std::vector<double> v(static_cast<size_t>(n * 2));
        for (auto& x : v) x = rng.uniform();
        return Tensor::from_data(std::move(v), {n, 2});
    }
    // half_normal
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = std::fabs(rng.normal());
    return Tensor::from_data(std::move(v), {n, 1});
}

double bench_analytic(const std::string& target) {
    if (target == "gaussian") return 1.0 + std::log(2.0 * M_PI) + 0.5 * std::log(4.0);
    if (target == "uniform") return 0.0;
    return 0.5 * (1.0 + std::log(2.0 * M_PI)) - std::log(2.0);  // half normal
}

}  // namespace

RunReport run_entropy_bench(json config) {
    RunContext ctx(std::move(config));
    json data_cfg = section(ctx.cfg, "data");
    std::vector<int64_t> n_values = get_or<std::vector<int64_t>>(data_cfg, "n_values", {1000, 10000, 100000});

    io::CsvWriter table(ctx.out_dir + "/entropy_bench.csv",
                        {"estimator_id", "target_id", "n", "estimate", "analytic", "abs_error"});
    struct Bench {
        std::string name;
        EntropyEstimator est;
    };
    std::vector<Bench> benches;
    {
        EntropyEstimator logdet;
        logdet.kind = EntropyEstimator::Kind::LogDet;
        benches.push_back({"logdet_exact", logdet});
        EntropyEstimator knn;
        knn.kind = EntropyEstimator::Kind::Knn;
        knn.discard_top_frac = 0.0;
        benches.push_back({"knn_k3", knn});
        EntropyEstimator kde;
        kde.kind = EntropyEstimator::Kind::Kde;
        kde.bandwidth = 0.3;
        benches.push_back({"kde_h0.3", kde});
    }
    const std::vector<std::string> targets = {"gaussian", "uniform", "half_normal"};

    json metrics;
    Rng root(ctx.seed());
    for (size_t ti = 0; ti < targets.size(); ++ti) {
        const auto& target = targets[ti];
        for (int64_t n : n_values) {
            Rng rng = root.fork(target + std::to_string(n));
            Tensor z = bench_samples(target, n, rng);
            double analytic = bench_analytic(target);
            for (size_t bi = 0; bi < benches.size(); ++bi) {
                double est = corrected_entropy(benches[bi].est, z);
                table.row({double(bi), double(ti), double(n), est, analytic, std::fabs(est - analytic)});
                metrics[benches[bi].name][target + "_" + std::to_string(n)] = std::fabs(est - analytic);
            }
        }
    }
    // folding-entropy gap at the largest N: H[x] - H[|x|] for x ~ N(0,1)
    {
        int64_t n = n_values.back();
        Rng rng = root.fork("folding");
        std::vector<double> x(static_cast<size_t>(n)), ax(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            x[size_t(i)] = rng.normal();
            ax[size_t(i)] = std::fabs(x[size_t(i)]);
        }
        double hx = entropy_knn_corrected(Tensor::from_data(std::move(x), {n, 1}), 3, 2.0);
        double hax = entropy_knn_corrected(Tensor::from_data(std::move(ax), {n, 1}), 3, 2.0);
        metrics["folding_gap"] = hx - hax;
        metrics["half_normal_knn"] = hax;
    }
    table.flush();
    ctx.finish(metrics);
    return ctx.report;
}

RunReport run_experiment(json config) {
    std::string experiment = config.contains("experiment") ? config["experiment"].get<std::string>() : "";
    if (experiment == "entropy_bench") return run_entropy_bench(std::move(config));

    RunContext ctx(std::move(config));
    try {
        if (experiment == "ica") return run_ica(ctx);
        if (experiment == "kalman_video" || experiment == "kalman_noise_aware" || experiment == "square")
            return run_kalman_video(ctx);
        if (experiment == "swirl") return run_swirl(ctx);
        if (experiment == "categorical_blobs") return run_categorical(ctx);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::NumericalBlowup) {
            ctx.report.status = "numerical_blowup";
            json metrics;
            metrics["error"] = e.what();
            ctx.finish(metrics);
            return ctx.report;
        }
        throw;
    }
    fail(ErrorKind::ConfigInvalid, "experiment: unknown experiment name '" + experiment + "'");
}

}  // namespace ldm
