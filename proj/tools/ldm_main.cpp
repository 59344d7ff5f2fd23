#include <glob.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "ldm/common.hpp"
#include "ldm/config.hpp"
#include "ldm/experiments.hpp"

namespace {

using ldm::json;

void apply_overrides(json& cfg, int64_t seed, const std::string& out, int64_t steps) {
    if (seed >= 0) cfg["seed"] = seed;
    if (!out.empty()) cfg["output_dir"] = out;
    if (steps >= 0) {
        if (!cfg.contains("optim")) cfg["optim"] = json::object();
        cfg["optim"]["steps"] = steps;
    }
}

int do_run(const std::string& path, int64_t seed, const std::string& out, int64_t steps) {
    json cfg = ldm::load_config_file(path);
    apply_overrides(cfg, seed, out, steps);
    auto validation = ldm::validate_config(cfg);
    for (const auto& w : validation.warnings) std::cerr << "warning: " << w << "\n";
    if (!validation.ok()) {
        for (const auto& v : validation.violations) std::cerr << "violation: " << v << "\n";
        return 2;
    }
    ldm::RunReport report = ldm::run_experiment(cfg);
    std::cout << "run " << report.experiment << " [" << report.config_hash.substr(0, 8) << "] -> "
              << report.output_dir << "\n";
    std::cout << report.final_metrics.dump(2) << "\n";
    std::cout << "wall time: " << report.wall_time_s << " s\n";
    if (report.status != "ok") {
        std::cerr << "aborted: " << report.status;
        if (!report.checkpoint.empty()) std::cerr << " (last checkpoint: " << report.checkpoint << ")";
        std::cerr << "\n";
        return 1;
    }
    return 0;
}

int do_validate(const std::string& path) {
    json cfg = ldm::load_config_file(path);
    auto v = ldm::validate_config(cfg);
    for (const auto& w : v.warnings) std::cout << "warning: " << w << "\n";
    for (const auto& viol : v.violations) std::cout << "violation: " << viol << "\n";
    if (v.ok()) {
        std::cout << "ok (" << v.warnings.size() << " warnings)\n";
        return 0;
    }
    return 2;
}

std::vector<std::string> expand_glob(const std::string& pattern) {
    glob_t g;
    std::vector<std::string> out;
    if (glob(pattern.c_str(), 0, nullptr, &g) == 0) {
        for (size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    }
    globfree(&g);
    return out;
}

int do_sweep(const std::string& pattern, int jobs, const std::string& self) {
    auto files = expand_glob(pattern);
    if (files.empty()) {
        std::cerr << "sweep: no configs match '" << pattern << "'\n";
        return 2;
    }
    std::atomic<size_t> next{0};
    std::atomic<int> failures{0};
    std::mutex print_mu;
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= files.size()) return;
            std::string cmd = "'" + self + "' run '" + files[i] + "' > /dev/null 2>&1";
            int rc = std::system(cmd.c_str());
            std::lock_guard<std::mutex> lock(print_mu);
            std::cout << (rc == 0 ? "[ok]   " : "[fail] ") << files[i] << "\n";
            if (rc != 0) ++failures;
        }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < std::max(1, jobs); ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    std::cout << files.size() - size_t(failures.load()) << "/" << files.size() << " runs succeeded\n";
    return failures.load() == 0 ? 0 : 1;
}

std::string self_path(const char* argv0) {
    char buf[4096];
    ssize_t n = readlink("/proc/self/exe", buf, sizeof(buf) - 1);
    if (n > 0) {
        buf[n] = '\0';
        return buf;
    }
    return argv0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent distribution-matching experiment harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir, sweep_pattern;
    int64_t seed = -1, steps = -1;
    int jobs = 2;

    auto add_overrides = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "override the config seed");
        cmd->add_option("--out", out_dir, "override the output directory");
        cmd->add_option("--steps", steps, "override the training step count");
    };

    CLI::App* run_cmd = app.add_subcommand("run", "run one experiment config");
    run_cmd->add_option("config", config_path, "config file (json)")->required();
    add_overrides(run_cmd);

    CLI::App* val_cmd = app.add_subcommand("validate", "check a config against the schema");
    val_cmd->add_option("config", config_path, "config file (json)")->required();

    CLI::App* bench_cmd = app.add_subcommand("bench-entropy", "estimator accuracy tables");
    bench_cmd->add_option("config", config_path, "config file (json)")->required();
    add_overrides(bench_cmd);

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "run every config matching a glob");
    sweep_cmd->add_option("configs", sweep_pattern, "config glob pattern")->required();
    sweep_cmd->add_option("--jobs", jobs, "concurrent runs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return do_run(config_path, seed, out_dir, steps);
        if (val_cmd->parsed()) return do_validate(config_path);
        if (bench_cmd->parsed()) {
            json cfg = ldm::load_config_file(config_path);
            if (cfg.value("experiment", "") != "entropy_bench") {
                std::cerr << "bench-entropy expects an entropy_bench config\n";
                return 2;
            }
            return do_run(config_path, seed, out_dir, steps);
        }
        if (sweep_cmd->parsed()) return do_sweep(sweep_pattern, jobs, self_path(argv[0]));
    } catch (const ldm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
