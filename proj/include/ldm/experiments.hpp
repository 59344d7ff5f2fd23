#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace ldm {

struct RunReport {
    std::string experiment;
    std::string config_hash;
    std::string output_dir;
    nlohmann::json final_metrics;
    std::string metrics_csv;
    std::vector<std::string> plots;
    double wall_time_s = 0.0;
    std::string status = "ok";  // "numerical_blowup" on aborted runs
    std::string checkpoint;     // last written checkpoint, if any
};

/// Validates, resolves the output directory, runs the configured experiment,
/// and writes metrics.csv, plots/*.svg, report.json, and checkpoints.
RunReport run_experiment(nlohmann::json config);

/// Estimator-accuracy table against analytic entropies (the entropy_bench
/// experiment); also reachable through run_experiment.
RunReport run_entropy_bench(nlohmann::json config);

}  // namespace ldm
