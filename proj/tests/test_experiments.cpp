#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "ldm/config.hpp"
#include "ldm/experiments.hpp"
#include "ldm/io.hpp"

using namespace ldm;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
    std::string dir = "/tmp/ldm_test_runs/" + name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

json tiny_ica(const std::string& out) {
    return json{{"experiment", "ica"},
                {"seed", 3},
                {"output_dir", out},
                {"data", {{"n_sources", 2}, {"source_family", "laplace"}, {"n_samples", 4000}}},
                {"optim", {{"lr", 0.02}, {"batch", 256}, {"steps", 500}, {"log_every", 100}}}};
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("zero-step run reports initial metrics and exits cleanly") {
    json cfg = tiny_ica(fresh_dir("ica_zero"));
    cfg["optim"]["steps"] = 0;
    RunReport r = run_experiment(cfg);
    CHECK(r.status == "ok");
    CHECK(r.final_metrics.contains("recovery_score"));
    CHECK(fs::exists(r.output_dir + "/report.json"));
    CHECK(fs::exists(r.metrics_csv));
}

TEST_CASE("identical configs produce byte-identical metrics csv") {
    json cfg = tiny_ica(fresh_dir("ica_det_a"));
    cfg["optim"]["steps"] = 40;
    RunReport r1 = run_experiment(cfg);
    std::string csv1 = io::read_text_file(r1.metrics_csv);

    cfg["output_dir"] = fresh_dir("ica_det_b");
    RunReport r2 = run_experiment(cfg);
    std::string csv2 = io::read_text_file(r2.metrics_csv);
    CHECK(csv1 == csv2);
    CHECK(!csv1.empty());
}

TEST_CASE("laplace ica run recovers the sources") {
    RunReport r = run_experiment(tiny_ica(fresh_dir("ica_full")));
    CHECK(r.status == "ok");
    CHECK(r.final_metrics["recovery_score"].get<double>() > 0.9);
}

TEST_CASE("categorical blobs cluster to the true classes") {
    json cfg{{"experiment", "categorical_blobs"},
             {"seed", 5},
             {"output_dir", fresh_dir("blobs")},
             {"data", {{"n_classes", 4}, {"n_pairs", 1500}, {"separation", 6.0}, {"noise", 0.6}}},
             {"model",
              {{"encoder", {{"hidden", {32}}}},
               {"latent", {{"family", "categorical"}, {"n_categories", 4}}},
               {"flavor", "pair_ldm"}}},
             {"optim", {{"lr", 0.01}, {"batch", 128}, {"steps", 400}, {"log_every", 100}}}};
    RunReport r = run_experiment(cfg);
    CHECK(r.final_metrics["accuracy"].get<double>() > 0.9);
}

TEST_CASE("entropy bench writes the estimator table") {
    json cfg{{"experiment", "entropy_bench"},
             {"seed", 7},
             {"output_dir", fresh_dir("bench")},
             {"data", {{"n_values", {1000}}}}};
    RunReport r = run_experiment(cfg);
    CHECK(r.final_metrics.contains("folding_gap"));
    CHECK(fs::exists(r.output_dir + "/entropy_bench.csv"));
    std::string csv = io::read_text_file(r.output_dir + "/entropy_bench.csv");
    CHECK(csv.find("estimator_id") != std::string::npos);
}

TEST_CASE("short video run produces filter trace and plots") {
    json cfg{{"experiment", "kalman_video"},
             {"seed", 9},
             {"output_dir", fresh_dir("video_short")},
             {"data", {{"n_sequences", 24}, {"T", 10}}},
             {"model",
              {{"encoder", {{"hidden", {32}}, {"out_dim", 2}}},
               {"predictor", {{"type", "kalman"}, {"hidden_dim", 3}}},
               {"latent", {{"family", "plane_gaussian"}, {"sigma2", 1.0}}},
               {"estimator", {{"kind", "knn"}, {"k", 3}}},
               {"flavor", "temporal_mi"}}},
             {"optim", {{"lr", 2e-3}, {"batch", 8}, {"steps", 12}, {"log_every", 6}}}};
    RunReport r = run_experiment(cfg);
    CHECK(r.status == "ok");
    CHECK(fs::exists(r.output_dir + "/filter_trace.csv"));
    CHECK(fs::exists(r.output_dir + "/plots/eigenspectrum.svg"));
    CHECK(fs::exists(r.output_dir + "/plots/trajectory.svg"));
    CHECK(r.final_metrics.contains("r2_hidden"));

    // filter trace carries the documented columns
    std::string trace = io::read_text_file(r.output_dir + "/filter_trace.csv");
    CHECK(trace.find("t,h0,h1,h2,p_diag0") != std::string::npos);
    CHECK(trace.find("loglik") != std::string::npos);
}

TEST_CASE("stop-gradient flavor trains with the inner predictor loop") {
    json cfg{{"experiment", "kalman_video"},
             {"seed", 11},
             {"output_dir", fresh_dir("video_sg")},
             {"data", {{"n_sequences", 16}, {"T", 8}}},
             {"model",
              {{"encoder", {{"hidden", {24}}, {"out_dim", 2}}},
               {"predictor", {{"type", "kalman"}, {"hidden_dim", 2}}},
               {"latent", {{"family", "plane_gaussian"}}},
               {"estimator", {{"kind", "stopgrad_plugin"}}},
               {"flavor", "temporal_stopgrad"},
               {"track_grad_cosine", true}}},
             {"optim", {{"lr", 2e-3}, {"batch", 8}, {"steps", 10}, {"n_inner", 2}, {"log_every", 5}}}};
    RunReport r = run_experiment(cfg);
    CHECK(r.status == "ok");
    CHECK(fs::exists(r.output_dir + "/grad_cosine.csv"));
    CHECK(r.final_metrics.contains("grad_cosine_last"));
}

TEST_CASE("square experiment probes the surrogate sinusoid") {
    json cfg{{"experiment", "square"},
             {"seed", 13},
             {"output_dir", fresh_dir("square_short")},
             {"data", {{"n_sequences", 16}, {"T", 12}}},
             {"model",
              {{"encoder", {{"hidden", {24}}, {"out_dim", 2}}},
               {"predictor", {{"type", "kalman"}, {"hidden_dim", 3}}},
               {"latent", {{"family", "plane_gaussian"}}},
               {"estimator", {{"kind", "knn"}}},
               {"flavor", "temporal_mi"}}},
             {"optim", {{"batch", 8}, {"steps", 4}, {"log_every", 2}}}};
    RunReport r = run_experiment(cfg);
    CHECK(r.status == "ok");
    CHECK(r.final_metrics.contains("r2_hidden"));
}

TEST_CASE("swirl smoke run reports identifiability metrics") {
    json cfg{{"experiment", "swirl"},
             {"seed", 15},
             {"output_dir", fresh_dir("swirl_short")},
             {"data", {{"n_sequences", 32}, {"T", 8}}},
             {"model",
              {{"encoder", {{"hidden", {32, 32}}, {"out_dim", 2}}},
               {"predictor", {{"type", "rnn"}, {"hidden_dim", 6}, {"head_hidden", {12}}}},
               {"latent", {{"family", "plane_gaussian"}}},
               {"estimator", {{"kind", "knn"}, {"k", 3}, {"discard_top_frac", 0.1}}},
               {"flavor", "temporal_mi"}}},
             {"optim", {{"batch", 8}, {"steps", 6}, {"log_every", 3}}}};
    RunReport r = run_experiment(cfg);
    CHECK(r.status == "ok");
    CHECK(r.final_metrics.contains("r2"));
    CHECK(r.final_metrics.contains("mean_jacobian_rank"));
    CHECK(r.final_metrics["mean_jacobian_rank"].get<double>() <= 2.0);
}

TEST_CASE("invalid config raises a named violation") {
    json cfg = tiny_ica(fresh_dir("bad"));
    cfg["data"]["source_family"] = "cauchy";
    CHECK_THROWS_AS(run_experiment(cfg), Error);
}

}  // TEST_SUITE
