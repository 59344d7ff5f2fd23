#include "doctest.h"
#include "ldm/config.hpp"

using namespace ldm;

namespace {

json base_swirl() {
    return json{{"experiment", "swirl"},
                {"seed", 1},
                {"data", {{"n_sequences", 10}, {"T", 8}}},
                {"model",
                 {{"encoder", {{"type", "mlp"}, {"hidden", {16}}, {"out_dim", 2}}},
                  {"predictor", {{"type", "rnn"}, {"hidden_dim", 4}, {"head_hidden", {8}}}},
                  {"latent", {{"family", "plane_gaussian"}, {"sigma2", 1.0}}},
                  {"estimator", {{"kind", "knn"}, {"k", 3}, {"discard_top_frac", 0.1}}},
                  {"flavor", "temporal_mi"}}},
                {"optim", {{"lr", 1e-3}, {"batch", 8}, {"steps", 5}}}};
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("valid config passes with no violations") {
    auto v = validate_config(base_swirl());
    CHECK(v.ok());
    CHECK(v.warnings.empty());
}

TEST_CASE("negative variance names the field") {
    json cfg = base_swirl();
    cfg["model"]["latent"]["sigma2"] = -1.0;
    auto v = validate_config(cfg);
    REQUIRE(!v.ok());
    bool found = false;
    for (const auto& viol : v.violations)
        if (viol == "model.latent.sigma2 must be > 0") found = true;
    CHECK(found);
}

TEST_CASE("sphere latent with exact logdet warns but validates") {
    json cfg = base_swirl();
    cfg["model"]["latent"]["family"] = "sphere_vmf";
    cfg["model"]["latent"]["beta"] = 3.0;
    cfg["model"]["encoder"]["output"] = "l2_normalize";
    cfg["model"]["estimator"] = {{"kind", "logdet"}, {"mode", "exact"}};
    auto v = validate_config(cfg);
    CHECK(v.ok());
    CHECK(!v.warnings.empty());
}

TEST_CASE("unknown experiment and unknown keys are violations") {
    json cfg = base_swirl();
    cfg["experiment"] = "imagenet_pretrain";
    auto v = validate_config(cfg);
    REQUIRE(!v.ok());
    CHECK(v.violations.front().find("unknown experiment name") != std::string::npos);

    json cfg2 = base_swirl();
    cfg2["model"]["estimator"]["bandwith"] = 0.5;  // misspelled key fails closed
    auto v2 = validate_config(cfg2);
    REQUIRE(!v2.ok());
    CHECK(v2.violations.front().find("unknown key") != std::string::npos);

    json cfg3 = base_swirl();
    cfg3["momentum"] = 0.9;
    CHECK(!validate_config(cfg3).ok());
}

TEST_CASE("flavor and estimator compatibility") {
    json cfg = base_swirl();
    cfg["model"]["flavor"] = "temporal_stopgrad";
    auto v = validate_config(cfg);  // knn estimator with stopgrad flavor
    CHECK(!v.ok());
    cfg["model"]["estimator"] = {{"kind", "stopgrad_plugin"}};
    CHECK(validate_config(cfg).ok());
}

TEST_CASE("config hash is stable and whitespace-insensitive") {
    json a = base_swirl();
    std::string h1 = config_hash(a);
    json b = json::parse(a.dump(4));  // reformatted
    CHECK(config_hash(b) == h1);
    b["seed"] = 2;
    CHECK(config_hash(b) != h1);
}

}  // TEST_SUITE
