#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cra/nn.hpp"
#include "cra/synth_data.hpp"

namespace cra::train {

struct OptimConfig {
    double sgd_lr = 2.5e-4;
    double sgd_momentum = 0.9;
    double weight_decay = 1e-4;
    double poly_power = 0.9;
    double adam_lr = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.99;
    double adam_eps = 1e-8;
};

struct StageBudgets {
    std::size_t source_iters = 2000;
    std::size_t cda_iters = 3000;
    std::size_t cra_iters = 4000;
    std::size_t batch_size = 2;
};

struct SplitConfig {
    std::optional<double> lambda;  // empty = "auto" = default_lambda(K)
    double temperature = 1.0;
};

struct LossWeights {
    double cda_adv = 1.0;
    double cra_adv = 1.0;
    double cra_seg = 1.0;
    double entropy_min = 1.0;
};

// Complete experiment description. Serializes to a single JSON file whose
// parse rejects unknown keys; the canonical serialization is hashed and
// stamped into every artifact the experiment produces.
struct RunConfig {
    data::SceneSpec dataset;
    std::size_t source_count = 200;
    std::size_t target_count = 200;       // target training images
    std::size_t target_eval_count = 50;   // indices after the training range
    std::string data_root = "data";

    nn::ModelSpec model_for(std::size_t class_count) const;
    std::vector<std::size_t> feature_widths = {16, 32, 32, 32};
    std::vector<std::size_t> disc_widths = {32, 32};

    OptimConfig optim;
    StageBudgets budgets;
    SplitConfig split;
    LossWeights weights;

    std::uint64_t seed = 42;
    std::string out_dir = "runs/default";
    std::size_t log_interval = 50;
    std::size_t eval_interval = 0;  // 0 = evaluate only at stage end
    std::size_t checkpoint_interval = 500;
    // Experimental: feed genuine source-domain pixels to the trusted slot of
    // the region discriminator loss instead of trusted target pixels.
    bool disc_trusted_from_source = false;

    double resolved_lambda() const;  // split.lambda or default_lambda(K)
};

RunConfig config_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

// FNV-1a 64 over the canonical serialization, as a 16-digit hex string.
std::string config_hash(const RunConfig& cfg);

}  // namespace cra::train
