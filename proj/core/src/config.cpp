#include "cra/config.hpp"

#include <fstream>
#include <set>

#include "cra/error.hpp"
#include "cra/region_split.hpp"

namespace cra::train {

using json = nlohmann::ordered_json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& section) {
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError("config: unknown key '" + key + "' in " + section);
        }
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(std::string("config: bad value for '") + key + "'");
        }
    }
}

}  // namespace

nn::ModelSpec RunConfig::model_for(std::size_t class_count) const {
    nn::ModelSpec spec;
    spec.class_count = class_count;
    spec.feature_widths = feature_widths;
    spec.disc_widths = disc_widths;
    return spec;
}

double RunConfig::resolved_lambda() const {
    if (split.lambda.has_value()) return *split.lambda;
    return region::default_lambda(dataset.class_count);
}

RunConfig config_from_json(const json& j) {
    RunConfig cfg;
    reject_unknown(j,
                   {"dataset", "model", "optim", "budgets", "split", "loss_weights",
                    "seed", "out_dir", "log_interval", "eval_interval",
                    "checkpoint_interval", "disc_trusted_from_source"},
                   "top level");
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        reject_unknown(d,
                       {"class_count", "height", "width", "min_shapes", "max_shapes",
                        "palette_shift", "noise_source", "noise_target",
                        "rare_class_fraction", "seed", "source_count", "target_count",
                        "target_eval_count", "root"},
                       "dataset");
        read(d, "class_count", cfg.dataset.class_count);
        read(d, "height", cfg.dataset.height);
        read(d, "width", cfg.dataset.width);
        read(d, "min_shapes", cfg.dataset.min_shapes);
        read(d, "max_shapes", cfg.dataset.max_shapes);
        read(d, "palette_shift", cfg.dataset.palette_shift);
        read(d, "noise_source", cfg.dataset.noise_source);
        read(d, "noise_target", cfg.dataset.noise_target);
        read(d, "rare_class_fraction", cfg.dataset.rare_class_fraction);
        read(d, "seed", cfg.dataset.seed);
        read(d, "source_count", cfg.source_count);
        read(d, "target_count", cfg.target_count);
        read(d, "target_eval_count", cfg.target_eval_count);
        read(d, "root", cfg.data_root);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        reject_unknown(m, {"feature_widths", "disc_widths"}, "model");
        read(m, "feature_widths", cfg.feature_widths);
        read(m, "disc_widths", cfg.disc_widths);
        if (cfg.feature_widths.empty()) {
            throw ConfigError("config: model.feature_widths must not be empty");
        }
    }
    if (j.contains("optim")) {
        const auto& o = j.at("optim");
        reject_unknown(o,
                       {"sgd_lr", "sgd_momentum", "weight_decay", "poly_power",
                        "adam_lr", "adam_beta1", "adam_beta2", "adam_eps"},
                       "optim");
        read(o, "sgd_lr", cfg.optim.sgd_lr);
        read(o, "sgd_momentum", cfg.optim.sgd_momentum);
        read(o, "weight_decay", cfg.optim.weight_decay);
        read(o, "poly_power", cfg.optim.poly_power);
        read(o, "adam_lr", cfg.optim.adam_lr);
        read(o, "adam_beta1", cfg.optim.adam_beta1);
        read(o, "adam_beta2", cfg.optim.adam_beta2);
        read(o, "adam_eps", cfg.optim.adam_eps);
    }
    if (j.contains("budgets")) {
        const auto& b = j.at("budgets");
        reject_unknown(b, {"source_iters", "cda_iters", "cra_iters", "batch_size"},
                       "budgets");
        read(b, "source_iters", cfg.budgets.source_iters);
        read(b, "cda_iters", cfg.budgets.cda_iters);
        read(b, "cra_iters", cfg.budgets.cra_iters);
        read(b, "batch_size", cfg.budgets.batch_size);
        if (cfg.budgets.batch_size == 0) {
            throw ConfigError("config: budgets.batch_size must be positive");
        }
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        reject_unknown(s, {"lambda", "temperature"}, "split");
        if (s.contains("lambda")) {
            const auto& l = s.at("lambda");
            if (l.is_string()) {
                if (l.get<std::string>() != "auto") {
                    throw ConfigError("config: split.lambda must be a number or \"auto\"");
                }
                cfg.split.lambda.reset();
            } else if (l.is_number()) {
                cfg.split.lambda = l.get<double>();
                if (*cfg.split.lambda <= 0.0) {
                    throw ConfigError("config: split.lambda must be positive");
                }
            } else {
                throw ConfigError("config: split.lambda must be a number or \"auto\"");
            }
        }
        read(s, "temperature", cfg.split.temperature);
        if (cfg.split.temperature <= 0.0) {
            throw ConfigError("config: split.temperature must be positive");
        }
    }
    if (j.contains("loss_weights")) {
        const auto& w = j.at("loss_weights");
        reject_unknown(w, {"cda_adv", "cra_adv", "cra_seg", "entropy_min"},
                       "loss_weights");
        read(w, "cda_adv", cfg.weights.cda_adv);
        read(w, "cra_adv", cfg.weights.cra_adv);
        read(w, "cra_seg", cfg.weights.cra_seg);
        read(w, "entropy_min", cfg.weights.entropy_min);
    }
    read(j, "seed", cfg.seed);
    read(j, "out_dir", cfg.out_dir);
    read(j, "log_interval", cfg.log_interval);
    read(j, "eval_interval", cfg.eval_interval);
    read(j, "checkpoint_interval", cfg.checkpoint_interval);
    read(j, "disc_trusted_from_source", cfg.disc_trusted_from_source);
    if (cfg.log_interval == 0) cfg.log_interval = 1;
    return cfg;
}

json config_to_json(const RunConfig& cfg) {
    json j;
    json d;
    d["class_count"] = cfg.dataset.class_count;
    d["height"] = cfg.dataset.height;
    d["width"] = cfg.dataset.width;
    d["min_shapes"] = cfg.dataset.min_shapes;
    d["max_shapes"] = cfg.dataset.max_shapes;
    d["palette_shift"] = cfg.dataset.palette_shift;
    d["noise_source"] = cfg.dataset.noise_source;
    d["noise_target"] = cfg.dataset.noise_target;
    d["rare_class_fraction"] = cfg.dataset.rare_class_fraction;
    d["seed"] = cfg.dataset.seed;
    d["source_count"] = cfg.source_count;
    d["target_count"] = cfg.target_count;
    d["target_eval_count"] = cfg.target_eval_count;
    d["root"] = cfg.data_root;
    j["dataset"] = std::move(d);
    j["model"] = {{"feature_widths", cfg.feature_widths},
                  {"disc_widths", cfg.disc_widths}};
    j["optim"] = {{"sgd_lr", cfg.optim.sgd_lr},
                  {"sgd_momentum", cfg.optim.sgd_momentum},
                  {"weight_decay", cfg.optim.weight_decay},
                  {"poly_power", cfg.optim.poly_power},
                  {"adam_lr", cfg.optim.adam_lr},
                  {"adam_beta1", cfg.optim.adam_beta1},
                  {"adam_beta2", cfg.optim.adam_beta2},
                  {"adam_eps", cfg.optim.adam_eps}};
    j["budgets"] = {{"source_iters", cfg.budgets.source_iters},
                    {"cda_iters", cfg.budgets.cda_iters},
                    {"cra_iters", cfg.budgets.cra_iters},
                    {"batch_size", cfg.budgets.batch_size}};
    if (cfg.split.lambda.has_value()) {
        j["split"] = {{"lambda", *cfg.split.lambda},
                      {"temperature", cfg.split.temperature}};
    } else {
        j["split"] = {{"lambda", "auto"}, {"temperature", cfg.split.temperature}};
    }
    j["loss_weights"] = {{"cda_adv", cfg.weights.cda_adv},
                         {"cra_adv", cfg.weights.cra_adv},
                         {"cra_seg", cfg.weights.cra_seg},
                         {"entropy_min", cfg.weights.entropy_min}};
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["log_interval"] = cfg.log_interval;
    j["eval_interval"] = cfg.eval_interval;
    j["checkpoint_interval"] = cfg.checkpoint_interval;
    j["disc_trusted_from_source"] = cfg.disc_trusted_from_source;
    return j;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write config file " + path.string());
    os << config_to_json(cfg).dump(2) << '\n';
}

std::string config_hash(const RunConfig& cfg) {
    // The hash identifies the experiment definition. Bookkeeping fields
    // (seed, out_dir, logging cadence) do not change the trained function
    // given a seed, and the seed is tracked separately in every report, so
    // artifacts produced under different seeds of one experiment share a
    // hash and stay combinable (one CDA checkpoint, many training seeds).
    json full = config_to_json(cfg);
    json sem;
    for (const char* key : {"dataset", "model", "optim", "budgets", "split",
                            "loss_weights", "disc_trusted_from_source"}) {
        sem[key] = full.at(key);
    }
    sem["dataset"].erase("root");
    const std::string canon = sem.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace cra::train
