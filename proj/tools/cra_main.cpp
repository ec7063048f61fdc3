// Command-line entry point for the cross-region adaptation lab.
// JSON log lines go to stdout; human-readable tables to stderr.
// Exit codes: 0 success, 2 config error, 3 missing prerequisite,
// 4 numerical failure, 5 I/O error, 1 anything else.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cra/error.hpp"
#include "cra/metrics.hpp"
#include "cra/trainer.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace cra;

constexpr int kExitConfig = 2;
constexpr int kExitPrerequisite = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitIo = 5;

void emit(const json& j) { std::cout << j.dump() << '\n' << std::flush; }

train::LogFn stdout_log() {
    return [](const json& j) { emit(j); };
}

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> data_root;
    bool allow_config_mismatch = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
    auto* c = cmd->add_option("--config", args.config_path, "experiment config JSON");
    if (config_required) c->required();
    cmd->add_option("--seed", args.seed, "override config seed");
    cmd->add_option("--out-dir", args.out_dir, "override config out_dir");
    cmd->add_option("--data-root", args.data_root, "override config dataset root");
    cmd->add_flag("--allow-config-mismatch", args.allow_config_mismatch,
                  "proceed when artifact config hashes differ from the current config");
}

train::RunConfig resolve_config(const CommonArgs& args) {
    train::RunConfig cfg = train::load_config(args.config_path);
    if (args.seed) cfg.seed = *args.seed;
    if (args.out_dir) cfg.out_dir = *args.out_dir;
    if (args.data_root) cfg.data_root = *args.data_root;
    return cfg;
}

void print_report_table(const metrics::MetricsReport& rep,
                        const metrics::MetricsReport* baseline,
                        const std::string& baseline_name) {
    std::cerr << metrics::render_table({{rep.stage, rep}}, baseline, baseline_name);
}

int run_eval(const CommonArgs& args, const std::string& stage,
             const std::string& against) {
    const auto cfg = resolve_config(args);
    const train::StageOptions opt{args.allow_config_mismatch};
    auto rep = train::evaluate_stage(cfg, stage, stdout_log(), opt);
    emit(rep.to_json());
    if (!against.empty()) {
        std::ifstream is(against);
        if (!is) throw IoError("eval: cannot open baseline report " + against);
        auto baseline = metrics::MetricsReport::from_json(json::parse(is));
        print_report_table(rep, &baseline, baseline.stage.empty()
                                               ? std::string("baseline")
                                               : baseline.stage);
    } else {
        print_report_table(rep, nullptr, "");
    }
    return 0;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"cross-region adaptation lab: synthetic-domain UDA for "
                 "semantic segmentation"};
    app.require_subcommand(1);

    CommonArgs gen, src, cda, split, cra_args, eval_args, pipe, cmp;
    std::string eval_stage = "cra";
    std::string eval_against;

    auto* c_gen = app.add_subcommand("gen-data", "generate the synthetic domains");
    add_common(c_gen, gen);
    auto* c_src = app.add_subcommand("train-source",
                                     "supervised training on the source domain");
    add_common(c_src, src);
    auto* c_cda = app.add_subcommand(
        "train-cda", "adversarial cross-domain feature alignment");
    add_common(c_cda, cda);
    auto* c_split = app.add_subcommand(
        "split-regions", "entropy-based trusted/untrusted split with pseudo-labels");
    add_common(c_split, split);
    auto* c_cra = app.add_subcommand(
        "train-cra", "cross-region adaptation: self-training plus region alignment");
    add_common(c_cra, cra_args);
    auto* c_eval = app.add_subcommand("eval", "evaluate a stage checkpoint");
    add_common(c_eval, eval_args);
    c_eval->add_option("--stage", eval_stage, "checkpoint to evaluate")
        ->check(CLI::IsMember({"source", "cda", "cra"}));
    c_eval->add_option("--against", eval_against,
                       "baseline report JSON for the delta column");
    auto* c_pipe = app.add_subcommand("pipeline", "run all stages end to end");
    add_common(c_pipe, pipe);
    auto* c_cmp = app.add_subcommand(
        "compare-baselines",
        "pseudo-labels-only vs entropy minimization vs full region adaptation");
    add_common(c_cmp, cmp);
    auto* c_grad = app.add_subcommand("grad-check",
                                      "finite-difference checks for every loss");

    CLI11_PARSE(app, argc, argv);

    if (c_gen->parsed()) {
        const auto cfg = resolve_config(gen);
        train::generate_data(cfg, stdout_log());
        return 0;
    }
    if (c_src->parsed()) {
        const auto cfg = resolve_config(src);
        const auto rep = train::train_source(cfg, stdout_log(),
                                             {src.allow_config_mismatch});
        emit(rep.to_json());
        print_report_table(rep, nullptr, "");
        return 0;
    }
    if (c_cda->parsed()) {
        const auto cfg = resolve_config(cda);
        const auto rep =
            train::train_cda(cfg, stdout_log(), {cda.allow_config_mismatch});
        emit(rep.to_json());
        print_report_table(rep, nullptr, "");
        return 0;
    }
    if (c_split->parsed()) {
        const auto cfg = resolve_config(split);
        const train::StageOptions opt{split.allow_config_mismatch};
        auto summary = train::split_stage(cfg, stdout_log(), opt);
        emit(summary);
        emit(train::assumption_telemetry(cfg, opt));
        return 0;
    }
    if (c_cra->parsed()) {
        const auto cfg = resolve_config(cra_args);
        const auto rep =
            train::train_cra(cfg, stdout_log(), {cra_args.allow_config_mismatch});
        emit(rep.to_json());
        print_report_table(rep, nullptr, "");
        return 0;
    }
    if (c_eval->parsed()) return run_eval(eval_args, eval_stage, eval_against);
    if (c_pipe->parsed()) {
        const auto cfg = resolve_config(pipe);
        auto rep = train::run_pipeline(cfg, stdout_log(),
                                       {pipe.allow_config_mismatch});
        emit(rep);
        const auto source =
            metrics::MetricsReport::from_json(rep.at("stages").at("source"));
        const auto cda_rep =
            metrics::MetricsReport::from_json(rep.at("stages").at("cda"));
        const auto cra_rep =
            metrics::MetricsReport::from_json(rep.at("stages").at("cra"));
        std::cerr << metrics::render_table({{"cda", cda_rep}, {"cda+cra", cra_rep}},
                                           &source, "source_only");
        return 0;
    }
    if (c_cmp->parsed()) {
        const auto cfg = resolve_config(cmp);
        auto rep =
            train::run_comparison(cfg, stdout_log(), {cmp.allow_config_mismatch});
        emit(rep);
        const auto base =
            metrics::MetricsReport::from_json(rep.at("baseline_cda"));
        std::vector<std::pair<std::string, metrics::MetricsReport>> rows;
        for (const char* name : {"pseudo_only", "entropy_min", "cra"}) {
            rows.emplace_back(name, metrics::MetricsReport::from_json(
                                        rep.at("variants").at(name)));
        }
        std::cerr << metrics::render_table(rows, &base, "cda");
        return 0;
    }
    if (c_grad->parsed()) {
        const auto results = train::grad_check_losses(10);
        bool ok = true;
        for (const auto& [name, err] : results) {
            emit({{"loss", name}, {"max_rel_error", err}, {"pass", err < 1e-4}});
            ok = ok && err < 1e-4;
        }
        if (!ok) {
            emit({{"event", "error"},
                  {"type", "numerical"},
                  {"message", "gradient checks above tolerance 1e-4"}});
            return kExitNumerical;
        }
        return 0;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        emit({{"event", "error"}, {"type", "config"}, {"message", e.what()}});
        return kExitConfig;
    } catch (const PrerequisiteError& e) {
        emit({{"event", "error"}, {"type", "prerequisite"}, {"message", e.what()}});
        return kExitPrerequisite;
    } catch (const NumericalError& e) {
        emit({{"event", "error"}, {"type", "numerical"}, {"message", e.what()}});
        return kExitNumerical;
    } catch (const IoError& e) {
        emit({{"event", "error"}, {"type", "io"}, {"message", e.what()}});
        return kExitIo;
    } catch (const std::exception& e) {
        emit({{"event", "error"}, {"type", "internal"}, {"message", e.what()}});
        return 1;
    }
}
