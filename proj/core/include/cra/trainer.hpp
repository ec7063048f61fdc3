#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include "cra/config.hpp"
#include "cra/metrics.hpp"

namespace cra::train {

// Structured log sink: one JSON object per call (the CLI prints one per line).
using LogFn = std::function<void(const nlohmann::ordered_json&)>;
LogFn null_log();

struct StageOptions {
    bool allow_config_mismatch = false;
};

std::filesystem::path checkpoint_dir(const RunConfig& cfg, const std::string& stage);
std::filesystem::path split_dir(const RunConfig& cfg);
std::filesystem::path report_path(const RunConfig& cfg, const std::string& name);

// Generates both domains of the configured dataset (idempotent).
void generate_data(const RunConfig& cfg, const LogFn& log);

// Stage runners. Each persists a checkpoint under out_dir/checkpoints/<stage>,
// writes out_dir/reports/<stage>.json, and returns the target-domain eval
// report. Completed stages are skipped on re-entry; partially trained stages
// resume from the last periodic checkpoint.
metrics::MetricsReport train_source(const RunConfig& cfg, const LogFn& log,
                                    const StageOptions& opt = {});
metrics::MetricsReport train_cda(const RunConfig& cfg, const LogFn& log,
                                 const StageOptions& opt = {});
nlohmann::ordered_json split_stage(const RunConfig& cfg, const LogFn& log,
                                   const StageOptions& opt = {});
metrics::MetricsReport train_cra(const RunConfig& cfg, const LogFn& log,
                                 const StageOptions& opt = {});

// Evaluates a persisted stage checkpoint on the target eval slice.
metrics::MetricsReport evaluate_stage(const RunConfig& cfg, const std::string& stage,
                                      const LogFn& log, const StageOptions& opt = {});

// source -> cda -> split -> cra -> eval; resumable at stage granularity.
nlohmann::ordered_json run_pipeline(const RunConfig& cfg, const LogFn& log,
                                    const StageOptions& opt = {});

// From one CDA checkpoint plus its region split, trains pseudo-labels-only,
// pseudo-labels + entropy minimization, and full region-adversarial variants,
// and reports all three next to the CDA baseline.
nlohmann::ordered_json run_comparison(const RunConfig& cfg, const LogFn& log,
                                      const StageOptions& opt = {});

// Observability for the region-split assumptions: the untrusted-pixel
// fraction and the pseudo-label accuracy on trusted vs untrusted pixels,
// measured against held-out target labels through the evaluation path.
nlohmann::ordered_json assumption_telemetry(const RunConfig& cfg,
                                            const StageOptions& opt = {});

// Finite-difference verification of every loss in the library on seeded
// random inputs; returns max relative error per loss.
std::map<std::string, double> grad_check_losses(std::size_t trials = 10);

}  // namespace cra::train
