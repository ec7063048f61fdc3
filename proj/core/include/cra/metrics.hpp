#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cra/tensor.hpp"

namespace cra::metrics {

// K x K pixel counts; rows are ground truth, columns are predictions.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t class_count);

    // pred/truth are [B,H,W] or [H,W] class-index maps.
    void accumulate(const Tensor& pred, const Tensor& truth);
    void merge(const ConfusionMatrix& other);

    std::size_t class_count() const { return k_; }
    std::uint64_t at(std::size_t truth, std::size_t pred) const;
    std::uint64_t total() const;

private:
    std::size_t k_;
    std::vector<std::uint64_t> counts_;
};

// IoU_k = TP / (TP + FP + FN). Classes absent from both prediction and truth
// are undefined and excluded from the mean; predicted-but-absent classes
// score 0. IoU values are fractions in [0, 1].
struct IouResult {
    std::vector<double> per_class;  // 0 for undefined entries
    std::vector<bool> defined;
    double miou = 0.0;
};

IouResult iou(const ConfusionMatrix& cm);

struct MetricsReport {
    std::string stage;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::uint64_t iterations = 0;
    std::vector<double> per_class_iou;
    std::vector<bool> class_defined;
    double miou = 0.0;                 // fraction; tables print percent
    double untrusted_fraction = -1.0;  // < 0 when not applicable
    double wall_clock_sec = 0.0;
    std::map<std::string, double> extras;  // stage-specific telemetry
    nlohmann::ordered_json config_echo;

    nlohmann::ordered_json to_json() const;
    static MetricsReport from_json(const nlohmann::ordered_json& j);
};

// Aligned per-class table, one row per report, optionally with a delta
// column against a named baseline. Values printed as percent.
std::string render_table(const std::vector<std::pair<std::string, MetricsReport>>& rows,
                         const MetricsReport* baseline = nullptr,
                         const std::string& baseline_name = "");

}  // namespace cra::metrics
