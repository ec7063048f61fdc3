#include "cra/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "cra/error.hpp"

namespace cra::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t class_count)
    : k_(class_count), counts_(class_count * class_count, 0) {
    if (class_count == 0) throw ValueError("ConfusionMatrix: K must be positive");
}

void ConfusionMatrix::accumulate(const Tensor& pred, const Tensor& truth) {
    if (pred.shape() != truth.shape()) {
        throw ShapeError("ConfusionMatrix::accumulate: prediction " +
                         shape_str(pred.shape()) + " and truth " +
                         shape_str(truth.shape()) + " are not aligned");
    }
    const auto pv = pred.values();
    const auto tv = truth.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const auto p = static_cast<std::size_t>(pv[i]);
        const auto t = static_cast<std::size_t>(tv[i]);
        if (p >= k_ || t >= k_) {
            throw ValueError("ConfusionMatrix::accumulate: label out of range for K=" +
                             std::to_string(k_));
        }
        ++counts_[t * k_ + p];
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.k_ != k_) {
        throw ShapeError("ConfusionMatrix::merge: class counts differ");
    }
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::at(std::size_t truth, std::size_t pred) const {
    return counts_[truth * k_ + pred];
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
}

IouResult iou(const ConfusionMatrix& cm) {
    const std::size_t k = cm.class_count();
    IouResult r;
    r.per_class.assign(k, 0.0);
    r.defined.assign(k, false);
    double sum = 0.0;
    std::size_t defined_count = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const std::uint64_t tp = cm.at(c, c);
        std::uint64_t fp = 0, fn = 0;
        for (std::size_t o = 0; o < k; ++o) {
            if (o == c) continue;
            fp += cm.at(o, c);
            fn += cm.at(c, o);
        }
        const std::uint64_t denom = tp + fp + fn;
        if (denom == 0) continue;  // absent from prediction and truth alike
        r.defined[c] = true;
        r.per_class[c] = static_cast<double>(tp) / static_cast<double>(denom);
        sum += r.per_class[c];
        ++defined_count;
    }
    r.miou = defined_count ? sum / static_cast<double>(defined_count) : 0.0;
    return r;
}

nlohmann::ordered_json MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["iterations"] = iterations;
    j["per_class_iou"] = per_class_iou;
    j["class_defined"] = class_defined;
    j["miou"] = miou;
    if (untrusted_fraction >= 0.0) j["untrusted_fraction"] = untrusted_fraction;
    j["wall_clock_sec"] = wall_clock_sec;
    if (!extras.empty()) j["extras"] = extras;
    j["config"] = config_echo;
    return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::ordered_json& j) {
    MetricsReport r;
    r.stage = j.value("stage", "");
    r.seed = j.value("seed", 0ULL);
    r.config_hash = j.value("config_hash", "");
    r.iterations = j.value("iterations", 0ULL);
    r.per_class_iou = j.value("per_class_iou", std::vector<double>{});
    r.class_defined = j.value("class_defined", std::vector<bool>{});
    r.miou = j.value("miou", 0.0);
    r.untrusted_fraction = j.value("untrusted_fraction", -1.0);
    r.wall_clock_sec = j.value("wall_clock_sec", 0.0);
    if (j.contains("extras")) {
        r.extras = j.at("extras").get<std::map<std::string, double>>();
    }
    if (j.contains("config")) r.config_echo = j.at("config");
    return r;
}

std::string render_table(const std::vector<std::pair<std::string, MetricsReport>>& rows,
                         const MetricsReport* baseline,
                         const std::string& baseline_name) {
    std::ostringstream os;
    if (rows.empty()) return "";
    const std::size_t k = rows.front().second.per_class_iou.size();
    std::size_t name_w = 8;
    for (const auto& [name, _] : rows) name_w = std::max(name_w, name.size());
    if (baseline) name_w = std::max(name_w, baseline_name.size());

    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "method";
    for (std::size_t c = 0; c < k; ++c)
        os << std::right << std::setw(8) << ("c" + std::to_string(c));
    os << std::setw(8) << "mIoU";
    if (baseline) os << std::setw(9) << "delta";
    os << '\n';

    auto emit = [&](const std::string& name, const MetricsReport& r, bool with_delta) {
        os << std::left << std::setw(static_cast<int>(name_w) + 2) << name;
        os << std::fixed << std::setprecision(1);
        for (std::size_t c = 0; c < k; ++c) {
            if (c < r.class_defined.size() && !r.class_defined[c]) {
                os << std::right << std::setw(8) << "-";
            } else {
                os << std::right << std::setw(8) << 100.0 * r.per_class_iou[c];
            }
        }
        os << std::right << std::setw(8) << 100.0 * r.miou;
        if (baseline) {
            if (with_delta) {
                const double d = 100.0 * (r.miou - baseline->miou);
                std::ostringstream ds;
                ds << std::fixed << std::setprecision(1) << std::showpos << d;
                os << std::right << std::setw(9) << ds.str();
            } else {
                os << std::right << std::setw(9) << "";
            }
        }
        os << '\n';
    };

    if (baseline) emit(baseline_name, *baseline, false);
    for (const auto& [name, r] : rows) emit(name, r, true);
    return os.str();
}

}  // namespace cra::metrics
