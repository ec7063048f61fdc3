#include "cra/region_split.hpp"

#include <algorithm>
#include <cmath>

#include "cra/error.hpp"
#include "cra/losses.hpp"

namespace cra::region {

double RegionSplit::untrusted_fraction() const {
    const auto v = untrusted.values();
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

Tensor entropy_map(const Tensor& p) {
    if (p.ndim() != 4) {
        throw ShapeError("entropy_map: expected [B,K,H,W], got " + shape_str(p.shape()));
    }
    if (checked()) {
        const auto& s = p.shape();
        const std::size_t K = s[1], HW = s[2] * s[3];
        const auto pv = p.values();
        for (std::size_t b = 0; b < s[0]; ++b)
            for (std::size_t i = 0; i < HW; ++i) {
                double sum = 0.0;
                for (std::size_t k = 0; k < K; ++k)
                    sum += pv[(b * K + k) * HW + i];
                if (std::abs(sum - 1.0) > 1e-6) {
                    throw ValueError(
                        "entropy_map: probabilities are not normalized (pixel sum " +
                        std::to_string(sum) + ")");
                }
            }
    }
    return losses::normalized_entropy(p.detach()).detach();
}

double two_class_entropy(std::size_t class_count) {
    if (class_count < 2) throw ValueError("two_class_entropy: need K >= 2");
    const double k = static_cast<double>(class_count);
    return std::log(2.0) / (k * std::log(k));
}

double default_lambda(std::size_t class_count) {
    if (class_count < 2) throw ValueError("default_lambda: need K >= 2");
    const double split = two_class_entropy(class_count);
    const double scaled = 0.8 * split;
    // Prefer the round 0.01 when it is both a valid threshold (below the
    // two-class entropy) and no stricter than the scaled value; for small K
    // the scaled value is larger, for large K 0.01 stops being valid.
    if (split > 0.01) return std::max(0.01, scaled);
    return scaled;
}

Tensor pseudo_labels(const Tensor& p) {
    if (p.ndim() != 4) {
        throw ShapeError("pseudo_labels: expected [B,K,H,W], got " +
                         shape_str(p.shape()));
    }
    const auto& s = p.shape();
    const std::size_t B = s[0], K = s[1], HW = s[2] * s[3];
    const auto pv = p.values();
    std::vector<double> out(B * HW);
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t base = b * K * HW;
        for (std::size_t i = 0; i < HW; ++i) {
            std::size_t best = 0;
            double best_v = pv[base + i];
            for (std::size_t k = 1; k < K; ++k) {
                const double v = pv[base + k * HW + i];
                if (v > best_v) {
                    best_v = v;
                    best = k;
                }
            }
            out[b * HW + i] = static_cast<double>(best);
        }
    }
    return Tensor::from_data({B, s[2], s[3]}, std::move(out));
}

std::vector<std::uint64_t> count_pseudo_labels(std::span<const Tensor> label_maps,
                                               std::size_t class_count) {
    std::vector<std::uint64_t> counts(class_count, 0);
    for (const auto& t : label_maps) {
        for (double v : t.values()) {
            const auto k = static_cast<std::size_t>(v);
            if (k >= class_count) {
                throw ValueError("count_pseudo_labels: label " + std::to_string(k) +
                                 " out of range for K=" + std::to_string(class_count));
            }
            ++counts[k];
        }
    }
    return counts;
}

std::vector<std::size_t> find_rare_classes(std::span<const std::uint64_t> counts) {
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    if (total == 0) throw ValueError("find_rare_classes: empty dataset");
    // Strict threshold at 1% of all pixels.
    const double threshold = static_cast<double>(total) / 100.0;
    std::vector<std::size_t> rare;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (static_cast<double>(counts[k]) < threshold) rare.push_back(k);
    }
    return rare;
}

std::vector<std::size_t> find_rare_classes(std::span<const Tensor> label_maps,
                                           std::size_t class_count) {
    if (label_maps.empty()) throw ValueError("find_rare_classes: empty dataset");
    const auto counts = count_pseudo_labels(label_maps, class_count);
    return find_rare_classes(counts);
}

RegionSplit split_regions(const Tensor& entropy, const Tensor& pseudo,
                          std::span<const std::size_t> rare_classes, double lambda) {
    if (!(lambda > 0.0)) {
        throw ValueError("split_regions: lambda must be positive, got " +
                         std::to_string(lambda));
    }
    if (entropy.ndim() != 4 || entropy.shape()[1] != 1) {
        throw ShapeError("split_regions: entropy must be [B,1,H,W], got " +
                         shape_str(entropy.shape()));
    }
    if (pseudo.ndim() != 3 || pseudo.shape()[0] != entropy.shape()[0] ||
        pseudo.shape()[1] != entropy.shape()[2] ||
        pseudo.shape()[2] != entropy.shape()[3]) {
        throw ShapeError("split_regions: pseudo-labels " + shape_str(pseudo.shape()) +
                         " are not aligned with entropy " + shape_str(entropy.shape()));
    }
    std::vector<bool> is_rare;
    for (std::size_t k : rare_classes) {
        if (k >= is_rare.size()) is_rare.resize(k + 1, false);
        is_rare[k] = true;
    }
    const auto ev = entropy.values();
    const auto yv = pseudo.values();
    std::vector<double> m(ev.size());
    std::vector<double> mbar(ev.size());
    for (std::size_t i = 0; i < ev.size(); ++i) {
        const auto k = static_cast<std::size_t>(yv[i]);
        const bool rare = k < is_rare.size() && is_rare[k];
        const double eff = rare ? ev[i] * 0.5 : ev[i];
        const bool trusted = eff < lambda;
        m[i] = trusted ? 1.0 : 0.0;
        mbar[i] = trusted ? 0.0 : 1.0;
    }
    RegionSplit out;
    out.entropy = entropy;
    out.trusted = Tensor::from_data(entropy.shape(), std::move(m));
    out.untrusted = Tensor::from_data(entropy.shape(), std::move(mbar));
    out.pseudo_labels = pseudo;
    out.rare_classes.assign(rare_classes.begin(), rare_classes.end());
    std::sort(out.rare_classes.begin(), out.rare_classes.end());
    out.lambda = lambda;
    return out;
}

Tensor one_hot(const Tensor& labels, std::size_t class_count) {
    if (labels.ndim() != 3) {
        throw ShapeError("one_hot: expected [B,H,W] labels, got " +
                         shape_str(labels.shape()));
    }
    const auto& s = labels.shape();
    const std::size_t B = s[0], HW = s[1] * s[2];
    const auto lv = labels.values();
    std::vector<double> out(B * class_count * HW, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < HW; ++i) {
            const auto k = static_cast<std::size_t>(lv[b * HW + i]);
            if (k >= class_count) {
                throw ValueError("one_hot: label " + std::to_string(k) +
                                 " out of range for K=" + std::to_string(class_count));
            }
            out[(b * class_count + k) * HW + i] = 1.0;
        }
    return Tensor::from_data({B, class_count, s[1], s[2]}, std::move(out));
}

}  // namespace cra::region
