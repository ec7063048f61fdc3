#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cra/tensor.hpp"

namespace cra::region {

// Per-batch trusted/untrusted partition with pseudo-labels.
// Every pixel carries a pseudo-label; untrusted pixels are simply masked
// out of the self-training loss.
struct RegionSplit {
    Tensor entropy;        // [B,1,H,W], normalized entropy before halving
    Tensor trusted;        // m, [B,1,H,W] in {0,1}
    Tensor untrusted;      // 1 - m
    Tensor pseudo_labels;  // [B,H,W] class indices
    std::vector<std::size_t> rare_classes;
    double lambda = 0.0;

    double untrusted_fraction() const;
};

// Detached normalized entropy map, -(1/(K log K)) sum_k p log p with
// 0 log 0 := 0. In checked mode rejects p whose per-pixel sum deviates
// from 1 by more than 1e-6.
Tensor entropy_map(const Tensor& p);

// Entropy of a two-way split: log 2 / (K log K). The threshold must sit
// below this value for trusted pixels to mean "single dominant class".
double two_class_entropy(std::size_t class_count);

// Default threshold: 0.01 whenever that round value is a valid threshold
// (i.e. below the two-class entropy) and not overly strict for small K;
// otherwise 0.8 * two_class_entropy(K). K=19 gives 0.01, K=2 gives 0.4.
double default_lambda(std::size_t class_count);

// Per-pixel argmax with ties broken toward the lowest class index.
// [B,K,H,W] -> [B,H,W].
Tensor pseudo_labels(const Tensor& p);

// Dataset-wide pseudo-label pixel counts per class.
std::vector<std::uint64_t> count_pseudo_labels(std::span<const Tensor> label_maps,
                                               std::size_t class_count);

// Classes whose dataset-wide count is strictly below total/100.
std::vector<std::size_t> find_rare_classes(std::span<const std::uint64_t> counts);
std::vector<std::size_t> find_rare_classes(std::span<const Tensor> label_maps,
                                           std::size_t class_count);

// Applies the threshold with the rare-class halving rule: the effective
// entropy is e/2 where the pseudo-label is rare, and a pixel is trusted
// iff effective entropy < lambda (strict).
RegionSplit split_regions(const Tensor& entropy, const Tensor& pseudo,
                          std::span<const std::size_t> rare_classes, double lambda);

// One-hot expansion of a label map: [B,H,W] -> [B,K,H,W].
Tensor one_hot(const Tensor& labels, std::size_t class_count);

}  // namespace cra::region
