#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cra/rng.hpp"
#include "cra/tensor.hpp"

namespace cra::nn {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

struct Conv2dLayer {
    Tensor weight;  // [out,in,k,k]
    Tensor bias;    // [out]
    Tensor forward(const Tensor& x) const { return conv2d(x, weight, bias); }
};

// He-style scaled uniform init: U(-b, b) with b = sqrt(6 / fan_in), zero bias.
Conv2dLayer make_conv(std::size_t in_ch, std::size_t out_ch, std::size_t ksize,
                      Rng& rng);

struct ModelSpec {
    std::size_t class_count = 5;
    std::size_t image_channels = 3;
    // Feature extractor: 3x3 convs with ReLU between; last width is the
    // feature dimension fed to both the classifier and the discriminator.
    std::vector<std::size_t> feature_widths = {16, 32, 32, 32};
    // Discriminator hidden widths; the output layer is fixed at 2K channels.
    std::vector<std::size_t> disc_widths = {32, 32};
};

struct SegForward {
    Tensor features;  // [B,F,H,W]
    Tensor logits;    // [B,K,H,W]
    Tensor probs;     // [B,K,H,W], softmax over channels
};

// Segmentation network: feature extractor F followed by a 1x1 classifier C.
class SegModel {
public:
    static SegModel create(const ModelSpec& spec, std::uint64_t seed);

    Tensor features(const Tensor& x) const;
    Tensor logits_from_features(const Tensor& f) const;
    SegForward forward(const Tensor& x) const;

    std::vector<NamedParam> params();
    std::vector<NamedParam> feature_params();
    std::vector<NamedParam> classifier_params();

    std::size_t class_count() const { return class_count_; }
    std::size_t feature_dim() const { return feature_layers_.back().weight.shape()[0]; }
    std::size_t image_channels() const { return image_channels_; }

private:
    std::vector<Conv2dLayer> feature_layers_;  // 3x3
    Conv2dLayer classifier_;                   // 1x1
    std::size_t class_count_ = 0;
    std::size_t image_channels_ = 0;
};

// Joint (domain, class) discriminator over feature maps: three conv layers
// with ReLU between and a softmax over 2K output channels. Channels [0,K)
// encode (d=0, class k); channels [K,2K) encode (d=1, class k).
class Discriminator {
public:
    static Discriminator create(const ModelSpec& spec, std::uint64_t seed);

    Tensor forward(const Tensor& f) const;
    std::vector<NamedParam> params();

    std::size_t class_count() const { return class_count_; }

private:
    std::vector<Conv2dLayer> layers_;
    std::size_t class_count_ = 0;
};

// Temporarily drops requires_grad on a parameter set so that a forward pass
// built inside the guard records no edges into those parameters.
class FreezeGuard {
public:
    explicit FreezeGuard(std::vector<NamedParam> params) : params_(std::move(params)) {
        for (auto& p : params_) p.tensor.set_requires_grad(false);
    }
    ~FreezeGuard() {
        for (auto& p : params_) p.tensor.set_requires_grad(true);
    }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    std::vector<NamedParam> params_;
};

// Named-tensor container persisted as a directory of CRAT files plus a
// manifest.json. Saving the result of a load reproduces every byte.
struct Checkpoint {
    std::string stage;  // source | cda | cra
    std::uint64_t iteration = 0;
    std::string config_hash;
    std::vector<NamedParam> tensors;
    std::map<std::string, std::string> meta;  // rng states, optimizer counters

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);
bool checkpoint_exists(const std::filesystem::path& dir);

// Copy checkpoint tensors into model parameters by name (shape-checked).
void load_params(const Checkpoint& ckpt, std::vector<NamedParam> params);

}  // namespace cra::nn
