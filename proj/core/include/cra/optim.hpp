#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cra/nn.hpp"

namespace cra::train {

// lr(t) = base * (1 - t/max_iters)^power; nonincreasing, zero at max_iters.
struct PolySchedule {
    double base_lr = 2.5e-4;
    double power = 0.9;
    std::size_t max_iters = 1;

    double lr_at(std::size_t t) const;
};

// Classical momentum SGD with coupled weight decay:
// v <- mu * v + g + wd * theta;  theta <- theta - lr * v.
// A parameter with no gradient buffer is treated as g = 0, so stepping it
// still applies decay and any residual momentum.
class SgdMomentum {
public:
    explicit SgdMomentum(double momentum = 0.9, double weight_decay = 1e-4)
        : momentum_(momentum), weight_decay_(weight_decay) {}

    void step(std::span<nn::NamedParam> params, double lr);

    double momentum() const { return momentum_; }
    double weight_decay() const { return weight_decay_; }

    void export_state(std::vector<nn::NamedParam>& out, const std::string& prefix) const;
    void import_state(const nn::Checkpoint& ckpt, const std::string& prefix);

private:
    double momentum_;
    double weight_decay_;
    std::map<std::string, std::vector<double>> velocity_;
};

// Adam with bias-corrected moments.
class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.99, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::span<nn::NamedParam> params, double lr);

    std::uint64_t step_count() const { return step_count_; }

    void export_state(std::vector<nn::NamedParam>& out, const std::string& prefix) const;
    void import_state(const nn::Checkpoint& ckpt, const std::string& prefix);

private:
    double beta1_;
    double beta2_;
    double eps_;
    std::uint64_t step_count_ = 0;
    std::map<std::string, std::vector<double>> m_;
    std::map<std::string, std::vector<double>> v_;
};

}  // namespace cra::train
