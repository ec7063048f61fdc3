#include "cra/optim.hpp"

#include <cmath>

#include "cra/error.hpp"

namespace cra::train {

double PolySchedule::lr_at(std::size_t t) const {
    if (max_iters == 0) throw ValueError("PolySchedule: max_iters must be positive");
    if (t > max_iters) {
        throw ValueError("PolySchedule: t=" + std::to_string(t) +
                         " exceeds max_iters=" + std::to_string(max_iters));
    }
    const double frac =
        1.0 - static_cast<double>(t) / static_cast<double>(max_iters);
    return base_lr * std::pow(frac, power);
}

void SgdMomentum::step(std::span<nn::NamedParam> params, double lr) {
    for (auto& p : params) {
        auto theta = p.tensor.values_mut();
        auto& vel = velocity_[p.name];
        if (vel.empty()) vel.assign(theta.size(), 0.0);
        const bool has_g = p.tensor.has_grad();
        const auto g = has_g ? p.tensor.grad() : std::span<const double>{};
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = has_g ? g[i] : 0.0;
            vel[i] = momentum_ * vel[i] + gi + weight_decay_ * theta[i];
            theta[i] -= lr * vel[i];
        }
    }
}

void SgdMomentum::export_state(std::vector<nn::NamedParam>& out,
                               const std::string& prefix) const {
    for (const auto& [name, vel] : velocity_) {
        out.push_back({prefix + "." + name,
                       Tensor::from_data({vel.size()}, vel)});
    }
}

void SgdMomentum::import_state(const nn::Checkpoint& ckpt, const std::string& prefix) {
    velocity_.clear();
    const std::string p = prefix + ".";
    for (const auto& t : ckpt.tensors) {
        if (t.name.rfind(p, 0) == 0) {
            const auto v = t.tensor.values();
            velocity_[t.name.substr(p.size())] = {v.begin(), v.end()};
        }
    }
}

void Adam::step(std::span<nn::NamedParam> params, double lr) {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (auto& p : params) {
        auto theta = p.tensor.values_mut();
        auto& m = m_[p.name];
        auto& v = v_[p.name];
        if (m.empty()) m.assign(theta.size(), 0.0);
        if (v.empty()) v.assign(theta.size(), 0.0);
        const bool has_g = p.tensor.has_grad();
        const auto g = has_g ? p.tensor.grad() : std::span<const double>{};
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = has_g ? g[i] : 0.0;
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::export_state(std::vector<nn::NamedParam>& out,
                        const std::string& prefix) const {
    for (const auto& [name, m] : m_) {
        out.push_back({prefix + ".m." + name, Tensor::from_data({m.size()}, m)});
    }
    for (const auto& [name, v] : v_) {
        out.push_back({prefix + ".v." + name, Tensor::from_data({v.size()}, v)});
    }
    out.push_back({prefix + ".step",
                   Tensor::from_data({1}, {static_cast<double>(step_count_)})});
}

void Adam::import_state(const nn::Checkpoint& ckpt, const std::string& prefix) {
    m_.clear();
    v_.clear();
    step_count_ = 0;
    const std::string pm = prefix + ".m.";
    const std::string pv = prefix + ".v.";
    const std::string ps = prefix + ".step";
    for (const auto& t : ckpt.tensors) {
        const auto vals = t.tensor.values();
        if (t.name.rfind(pm, 0) == 0) {
            m_[t.name.substr(pm.size())] = {vals.begin(), vals.end()};
        } else if (t.name.rfind(pv, 0) == 0) {
            v_[t.name.substr(pv.size())] = {vals.begin(), vals.end()};
        } else if (t.name == ps) {
            step_count_ = static_cast<std::uint64_t>(vals[0]);
        }
    }
}

}  // namespace cra::train
