#include "cra/losses.hpp"

#include <cmath>

#include "cra/error.hpp"

namespace cra::losses {

namespace {

void require_bkhw(const char* op, const Tensor& t) {
    if (t.ndim() != 4) {
        throw ShapeError(std::string(op) + ": expected [B,K,H,W], got " +
                         shape_str(t.shape()));
    }
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()) + " do not match");
    }
}

void require_mask(const char* op, const Tensor& p, const Tensor& m) {
    require_bkhw(op, p);
    const auto& ps = p.shape();
    if (m.ndim() != 4 || m.shape()[0] != ps[0] || m.shape()[1] != 1 ||
        m.shape()[2] != ps[2] || m.shape()[3] != ps[3]) {
        throw ShapeError(std::string(op) + ": mask must be [" + std::to_string(ps[0]) +
                         ",1," + std::to_string(ps[2]) + "," + std::to_string(ps[3]) +
                         "], got " + shape_str(m.shape()));
    }
    if (checked()) {
        for (double v : m.values()) {
            if (v != 0.0 && v != 1.0) {
                throw ValueError(std::string(op) + ": mask values must be 0 or 1");
            }
        }
    }
}

void require_one_hot(const char* op, const Tensor& y) {
    if (!checked()) return;
    const auto& s = y.shape();
    const std::size_t K = s[1], HW = s[2] * s[3];
    const auto yv = y.values();
    for (std::size_t b = 0; b < s[0]; ++b) {
        const std::size_t base = b * K * HW;
        for (std::size_t i = 0; i < HW; ++i) {
            double sum = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                const double v = yv[base + k * HW + i];
                if (std::abs(v) > 1e-12 && std::abs(v - 1.0) > 1e-12) {
                    throw ValueError(std::string(op) + ": labels are not one-hot");
                }
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-9) {
                throw ValueError(std::string(op) + ": labels are not one-hot");
            }
        }
    }
}

double batch_of(const Tensor& t) { return static_cast<double>(t.shape()[0]); }

// [a;0] (block 0) or [0;a] (block 1) weight tensor over 2K channels, with the
// region mask already multiplied in. Labels and masks are detached, so this is
// plain data preparation.
Tensor slot_weights(const DomainEncodingLabel& label, const Tensor& mask,
                    std::size_t block) {
    const auto& s = label.a.shape();
    const std::size_t B = s[0], K = s[1], HW = s[2] * s[3];
    std::vector<double> out(B * 2 * K * HW, 0.0);
    const auto av = label.a.values();
    const auto mv = mask.values();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k) {
            const double* src = av.data() + (b * K + k) * HW;
            const double* mp = mv.data() + b * HW;
            double* dst = out.data() + (b * 2 * K + block * K + k) * HW;
            for (std::size_t i = 0; i < HW; ++i) dst[i] = src[i] * mp[i];
        }
    return Tensor::from_data({B, 2 * K, s[2], s[3]}, std::move(out));
}

void require_disc_pair(const char* op, const Tensor& disc_probs,
                       const DomainEncodingLabel& label, const Tensor& mask) {
    require_bkhw(op, disc_probs);
    require_bkhw(op, label.a);
    if (disc_probs.shape()[1] != 2 * label.a.shape()[1] ||
        disc_probs.shape()[0] != label.a.shape()[0] ||
        disc_probs.shape()[2] != label.a.shape()[2] ||
        disc_probs.shape()[3] != label.a.shape()[3]) {
        throw ShapeError(std::string(op) + ": discriminator output " +
                         shape_str(disc_probs.shape()) +
                         " does not match 2K channels for encoding " +
                         shape_str(label.a.shape()));
    }
    require_mask(op, label.a, mask);
}

Tensor ones_mask(const Tensor& p) {
    return Tensor::full({p.shape()[0], 1, p.shape()[2], p.shape()[3]}, 1.0);
}

}  // namespace

Tensor seg_ce_loss(const Tensor& p, const Tensor& y) {
    require_bkhw("seg_ce_loss", p);
    require_same("seg_ce_loss", p, y);
    require_one_hot("seg_ce_loss", y);
    return scale(sum(mul(y, clamped_log(p))), -1.0 / batch_of(p));
}

Tensor masked_ce_loss(const Tensor& p, const Tensor& pseudo_one_hot, const Tensor& m) {
    require_bkhw("masked_ce_loss", p);
    require_same("masked_ce_loss", p, pseudo_one_hot);
    require_mask("masked_ce_loss", p, m);
    require_one_hot("masked_ce_loss", pseudo_one_hot);
    return scale(sum(mul(mul(pseudo_one_hot, m), clamped_log(p))), -1.0 / batch_of(p));
}

DomainEncodingLabel domain_encoding(const Tensor& z, double temperature,
                                    DomainSlot slot) {
    require_bkhw("domain_encoding", z);
    if (!(temperature > 0.0)) {
        throw ValueError("domain_encoding: temperature must be positive, got " +
                         std::to_string(temperature));
    }
    DomainEncodingLabel label;
    label.a = softmax_channels(scale(z.detach(), 1.0 / temperature)).detach();
    label.slot = slot;
    label.temperature = temperature;
    return label;
}

Tensor cra_adv_loss(const Tensor& disc_probs, const DomainEncodingLabel& a_t,
                    const Tensor& m_bar) {
    if (a_t.slot != DomainSlot::Target) {
        throw ValueError("cra_adv_loss: encoding must carry the target slot");
    }
    require_disc_pair("cra_adv_loss", disc_probs, a_t, m_bar);
    // Untrusted pixels supervised toward the trusted block (d=0).
    const Tensor w = slot_weights(a_t, m_bar, 0);
    return scale(sum(mul(w, clamped_log(disc_probs))), -1.0 / batch_of(disc_probs));
}

Tensor cra_disc_loss(const Tensor& disc_probs_trusted, const DomainEncodingLabel& a_s,
                     const Tensor& m, const Tensor& disc_probs_untrusted,
                     const DomainEncodingLabel& a_t, const Tensor& m_bar) {
    if (a_s.slot != DomainSlot::Source) {
        throw ValueError("cra_disc_loss: first encoding must carry the source slot");
    }
    if (a_t.slot != DomainSlot::Target) {
        throw ValueError("cra_disc_loss: second encoding must carry the target slot");
    }
    require_disc_pair("cra_disc_loss", disc_probs_trusted, a_s, m);
    require_disc_pair("cra_disc_loss", disc_probs_untrusted, a_t, m_bar);
    const Tensor w_trusted = slot_weights(a_s, m, 0);
    const Tensor w_untrusted = slot_weights(a_t, m_bar, 1);
    Tensor t0 = scale(sum(mul(w_trusted, clamped_log(disc_probs_trusted))),
                      -1.0 / batch_of(disc_probs_trusted));
    Tensor t1 = scale(sum(mul(w_untrusted, clamped_log(disc_probs_untrusted))),
                      -1.0 / batch_of(disc_probs_untrusted));
    return add(t0, t1);
}

Tensor cda_adv_loss(const Tensor& disc_probs_target, const DomainEncodingLabel& a_t) {
    if (a_t.slot != DomainSlot::Target) {
        throw ValueError("cda_adv_loss: encoding must carry the target slot");
    }
    return cra_adv_loss(disc_probs_target, a_t, ones_mask(a_t.a));
}

Tensor cda_disc_loss(const Tensor& disc_probs_source, const DomainEncodingLabel& a_s,
                     const Tensor& disc_probs_target, const DomainEncodingLabel& a_t) {
    return cra_disc_loss(disc_probs_source, a_s, ones_mask(a_s.a), disc_probs_target,
                         a_t, ones_mask(a_t.a));
}

Tensor normalized_entropy(const Tensor& p) {
    require_bkhw("normalized_entropy", p);
    const double k = static_cast<double>(p.shape()[1]);
    const double norm = -1.0 / (k * std::log(k));
    return scale(sum_channels(mul(p, clamped_log(p))), norm);
}

Tensor entropy_min_loss(const Tensor& p, const Tensor& m_bar) {
    require_mask("entropy_min_loss", p, m_bar);
    return scale(sum(mul(normalized_entropy(p), m_bar)), 1.0 / batch_of(p));
}

}  // namespace cra::losses
