#pragma once

#include "cra/tensor.hpp"

namespace cra::losses {

// Which slot of the joint (domain, class) encoding a label occupies:
// Source also plays the trusted-region role, Target the untrusted one.
enum class DomainSlot { Source, Target };

// Detached, temperature-softened class distribution used as the
// discriminator's supervision signal. Never transmits gradient.
struct DomainEncodingLabel {
    Tensor a;  // [B,K,H,W], per-pixel distribution over K classes
    DomainSlot slot = DomainSlot::Source;
    double temperature = 1.0;
};

// Pixel-summed, batch-averaged cross-entropy between probabilities p and
// one-hot labels y, both [B,K,H,W].
Tensor seg_ce_loss(const Tensor& p, const Tensor& y);

// Cross-entropy restricted to trusted pixels: mask m is [B,1,H,W] in {0,1}.
Tensor masked_ce_loss(const Tensor& p, const Tensor& pseudo_one_hot, const Tensor& m);

// a = softmax(z / T) per pixel, detached. T must be positive.
DomainEncodingLabel domain_encoding(const Tensor& z, double temperature,
                                    DomainSlot slot);

// Adversarial loss pushing untrusted-region features toward the trusted
// block of the discriminator: -sum a_t * m_bar * log P(d=0, c=k).
Tensor cra_adv_loss(const Tensor& disc_probs, const DomainEncodingLabel& a_t,
                    const Tensor& m_bar);

// Discriminator loss separating trusted (d=0) from untrusted (d=1) regions.
Tensor cra_disc_loss(const Tensor& disc_probs_trusted, const DomainEncodingLabel& a_s,
                     const Tensor& m, const Tensor& disc_probs_untrusted,
                     const DomainEncodingLabel& a_t, const Tensor& m_bar);

// Cross-domain analogues: region masks degenerate to all-ones, with domain
// membership taking their place.
Tensor cda_adv_loss(const Tensor& disc_probs_target, const DomainEncodingLabel& a_t);
Tensor cda_disc_loss(const Tensor& disc_probs_source, const DomainEncodingLabel& a_s,
                     const Tensor& disc_probs_target, const DomainEncodingLabel& a_t);

// Entropy-minimization baseline: sum over untrusted pixels of the normalized
// entropy, batch-averaged, differentiable through p.
Tensor entropy_min_loss(const Tensor& p, const Tensor& m_bar);

// Per-pixel normalized entropy -(1/(K log K)) sum_k p log p, differentiable,
// [B,K,H,W] -> [B,1,H,W]. Maximum 1/K at the uniform distribution.
Tensor normalized_entropy(const Tensor& p);

}  // namespace cra::losses
