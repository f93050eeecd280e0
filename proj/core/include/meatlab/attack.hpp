#pragma once

#include "meatlab/model.hpp"

#include <span>

namespace meat {

/// l-infinity threat model.
struct AttackConfig {
    double epsilon = 0.1;
    double step_size = 0.025;
    int steps = 10;
    bool random_start = true;
    double input_lo = -1.0;
    double input_hi = 1.0;

    void validate() const;
    /// eps 8/255, step 2/255, 10 steps, random start, pixel range [0, 1].
    static AttackConfig image_default();

    bool operator==(const AttackConfig&) const = default;
};

/// d loss_xent / d x with BatchNorm in eval mode.
Tensor input_gradient(const ModelState& model, const Tensor& x, std::span<const int> labels);

/// clamp(x + eps * sign(grad_x), lo, hi). Only cfg.epsilon and the input range are used.
Tensor fgsm(const ModelState& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg);

/// Projected signed-gradient ascent inside the eps-ball intersected with the input range.
/// `rng` is drawn from only when cfg.random_start is set.
Tensor pgd(const ModelState& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg, Rng& rng);

} // namespace meat
