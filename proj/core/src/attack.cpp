#include "meatlab/attack.hpp"

#include "meatlab/errors.hpp"

#include <algorithm>

namespace meat {

void AttackConfig::validate() const {
    if (!(epsilon >= 0.0)) throw ArgumentError("attack: epsilon must be >= 0");
    if (!(step_size >= 0.0)) throw ArgumentError("attack: step_size must be >= 0");
    if (steps < 1) throw ArgumentError("attack: steps must be >= 1");
    if (!(input_lo < input_hi)) throw ArgumentError("attack: input_lo must be < input_hi");
}

AttackConfig AttackConfig::image_default() {
    return AttackConfig{8.0 / 255.0, 2.0 / 255.0, 10, true, 0.0, 1.0};
}

Tensor input_gradient(const ModelState& model, const Tensor& x, std::span<const int> labels) {
    const ForwardResult fr = forward(model.spec, model.params, model.bn, x, Mode::eval);
    return backward(model.spec, model.params, fr.cache, labels).input;
}

namespace {

void check_input(const ModelState& model, const Tensor& x, std::span<const int> labels) {
    if (x.rank() != 2 || x.dim(1) != model.spec.input_dim || x.dim(0) != labels.size()) {
        throw DimensionError("attack: input " + shape_string(x.shape()) + " with " + std::to_string(labels.size()) +
                             " labels does not match model input width " + std::to_string(model.spec.input_dim));
    }
}

} // namespace

Tensor fgsm(const ModelState& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg) {
    cfg.validate();
    check_input(model, x, labels);
    const float eps = static_cast<float>(cfg.epsilon);
    if (eps == 0.0f) return x;
    const Tensor g = sign(input_gradient(model, x, labels));
    return clamp(axpy(x, eps, g), static_cast<float>(cfg.input_lo), static_cast<float>(cfg.input_hi));
}

Tensor pgd(const ModelState& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg, Rng& rng) {
    cfg.validate();
    check_input(model, x, labels);
    const float eps = static_cast<float>(cfg.epsilon);
    const float step = static_cast<float>(cfg.step_size);
    const float lo = static_cast<float>(cfg.input_lo);
    const float hi = static_cast<float>(cfg.input_hi);

    Tensor delta = cfg.random_start ? uniform(rng, x.shape(), -eps, eps) : Tensor(x.shape());
    Tensor x_adv = clamp(add(x, delta), lo, hi);
    for (int s = 0; s < cfg.steps; ++s) {
        const Tensor g = input_gradient(model, x_adv, labels);
        for (std::size_t i = 0; i < delta.size(); ++i) {
            const float dir = g[i] > 0.0f ? 1.0f : (g[i] < 0.0f ? -1.0f : 0.0f);
            const float d = std::clamp(delta[i] + step * dir, -eps, eps);
            x_adv[i] = std::clamp(x[i] + d, lo, hi);
            delta[i] = x_adv[i] - x[i];
        }
    }
    return x_adv;
}

} // namespace meat
