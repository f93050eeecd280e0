#include <doctest.h>

#include "meatlab/analysis.hpp"
#include "meatlab/attack.hpp"
#include "meatlab/dataset.hpp"
#include "meatlab/errors.hpp"
#include "meatlab/trainer.hpp"

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"

#include <cmath>
#include <random>

using namespace meat;

namespace {

ModelSpec linear_spec(std::size_t in, std::size_t classes) {
    ModelSpec s;
    s.input_dim = in;
    s.num_classes = classes;
    s.layers = {{LayerKind::dense, classes}};
    return s;
}

ModelState random_model(const ModelSpec& spec, std::uint64_t seed) {
    auto [p, bn] = oracle::random_network(spec, seed);
    return {spec, p, bn};
}

AttackConfig wide_range(double eps) {
    AttackConfig cfg;
    cfg.epsilon = eps;
    cfg.step_size = eps / 4;
    cfg.input_lo = -100;
    cfg.input_hi = 100;
    return cfg;
}

double loss_of(const ModelState& m, const Tensor& x, std::span<const int> y) { return loss_xent(predict(m, x), y); }

} // namespace

TEST_CASE("fgsm with zero radius is the identity") {
    const ModelState m = random_model(ModelSpec::mlp(2, {8}, 3), 1);
    std::mt19937_64 gen(1);
    const Tensor x = oracle::random_tensor(gen, {10, 2}, 0.3);
    const auto y = oracle::random_labels(gen, 10, 3);
    CHECK(bit_equal(fgsm(m, x, y, wide_range(0.0)), x));
}

TEST_CASE("fgsm direction matches a three-point search on a 1-D logistic model") {
    // two logits over one feature: loss depends on x only through (w1 - w0) * x
    std::mt19937_64 gen(17);
    std::normal_distribution<double> nd(0.0, 1.0);
    const ModelSpec s = linear_spec(1, 2);
    const double eps = 0.05;
    for (int trial = 0; trial < 200; ++trial) {
        NamedParams p({{"dense0", "weight", Tensor::matrix({{static_cast<float>(nd(gen))}, {static_cast<float>(nd(gen))}})},
                       {"dense0", "bias", Tensor::vector({static_cast<float>(nd(gen)), static_cast<float>(nd(gen))})}});
        const ModelState m{s, p, BnStats{}};
        const Tensor x = Tensor::matrix({{static_cast<float>(nd(gen))}});
        const std::vector<int> y{trial % 2};
        const Tensor adv = fgsm(m, x, y, wide_range(eps));

        int best_dir = 0;
        double best = loss_of(m, x, y);
        for (int dir : {-1, 1}) {
            const Tensor probe = Tensor::matrix({{x[0] + static_cast<float>(dir * eps)}});
            const double l = loss_of(m, probe, y);
            if (l > best) {
                best = l;
                best_dir = dir;
            }
        }
        const double moved = adv[0] - x[0];
        const int fgsm_dir = moved > 0 ? 1 : (moved < 0 ? -1 : 0);
        CHECK(fgsm_dir == best_dir);
    }
}

TEST_CASE("fgsm never lowers the loss of a linear model") {
    const ModelSpec s = linear_spec(5, 4);
    std::mt19937_64 gen(23);
    for (int trial = 0; trial < 50; ++trial) {
        const ModelState m = random_model(s, 100 + trial);
        const Tensor x = oracle::random_tensor(gen, {8, 5});
        const auto y = oracle::random_labels(gen, 8, 4);
        // per-example loss is convex in x, so the signed step cannot decrease it at first order;
        // check the mean loss with a small radius
        const Tensor adv = fgsm(m, x, y, wide_range(0.01));
        CHECK(loss_of(m, adv, y) >= loss_of(m, x, y));
    }
}

TEST_CASE("pgd with one full step and no random start equals fgsm bit for bit") {
    std::mt19937_64 gen(31);
    for (int trial = 0; trial < 50; ++trial) {
        const ModelState m = random_model(ModelSpec::mlp(3, {10, 10}, 4), trial);
        const Tensor x = clamp(oracle::random_tensor(gen, {6, 3}, 0.4), -1.0f, 1.0f);
        const auto y = oracle::random_labels(gen, 6, 4);
        AttackConfig cfg;
        cfg.epsilon = 0.1 + 0.01 * trial;
        cfg.step_size = cfg.epsilon;
        cfg.steps = 1;
        cfg.random_start = false;
        Rng rng(trial);
        CHECK(bit_equal(pgd(m, x, y, cfg, rng), fgsm(m, x, y, cfg)));
    }
}

TEST_CASE("pgd respects the ball and the input range") {
    std::mt19937_64 gen(41);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const ModelState m = random_model(ModelSpec::mlp(4, {8}, 3), trial);
        AttackConfig cfg;
        cfg.epsilon = 0.5 * u(gen);
        cfg.step_size = cfg.epsilon * 2 * u(gen);
        cfg.steps = 1 + trial % 7;
        cfg.random_start = trial % 2 == 0;
        cfg.input_lo = -1.0;
        cfg.input_hi = 1.0;
        Tensor x = oracle::random_tensor(gen, {5, 4}, 0.6);
        x = clamp(x, -1.0f, 1.0f);
        const auto y = oracle::random_labels(gen, 5, 3);
        Rng rng(trial);
        const Tensor adv = pgd(m, x, y, cfg, rng);
        for (std::size_t i = 0; i < x.size(); ++i) {
            REQUIRE(std::abs(adv[i] - x[i]) <= cfg.epsilon + 1e-6);
            REQUIRE(adv[i] >= cfg.input_lo);
            REQUIRE(adv[i] <= cfg.input_hi);
        }
    }
}

TEST_CASE("pgd without random start is a pure function of its inputs") {
    const ModelState m = random_model(ModelSpec::mlp(2, {8, 8}, 3), 3);
    std::mt19937_64 gen(3);
    const Tensor x = oracle::random_tensor(gen, {7, 2}, 0.3);
    const auto y = oracle::random_labels(gen, 7, 3);
    AttackConfig cfg;
    cfg.random_start = false;
    Rng a(1), b(999);
    CHECK(bit_equal(pgd(m, x, y, cfg, a), pgd(m, x, y, cfg, b)));
    CHECK(a.counter() == 0);

    cfg.random_start = true;
    Rng c(5), d(5);
    CHECK(bit_equal(pgd(m, x, y, cfg, c), pgd(m, x, y, cfg, d)));
}

TEST_CASE("attacks leave the batchnorm statistics untouched") {
    const ModelState m = random_model(ModelSpec::mlp(2, {8}, 3), 4);
    const BnStats before = m.bn;
    std::mt19937_64 gen(4);
    const Tensor x = oracle::random_tensor(gen, {6, 2}, 0.3);
    const auto y = oracle::random_labels(gen, 6, 3);
    Rng rng(0);
    (void)pgd(m, x, y, AttackConfig{}, rng);
    CHECK(bit_equal(m.bn, before));
}

TEST_CASE("input_gradient uses eval-mode batchnorm") {
    const ModelSpec s = ModelSpec::mlp(2, {6}, 3);
    const ModelState m = random_model(s, 6);
    std::mt19937_64 gen(6);
    const Tensor x = oracle::random_tensor(gen, {4, 2});
    const auto y = oracle::random_labels(gen, 4, 3);
    const auto fwd = forward(s, m.params, m.bn, x, Mode::eval);
    const auto g = backward(s, m.params, fwd.cache, y);
    CHECK(bit_equal(input_gradient(m, x, y), g.input));
}

TEST_CASE("attack argument errors") {
    const ModelState m = random_model(ModelSpec::mlp(2, {4}, 3), 0);
    const Tensor x({3, 2});
    Rng rng(0);
    CHECK_THROWS_AS(fgsm(m, x, std::vector<int>{0, 1}, AttackConfig{}), DimensionError);
    CHECK_THROWS_AS(pgd(m, Tensor({3, 5}), std::vector<int>{0, 1, 2}, AttackConfig{}, rng), DimensionError);
    AttackConfig bad;
    bad.steps = 0;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    bad = AttackConfig{};
    bad.input_lo = 1;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    const AttackConfig img = AttackConfig::image_default();
    CHECK(img.epsilon == doctest::Approx(8.0 / 255));
    CHECK(img.step_size == doctest::Approx(2.0 / 255));
    CHECK(img.steps == 10);
    CHECK(img.random_start);
}

TEST_CASE("pgd accuracy <= fgsm accuracy <= clean accuracy on trained toy models") {
    double clean = 0, one_step = 0, multi_step = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const DatasetPair data = make_synthetic(SyntheticKind::gaussians, 100, 3, 0.4, seed);
        TrainConfig cfg;
        cfg.total_epochs = 15;
        cfg.seed = seed;
        cfg.attack.epsilon = 0.0;
        cfg.attack.step_size = 0.0;
        cfg.attack.input_lo = cfg.eval_attack.input_lo = data.train.lo;
        cfg.attack.input_hi = cfg.eval_attack.input_hi = data.train.hi;
        const auto result = adversarial_train(ModelSpec::mlp(2, {16}, 3), cfg, data);
        const ModelState m{ModelSpec::mlp(2, {16}, 3), result.final_state.params, result.final_state.bn};

        AttackConfig fg = cfg.attack;
        fg.epsilon = 0.3;
        fg.step_size = 0.3;
        fg.steps = 1;
        fg.random_start = false;
        AttackConfig pg = fg;
        pg.step_size = 0.075;
        pg.steps = 10;
        Rng rng(seed);
        clean += accuracy(m, data.test, nullptr, rng);
        one_step += accuracy(m, data.test, &fg, rng);
        multi_step += accuracy(m, data.test, &pg, rng);
    }
    CHECK(clean > 4.0); // the toy models do converge
    CHECK(one_step <= clean);
    CHECK(multi_step <= one_step);
}
