#include <doctest.h>

#include "meatlab/dataset.hpp"
#include "meatlab/errors.hpp"
#include "meatlab/trainer.hpp"

#include <cmath>

using namespace meat;

namespace {

NamedParams scalar_params(float v) { return NamedParams({{"p", "theta", Tensor::vector({v})}}); }

TrainConfig quick_config(std::uint64_t seed, int epochs) {
    TrainConfig cfg;
    cfg.total_epochs = epochs;
    cfg.seed = seed;
    cfg.batch_size = 32;
    cfg.attack.steps = 3;
    cfg.eval_attack.steps = 3;
    return cfg;
}

struct Recorder : TrainSink {
    std::vector<int> checkpoint_epochs;
    std::vector<int> record_epochs;
    void on_checkpoint(const Checkpoint& c) override { checkpoint_epochs.push_back(c.epoch); }
    void on_epoch_end(const MetricsRecord& r, const Checkpoint& live) override {
        CHECK(live.epoch == r.epoch);
        record_epochs.push_back(r.epoch);
    }
};

} // namespace

TEST_CASE("step learning-rate schedule over 120 epochs") {
    TrainConfig cfg;
    cfg.total_epochs = 120;
    CHECK(lr_at(0, cfg) == 0.1);
    CHECK(lr_at(39, cfg) == 0.1);
    CHECK(lr_at(40, cfg) == 0.01);
    CHECK(lr_at(79, cfg) == 0.01);
    CHECK(lr_at(80, cfg) == 0.001);
    CHECK(lr_at(119, cfg) == 0.001);
    CHECK_THROWS_AS(lr_at(120, cfg), ArgumentError);
    CHECK_THROWS_AS(lr_at(-1, cfg), ArgumentError);
}

TEST_CASE("the 60-epoch benchmark decays at 20 and 40") {
    TrainConfig cfg;
    CHECK(cfg.total_epochs == 60);
    CHECK(decay_epoch(cfg, 0) == 20);
    CHECK(decay_epoch(cfg, 1) == 40);
}

TEST_CASE("sgd_step one-step arithmetic") {
    const auto r = sgd_step(scalar_params(1.0f), scalar_params(0.5f), OptState::zeros_like(scalar_params(0)), 0.1, 0.9, 0.0);
    CHECK(r.opt.velocity[0].value[0] == doctest::Approx(0.5));
    CHECK(r.params[0].value[0] == doctest::Approx(0.95));
}

TEST_CASE("sgd_step with zero learning rate still updates velocity") {
    const auto r = sgd_step(scalar_params(1.0f), scalar_params(0.5f), OptState{scalar_params(0.2f)}, 0.0, 0.9, 0.0);
    CHECK(r.params[0].value[0] == 1.0f);
    CHECK(r.opt.velocity[0].value[0] == doctest::Approx(0.9 * 0.2 + 0.5));
}

TEST_CASE("sgd_step applies coupled weight decay") {
    const auto r = sgd_step(scalar_params(2.0f), scalar_params(0.0f), OptState::zeros_like(scalar_params(0)), 0.1, 0.9, 0.5);
    CHECK(r.opt.velocity[0].value[0] == doctest::Approx(1.0));
    CHECK(r.params[0].value[0] == doctest::Approx(1.9));
}

TEST_CASE("momentum sgd converges on a quadratic") {
    NamedParams theta = scalar_params(1.0f);
    OptState opt = OptState::zeros_like(theta);
    for (int i = 0; i < 100; ++i) {
        const NamedParams grad = scalar_params(2.0f * theta[0].value[0]);
        auto r = sgd_step(theta, grad, opt, 0.05, 0.9, 0.0);
        theta = std::move(r.params);
        opt = std::move(r.opt);
    }
    CHECK(std::abs(theta[0].value[0]) < 0.01);
}

TEST_CASE("sgd_step rejects misaligned gradients") {
    const NamedParams two({{"p", "theta", Tensor::vector({1, 2})}});
    CHECK_THROWS_AS(sgd_step(scalar_params(1), two, OptState::zeros_like(scalar_params(0)), 0.1, 0.9, 0), UsageError);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.decay_fractions = {0.7, 0.3};
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
    cfg = TrainConfig{};
    cfg.batch_size = 1;
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
    cfg = TrainConfig{};
    cfg.momentum = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
}

TEST_CASE("zero-radius attack reduces to standard training on separable data") {
    const DatasetPair data = make_synthetic(SyntheticKind::gaussians, 100, 3, 0.05, 2);
    TrainConfig cfg = quick_config(2, 50);
    cfg.attack.epsilon = 0.0;
    cfg.attack.step_size = 0.0;
    cfg.eval_attack.epsilon = 0.0;
    cfg.attack.input_lo = cfg.eval_attack.input_lo = data.train.lo;
    cfg.attack.input_hi = cfg.eval_attack.input_hi = data.train.hi;
    const auto result = adversarial_train(ModelSpec::mlp(2, {16}, 3), cfg, data);
    REQUIRE(result.history.size() == 50);
    bool reached = false;
    for (const auto& r : result.history) reached = reached || r.train_clean_acc >= 0.99;
    CHECK(reached);
    // without an attack, robust and clean accuracy coincide
    CHECK(result.history.back().test_robust_acc == result.history.back().test_clean_acc);
}

TEST_CASE("same seed gives bit-identical trajectories") {
    const DatasetPair data = make_synthetic(SyntheticKind::spirals, 40, 3, 0.2, 1);
    TrainConfig cfg = quick_config(9, 4);
    cfg.attack.input_lo = cfg.eval_attack.input_lo = data.train.lo;
    cfg.attack.input_hi = cfg.eval_attack.input_hi = data.train.hi;
    const ModelSpec spec = ModelSpec::mlp(2, {16, 16}, 3);
    const auto a = adversarial_train(spec, cfg, data);
    const auto b = adversarial_train(spec, cfg, data);
    CHECK(a.history == b.history);
    CHECK(bit_equal(a.final_state, b.final_state));
    CHECK(bit_equal(a.best, b.best));

    cfg.seed = 10;
    const auto c = adversarial_train(spec, cfg, data);
    CHECK_FALSE(bit_equal(a.final_state.params, c.final_state.params));
}

TEST_CASE("history, best checkpoint and sink cadence") {
    const DatasetPair data = make_synthetic(SyntheticKind::spirals, 40, 3, 0.2, 3);
    TrainConfig cfg = quick_config(3, 7);
    cfg.snapshot_cadence = 3;
    cfg.attack.input_lo = cfg.eval_attack.input_lo = data.train.lo;
    cfg.attack.input_hi = cfg.eval_attack.input_hi = data.train.hi;
    Recorder rec;
    const auto result = adversarial_train(ModelSpec::mlp(2, {16}, 3), cfg, data, &rec);
    CHECK(rec.checkpoint_epochs == std::vector<int>{2, 5});
    CHECK(rec.record_epochs == std::vector<int>{0, 1, 2, 3, 4, 5, 6});

    REQUIRE(result.history.size() == 7);
    int best_epoch = 0;
    for (const auto& r : result.history) {
        CHECK(r.lr == lr_at(r.epoch, cfg));
        for (double acc : {r.train_clean_acc, r.train_robust_acc, r.test_clean_acc, r.test_robust_acc}) {
            CHECK(acc >= 0.0);
            CHECK(acc <= 1.0);
        }
        if (r.test_robust_acc > result.history[static_cast<std::size_t>(best_epoch)].test_robust_acc) best_epoch = r.epoch;
    }
    CHECK(result.best.epoch == best_epoch);
    CHECK(result.final_state.epoch == 6);
}

TEST_CASE("adversarial_train rejects mismatched data") {
    const DatasetPair data = make_synthetic(SyntheticKind::spirals, 10, 3, 0.2, 3);
    CHECK_THROWS_AS(adversarial_train(ModelSpec::mlp(3, {4}, 3), quick_config(0, 1), data), DimensionError);
}
