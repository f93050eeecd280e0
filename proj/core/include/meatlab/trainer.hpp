#pragma once

#include "meatlab/attack.hpp"
#include "meatlab/checkpoint.hpp"
#include "meatlab/dataset.hpp"
#include "meatlab/model.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace meat {

struct TrainConfig {
    int total_epochs = 60;
    std::size_t batch_size = 64;
    double base_lr = 0.1;
    std::array<double, 2> decay_fractions{1.0 / 3.0, 2.0 / 3.0};
    std::array<double, 2> decayed_lrs{0.01, 0.001};
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 0;
    AttackConfig attack{};                                  // training-time PGD
    AttackConfig eval_attack{0.1, 0.025, 20, true, -1, 1};  // PGD-20 for test robustness
    int snapshot_cadence = 1;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Step schedule: base_lr, then decayed_lrs[0] from the first decay epoch, decayed_lrs[1] from the second.
double lr_at(int epoch, const TrainConfig& cfg);
/// Epoch index at which decay `which` (0 or 1) takes effect.
int decay_epoch(const TrainConfig& cfg, int which);

struct OptState {
    NamedParams velocity;

    static OptState zeros_like(const NamedParams& params) { return {params.zeros_like()}; }
};

struct SgdResult {
    NamedParams params;
    OptState opt;
};

/// g' = g + wd * theta;  v' = momentum * v + g';  theta' = theta - lr * v'.
SgdResult sgd_step(const NamedParams& params, const NamedParams& grads, const OptState& opt, double lr,
                   double momentum, double weight_decay);

struct MetricsRecord {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;        // mean adversarial loss over the epoch's batches
    double train_clean_acc = 0.0;
    double train_robust_acc = 0.0;  // accuracy on the adversarial batches seen during the epoch
    double test_clean_acc = 0.0;
    double test_robust_acc = 0.0;

    bool operator==(const MetricsRecord&) const = default;
};

/// Receives the training trajectory. Exceptions thrown here abort training.
class TrainSink {
public:
    virtual ~TrainSink() = default;
    /// Called every snapshot_cadence epochs, before on_epoch_end for that epoch.
    virtual void on_checkpoint(const Checkpoint& ckpt) { (void)ckpt; }
    virtual void on_epoch_end(const MetricsRecord& record, const Checkpoint& live) {
        (void)record;
        (void)live;
    }
};

struct TrainResult {
    Checkpoint final_state;
    Checkpoint best; // highest test robust accuracy, earliest on ties
    std::vector<MetricsRecord> history;
};

/// Generator used for the test-set PGD evaluation of `epoch`; ensemble
/// evaluations at the same epoch reuse it so all models face the same random starts.
Rng eval_rng(const TrainConfig& cfg, int epoch);

TrainResult adversarial_train(const ModelSpec& spec, const TrainConfig& cfg, const DatasetPair& data,
                              TrainSink* sink = nullptr);

} // namespace meat
