#include "meatlab/trainer.hpp"

#include "meatlab/analysis.hpp"
#include "meatlab/errors.hpp"

#include <cmath>
#include <numeric>

namespace meat {

namespace {

// substream identifiers
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kAttackStream = 3;
constexpr std::uint64_t kEvalStream = 4;

} // namespace

void TrainConfig::validate() const {
    if (total_epochs < 1) throw ArgumentError("train: total_epochs must be >= 1");
    if (batch_size < 2) throw ArgumentError("train: batch_size must be >= 2 (batchnorm needs batch statistics)");
    if (!(decay_fractions[0] > 0.0 && decay_fractions[0] < decay_fractions[1] && decay_fractions[1] < 1.0)) {
        throw ArgumentError("train: decay fractions must satisfy 0 < first < second < 1");
    }
    if (!(base_lr >= 0.0 && decayed_lrs[0] >= 0.0 && decayed_lrs[1] >= 0.0 && momentum >= 0.0 && weight_decay >= 0.0)) {
        throw ArgumentError("train: learning rates, momentum and weight decay must be >= 0");
    }
    if (snapshot_cadence < 1) throw ArgumentError("train: snapshot_cadence must be >= 1");
    attack.validate();
    eval_attack.validate();
}

int decay_epoch(const TrainConfig& cfg, int which) {
    return static_cast<int>(std::llround(cfg.decay_fractions.at(static_cast<std::size_t>(which)) * cfg.total_epochs));
}

double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.total_epochs) {
        throw ArgumentError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(cfg.total_epochs) + ")");
    }
    if (epoch < decay_epoch(cfg, 0)) return cfg.base_lr;
    if (epoch < decay_epoch(cfg, 1)) return cfg.decayed_lrs[0];
    return cfg.decayed_lrs[1];
}

SgdResult sgd_step(const NamedParams& params, const NamedParams& grads, const OptState& opt, double lr,
                   double momentum, double weight_decay) {
    params.require_aligned(grads, "sgd_step(params, grads)");
    params.require_aligned(opt.velocity, "sgd_step(params, velocity)");
    SgdResult out{params, opt};
    const float mu = static_cast<float>(momentum);
    const float wd = static_cast<float>(weight_decay);
    const float step = static_cast<float>(lr);
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& theta = out.params[t].value;
        Tensor& v = out.opt.velocity[t].value;
        const Tensor& g = grads[t].value;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const float gi = g[i] + wd * theta[i];
            v[i] = mu * v[i] + gi;
            theta[i] = theta[i] - step * v[i];
        }
    }
    return out;
}

Rng eval_rng(const TrainConfig& cfg, int epoch) {
    return Rng(cfg.seed).substream(kEvalStream).substream(static_cast<std::uint64_t>(epoch));
}

namespace {

std::vector<std::size_t> epoch_order(const TrainConfig& cfg, int epoch, std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = Rng(cfg.seed).substream(kShuffleStream).substream(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.below(i))]);
    return idx;
}

} // namespace

TrainResult adversarial_train(const ModelSpec& spec, const TrainConfig& cfg, const DatasetPair& data, TrainSink* sink) {
    cfg.validate();
    spec.validate();
    if (data.train.size() < 2) throw ArgumentError("adversarial_train: training set needs at least 2 examples");
    if (data.test.size() == 0) throw ArgumentError("adversarial_train: empty test set");
    if (data.train.dim() != spec.input_dim || data.test.dim() != spec.input_dim) {
        throw DimensionError("adversarial_train: dataset width does not match model input_dim " +
                             std::to_string(spec.input_dim));
    }

    Rng root(cfg.seed);
    Rng init_rng = root.substream(kInitStream);
    auto [params, bn] = init_params(spec, init_rng);
    ModelState model{spec, std::move(params), std::move(bn)};
    OptState opt = OptState::zeros_like(model.params);

    TrainResult result;
    double best_robust = -1.0;
    const std::size_t n = data.train.size();

    for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg);
        const auto order = epoch_order(cfg, epoch, n);
        Rng attack_root = root.substream(kAttackStream).substream(static_cast<std::uint64_t>(epoch));

        double loss_sum = 0.0;
        std::size_t seen = 0, adv_correct = 0;
        std::uint64_t batch_index = 0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(begin + cfg.batch_size, n);
            if (end - begin < 2) break; // a single-row remainder has no batch statistics
            const std::span<const std::size_t> rows(order.data() + begin, end - begin);
            const Dataset batch = data.train.select(rows);

            Rng batch_rng = attack_root.substream(batch_index);
            const Tensor x_adv = pgd(model, batch.features, batch.labels, cfg.attack, batch_rng);

            ForwardResult fr = forward(spec, model.params, model.bn, x_adv, Mode::train);
            loss_sum += loss_xent(fr.logits, batch.labels) * static_cast<double>(batch.size());
            const auto pred = argmax_rows(fr.logits);
            for (std::size_t i = 0; i < pred.size(); ++i)
                if (static_cast<int>(pred[i]) == batch.labels[i]) ++adv_correct;
            seen += batch.size();

            const Gradients grads = backward(spec, model.params, fr.cache, batch.labels);
            SgdResult step = sgd_step(model.params, grads.params, opt, lr, cfg.momentum, cfg.weight_decay);
            model.params = std::move(step.params);
            opt = std::move(step.opt);
            model.bn = std::move(fr.bn);
        }

        MetricsRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = loss_sum / static_cast<double>(seen);
        rec.train_robust_acc = static_cast<double>(adv_correct) / static_cast<double>(seen);
        Rng unused(0);
        rec.train_clean_acc = accuracy(model, data.train, nullptr, unused);
        rec.test_clean_acc = accuracy(model, data.test, nullptr, unused);
        Rng erng = eval_rng(cfg, epoch);
        rec.test_robust_acc = accuracy(model, data.test, &cfg.eval_attack, erng);
        result.history.push_back(rec);

        Checkpoint live{epoch, model.params, model.bn};
        if (rec.test_robust_acc > best_robust) {
            best_robust = rec.test_robust_acc;
            result.best = live;
        }
        if (sink) {
            if ((epoch + 1) % cfg.snapshot_cadence == 0) sink->on_checkpoint(live);
            sink->on_epoch_end(rec, live);
        }
        if (epoch + 1 == cfg.total_epochs) result.final_state = std::move(live);
    }
    return result;
}

} // namespace meat
