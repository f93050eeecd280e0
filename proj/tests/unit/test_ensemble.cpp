#include <doctest.h>

#include "meatlab/checkpoint.hpp"
#include "meatlab/ensemble.hpp"
#include "meatlab/errors.hpp"

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

using namespace meat;
namespace fs = std::filesystem;

namespace {

NamedParams flat(std::vector<float> v) {
    const std::size_t n = v.size();
    return NamedParams({{"p", "w", Tensor({n}, std::move(v))}});
}

NamedParams random_params(std::mt19937_64& gen, std::size_t coords) {
    return NamedParams({{"a", "w", oracle::random_tensor(gen, {coords / 2})},
                        {"b", "w", oracle::random_tensor(gen, {coords - coords / 2})}});
}

Checkpoint snapshot(const ModelSpec& spec, std::uint64_t seed, int epoch) {
    auto [p, bn] = oracle::random_network(spec, seed);
    return {epoch, p, bn};
}

std::vector<Tensor> random_batches(std::mt19937_64& gen, std::size_t dim, std::vector<std::size_t> sizes) {
    std::vector<Tensor> out;
    for (std::size_t n : sizes) out.push_back(oracle::random_tensor(gen, {n, dim}));
    return out;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("meatlab_ens_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("wa_update small cases") {
    CHECK(wa_update(flat({1}), 1, flat({3}))[0].value[0] == 2.0f);
    const NamedParams p = flat({0.25f, -3, 7});
    CHECK(bit_equal(wa_update(p, 4, p), p));
    CHECK_THROWS_AS(wa_update(p, 0, p), ArgumentError);
    CHECK_THROWS_AS(wa_update(p, 1, flat({1})), UsageError);
}

TEST_CASE("folded wa_update equals the direct mean") {
    std::mt19937_64 gen(12);
    for (std::size_t k : {2u, 7u, 20u, 50u}) {
        std::vector<NamedParams> snaps;
        for (std::size_t i = 0; i < k; ++i) snaps.push_back(random_params(gen, 300));
        NamedParams running = snaps[0];
        for (std::size_t i = 1; i < k; ++i) running = wa_update(running, i, snaps[i]);
        for (std::size_t t = 0; t < running.size(); ++t)
            for (std::size_t c = 0; c < running[t].value.size(); ++c) {
                double mean = 0, scale = 0;
                for (const auto& s : snaps) {
                    mean += s[t].value[c];
                    scale = std::max(scale, std::abs(static_cast<double>(s[t].value[c])));
                }
                mean /= static_cast<double>(k);
                CHECK(std::abs(running[t].value[c] - mean) <= 1e-6 * std::max(std::abs(mean), scale));
            }
    }
}

TEST_CASE("ema_update boundaries, arithmetic and order sensitivity") {
    const NamedParams r = flat({2, -1}), f = flat({4, 5});
    CHECK(bit_equal(ema_update(r, f, 0.0), f));
    CHECK(bit_equal(ema_update(r, f, 1.0), r));
    CHECK(ema_update(flat({2}), flat({4}), 0.9)[0].value[0] == doctest::Approx(2.2));
    CHECK_THROWS_AS(ema_update(r, f, 1.5), ArgumentError);

    const std::vector<NamedParams> history{flat({0}), flat({1}), flat({5})};
    NamedParams fwd = history[0], rev = history[2];
    for (std::size_t i = 1; i < 3; ++i) {
        fwd = ema_update(fwd, history[i], 0.9);
        rev = ema_update(rev, history[2 - i], 0.9);
    }
    CHECK(fwd[0].value[0] != rev[0].value[0]);
}

TEST_CASE("median of a single snapshot is that snapshot") {
    std::mt19937_64 gen(1);
    const std::vector<NamedParams> one{random_params(gen, 40)};
    CHECK(bit_equal(median_params(one), one[0]));
}

TEST_CASE("median picks the middle element per coordinate") {
    const std::vector<NamedParams> h{flat({1, 5}), flat({2, 3}), flat({9, 1})};
    CHECK(median_params(h)[0].value == Tensor::vector({2, 3}));
    const std::vector<NamedParams> even{flat({1}), flat({4}), flat({10}), flat({-3})};
    CHECK(median_params(even)[0].value[0] == 2.5f);
}

TEST_CASE("median equals the sort-and-pick oracle and ignores order") {
    std::mt19937_64 gen(77);
    for (std::size_t n : {7u, 8u}) {
        std::vector<NamedParams> snaps;
        for (std::size_t i = 0; i < n; ++i) snaps.push_back(random_params(gen, 50));
        const NamedParams got = median_params(snaps);
        for (std::size_t t = 0; t < got.size(); ++t)
            for (std::size_t c = 0; c < got[t].value.size(); ++c) {
                std::vector<float> column;
                for (const auto& s : snaps) column.push_back(s[t].value[c]);
                CHECK(got[t].value[c] == oracle::sorted_median(column));
            }
        std::shuffle(snaps.begin(), snaps.end(), gen);
        CHECK(bit_equal(median_params(snaps), got));
    }
}

TEST_CASE("median preconditions") {
    CHECK_THROWS_AS(median_params(std::vector<NamedParams>{}), PreconditionError);
    CHECK_THROWS_AS(median_params(std::vector<NamedParams>{flat({1}), flat({1, 2})}), UsageError);
}

TEST_CASE("meat_median reads only the window") {
    MemoryCheckpointStore store;
    for (int e = 0; e < 6; ++e) store.append({e, flat({static_cast<float>(e * e)}), {}});
    CHECK(meat_median(store, 2, 4)[0].value[0] == 9.0f);
    CHECK(meat_median(store, 5, 9)[0].value[0] == 25.0f);
    CHECK_THROWS_AS(meat_median(store, 7, 9), PreconditionError);
    try {
        meat_median(store, 7, 9);
    } catch (const PreconditionError& e) {
        CHECK(std::string(e.what()).find("[7, 9]") != std::string::npos);
    }
}

TEST_CASE("recalibrate_bn on a constant dataset") {
    const ModelSpec spec = ModelSpec::mlp(3, {4}, 2);
    const Checkpoint c = snapshot(spec, 5, 0);
    const Tensor constant({10, 3}, 0.7f);
    const std::vector<Tensor> batches{constant.rows(0, 4), constant.rows(4, 10)};
    const BnStats bn = recalibrate_bn(spec, c.params, batches);
    const Tensor act = forward_until(spec, c.params, bn, constant.rows(0, 1), 1);
    REQUIRE(bn.layers.size() == 1);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(bn.layers[0].var[i] == 0.0f);
        CHECK(bn.layers[0].mean[i] == doctest::Approx(act[i]).epsilon(1e-6));
    }
    // the epsilon keeps eval-mode forward finite
    CHECK(all_finite(predict(ModelState{spec, c.params, bn}, constant)));
}

TEST_CASE("recalibrate_bn on a single batch equals the direct statistics") {
    const ModelSpec spec = ModelSpec::mlp(2, {5}, 3);
    const Checkpoint c = snapshot(spec, 6, 0);
    std::mt19937_64 gen(6);
    const auto batches = random_batches(gen, 2, {32});
    const BnStats bn = recalibrate_bn(spec, c.params, batches);
    const Tensor h = forward_until(spec, c.params, bn, batches[0], 1);
    for (std::size_t col = 0; col < 5; ++col) {
        double mean = 0, var = 0;
        for (std::size_t r = 0; r < 32; ++r) mean += h.at(r, col);
        mean /= 32;
        for (std::size_t r = 0; r < 32; ++r) var += (h.at(r, col) - mean) * (h.at(r, col) - mean);
        var /= 31;
        CHECK(std::abs(bn.layers[0].mean[col] - mean) <= 1e-5);
        CHECK(std::abs(bn.layers[0].var[col] - var) <= 1e-5);
    }
}

TEST_CASE("recalibrate_bn over many batches equals whole-dataset statistics, layer by layer") {
    const ModelSpec spec = ModelSpec::mlp(3, {8, 6}, 3);
    std::mt19937_64 gen(8);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Checkpoint c = snapshot(spec, seed, 0);
        const auto batches = random_batches(gen, 3, {16, 16, 5, 1});
        Tensor all({38, 3});
        std::size_t row = 0;
        for (const auto& b : batches) {
            std::copy(b.values().begin(), b.values().end(), all.values().begin() + static_cast<std::ptrdiff_t>(row * 3));
            row += b.dim(0);
        }
        const BnStats got = recalibrate_bn(spec, c.params, batches);
        const auto want = oracle::ref_bn_statistics(spec, oracle::ref_params(c.params), oracle::to_double(all), 38);
        REQUIRE(got.layers.size() == want.mean.size());
        for (std::size_t l = 0; l < want.mean.size(); ++l)
            for (std::size_t i = 0; i < want.mean[l].size(); ++i) {
                CHECK(std::abs(got.layers[l].mean[i] - want.mean[l][i]) <= 1e-5);
                CHECK(std::abs(got.layers[l].var[i] - want.var[l][i]) <= 1e-5);
            }
        CHECK(bit_equal(recalibrate_bn(spec, c.params, batches), got));
    }
}

TEST_CASE("recalibrate_bn rejects an empty pass") {
    const ModelSpec spec = ModelSpec::mlp(2, {4}, 2);
    const Checkpoint c = snapshot(spec, 0, 0);
    CHECK_THROWS_AS(recalibrate_bn(spec, c.params, std::vector<Tensor>{}), ArgumentError);
}

TEST_CASE("finalize per strategy") {
    const ModelSpec spec = ModelSpec::mlp(2, {6}, 3);
    MemoryCheckpointStore store;
    for (int e = 0; e < 5; ++e) store.append(snapshot(spec, 100 + e, e));
    std::mt19937_64 gen(3);
    const auto batches = random_batches(gen, 2, {20, 20});
    EnsembleConfig cfg;

    SUBCASE("none returns the live checkpoint") {
        CHECK(bit_equal(finalize(store, Strategy::none, cfg, spec, 2, 3, batches), store.load(3)));
    }
    SUBCASE("median of one snapshot keeps its params and recalibrates BN") {
        const Checkpoint out = finalize(store, Strategy::meat_median, cfg, spec, 4, 4, batches);
        CHECK(bit_equal(out.params, store.load(4).params));
        CHECK(bit_equal(out.bn, recalibrate_bn(spec, out.params, batches)));
        CHECK(out.epoch == 4);
    }
    SUBCASE("wa_mean equals the direct mean") {
        const Checkpoint out = finalize(store, Strategy::wa_mean, cfg, spec, 1, 4, batches);
        CHECK(out.epoch == 4);
        for (std::size_t t = 0; t < out.params.size(); ++t)
            for (std::size_t i = 0; i < out.params[t].value.size(); ++i) {
                double mean = 0, scale = 0;
                for (int e = 1; e <= 4; ++e) {
                    const double v = store.load(e).params[t].value[i];
                    mean += v;
                    scale = std::max(scale, std::abs(v));
                }
                mean /= 4;
                CHECK(std::abs(out.params[t].value[i] - mean) <= 1e-6 * std::max(std::abs(mean), scale));
            }
    }
    SUBCASE("ema folds in epoch order") {
        const Checkpoint out = finalize(store, Strategy::ema, cfg, spec, 2, 4, batches);
        NamedParams want = store.load(2).params;
        want = ema_update(want, store.load(3).params, 0.9);
        want = ema_update(want, store.load(4).params, 0.9);
        CHECK(bit_equal(out.params, want));
    }
    SUBCASE("an empty window is a precondition failure") {
        CHECK_THROWS_AS(finalize(store, Strategy::meat_median, cfg, spec, 7, 9, batches), PreconditionError);
    }
}

TEST_CASE("ensemble config") {
    EnsembleConfig cfg;
    CHECK(cfg.start_epoch(60) == 30);
    CHECK(strategy_from_string("meat_median") == Strategy::meat_median);
    CHECK(std::string(to_string(Strategy::wa_mean)) == "wa_mean");
    CHECK_THROWS_AS(strategy_from_string("swa"), ArgumentError);
    cfg.start_fraction = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
}

TEST_CASE("checkpoint stores keep epochs strictly increasing and reads bit-exact") {
    TempDir dir;
    MemoryCheckpointStore mem;
    DiskCheckpointStore disk(dir.path / "ckpt");
    const ModelSpec spec = ModelSpec::mlp(2, {4}, 2);
    for (CheckpointStore* store : {static_cast<CheckpointStore*>(&mem), static_cast<CheckpointStore*>(&disk)}) {
        store->append(snapshot(spec, 1, 0));
        store->append(snapshot(spec, 2, 3));
        store->append(snapshot(spec, 3, 4));
        CHECK_THROWS_AS(store->append(snapshot(spec, 4, 4)), UsageError);
        CHECK_THROWS_AS(store->append(snapshot(spec, 4, 1)), UsageError);
        CHECK(store->epochs() == std::vector<int>{0, 3, 4});
        CHECK(store->epochs_between(1, 4) == std::vector<int>{3, 4});
        CHECK(store->contains(3));
        CHECK_FALSE(store->contains(2));
        CHECK(bit_equal(store->load(3), snapshot(spec, 2, 3)));
    }
    DiskCheckpointStore reopened(dir.path / "ckpt");
    CHECK(reopened.epochs() == std::vector<int>{0, 3, 4});
    CHECK(bit_equal(reopened.load(4), snapshot(spec, 3, 4)));
    CHECK(fs::exists(reopened.path_for(4)));
}
