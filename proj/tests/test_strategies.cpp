#include "oracles.hpp"

#include <clear/strategies.hpp>

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

using namespace clear;
using namespace clear::nn;
using namespace clear::strategy;
using novelty::BlockRole;

namespace {

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Toy task: three features in [0,1], target a smooth function of them.
std::vector<Example> task(std::uint64_t seed, std::size_t n, double sign) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Example> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x{u(rng), u(rng), u(rng)};
        const double y = 0.5 + sign * 0.3 * std::tanh(2.0 * x[0] - 1.0 + 0.5 * x[1] * x[2]);
        out.push_back({x, {y}});
    }
    return out;
}

std::vector<Example> autoencoder_examples(std::span<const Example> data) {
    std::vector<Example> out;
    for (const auto& e : data) out.push_back({e.input, e.input});
    return out;
}

MultiHeadRegressor trained_model(std::span<const Example> data) {
    MultiHeadRegressor model(AutoencoderSpec{3, 16, 8}, 11);
    model.add_head("wf", default_head_spec(8), Init::seeded_random);
    TrainConfig cfg;
    cfg.epochs = 150;
    cfg.learning_rate = 0.01;
    auto ae = model.autoencoder_chain();
    auto ae_data = autoencoder_examples(data);
    train(ae, ae_data, cfg);
    auto head = model.predictor_chain("wf", false);
    train(head, data, cfg);
    return model;
}

StrategySpec with(Kind kind, std::size_t epochs = 50, double lr = 0.01) {
    StrategySpec spec;
    spec.kind = kind;
    spec.train.epochs = epochs;
    spec.train.learning_rate = lr;
    spec.train.seed = 5;
    return spec;
}

}  // namespace

TEST_CASE("Fisher: worked examples") {
    DenseNet one(NetSpec{1, {{1, Activation::linear}}}, 0);
    Chain chain;
    chain.then(one);

    one.set_parameters(std::vector<double>{1.0, 0.0});
    std::vector<Example> fitted{{{1.0}, {1.0}}, {{2.0}, {2.0}}};
    auto zero = compute_fisher(chain, fitted);
    CHECK(zero.values == std::vector<double>{0.0, 0.0});

    std::vector<Example> single{{{1.0}, {0.0}}};
    auto f = compute_fisher(chain, single);
    CHECK(f.values[0] == doctest::Approx(4.0));
    CHECK(f.anchor == std::vector<double>{1.0, 0.0});

    CHECK_THROWS_AS(compute_fisher(chain, std::span<const Example>{}), Error);
}

TEST_CASE("Fisher matches a per-sample squared-gradient oracle") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        DenseNet net = oracle::random_net(rng);
        auto batch = oracle::random_batch(net, 8, rng);
        Chain chain;
        chain.then(net);
        auto fisher = compute_fisher(chain, batch);

        std::vector<double> expected(net.parameter_count(), 0.0);
        for (const auto& e : batch) {
            auto g = gradients(net, std::span<const Example>(&e, 1));
            for (std::size_t i = 0; i < g.size(); ++i) expected[i] += g[i] * g[i] / 8.0;
        }
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK(fisher.values[i] >= 0.0);
            CHECK(std::abs(fisher.values[i] - expected[i]) <= 1e-10 * std::max(1.0, std::abs(expected[i])));
        }

        auto reversed = batch;
        std::reverse(reversed.begin(), reversed.end());
        auto permuted = compute_fisher(chain, reversed);
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK(permuted.values[i] == doctest::Approx(fisher.values[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("penalized loss") {
    FisherInfo fisher{{1.0}, {0.0}};
    CHECK(penalized_loss(0.5, std::vector<double>{2.0}, fisher, 1.0) == 2.5);
    CHECK(penalized_loss(0.5, std::vector<double>{2.0}, fisher, 0.0) == 0.5);
    CHECK(penalized_loss(0.5, std::vector<double>{0.0}, fisher, 10.0) == 0.5);
    CHECK_THROWS_AS(penalized_loss(0.5, std::vector<double>{1.0, 2.0}, fisher, 1.0), Error);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        FisherInfo f{{std::abs(u(rng)), std::abs(u(rng))}, {u(rng), u(rng)}};
        std::vector<double> p{u(rng), u(rng)};
        const double base = std::abs(u(rng));
        CHECK(penalized_loss(base, p, f, std::abs(u(rng)) * 100) >= base);
    }
}

TEST_CASE("ewc penalty gradient matches finite differences") {
    FisherInfo fisher{{0.3, 2.0, 0.0}, {0.1, -0.4, 1.0}};
    std::vector<double> p{0.5, 0.2, -3.0};
    std::vector<double> grad(3, 0.0);
    const double value = ewc_penalty(fisher, 7.0)(p, grad);
    CHECK(value == doctest::Approx(penalized_loss(0.0, p, fisher, 7.0)));
    for (std::size_t i = 0; i < 3; ++i) {
        auto hi = p, lo = p;
        hi[i] += 1e-6;
        lo[i] -= 1e-6;
        const double fd = (penalized_loss(0.0, hi, fisher, 7.0) - penalized_loss(0.0, lo, fisher, 7.0)) / 2e-6;
        CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("rehearsal batches") {
    std::vector<Example> novel, familiar;
    for (int i = 0; i < 20; ++i) novel.push_back({{double(i)}, {1.0}});
    for (int i = 0; i < 50; ++i) familiar.push_back({{double(100 + i)}, {0.0}});
    auto count_novel = [](const RehearsalBatch& b) {
        return std::count_if(b.examples.begin(), b.examples.end(), [](const Example& e) { return e.target[0] == 1.0; });
    };

    auto half = compose_rehearsal_batch(novel, familiar, 0.5, 10, 1);
    CHECK(half.examples.size() == 10);
    CHECK(count_novel(half) == 5);
    CHECK_FALSE(half.familiar_missing);

    auto uneven = compose_rehearsal_batch(novel, familiar, 0.3, 16, 1);
    CHECK(count_novel(uneven) == 5);  // ceil(4.8)

    auto pure = compose_rehearsal_batch(novel, familiar, 1.0, 10, 1);
    CHECK(count_novel(pure) == 10);

    auto fallback = compose_rehearsal_batch(novel, {}, 0.5, 10, 1);
    CHECK(fallback.familiar_missing);
    CHECK(count_novel(fallback) == 10);

    auto again = compose_rehearsal_batch(novel, familiar, 0.5, 10, 1);
    for (std::size_t i = 0; i < 10; ++i) CHECK(again.examples[i].input == half.examples[i].input);

    CHECK_THROWS_AS(compose_rehearsal_batch({}, familiar, 0.5, 10, 1), Error);
}

TEST_CASE("rehearsal plan covers every novel sample once per epoch") {
    auto plan = rehearsal_plan(64, 200, 0.5, 16);
    std::mt19937_64 rng(9);
    for (std::size_t epoch = 0; epoch < 3; ++epoch) {
        std::vector<int> seen(64, 0);
        for (const auto& batch : plan(epoch, rng)) {
            CHECK(batch.size() == 16);
            std::size_t novel = 0;
            for (auto i : batch) {
                CHECK(i < 264);
                if (i < 64) {
                    ++seen[i];
                    ++novel;
                }
            }
            CHECK(novel == 8);
        }
        CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    }
}

TEST_CASE("spec validation") {
    CHECK_THROWS_AS(with(Ewc{-1.0}).validate(), Error);
    CHECK_THROWS_AS(with(Rehearsal{1.5}).validate(), Error);
    CHECK_NOTHROW(with(Rehearsal{0.0}).validate());
    CHECK(with(Isolation{}).name() == "isolation");
    CHECK(block_id(BlockRole::predictor("wf")) == "p_wf");
    CHECK(role_from_block_id("p_wf").target_id == "wf");
    CHECK_THROWS_AS(role_from_block_id("q"), Error);
}

TEST_CASE("update_block: naive fine-tuning improves the novel error") {
    auto phase1 = task(1, 300, 1.0);
    auto phase2 = task(2, 64, -1.0);
    auto model = trained_model(phase1);
    auto r = update_block(model, BlockRole::predictor("wf"), with(Naive{}), phase2, phase1, {});
    CHECK(r.status == UpdateStatus::proposed);
    CHECK(r.block_id == "p_wf");
    CHECK(r.novel_after < r.novel_before);
    CHECK(r.training_time >= 0.0);
}

TEST_CASE("update_block: ewc with a huge lambda pins the retained error") {
    auto phase1 = task(1, 300, 1.0);
    auto phase2 = task(2, 64, -1.0);
    auto retained_data = task(3, 256, 1.0);
    std::vector<RetainedSet> retained{{BlockRole::predictor("wf"), retained_data}};

    auto base = trained_model(phase1);
    auto pinned = base;
    auto ewc = update_block(pinned, BlockRole::predictor("wf"), with(Ewc{1e9}), phase2, phase1, retained);
    CHECK(ewc.status == UpdateStatus::proposed);
    CHECK(std::abs(ewc.retained_after - ewc.retained_before) <= 0.05 * ewc.retained_before);

    auto free = base;
    auto naive = update_block(free, BlockRole::predictor("wf"), with(Naive{}), phase2, phase1, retained);
    CHECK(*naive.forgetting_ratio > *ewc.forgetting_ratio);

    auto without = base;
    CHECK_THROWS_AS(update_block(without, BlockRole::predictor("wf"), with(Ewc{}), phase2, {}, retained), Error);
}

TEST_CASE("update_block: rehearsal without familiar data warns and still trains") {
    auto phase1 = task(1, 300, 1.0);
    auto phase2 = task(2, 64, -1.0);
    auto model = trained_model(phase1);
    auto r = update_block(model, BlockRole::predictor("wf"), with(Rehearsal{}), phase2, {}, {});
    CHECK(r.warnings.size() == 1);
    CHECK(r.novel_after < r.novel_before);
}

TEST_CASE("update_block: isolation leaves everything outside the new head untouched") {
    auto phase1 = task(1, 300, 1.0);
    auto model = trained_model(phase1);
    model.add_head("pv", default_head_spec(8));
    const auto encoder = snapshot(model.shared.encoder);
    const auto decoder = snapshot(model.shared.decoder);
    const auto old_head = snapshot(model.head("wf"));

    auto warmup = task(4, 200, -0.5);
    std::vector<RetainedSet> retained{{BlockRole::autoencoder(), autoencoder_examples(phase1)},
                                      {BlockRole::predictor("wf"), phase1}};
    auto r = update_block(model, BlockRole::predictor("pv"), with(Isolation{true}), warmup, {}, retained);
    CHECK(r.novel_after < r.novel_before);
    CHECK(snapshot(model.shared.encoder) == encoder);
    CHECK(snapshot(model.shared.decoder) == decoder);
    CHECK(snapshot(model.head("wf")) == old_head);
    for (const auto& [id, pair] : r.collateral) {
        CHECK(bitwise_equal(std::span<const double>(&pair.before, 1), std::span<const double>(&pair.after, 1)));
    }
    CHECK(r.retained_before == r.retained_after);
}

TEST_CASE("update_block: divergence restores the model and rejects") {
    auto phase1 = task(1, 300, 1.0);
    auto model = trained_model(phase1);
    const auto before = snapshot(model);
    auto spec = with(Naive{}, 50, 1e200);
    spec.train.optimizer = Optimizer::sgd;
    auto r = update_block(model, BlockRole::predictor("wf"), spec, task(2, 64, -1.0), {}, {});
    CHECK(r.status == UpdateStatus::rejected);
    CHECK_FALSE(r.failure.empty());
    CHECK(snapshot(model) == before);
}
