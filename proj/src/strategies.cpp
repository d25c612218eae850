#include <clear/metrics.hpp>
#include <clear/random.hpp>
#include <clear/strategies.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace clear::strategy {

void StrategySpec::validate() const {
    train.validate();
    if (const auto* r = std::get_if<Rehearsal>(&kind)) {
        if (!(r->mix_ratio >= 0.0 && r->mix_ratio <= 1.0)) {
            throw Error(ErrorKind::validation, "mix_ratio must lie in [0,1]");
        }
        if (r->familiar_sample_count == 0) throw Error(ErrorKind::validation, "familiar_sample_count must be positive");
    } else if (const auto* e = std::get_if<Ewc>(&kind)) {
        if (!(e->lambda >= 0.0) || !std::isfinite(e->lambda)) throw Error(ErrorKind::validation, "lambda must be >= 0");
        if (e->fisher_sample_count == 0) throw Error(ErrorKind::validation, "fisher_sample_count must be positive");
    }
}

std::string StrategySpec::name() const {
    struct Visitor {
        std::string operator()(const Naive&) const { return "naive"; }
        std::string operator()(const Rehearsal&) const { return "rehearsal"; }
        std::string operator()(const Ewc&) const { return "ewc"; }
        std::string operator()(const Isolation&) const { return "isolation"; }
    };
    return std::visit(Visitor{}, kind);
}

std::string block_id(const novelty::BlockRole& role) {
    return role.is_predictor() ? "p_" + role.target_id : std::string("a");
}

novelty::BlockRole role_from_block_id(const std::string& id) {
    if (id == "a") return novelty::BlockRole::autoencoder();
    if (id.size() > 2 && id.starts_with("p_")) return novelty::BlockRole::predictor(id.substr(2));
    throw Error(ErrorKind::not_found, "unknown block id '" + id + "'");
}

nn::Example to_example(const novelty::BlockRole& role, const novelty::Sample& sample) {
    if (!role.is_predictor()) return {sample.x, sample.x};
    if (!sample.y) throw Error(ErrorKind::missing_target, "sample " + std::to_string(sample.seq) + " has no target");
    return {sample.x, {*sample.y}};
}

std::vector<nn::Example> to_examples(const novelty::BlockRole& role, std::span<const novelty::Sample> samples) {
    std::vector<nn::Example> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(to_example(role, s));
    return out;
}

FisherInfo compute_fisher(const nn::Chain& chain, std::span<const nn::Example> batch) {
    if (batch.empty()) throw Error(ErrorKind::argument, "Fisher information of an empty batch");
    const std::size_t n = chain.trainable_parameter_count();
    FisherInfo info{std::vector<double>(n, 0.0), chain.trainable_parameters()};
    std::vector<double> grad(n);
    for (std::size_t k = 0; k < batch.size(); ++k) {
        chain.loss_and_gradient(batch.subspan(k, 1), grad);
        for (std::size_t i = 0; i < n; ++i) info.values[i] += grad[i] * grad[i];
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& f : info.values) f *= inv;
    return info;
}

namespace {

void require_fisher_shape(std::size_t params, const FisherInfo& fisher) {
    if (fisher.values.size() != params || fisher.anchor.size() != params) {
        throw Error(ErrorKind::shape, "Fisher information has " + std::to_string(fisher.values.size()) +
                                          " entries for " + std::to_string(params) + " parameters");
    }
}

}  // namespace

double penalized_loss(double base_loss, std::span<const double> params, const FisherInfo& fisher, double lambda) {
    require_fisher_shape(params.size(), fisher);
    double quad = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double d = params[i] - fisher.anchor[i];
        quad += fisher.values[i] * d * d;
    }
    return base_loss + 0.5 * lambda * quad;
}

nn::Penalty ewc_penalty(const FisherInfo& fisher, double lambda) {
    return [fisher, lambda](std::span<const double> params, std::span<double> grad) {
        require_fisher_shape(params.size(), fisher);
        double quad = 0.0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double d = params[i] - fisher.anchor[i];
            quad += fisher.values[i] * d * d;
            grad[i] += lambda * fisher.values[i] * d;
        }
        return 0.5 * lambda * quad;
    };
}

namespace {

std::size_t novel_share(double mix_ratio, std::size_t batch_size) {
    return std::min(batch_size, static_cast<std::size_t>(std::ceil(mix_ratio * static_cast<double>(batch_size))));
}

}  // namespace

RehearsalBatch compose_rehearsal_batch(std::span<const nn::Example> novel, std::span<const nn::Example> familiar,
                                       double mix_ratio, std::size_t batch_size, std::uint64_t seed) {
    if (novel.empty()) throw Error(ErrorKind::argument, "rehearsal batch needs novel samples");
    if (!(mix_ratio >= 0.0 && mix_ratio <= 1.0)) throw Error(ErrorKind::validation, "mix_ratio must lie in [0,1]");
    if (batch_size == 0) throw Error(ErrorKind::validation, "batch_size must be positive");
    std::mt19937_64 rng(seed);
    RehearsalBatch out;
    out.familiar_missing = familiar.empty();
    const std::size_t n_novel = out.familiar_missing ? batch_size : novel_share(mix_ratio, batch_size);

    std::vector<std::size_t> order(novel.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rnd::shuffle(order, rng);
    for (std::size_t i = 0; i < n_novel; ++i) out.examples.push_back(novel[order[i % order.size()]]);
    out.novel_count = n_novel;
    for (std::size_t i = n_novel; i < batch_size; ++i) out.examples.push_back(familiar[rnd::index(rng, familiar.size())]);
    rnd::shuffle(out.examples, rng);
    return out;
}

nn::BatchPlan rehearsal_plan(std::size_t novel_count, std::size_t familiar_count, double mix_ratio,
                             std::size_t batch_size) {
    const std::size_t share = familiar_count == 0 ? batch_size : std::max<std::size_t>(1, novel_share(mix_ratio, batch_size));
    return [=](std::size_t, std::mt19937_64& rng) {
        std::vector<std::size_t> order(novel_count);
        std::iota(order.begin(), order.end(), std::size_t{0});
        rnd::shuffle(order, rng);
        std::vector<std::vector<std::size_t>> batches;
        for (std::size_t start = 0; start < novel_count; start += share) {
            const std::size_t end = std::min(novel_count, start + share);
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            if (familiar_count > 0) {
                for (std::size_t i = share; i < batch_size; ++i) {
                    batch.push_back(novel_count + rnd::index(rng, familiar_count));
                }
            }
            rnd::shuffle(batch, rng);
            batches.push_back(std::move(batch));
        }
        return batches;
    };
}

const char* to_string(UpdateStatus s) noexcept {
    switch (s) {
        case UpdateStatus::proposed: return "proposed";
        case UpdateStatus::accepted: return "accepted";
        case UpdateStatus::rejected: return "rejected";
    }
    return "unknown";
}

namespace {

nn::Chain block_chain(nn::MultiHeadRegressor& model, const novelty::BlockRole& role, bool train_shared) {
    if (!role.is_predictor()) {
        nn::Chain chain;
        chain.then(model.shared.encoder, train_shared).then(model.shared.decoder, true);
        return chain;
    }
    return model.predictor_chain(role.target_id, train_shared);
}

std::vector<nn::Example> draw(std::span<const nn::Example> pool, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<nn::Example> out;
    for (std::size_t i : rnd::sample_indices(pool.size(), count, rng)) out.push_back(pool[i]);
    return out;
}

}  // namespace

double block_loss(nn::MultiHeadRegressor& model, const novelty::BlockRole& role, std::span<const nn::Example> data) {
    if (data.empty()) return 0.0;
    return block_chain(model, role, true).loss(data);
}

UpdateResult update_block(nn::MultiHeadRegressor& model, const novelty::BlockRole& role, const StrategySpec& spec,
                          std::span<const nn::Example> novel, std::span<const nn::Example> familiar,
                          std::span<const RetainedSet> retained, const UpdateOptions& options) {
    spec.validate();
    if (novel.empty()) throw Error(ErrorKind::argument, "update needs novel samples");
    if (role.is_predictor() && !model.has_head(role.target_id)) {
        throw Error(ErrorKind::not_found, "no head for target '" + role.target_id + "'");
    }
    const auto* isolation = std::get_if<Isolation>(&spec.kind);
    const bool freeze = isolation && isolation->freeze_shared;
    const bool train_shared = !freeze && (!role.is_predictor() || options.finetune_shared);

    UpdateResult result;
    result.block_id = block_id(role);
    result.strategy = spec;

    std::span<const nn::Example> own;
    for (const auto& set : retained) {
        if (block_id(set.role) == result.block_id) own = set.examples;
    }
    result.novel_before = block_loss(model, role, novel);
    result.retained_before = block_loss(model, role, own);
    for (const auto& set : retained) {
        const auto id = block_id(set.role);
        if (id != result.block_id) result.collateral[id].before = block_loss(model, set.role, set.examples);
    }

    const nn::WeightSnapshot before = nn::snapshot(model);
    nn::Chain chain = block_chain(model, role, train_shared);
    const auto started = std::chrono::steady_clock::now();
    try {
        if (const auto* r = std::get_if<Rehearsal>(&spec.kind)) {
            auto replay = draw(familiar, r->familiar_sample_count, nn::derive_seed(spec.train.seed, "rehearsal"));
            if (replay.empty()) result.warnings.push_back("familiarity buffer empty; rehearsal fell back to novel-only batches");
            std::vector<nn::Example> pool(novel.begin(), novel.end());
            pool.insert(pool.end(), replay.begin(), replay.end());
            nn::train(chain, pool, spec.train,
                      rehearsal_plan(novel.size(), replay.size(), r->mix_ratio, spec.train.batch_size));
        } else if (const auto* e = std::get_if<Ewc>(&spec.kind)) {
            if (familiar.empty()) {
                throw Error(ErrorKind::strategy, "ewc needs familiar samples to estimate Fisher information");
            }
            auto sample = draw(familiar, e->fisher_sample_count, nn::derive_seed(spec.train.seed, "fisher"));
            nn::train(chain, novel, spec.train, {}, ewc_penalty(compute_fisher(chain, sample), e->lambda));
        } else {
            nn::train(chain, novel, spec.train);
        }
    } catch (const DivergenceError& err) {
        nn::restore(model, before);
        result.status = UpdateStatus::rejected;
        result.failure = err.what();
    }
    result.training_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    result.novel_after = block_loss(model, role, novel);
    result.retained_after = block_loss(model, role, own);
    for (const auto& set : retained) {
        const auto id = block_id(set.role);
        if (id != result.block_id) result.collateral[id].after = block_loss(model, set.role, set.examples);
    }
    result.forgetting_ratio = metrics::forgetting_ratio(result.retained_before, result.retained_after);
    return result;
}

}  // namespace clear::strategy
