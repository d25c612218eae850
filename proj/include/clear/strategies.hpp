#pragma once

// Continual-learning update algorithms. Each one fine-tunes a single block
// (autoencoder or predictor) of a MultiHeadRegressor on its drained novelty
// samples, differing only in how earlier knowledge is protected.

#include <clear/nn.hpp>
#include <clear/novelty.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace clear::strategy {

struct Naive {};

struct Rehearsal {
    double mix_ratio = 0.5;                  // share of each batch taken from novel samples
    std::size_t familiar_sample_count = 512; // familiar samples drawn into the replay pool
};

struct Ewc {
    double lambda = 100.0;
    std::size_t fisher_sample_count = 512;
};

struct Isolation {
    bool freeze_shared = true;
};

using Kind = std::variant<Naive, Rehearsal, Ewc, Isolation>;

struct StrategySpec {
    Kind kind = Naive{};
    nn::TrainConfig train;

    void validate() const;
    std::string name() const;
};

// "a" for the autoencoder block, "p_<target>" for a predictor block.
std::string block_id(const novelty::BlockRole& role);
novelty::BlockRole role_from_block_id(const std::string& id);

// Training pair for a block: x -> x for the autoencoder, x -> y for a
// predictor (missing_target error when y is absent).
nn::Example to_example(const novelty::BlockRole& role, const novelty::Sample& sample);
std::vector<nn::Example> to_examples(const novelty::BlockRole& role, std::span<const novelty::Sample> samples);

struct FisherInfo {
    std::vector<double> values;  // diagonal, one per trainable parameter
    nn::ParameterVector anchor;  // trainable parameters at estimation time
};

// F_i = mean over the batch of the squared per-sample gradient of the MSE.
FisherInfo compute_fisher(const nn::Chain& chain, std::span<const nn::Example> batch);

// base + lambda/2 * sum_i F_i (theta_i - anchor_i)^2
double penalized_loss(double base_loss, std::span<const double> params, const FisherInfo& fisher, double lambda);

// The quadratic term of penalized_loss as a training penalty.
nn::Penalty ewc_penalty(const FisherInfo& fisher, double lambda);

struct RehearsalBatch {
    std::vector<nn::Example> examples;
    std::size_t novel_count = 0;
    bool familiar_missing = false;  // no familiar data: the batch is all novel
};

// ceil(mix_ratio * batch_size) novel samples plus familiar ones drawn
// uniformly with replacement, shuffled together.
RehearsalBatch compose_rehearsal_batch(std::span<const nn::Example> novel, std::span<const nn::Example> familiar,
                                       double mix_ratio, std::size_t batch_size, std::uint64_t seed);

// Batches over a pool laid out as [novel..., familiar...]: each epoch walks the
// novel part in shuffled order, filling the rest of every batch with familiar
// draws.
nn::BatchPlan rehearsal_plan(std::size_t novel_count, std::size_t familiar_count, double mix_ratio,
                             std::size_t batch_size);

enum class UpdateStatus { proposed, accepted, rejected };

const char* to_string(UpdateStatus s) noexcept;

struct RetainedSet {
    novelty::BlockRole role;
    std::vector<nn::Example> examples;
};

struct ErrorPair {
    double before = 0.0;
    double after = 0.0;
};

struct UpdateResult {
    std::string block_id;
    double novel_before = 0.0;
    double novel_after = 0.0;
    double retained_before = 0.0;
    double retained_after = 0.0;
    std::optional<double> forgetting_ratio;
    double training_time = 0.0;
    StrategySpec strategy;
    UpdateStatus status = UpdateStatus::proposed;
    // Retained errors of the other blocks, which a shared-encoder update can move.
    std::map<std::string, ErrorPair> collateral;
    std::vector<std::string> warnings;
    std::string failure;  // divergence message when status is rejected by training
};

struct UpdateOptions {
    // Fine-tune the shared encoder together with a predictor head. Isolation
    // with freeze_shared always overrides this.
    bool finetune_shared = true;
};

// Trains `role`'s block of `model` in place. retained holds the evaluation
// sets of every block (the one matching role is the block's own). On
// divergence the model is restored and the result comes back rejected.
UpdateResult update_block(nn::MultiHeadRegressor& model, const novelty::BlockRole& role, const StrategySpec& spec,
                          std::span<const nn::Example> novel, std::span<const nn::Example> familiar,
                          std::span<const RetainedSet> retained, const UpdateOptions& options = {});

// Loss of one block on a set of examples; 0 for an empty set.
double block_loss(nn::MultiHeadRegressor& model, const novelty::BlockRole& role, std::span<const nn::Example> data);

}  // namespace clear::strategy
