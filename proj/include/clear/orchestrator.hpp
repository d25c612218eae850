#pragma once

// The engine instance: preprocessing, one autoencoder block plus one
// predictor block per target, buffers and thresholds, triggered updates,
// operator decisions, versioning and the event log. Every mutation is a
// command that is logged first, so replaying the command events of a log
// rebuilds the instance bit for bit.

#include <clear/metrics.hpp>
#include <clear/nn.hpp>
#include <clear/novelty.hpp>
#include <clear/preprocess.hpp>
#include <clear/serialization.hpp>
#include <clear/strategies.hpp>

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace clear::orch {

using json = nlohmann::json;

struct AutoPolicy {
    bool enabled = true;
    double max_forgetting = 0.1;

    void validate() const;
    // novel_after < novel_before and a defined forgetting ratio <= max_forgetting.
    bool accepts(const strategy::UpdateResult& result) const;
};

struct Config {
    std::uint64_t seed = 0;
    std::vector<std::string> feature_names;  // defaults to x0, x1, ... at pretrain
    std::vector<std::string> targets;        // heads created at pretrain
    std::size_t hidden_width = 16;
    std::size_t latent_dim = 8;
    std::vector<nn::LayerSpec> head_layers{{16, nn::Activation::tanh}, {1, nn::Activation::linear}};
    std::size_t novelty_capacity = 64;
    std::optional<std::size_t> familiarity_cap;
    novelty::QuantileRule threshold_rule;
    bool fixed_thresholds = false;
    double initial_threshold = 0.01;  // fixed rule, and heads added without warm-up
    strategy::StrategySpec strategy;  // every block unless overridden
    std::map<std::string, strategy::StrategySpec> block_strategies;
    AutoPolicy auto_policy;
    std::size_t retained_size = 256;
    bool finetune_shared = true;
    bool upstream_first = true;
    bool ae_novel_feeds_predictors = false;
    nn::TrainConfig pretrain{200, 16, 0.01, nn::Optimizer::adam, {}, 0};
    double compute_budget_seconds = 3600.0;
    std::map<std::string, double> score_weights = metrics::equal_weights();
    bool emit_predictions = true;

    void validate() const;
    strategy::StrategySpec strategy_for(const std::string& block_id) const;
    nn::NetSpec head_spec() const;
};

Config config_from_json(const json& value);
json to_json(const Config& config);

struct Event {
    std::uint64_t seq = 0;
    double ts = 0.0;  // wall clock, seconds since the Unix epoch
    std::uint64_t position = 0;
    std::string type;
    json payload;
};

json to_json(const Event& event);
Event event_from_json(const json& value);

enum class Mode { running, updating, awaiting_decision };
const char* to_string(Mode mode) noexcept;

enum class Verdict { accept, reject };

struct Block {
    std::string id;
    novelty::BlockRole role;
    novelty::Threshold threshold;
    novelty::NoveltyBuffer novelty;
    novelty::FamiliarityBuffer familiarity;
    strategy::StrategySpec strategy;
    bool trigger_pending = false;

    std::vector<novelty::Sample> retained;   // frozen evaluation set for forgetting
    std::vector<novelty::Sample> reservoir;  // familiar samples since the last accept
    std::uint64_t reservoir_seen = 0;
    std::mt19937_64 reservoir_rng;

    std::size_t updates_accepted = 0;
    std::size_t updates_rejected = 0;
    double training_time = 0.0;
    double fitting_error = 0.0;
    std::optional<double> forgetting_ratio;
    double prediction_error_sum = 0.0;
    std::size_t prediction_error_count = 0;
};

struct UpdateRecord {
    std::uint64_t id = 0;
    std::string block_id;
    std::uint64_t position = 0;
    strategy::UpdateResult result;
    std::string issued_by;  // who decided: operator or auto_policy
    std::string note;
    std::optional<std::uint64_t> version;  // created by an accept

    std::optional<nn::MultiHeadRegressor> candidate;
    pre::MinMaxScaler candidate_scaler;
    std::vector<novelty::Sample> drained;
};

struct Version {
    std::uint64_t number = 0;
    std::uint64_t position = 0;
    std::string cause;
    std::optional<std::uint64_t> update_id;
    nn::WeightSnapshot weights;
    pre::MinMaxScaler scaler;
    std::map<std::string, novelty::Threshold> thresholds;
};

class Instance {
public:
    using Listener = std::function<void(const Event&)>;

    explicit Instance(Config config);

    // Commands.
    void pretrain(std::span<const pre::RawSample> samples);
    void ingest(const pre::RawSample& sample);
    void decide(std::uint64_t update_id, Verdict verdict, const std::string& issued_by = "operator",
                const std::string& note = "", const json& hyperparameters = nullptr);
    void rollback_to(std::uint64_t version, const std::string& note = "");
    void add_target(const std::string& target_id, const json& head_spec, const json& strategy,
                    std::span<const pre::RawSample> warmup);
    void set_hyperparameters(const json& edits);
    void checkpoint(const std::string& label);
    // Records an external marker (a scenario drift, say) in the log.
    void annotate(const std::string& kind, const json& details);

    // Replays the command events of `log` into a fresh instance.
    static Instance replay(const Config& config, std::span<const Event> log);

    // Queries.
    const Config& config() const noexcept { return config_; }
    bool pretrained() const noexcept { return pretrained_; }
    Mode mode() const noexcept { return mode_; }
    std::optional<std::uint64_t> pending_update() const noexcept { return pending_update_; }
    std::uint64_t ingested() const noexcept { return ingested_; }
    const nn::MultiHeadRegressor& model() const noexcept { return model_; }
    const pre::MinMaxScaler& scaler() const noexcept { return scaler_; }
    const std::vector<Block>& blocks() const noexcept { return blocks_; }
    const Block& block(const std::string& id) const;
    const std::vector<Version>& versions() const noexcept { return versions_; }
    const std::map<std::uint64_t, UpdateRecord>& updates() const noexcept { return updates_; }
    const UpdateRecord& update(std::uint64_t id) const;
    const std::vector<Event>& events() const noexcept { return events_; }
    std::uint64_t last_event_seq() const noexcept { return events_.empty() ? 0 : events_.back().seq; }

    json state() const;
    metrics::EvalReport report() const;

    // Preprocesses without touching the instance's forward-fill state.
    novelty::Sample preprocess(const pre::RawSample& raw) const;

    void set_listener(Listener listener) { listener_ = std::move(listener); }

private:
    Block make_block(const novelty::BlockRole& role) const;
    Block& block_mut(const std::string& id);
    void emit(const std::string& type, json payload);
    void log_command(const std::string& name, json args);
    std::uint64_t control_position() const noexcept { return ingested_ + 1; }

    std::vector<double> impute(const pre::RawSample& raw, bool remember);
    void route(Block& block, novelty::Sample sample, bool novel);
    void offer_reservoir(Block& block, const novelty::Sample& sample);
    void push_familiar(Block& block, novelty::Sample sample);
    void check_trigger(Block& block);
    void process_triggers();
    void run_update(const std::string& block_id);
    void finalize(UpdateRecord& record, Verdict verdict, const std::string& issued_by, const std::string& note,
                  const std::string& reason);
    void accept(UpdateRecord& record);
    void reject(UpdateRecord& record);
    std::size_t rescale_buffers(const pre::MinMaxScaler& scaler);
    void store_version(const std::string& cause, std::optional<std::uint64_t> update_id);
    std::vector<strategy::RetainedSet> retained_sets(const pre::MinMaxScaler& scaler) const;

    struct StagedEdits;
    StagedEdits stage_edits(const json& edits) const;
    void apply_edits(const StagedEdits& staged);

    Config config_;
    bool pretrained_ = false;
    Mode mode_ = Mode::running;
    std::optional<std::uint64_t> pending_update_;
    std::uint64_t ingested_ = 0;
    std::uint64_t position_ = 0;

    nn::MultiHeadRegressor model_;
    std::size_t reference_parameters_ = 0;
    pre::MinMaxScaler scaler_;
    std::vector<double> last_raw_;
    std::vector<double> raw_min_since_accept_;
    std::vector<double> raw_max_since_accept_;

    std::vector<Block> blocks_;
    std::deque<std::string> trigger_queue_;
    std::map<std::uint64_t, UpdateRecord> updates_;
    std::uint64_t next_update_id_ = 1;
    std::vector<Version> versions_;
    std::vector<Event> events_;
    Listener listener_;
};

}  // namespace clear::orch
