#include <clear/orchestrator.hpp>
#include <clear/random.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>

namespace clear::orch {

using strategy::block_id;

void AutoPolicy::validate() const {
    if (!(max_forgetting >= 0.0) || !std::isfinite(max_forgetting)) {
        throw Error(ErrorKind::validation, "auto_policy.max_forgetting must be >= 0");
    }
}

bool AutoPolicy::accepts(const strategy::UpdateResult& r) const {
    return r.novel_after < r.novel_before && r.forgetting_ratio && *r.forgetting_ratio <= max_forgetting;
}

void Config::validate() const {
    if (hidden_width == 0 || latent_dim == 0) throw Error(ErrorKind::validation, "autoencoder widths must be positive");
    if (head_layers.empty() || head_layers.back().width != 1) {
        throw Error(ErrorKind::validation, "head must end in a single output");
    }
    for (const auto& l : head_layers) {
        if (l.width == 0) throw Error(ErrorKind::validation, "head layer widths must be positive");
    }
    if (novelty_capacity == 0) throw Error(ErrorKind::validation, "novelty_capacity must be positive");
    if (retained_size == 0) throw Error(ErrorKind::validation, "retained_size must be positive");
    novelty::Threshold{initial_threshold, threshold_rule}.validate();
    strategy.validate();
    for (const auto& [id, spec] : block_strategies) {
        strategy::role_from_block_id(id);
        spec.validate();
    }
    auto_policy.validate();
    pretrain.validate();
    if (!(compute_budget_seconds > 0.0)) throw Error(ErrorKind::validation, "compute_budget_seconds must be positive");
    std::map<std::string, double> ones;
    for (const auto& [k, w] : metrics::equal_weights()) ones[k] = 1.0;
    metrics::cl_score(ones, score_weights);
    std::set<std::string> unique;
    for (const auto& t : targets) {
        if (t.empty()) throw Error(ErrorKind::validation, "target ids must not be empty");
        if (!unique.insert(t).second) throw Error(ErrorKind::validation, "duplicate target '" + t + "'");
    }
}

strategy::StrategySpec Config::strategy_for(const std::string& id) const {
    auto it = block_strategies.find(id);
    return it == block_strategies.end() ? strategy : it->second;
}

nn::NetSpec Config::head_spec() const { return nn::NetSpec{latent_dim, head_layers}; }

Config config_from_json(const json& value) {
    io::Reader r(value, "config");
    r.only({"seed", "features", "targets", "autoencoder", "head", "novelty_capacity", "familiarity_cap", "threshold",
            "strategy", "block_strategies", "auto_policy", "retained_size", "finetune_shared", "upstream_first",
            "ae_novel_feeds_predictors", "pretrain", "compute_budget_seconds", "score_weights", "emit_predictions"});
    Config c;
    c.seed = r.u64("seed", c.seed);
    if (r.has("features")) c.feature_names = r.texts("features");
    if (r.has("targets")) c.targets = r.texts("targets");
    if (r.has("autoencoder")) {
        auto ae = r.at("autoencoder");
        ae.only({"hidden", "latent"});
        c.hidden_width = ae.count("hidden", c.hidden_width);
        c.latent_dim = ae.count("latent", c.latent_dim);
    }
    if (r.has("head")) c.head_layers = io::head_spec_from_json(r.at("head"), c.latent_dim).layers;
    c.novelty_capacity = r.count("novelty_capacity", c.novelty_capacity);
    if (r.has("familiarity_cap")) c.familiarity_cap = r.count("familiarity_cap");
    if (r.has("threshold")) {
        auto t = r.at("threshold");
        t.only({"rule", "q", "alpha", "initial"});
        const auto rule = t.text("rule", "quantile");
        if (rule != "quantile" && rule != "fixed") t.fail("rule", "expected \"quantile\" or \"fixed\"");
        c.fixed_thresholds = rule == "fixed";
        c.threshold_rule.q = t.number("q", c.threshold_rule.q);
        c.threshold_rule.alpha = t.number("alpha", c.threshold_rule.alpha);
        c.initial_threshold = t.number("initial", c.initial_threshold);
    }
    if (r.has("strategy")) c.strategy = io::strategy_from_json(r.at("strategy"), c.strategy);
    if (r.has("block_strategies")) {
        const auto& blocks = r.value().at("block_strategies");
        if (!blocks.is_object()) r.fail("block_strategies", "expected an object keyed by block id");
        for (const auto& [id, spec] : blocks.items()) {
            c.block_strategies[id] = io::strategy_from_json(io::Reader(spec, "config.block_strategies." + id), c.strategy);
        }
    }
    if (r.has("auto_policy")) {
        auto p = r.at("auto_policy");
        p.only({"enabled", "max_forgetting"});
        c.auto_policy.enabled = p.flag("enabled", c.auto_policy.enabled);
        c.auto_policy.max_forgetting = p.number("max_forgetting", c.auto_policy.max_forgetting);
    }
    c.retained_size = r.count("retained_size", c.retained_size);
    c.finetune_shared = r.flag("finetune_shared", c.finetune_shared);
    c.upstream_first = r.flag("upstream_first", c.upstream_first);
    c.ae_novel_feeds_predictors = r.flag("ae_novel_feeds_predictors", c.ae_novel_feeds_predictors);
    if (r.has("pretrain")) c.pretrain = io::train_config_from_json(r.at("pretrain"), c.pretrain);
    c.compute_budget_seconds = r.number("compute_budget_seconds", c.compute_budget_seconds);
    if (r.has("score_weights")) {
        auto w = r.at("score_weights");
        c.score_weights.clear();
        for (const auto& [k, v] : w.value().items()) c.score_weights[k] = w.number(k.c_str());
    }
    c.emit_predictions = r.flag("emit_predictions", c.emit_predictions);
    try {
        c.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::validation, std::string("config: ") + e.what());
    }
    return c;
}

json to_json(const Config& c) {
    json strategies = json::object();
    for (const auto& [id, spec] : c.block_strategies) strategies[id] = io::to_json(spec);
    json threshold{{"rule", c.fixed_thresholds ? "fixed" : "quantile"},
                   {"q", c.threshold_rule.q},
                   {"alpha", c.threshold_rule.alpha},
                   {"initial", c.initial_threshold}};
    json head = io::to_json(c.head_spec());
    head.erase("input_width");
    return {{"seed", c.seed},
            {"features", c.feature_names},
            {"targets", c.targets},
            {"autoencoder", {{"hidden", c.hidden_width}, {"latent", c.latent_dim}}},
            {"head", head},
            {"novelty_capacity", c.novelty_capacity},
            {"familiarity_cap", c.familiarity_cap ? json(*c.familiarity_cap) : json(nullptr)},
            {"threshold", threshold},
            {"strategy", io::to_json(c.strategy)},
            {"block_strategies", strategies},
            {"auto_policy", {{"enabled", c.auto_policy.enabled}, {"max_forgetting", c.auto_policy.max_forgetting}}},
            {"retained_size", c.retained_size},
            {"finetune_shared", c.finetune_shared},
            {"upstream_first", c.upstream_first},
            {"ae_novel_feeds_predictors", c.ae_novel_feeds_predictors},
            {"pretrain", io::to_json(c.pretrain)},
            {"compute_budget_seconds", c.compute_budget_seconds},
            {"score_weights", c.score_weights},
            {"emit_predictions", c.emit_predictions}};
}

json to_json(const Event& e) {
    return {{"seq", e.seq}, {"ts", e.ts}, {"position", e.position}, {"type", e.type}, {"payload", e.payload}};
}

Event event_from_json(const json& value) {
    io::Reader r(value, "event");
    Event e;
    e.seq = r.u64("seq", 0);
    e.ts = r.number("ts", 0.0);
    e.position = r.u64("position", 0);
    e.type = r.text("type");
    e.payload = value.contains("payload") ? value.at("payload") : json::object();
    return e;
}

const char* to_string(Mode mode) noexcept {
    switch (mode) {
        case Mode::running: return "running";
        case Mode::updating: return "updating";
        case Mode::awaiting_decision: return "awaiting_decision";
    }
    return "running";
}

namespace {

double wall_clock() {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

// Stream sequence numbers; pretraining samples (seq 0) are only counted.
json seqs_of(const std::vector<novelty::Sample>& samples) {
    json out = json::array();
    for (const auto& s : samples) {
        if (s.seq) out.push_back(s.seq);
    }
    return out;
}

template <typename Container>
std::vector<nn::Example> examples_of(const novelty::BlockRole& role, const Container& samples,
                                     const pre::MinMaxScaler& scaler) {
    std::vector<nn::Example> out;
    for (const auto& s : samples) {
        if (role.is_predictor() && !s.y) continue;
        auto x = scaler.transform(s.raw_x);
        out.push_back(role.is_predictor() ? nn::Example{x, {*s.y}} : nn::Example{x, x});
    }
    return out;
}

}  // namespace

struct Instance::StagedEdits {
    struct BlockEdit {
        std::string id;
        novelty::Threshold threshold;
        std::size_t capacity = 0;
        std::optional<std::size_t> familiarity_cap;
        strategy::StrategySpec strategy;
    };
    std::vector<BlockEdit> blocks;
    AutoPolicy policy;
    std::string note;
};

Instance::Instance(Config config) : config_(std::move(config)) { config_.validate(); }

Block Instance::make_block(const novelty::BlockRole& role) const {
    Block b;
    b.id = block_id(role);
    b.role = role;
    b.threshold.value = config_.initial_threshold;
    if (config_.fixed_thresholds) {
        b.threshold.adaptation = novelty::FixedRule{};
    } else {
        b.threshold.adaptation = config_.threshold_rule;
    }
    b.novelty = novelty::NoveltyBuffer(config_.novelty_capacity);
    b.familiarity = novelty::FamiliarityBuffer(config_.familiarity_cap);
    b.strategy = config_.strategy_for(b.id);
    b.reservoir_rng.seed(nn::derive_seed(config_.seed, "reservoir:" + b.id));
    return b;
}

const Block& Instance::block(const std::string& id) const {
    for (const auto& b : blocks_) {
        if (b.id == id) return b;
    }
    throw Error(ErrorKind::not_found, "unknown block '" + id + "'");
}

Block& Instance::block_mut(const std::string& id) { return const_cast<Block&>(std::as_const(*this).block(id)); }

const UpdateRecord& Instance::update(std::uint64_t id) const {
    auto it = updates_.find(id);
    if (it == updates_.end()) throw Error(ErrorKind::not_found, "unknown update " + std::to_string(id));
    return it->second;
}

void Instance::emit(const std::string& type, json payload) {
    Event e{events_.size() + 1, wall_clock(), position_, type, std::move(payload)};
    events_.push_back(std::move(e));
    if (listener_) listener_(events_.back());
}

void Instance::log_command(const std::string& name, json args) {
    emit("command", {{"name", name}, {"args", std::move(args)}});
}

std::vector<double> Instance::impute(const pre::RawSample& raw, bool remember) {
    std::vector<double> filled(raw.x.size());
    for (std::size_t j = 0; j < raw.x.size(); ++j) {
        const double v = raw.x[j];
        if (pre::is_missing(v)) {
            if (pre::is_missing(last_raw_[j])) {
                throw Error(ErrorKind::validation,
                            "feature '" + scaler_.names()[j] + "' is missing and has no earlier value");
            }
            filled[j] = last_raw_[j];
        } else {
            filled[j] = v;
            if (remember) last_raw_[j] = v;
        }
    }
    return filled;
}

novelty::Sample Instance::preprocess(const pre::RawSample& raw) const {
    if (!pretrained_) throw Error(ErrorKind::conflict, "instance is not pretrained");
    if (raw.x.size() != scaler_.size()) {
        throw Error(ErrorKind::shape, "sample has " + std::to_string(raw.x.size()) + " features, expected " +
                                          std::to_string(scaler_.size()));
    }
    novelty::Sample s;
    s.timestamp = raw.timestamp;
    s.raw_x = const_cast<Instance*>(this)->impute(raw, false);
    s.x = scaler_.transform(s.raw_x);
    return s;
}

void Instance::pretrain(std::span<const pre::RawSample> samples) {
    if (pretrained_) throw Error(ErrorKind::conflict, "instance is already pretrained");
    if (samples.empty()) throw Error(ErrorKind::validation, "pretraining needs samples");
    const std::size_t width = samples.front().x.size();
    if (width == 0) throw Error(ErrorKind::validation, "samples need at least one feature");
    for (const auto& s : samples) {
        if (s.x.size() != width) throw Error(ErrorKind::shape, "pretraining samples differ in feature count");
    }
    std::vector<std::string> names = config_.feature_names;
    if (names.empty()) {
        for (std::size_t j = 0; j < width; ++j) names.push_back("x" + std::to_string(j));
    } else if (names.size() != width) {
        throw Error(ErrorKind::shape, "config names " + std::to_string(names.size()) + " features, samples have " +
                                          std::to_string(width));
    }
    std::vector<std::vector<double>> rows;
    for (const auto& s : samples) rows.push_back(s.x);
    auto columns = pre::to_columns(rows);
    for (std::size_t j = 0; j < width; ++j) {
        try {
            columns[j] = pre::fill_missing(columns[j], {pre::ImputeStrategy::forward_fill});
        } catch (const Error&) {
            throw Error(ErrorKind::validation, "feature '" + names[j] + "' has no values in the pretraining data");
        }
    }

    position_ = control_position();
    json logged = json::array();
    for (const auto& s : samples) logged.push_back(io::to_json(s));
    log_command("pretrain", {{"samples", logged}});

    scaler_ = pre::MinMaxScaler::fit(names, columns);
    last_raw_.assign(width, 0.0);
    for (std::size_t j = 0; j < width; ++j) last_raw_[j] = columns[j].back();
    raw_min_since_accept_.assign(width, std::numeric_limits<double>::infinity());
    raw_max_since_accept_.assign(width, -std::numeric_limits<double>::infinity());

    model_ = nn::MultiHeadRegressor(nn::AutoencoderSpec{width, config_.hidden_width, config_.latent_dim},
                                    nn::derive_seed(config_.seed, "model"));
    for (const auto& t : config_.targets) model_.add_head(t, config_.head_spec(), nn::Init::seeded_random);

    std::vector<novelty::Sample> prepared;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        novelty::Sample s;
        s.timestamp = samples[i].timestamp;
        for (std::size_t j = 0; j < width; ++j) s.raw_x.push_back(columns[j][i]);
        s.x = scaler_.transform(s.raw_x);
        prepared.push_back(std::move(s));
    }

    blocks_.push_back(make_block(novelty::BlockRole::autoencoder()));
    for (const auto& t : config_.targets) blocks_.push_back(make_block(novelty::BlockRole::predictor(t)));

    json losses = json::object();
    json thresholds = json::object();
    for (auto& b : blocks_) {
        std::vector<novelty::Sample> own;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            novelty::Sample s = prepared[i];
            if (b.role.is_predictor()) {
                auto it = samples[i].y.find(b.role.target_id);
                if (it == samples[i].y.end() || pre::is_missing(it->second)) continue;
                s.y = pre::clip_unit(it->second);
            }
            own.push_back(std::move(s));
        }
        if (own.empty()) {
            losses[b.id] = nullptr;
            thresholds[b.id] = b.threshold.value;
            continue;
        }
        auto data = strategy::to_examples(b.role, own);
        nn::TrainConfig cfg = config_.pretrain;
        cfg.seed = nn::derive_seed(config_.seed, "pretrain:" + b.id);
        nn::Chain chain = b.role.is_predictor() ? model_.predictor_chain(b.role.target_id, false)
                                                : model_.autoencoder_chain();
        const auto report = nn::train(chain, data, cfg);
        b.fitting_error = report.final_loss;
        losses[b.id] = report.final_loss;

        std::vector<double> scores;
        for (auto& s : own) {
            s.score = novelty::score(model_, b.role, s);
            scores.push_back(s.score);
        }
        if (std::holds_alternative<novelty::QuantileRule>(b.threshold.adaptation)) {
            b.threshold = *novelty::adjust_threshold(b.threshold, scores);
        }
        thresholds[b.id] = b.threshold.value;
        for (auto& s : own) {
            offer_reservoir(b, s);
            push_familiar(b, std::move(s));
        }
        b.retained = std::move(b.reservoir);
        b.reservoir.clear();
        b.reservoir_seen = 0;
    }
    reference_parameters_ = nn::snapshot(model_).values.size();
    pretrained_ = true;
    emit("pretrained", {{"samples", samples.size()},
                        {"features", names},
                        {"targets", config_.targets},
                        {"losses", losses},
                        {"thresholds", thresholds}});
    store_version("pretrain", std::nullopt);
}

void Instance::ingest(const pre::RawSample& raw) {
    if (!pretrained_) throw Error(ErrorKind::conflict, "pretrain the instance before ingesting");
    if (raw.x.size() != scaler_.size()) {
        throw Error(ErrorKind::shape, "sample has " + std::to_string(raw.x.size()) + " features, expected " +
                                          std::to_string(scaler_.size()));
    }
    for (double v : raw.x) {
        if (!pre::is_missing(v) && !std::isfinite(v)) throw Error(ErrorKind::validation, "feature values must be finite");
    }
    for (const auto& [k, v] : raw.y) {
        if (!pre::is_missing(v) && !std::isfinite(v)) throw Error(ErrorKind::validation, "target values must be finite");
    }
    impute(raw, false);

    position_ = ingested_ + 1;
    log_command("ingest", {{"sample", io::to_json(raw)}});
    const std::uint64_t seq = ++ingested_;
    const auto filled = impute(raw, true);
    for (std::size_t j = 0; j < filled.size(); ++j) {
        raw_min_since_accept_[j] = std::min(raw_min_since_accept_[j], filled[j]);
        raw_max_since_accept_[j] = std::max(raw_max_since_accept_[j], filled[j]);
    }

    novelty::Sample base;
    base.timestamp = raw.timestamp;
    base.seq = seq;
    base.raw_x = filled;
    base.x = scaler_.transform(filled);

    auto truth = [&](const std::string& target) -> std::optional<double> {
        auto it = raw.y.find(target);
        if (it == raw.y.end() || pre::is_missing(it->second)) return std::nullopt;
        return pre::clip_unit(it->second);
    };

    if (config_.emit_predictions) {
        for (const auto& b : blocks_) {
            if (!b.role.is_predictor()) continue;
            const auto y = truth(b.role.target_id);
            emit("prediction", {{"target", b.role.target_id},
                                {"seq", seq},
                                {"value", model_.predict(b.role.target_id, base.x)},
                                {"truth", y ? json(*y) : json(nullptr)}});
        }
    }

    bool ae_novel = false;
    for (auto& b : blocks_) {
        novelty::Sample s = base;
        if (b.role.is_predictor()) {
            s.y = truth(b.role.target_id);
            if (!s.y) continue;
        }
        s.score = novelty::score(model_, b.role, s);
        const auto verdict = novelty::classify(s.score, b.threshold);
        emit("score", {{"block", b.id},
                       {"seq", seq},
                       {"score", s.score},
                       {"threshold", b.threshold.value},
                       {"verdict", novelty::to_string(verdict)}});
        b.prediction_error_sum += s.score;
        ++b.prediction_error_count;
        bool novel = verdict == novelty::Verdict::novel;
        if (!b.role.is_predictor()) {
            ae_novel = novel;
        } else if (config_.ae_novel_feeds_predictors && ae_novel) {
            novel = true;
        }
        route(b, std::move(s), novel);
    }
    process_triggers();
}

void Instance::route(Block& b, novelty::Sample sample, bool novel) {
    if (novel) {
        b.novelty.push(std::move(sample));
        check_trigger(b);
        return;
    }
    offer_reservoir(b, sample);
    push_familiar(b, std::move(sample));
}

void Instance::offer_reservoir(Block& b, const novelty::Sample& sample) {
    ++b.reservoir_seen;
    if (b.reservoir.size() < config_.retained_size) {
        b.reservoir.push_back(sample);
        return;
    }
    const std::size_t j = rnd::index(b.reservoir_rng, b.reservoir_seen);
    if (j < config_.retained_size) b.reservoir[j] = sample;
}

void Instance::push_familiar(Block& b, novelty::Sample sample) {
    auto evicted = b.familiarity.push(std::move(sample));
    if (!evicted.empty()) {
        emit("familiarity_evicted", {{"block", b.id}, {"seqs", seqs_of(evicted)}, {"count", evicted.size()}});
    }
}

void Instance::check_trigger(Block& b) {
    if (!b.novelty.is_full() || b.trigger_pending) return;
    b.trigger_pending = true;
    trigger_queue_.push_back(b.id);
    emit("update_triggered", {{"block", b.id}, {"fill", b.novelty.fill()}, {"capacity", b.novelty.capacity()}});
}

void Instance::process_triggers() {
    while (mode_ == Mode::running && !trigger_queue_.empty()) {
        auto next = trigger_queue_.begin();
        if (config_.upstream_first) {
            auto rank = [&](const std::string& id) {
                for (std::size_t i = 0; i < blocks_.size(); ++i) {
                    if (blocks_[i].id == id) return i;
                }
                return blocks_.size();
            };
            next = std::min_element(trigger_queue_.begin(), trigger_queue_.end(),
                                    [&](const std::string& a, const std::string& b) { return rank(a) < rank(b); });
        }
        const std::string id = *next;
        trigger_queue_.erase(next);
        run_update(id);
    }
}

std::vector<strategy::RetainedSet> Instance::retained_sets(const pre::MinMaxScaler& scaler) const {
    std::vector<strategy::RetainedSet> sets;
    for (const auto& b : blocks_) sets.push_back({b.role, examples_of(b.role, b.retained, scaler)});
    return sets;
}

void Instance::run_update(const std::string& id) {
    Block& b = block_mut(id);
    UpdateRecord rec;
    rec.id = next_update_id_++;
    rec.block_id = id;
    rec.position = position_;
    mode_ = Mode::updating;
    emit("update_started", {{"update_id", rec.id}, {"block", id}, {"novel_count", b.novelty.fill()}});

    rec.drained = b.novelty.drain();
    pre::Columns seen(scaler_.size());
    for (std::size_t j = 0; j < seen.size(); ++j) {
        if (raw_min_since_accept_[j] <= raw_max_since_accept_[j]) {
            seen[j] = {raw_min_since_accept_[j], raw_max_since_accept_[j]};
        }
    }
    rec.candidate_scaler = scaler_.partial_update(seen);
    const bool scaler_changed = !(rec.candidate_scaler == scaler_);

    strategy::StrategySpec spec = b.strategy;
    spec.train.seed = nn::derive_seed(config_.seed, "update:" + std::to_string(rec.id));
    const auto novel = examples_of(b.role, rec.drained, rec.candidate_scaler);
    auto familiar = examples_of(b.role, b.familiarity.items(), rec.candidate_scaler);
    const auto retained = retained_sets(rec.candidate_scaler);
    std::vector<std::string> notes;
    if (familiar.empty() && std::holds_alternative<strategy::Ewc>(spec.kind)) {
        // Accepts empty the familiarity buffer; the retained set still holds old data.
        familiar = examples_of(b.role, b.retained, rec.candidate_scaler);
        notes.push_back("familiarity buffer empty; Fisher information estimated on the retained set");
    }

    nn::MultiHeadRegressor candidate = model_;
    strategy::UpdateResult result;
    try {
        result = strategy::update_block(candidate, b.role, spec, novel, familiar, retained,
                                        strategy::UpdateOptions{config_.finetune_shared});
    } catch (const Error& e) {
        candidate = model_;
        result.block_id = id;
        result.strategy = spec;
        result.status = strategy::UpdateStatus::rejected;
        result.failure = e.what();
    }
    result.warnings.insert(result.warnings.begin(), notes.begin(), notes.end());
    if (scaler_changed) {
        // "Before" describes the live system, which still scales with the old parameters.
        result.novel_before = strategy::block_loss(model_, b.role, examples_of(b.role, rec.drained, scaler_));
        for (const auto& set : retained_sets(scaler_)) {
            const double loss = strategy::block_loss(model_, set.role, set.examples);
            if (block_id(set.role) == id) {
                result.retained_before = loss;
            } else {
                result.collateral[block_id(set.role)].before = loss;
            }
        }
        result.forgetting_ratio = metrics::forgetting_ratio(result.retained_before, result.retained_after);
    }
    rec.result = result;
    rec.candidate = std::move(candidate);
    emit("update_proposed", {{"update_id", rec.id},
                             {"block", id},
                             {"result", io::to_json(result)},
                             {"scaler_changed", scaler_changed}});
    auto& stored = updates_[rec.id] = std::move(rec);

    if (stored.result.status == strategy::UpdateStatus::rejected) {
        finalize(stored, Verdict::reject, "auto_policy", "", "failed: " + stored.result.failure);
    } else if (config_.auto_policy.enabled) {
        finalize(stored, config_.auto_policy.accepts(stored.result) ? Verdict::accept : Verdict::reject, "auto_policy",
                 "", "auto_policy");
    } else {
        mode_ = Mode::awaiting_decision;
        pending_update_ = stored.id;
        emit("awaiting_decision", {{"update_id", stored.id}, {"block", id}});
    }
}

void Instance::finalize(UpdateRecord& rec, Verdict verdict, const std::string& issued_by, const std::string& note,
                        const std::string& reason) {
    Block& b = block_mut(rec.block_id);
    rec.issued_by = issued_by;
    rec.note = note;
    rec.result.status = verdict == Verdict::accept ? strategy::UpdateStatus::accepted : strategy::UpdateStatus::rejected;
    emit("update_decided", {{"update_id", rec.id},
                            {"block", rec.block_id},
                            {"verdict", verdict == Verdict::accept ? "accept" : "reject"},
                            {"issued_by", issued_by},
                            {"note", note},
                            {"reason", reason}});
    b.training_time += rec.result.training_time;
    if (verdict == Verdict::accept) {
        accept(rec);
    } else {
        reject(rec);
    }
    rec.candidate.reset();
    b.trigger_pending = false;
    mode_ = Mode::running;
    pending_update_.reset();
    check_trigger(b);
}

std::size_t Instance::rescale_buffers(const pre::MinMaxScaler& scaler) {
    std::size_t count = 0;
    auto apply = [&](novelty::Sample& s) {
        s.x = scaler.transform(s.raw_x);
        ++count;
    };
    for (auto& b : blocks_) {
        b.novelty.for_each(apply);
        b.familiarity.for_each(apply);
        for (auto& s : b.retained) apply(s);
        for (auto& s : b.reservoir) apply(s);
    }
    return count;
}

void Instance::accept(UpdateRecord& rec) {
    Block& b = block_mut(rec.block_id);
    model_ = std::move(*rec.candidate);
    if (!(rec.candidate_scaler == scaler_)) {
        scaler_ = rec.candidate_scaler;
        const auto count = rescale_buffers(scaler_);
        emit("scaler_updated", {{"record", scaler_.to_record()}, {"rescaled_samples", count}});
    }
    std::fill(raw_min_since_accept_.begin(), raw_min_since_accept_.end(), std::numeric_limits<double>::infinity());
    std::fill(raw_max_since_accept_.begin(), raw_max_since_accept_.end(), -std::numeric_limits<double>::infinity());

    std::vector<double> scores;
    for (auto s : rec.drained) {
        s.x = scaler_.transform(s.raw_x);
        scores.push_back(novelty::score(model_, b.role, s));
    }
    if (auto adjusted = novelty::adjust_threshold(b.threshold, scores)) {
        emit("threshold_adjusted", {{"block", b.id}, {"old", b.threshold.value}, {"new", adjusted->value}});
        b.threshold = *adjusted;
    } else {
        emit("threshold_adjustment_skipped", {{"block", b.id}, {"reason", "no post-update scores"}});
    }

    const auto novel = b.novelty.clear();
    const auto familiar = b.familiarity.drain();
    emit("buffers_emptied", {{"block", b.id},
                             {"novelty_seqs", seqs_of(novel)},
                             {"familiarity_seqs", seqs_of(familiar)},
                             {"removed", novel.size() + familiar.size()}});
    if (!b.reservoir.empty()) {
        b.retained = std::move(b.reservoir);
        b.reservoir.clear();
        b.reservoir_seen = 0;
        emit("retained_set_frozen", {{"block", b.id}, {"size", b.retained.size()}});
    }

    ++b.updates_accepted;
    b.fitting_error = rec.result.novel_after;
    b.forgetting_ratio = rec.result.forgetting_ratio;
    b.prediction_error_sum = 0.0;
    b.prediction_error_count = 0;
    store_version("accept update " + std::to_string(rec.id), rec.id);
    rec.version = versions_.back().number;
}

void Instance::reject(UpdateRecord& rec) {
    Block& b = block_mut(rec.block_id);
    for (const auto& s : rec.drained) push_familiar(b, s);
    emit("samples_demoted", {{"block", b.id}, {"seqs", seqs_of(rec.drained)}});
    ++b.updates_rejected;
}

void Instance::store_version(const std::string& cause, std::optional<std::uint64_t> update_id) {
    Version v;
    v.number = versions_.size() + 1;
    v.position = position_;
    v.cause = cause;
    v.update_id = update_id;
    v.weights = nn::snapshot(model_);
    v.scaler = scaler_;
    for (const auto& b : blocks_) v.thresholds[b.id] = b.threshold;
    versions_.push_back(std::move(v));
    const auto& stored = versions_.back();
    emit("version_created", {{"version", stored.number},
                             {"cause", cause},
                             {"update_id", update_id ? json(*update_id) : json(nullptr)},
                             {"architecture", stored.weights.architecture}});
}

void Instance::decide(std::uint64_t update_id, Verdict verdict, const std::string& issued_by, const std::string& note,
                      const json& hyperparameters) {
    auto it = updates_.find(update_id);
    if (it == updates_.end()) throw Error(ErrorKind::not_found, "unknown update " + std::to_string(update_id));
    if (!it->second.candidate) {
        throw Error(ErrorKind::conflict, "update " + std::to_string(update_id) + " was already decided (" +
                                             strategy::to_string(it->second.result.status) + ")");
    }
    std::optional<StagedEdits> staged;
    if (!hyperparameters.is_null()) staged = stage_edits(hyperparameters);

    position_ = control_position();
    log_command("decide", {{"update_id", update_id},
                           {"verdict", verdict == Verdict::accept ? "accept" : "reject"},
                           {"issued_by", issued_by},
                           {"note", note},
                           {"hyperparameters", hyperparameters}});
    finalize(it->second, verdict, issued_by, note, "operator");
    if (staged) apply_edits(*staged);
    process_triggers();
}

void Instance::rollback_to(std::uint64_t version, const std::string& note) {
    if (mode_ == Mode::awaiting_decision) {
        throw Error(ErrorKind::conflict, "decide pending update " + std::to_string(*pending_update_) + " first");
    }
    if (version == 0 || version > versions_.size()) {
        throw Error(ErrorKind::not_found, "unknown version " + std::to_string(version));
    }
    const Version target = versions_[version - 1];
    if (target.weights.architecture != model_.descriptor()) {
        throw Error(ErrorKind::incompatible_snapshot, "version " + std::to_string(version) +
                                                          " has a different architecture (" +
                                                          target.weights.architecture + ")");
    }
    position_ = control_position();
    log_command("rollback", {{"version", version}, {"note", note}});
    nn::restore(model_, target.weights);
    if (!(target.scaler == scaler_)) {
        scaler_ = target.scaler;
        const auto count = rescale_buffers(scaler_);
        emit("scaler_updated", {{"record", scaler_.to_record()}, {"rescaled_samples", count}});
    }
    for (auto& b : blocks_) {
        auto t = target.thresholds.find(b.id);
        if (t != target.thresholds.end()) b.threshold = t->second;
    }
    emit("rolled_back", {{"to", version}, {"version", versions_.size() + 1}, {"note", note}});
    store_version("rollback to version " + std::to_string(version), std::nullopt);
}

void Instance::add_target(const std::string& target_id, const json& head_spec, const json& strategy_edits,
                          std::span<const pre::RawSample> warmup) {
    if (!pretrained_) throw Error(ErrorKind::conflict, "pretrain the instance before adding targets");
    if (mode_ == Mode::awaiting_decision) {
        throw Error(ErrorKind::conflict, "decide pending update " + std::to_string(*pending_update_) + " first");
    }
    if (target_id.empty()) throw Error(ErrorKind::validation, "field 'target_id': required");
    if (model_.has_head(target_id)) throw Error(ErrorKind::conflict, "target '" + target_id + "' already exists");
    const nn::NetSpec spec =
        head_spec.is_null() ? config_.head_spec() : io::head_spec_from_json(io::Reader(head_spec, "head_spec"), config_.latent_dim);
    if (spec.input_width != model_.latent_dim()) {
        throw Error(ErrorKind::shape, "head input width " + std::to_string(spec.input_width) + " != latent_dim " +
                                          std::to_string(model_.latent_dim()));
    }
    if (spec.output_width() != 1) throw Error(ErrorKind::shape, "a head must emit exactly one output");
    const std::string id = "p_" + target_id;
    const auto block_strategy = strategy_edits.is_null()
                                    ? config_.strategy_for(id)
                                    : io::strategy_from_json(io::Reader(strategy_edits, "strategy"), config_.strategy_for(id));
    std::vector<novelty::Sample> samples;
    for (const auto& raw : warmup) {
        auto s = preprocess(raw);
        auto it = raw.y.find(target_id);
        if (it == raw.y.end() || pre::is_missing(it->second)) continue;
        s.y = pre::clip_unit(it->second);
        samples.push_back(std::move(s));
    }

    position_ = control_position();
    json logged = json::array();
    for (const auto& raw : warmup) logged.push_back(io::to_json(raw));
    log_command("add_target", {{"target_id", target_id},
                               {"head_spec", io::to_json(spec)},
                               {"strategy", io::to_json(block_strategy)},
                               {"warmup", logged}});

    model_.add_head(target_id, spec, nn::Init::zero_output_layer);
    Block b = make_block(novelty::BlockRole::predictor(target_id));
    b.strategy = block_strategy;
    json warm = nullptr;
    if (!warmup.empty() && samples.empty()) {
        emit("warning", {{"block", id}, {"message", "no warm-up sample carries target '" + target_id + "'"}});
    }
    if (!samples.empty()) {
        strategy::StrategySpec iso{strategy::Isolation{true}, block_strategy.train};
        iso.train.seed = nn::derive_seed(config_.seed, "warmup:" + target_id);
        const auto examples = strategy::to_examples(b.role, samples);
        const auto result = strategy::update_block(model_, b.role, iso, examples, {}, retained_sets(scaler_));
        b.training_time += result.training_time;
        b.fitting_error = result.novel_after;
        if (result.status == strategy::UpdateStatus::rejected) {
            emit("warning", {{"block", id}, {"message", "warm-up diverged: " + result.failure}});
        }
        std::vector<double> scores;
        for (auto& s : samples) {
            s.score = novelty::score(model_, b.role, s);
            scores.push_back(s.score);
        }
        if (std::holds_alternative<novelty::QuantileRule>(b.threshold.adaptation)) {
            b.threshold = *novelty::adjust_threshold(b.threshold, scores);
        }
        for (const auto& s : samples) offer_reservoir(b, s);
        b.retained = std::move(b.reservoir);
        b.reservoir.clear();
        b.reservoir_seen = 0;
        warm = io::to_json(result);
    }
    blocks_.push_back(std::move(b));
    const Block& added = blocks_.back();
    emit("target_added", {{"target", target_id},
                          {"block", id},
                          {"head", model_.head(target_id).descriptor()},
                          {"warmup_count", samples.size()},
                          {"threshold", io::to_json(added.threshold)},
                          {"strategy", io::to_json(added.strategy)},
                          {"warmup", warm}});
    store_version("add target " + target_id, std::nullopt);
}


Instance::StagedEdits Instance::stage_edits(const json& edits) const {
    io::Reader r(edits, "");
    r.only({"blocks", "auto_policy", "note"});
    StagedEdits staged;
    staged.policy = config_.auto_policy;
    staged.note = r.text("note", "");
    if (r.has("blocks")) {
        const auto& blocks = r.value().at("blocks");
        if (!blocks.is_object()) r.fail("blocks", "expected an object keyed by block id");
        for (const auto& [id, value] : blocks.items()) {
            const Block& b = block(id);
            io::Reader e(value, "blocks." + id);
            e.only({"threshold", "adaptation", "novelty_capacity", "familiarity_cap", "strategy"});
            StagedEdits::BlockEdit edit{id, b.threshold, b.novelty.capacity(), b.familiarity.cap(), b.strategy};
            if (e.has("threshold")) {
                edit.threshold.value = e.number("threshold");
                if (edit.threshold.value < 0.0) e.fail("threshold", "must be >= 0");
            }
            if (e.has("adaptation")) {
                auto a = e.at("adaptation");
                a.only({"rule", "q", "alpha"});
                const auto rule = a.text("rule");
                if (rule == "fixed") {
                    edit.threshold.adaptation = novelty::FixedRule{};
                } else if (rule == "quantile") {
                    novelty::QuantileRule q;
                    if (const auto* cur = std::get_if<novelty::QuantileRule>(&b.threshold.adaptation)) q = *cur;
                    q.q = a.number("q", q.q);
                    q.alpha = a.number("alpha", q.alpha);
                    if (!(q.q >= 0.0 && q.q <= 1.0)) a.fail("q", "must lie in [0,1]");
                    if (!(q.alpha > 0.0)) a.fail("alpha", "must be > 0");
                    edit.threshold.adaptation = q;
                } else {
                    a.fail("rule", "expected \"quantile\" or \"fixed\"");
                }
            }
            if (e.has("novelty_capacity")) {
                edit.capacity = e.count("novelty_capacity");
                if (edit.capacity == 0) e.fail("novelty_capacity", "must be positive");
            }
            if (value.contains("familiarity_cap")) {
                edit.familiarity_cap = value.at("familiarity_cap").is_null()
                                           ? std::nullopt
                                           : std::optional<std::size_t>(e.count("familiarity_cap"));
            }
            if (e.has("strategy")) edit.strategy = io::strategy_from_json(e.at("strategy"), b.strategy);
            staged.blocks.push_back(std::move(edit));
        }
    }
    if (r.has("auto_policy")) {
        auto p = r.at("auto_policy");
        p.only({"enabled", "max_forgetting"});
        staged.policy.enabled = p.flag("enabled", staged.policy.enabled);
        staged.policy.max_forgetting = p.number("max_forgetting", staged.policy.max_forgetting);
        if (!(staged.policy.max_forgetting >= 0.0)) p.fail("max_forgetting", "must be >= 0");
    }
    return staged;
}

void Instance::apply_edits(const StagedEdits& staged) {
    json changes = json::array();
    auto change = [&](const std::string& field, json old_value, json new_value) {
        if (old_value != new_value) changes.push_back({{"field", field}, {"old", old_value}, {"new", new_value}});
    };
    std::vector<std::pair<Block*, std::vector<novelty::Sample>>> evictions;
    for (const auto& edit : staged.blocks) {
        Block& b = block_mut(edit.id);
        change(edit.id + ".threshold", io::to_json(b.threshold), io::to_json(edit.threshold));
        change(edit.id + ".novelty_capacity", b.novelty.capacity(), edit.capacity);
        change(edit.id + ".familiarity_cap", b.familiarity.cap() ? json(*b.familiarity.cap()) : json(nullptr),
               edit.familiarity_cap ? json(*edit.familiarity_cap) : json(nullptr));
        change(edit.id + ".strategy", io::to_json(b.strategy), io::to_json(edit.strategy));
        b.threshold = edit.threshold;
        b.novelty.set_capacity(edit.capacity);
        evictions.emplace_back(&b, b.familiarity.set_cap(edit.familiarity_cap));
        b.strategy = edit.strategy;
    }
    change("auto_policy.enabled", config_.auto_policy.enabled, staged.policy.enabled);
    change("auto_policy.max_forgetting", config_.auto_policy.max_forgetting, staged.policy.max_forgetting);
    config_.auto_policy = staged.policy;
    emit("hyperparameters_changed", {{"changes", changes}, {"note", staged.note}});
    for (auto& [b, evicted] : evictions) {
        if (!evicted.empty()) {
            emit("familiarity_evicted", {{"block", b->id}, {"seqs", seqs_of(evicted)}, {"count", evicted.size()}});
        }
        check_trigger(*b);
    }
}

void Instance::set_hyperparameters(const json& edits) {
    if (!pretrained_) throw Error(ErrorKind::conflict, "pretrain the instance before editing hyperparameters");
    const auto staged = stage_edits(edits);
    position_ = control_position();
    log_command("set_hyperparameters", {{"edits", edits}});
    apply_edits(staged);
    process_triggers();
}

void Instance::checkpoint(const std::string& label) {
    position_ = control_position();
    log_command("checkpoint", {{"label", label}});
    emit("checkpoint", {{"label", label},
                        {"version", versions_.size()},
                        {"report", pretrained_ ? io::to_json(report()) : json(nullptr)}});
}

void Instance::annotate(const std::string& kind, const json& details) {
    if (kind.empty()) throw Error(ErrorKind::validation, "annotation kind must not be empty");
    position_ = control_position();
    log_command("annotate", {{"kind", kind}, {"details", details}});
    emit("annotation", {{"kind", kind}, {"details", details}});
}

Instance Instance::replay(const Config& config, std::span<const Event> log) {
    Instance inst(config);
    auto raws = [](const json& list) {
        std::vector<pre::RawSample> out;
        for (const auto& item : list) out.push_back(io::raw_sample_from_json(io::Reader(item, "sample")));
        return out;
    };
    for (const auto& e : log) {
        if (e.type != "command") continue;
        const auto name = e.payload.at("name").get<std::string>();
        const auto& a = e.payload.at("args");
        if (name == "pretrain") {
            const auto samples = raws(a.at("samples"));
            inst.pretrain(samples);
        } else if (name == "ingest") {
            inst.ingest(io::raw_sample_from_json(io::Reader(a.at("sample"), "sample")));
        } else if (name == "decide") {
            inst.decide(a.at("update_id").get<std::uint64_t>(),
                        a.at("verdict").get<std::string>() == "accept" ? Verdict::accept : Verdict::reject,
                        a.at("issued_by").get<std::string>(), a.at("note").get<std::string>(), a.at("hyperparameters"));
        } else if (name == "rollback") {
            inst.rollback_to(a.at("version").get<std::uint64_t>(), a.at("note").get<std::string>());
        } else if (name == "add_target") {
            const auto warmup = raws(a.at("warmup"));
            inst.add_target(a.at("target_id").get<std::string>(), a.at("head_spec"), a.at("strategy"), warmup);
        } else if (name == "set_hyperparameters") {
            inst.set_hyperparameters(a.at("edits"));
        } else if (name == "checkpoint") {
            inst.checkpoint(a.at("label").get<std::string>());
        } else if (name == "annotate") {
            inst.annotate(a.at("kind").get<std::string>(), a.at("details"));
        } else {
            throw Error(ErrorKind::parse, "unknown command '" + name + "' in event " + std::to_string(e.seq));
        }
    }
    return inst;
}

json Instance::state() const {
    json blocks = json::array();
    for (const auto& b : blocks_) {
        blocks.push_back({{"id", b.id},
                          {"role", b.role.is_predictor() ? "predictor" : "autoencoder"},
                          {"target", b.role.is_predictor() ? json(b.role.target_id) : json(nullptr)},
                          {"threshold", io::to_json(b.threshold)},
                          {"novelty", io::to_json(b.novelty.status(), b.novelty.capacity())},
                          {"familiarity",
                           {{"fill", b.familiarity.fill()},
                            {"cap", b.familiarity.cap() ? json(*b.familiarity.cap()) : json(nullptr)}}},
                          {"strategy", io::to_json(b.strategy)},
                          {"trigger_pending", b.trigger_pending},
                          {"retained_size", b.retained.size()},
                          {"updates_accepted", b.updates_accepted},
                          {"updates_rejected", b.updates_rejected}});
    }
    json versions = json::array();
    for (const auto& v : versions_) {
        versions.push_back({{"version", v.number},
                            {"position", v.position},
                            {"cause", v.cause},
                            {"update_id", v.update_id ? json(*v.update_id) : json(nullptr)},
                            {"architecture", v.weights.architecture}});
    }
    json pending = nullptr;
    if (pending_update_) {
        const auto& rec = updates_.at(*pending_update_);
        pending = {{"update_id", rec.id}, {"block", rec.block_id}, {"result", io::to_json(rec.result)}};
    }
    json scaler = json::array();
    for (std::size_t j = 0; j < scaler_.size(); ++j) {
        scaler.push_back({{"name", scaler_.names()[j]}, {"min", scaler_.min()[j]}, {"max", scaler_.max()[j]}});
    }
    json targets = json::array();
    for (const auto& [id, head] : model_.heads()) targets.push_back(id);
    return {{"mode", to_string(mode_)},
            {"pretrained", pretrained_},
            {"pending_update", pending},
            {"ingested", ingested_},
            {"version", versions_.size()},
            {"versions", versions},
            {"blocks", blocks},
            {"targets", targets},
            {"scaler", scaler},
            {"auto_policy",
             {{"enabled", config_.auto_policy.enabled}, {"max_forgetting", config_.auto_policy.max_forgetting}}},
            {"last_event_seq", last_event_seq()}};
}

metrics::EvalReport Instance::report() const {
    namespace m = metrics;
    m::EvalReport report;
    double predictor_error = 0.0, ae_error = 0.0, total_time = 0.0;
    std::size_t predictors = 0;
    std::set<std::uint64_t> stored;
    for (const auto& b : blocks_) {
        m::BlockEval e;
        e.block_id = b.id;
        e.updates_accepted = b.updates_accepted;
        e.updates_rejected = b.updates_rejected;
        e.fitting_error = b.fitting_error;
        e.prediction_error =
            b.prediction_error_count ? b.prediction_error_sum / static_cast<double>(b.prediction_error_count) : 0.0;
        e.forgetting_ratio = b.forgetting_ratio;
        e.training_time = b.training_time;
        report.blocks.push_back(e);
        total_time += b.training_time;
        if (b.role.is_predictor()) {
            predictor_error += e.prediction_error;
            ++predictors;
        } else {
            ae_error = e.prediction_error;
        }
        auto note = [&](const novelty::Sample& s) {
            if (s.seq) stored.insert(s.seq);
        };
        for (const auto& s : b.novelty.items()) note(s);
        for (const auto& s : b.novelty.pending()) note(s);
        for (const auto& s : b.familiarity.items()) note(s);
        for (const auto& s : b.retained) note(s);
        for (const auto& s : b.reservoir) note(s);
    }
    double forward = 0.0, backward = 0.0;
    std::size_t accepted = 0;
    for (const auto& [id, rec] : updates_) {
        if (rec.result.status != strategy::UpdateStatus::accepted) continue;
        forward += m::forward_transfer_component(rec.result.novel_before, rec.result.novel_after);
        backward += m::backward_transfer_component(rec.result.forgetting_ratio);
        ++accepted;
    }
    std::map<std::string, double> components{
        {m::component::accuracy,
         m::accuracy_component(predictors ? predictor_error / static_cast<double>(predictors) : ae_error)},
        {m::component::forward_transfer, accepted ? forward / static_cast<double>(accepted) : 0.0},
        {m::component::backward_transfer, accepted ? backward / static_cast<double>(accepted) : 1.0},
        {m::component::model_size_efficiency,
         m::model_size_component(reference_parameters_, pretrained_ ? nn::snapshot(model_).values.size() : 0)},
        {m::component::sample_storage_efficiency, m::storage_component(stored.size(), ingested_)},
        {m::component::compute_efficiency, m::compute_component(config_.compute_budget_seconds, total_time)}};
    report.score = m::cl_score(components, config_.score_weights);
    return report;
}

}  // namespace clear::orch
