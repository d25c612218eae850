#include <clear/serialization.hpp>

#include <algorithm>
#include <cmath>

namespace clear::io {

Reader::Reader(const json& value, std::string path) : value_(value), path_(std::move(path)) {
    if (!value_.is_object()) {
        throw Error(ErrorKind::validation, (path_.empty() ? std::string("payload") : "field '" + path_ + "'") +
                                               ": expected an object");
    }
}

std::string Reader::field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

void Reader::fail(const char* key, const std::string& message) const {
    throw Error(ErrorKind::validation, "field '" + field(key) + "': " + message);
}

bool Reader::has(const char* key) const { return value_.contains(key) && !value_.at(key).is_null(); }

const json& Reader::get(const char* key) const {
    if (!has(key)) fail(key, "required");
    return value_.at(key);
}

Reader Reader::at(const char* key) const { return Reader(get(key), field(key)); }

double Reader::number(const char* key) const {
    const auto& v = get(key);
    if (!v.is_number()) fail(key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(key, "must be finite");
    return d;
}

double Reader::number(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

std::size_t Reader::count(const char* key) const {
    const auto& v = get(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        fail(key, "expected a nonnegative integer");
    }
    return v.get<std::size_t>();
}

std::size_t Reader::count(const char* key, std::size_t fallback) const { return has(key) ? count(key) : fallback; }

std::uint64_t Reader::u64(const char* key, std::uint64_t fallback) const {
    return has(key) ? static_cast<std::uint64_t>(count(key)) : fallback;
}

bool Reader::flag(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = value_.at(key);
    if (!v.is_boolean()) fail(key, "expected true or false");
    return v.get<bool>();
}

std::string Reader::text(const char* key) const {
    const auto& v = get(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
}

std::string Reader::text(const char* key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
}

std::vector<std::string> Reader::texts(const char* key) const {
    const auto& v = get(key);
    if (!v.is_array()) fail(key, "expected a list of strings");
    std::vector<std::string> out;
    for (const auto& item : v) {
        if (!item.is_string()) fail(key, "expected a list of strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

void Reader::only(std::initializer_list<const char*> known) const {
    for (const auto& [key, _] : value_.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
            fail(key.c_str(), "unknown field");
        }
    }
}

json parse(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::parse, std::string("malformed JSON: ") + e.what());
    }
}

json to_json(const nn::TrainConfig& c) {
    json j{{"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"optimizer", c.optimizer == nn::Optimizer::adam ? "adam" : "sgd"},
           {"seed", c.seed}};
    if (c.optimizer == nn::Optimizer::adam) {
        j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}};
    }
    return j;
}

nn::TrainConfig train_config_from_json(const Reader& r, nn::TrainConfig c) {
    r.only({"epochs", "batch_size", "learning_rate", "optimizer", "adam", "seed"});
    c.epochs = r.count("epochs", c.epochs);
    c.batch_size = r.count("batch_size", c.batch_size);
    c.learning_rate = r.number("learning_rate", c.learning_rate);
    c.seed = r.u64("seed", c.seed);
    if (r.has("optimizer")) {
        const auto name = r.text("optimizer");
        if (name == "adam") {
            c.optimizer = nn::Optimizer::adam;
        } else if (name == "sgd") {
            c.optimizer = nn::Optimizer::sgd;
        } else {
            r.fail("optimizer", "expected \"adam\" or \"sgd\"");
        }
    }
    if (r.has("adam")) {
        const auto a = r.at("adam");
        a.only({"beta1", "beta2", "epsilon"});
        c.adam.beta1 = a.number("beta1", c.adam.beta1);
        c.adam.beta2 = a.number("beta2", c.adam.beta2);
        c.adam.epsilon = a.number("epsilon", c.adam.epsilon);
    }
    try {
        c.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::validation, "field '" + (r.path().empty() ? std::string("train") : r.path()) +
                                               "': " + e.what());
    }
    return c;
}

json to_json(const strategy::StrategySpec& spec) {
    json j{{"kind", spec.name()}, {"train", to_json(spec.train)}};
    if (const auto* r = std::get_if<strategy::Rehearsal>(&spec.kind)) {
        j["mix_ratio"] = r->mix_ratio;
        j["familiar_sample_count"] = r->familiar_sample_count;
    } else if (const auto* e = std::get_if<strategy::Ewc>(&spec.kind)) {
        j["lambda"] = e->lambda;
        j["fisher_sample_count"] = e->fisher_sample_count;
    } else if (const auto* i = std::get_if<strategy::Isolation>(&spec.kind)) {
        j["freeze_shared"] = i->freeze_shared;
    }
    return j;
}

strategy::StrategySpec strategy_from_json(const Reader& r, const strategy::StrategySpec& base) {
    using namespace strategy;
    r.only({"kind", "mix_ratio", "familiar_sample_count", "lambda", "fisher_sample_count", "freeze_shared", "train"});
    StrategySpec spec = base;
    if (r.has("kind")) {
        const auto kind = r.text("kind");
        if (kind != base.name()) {
            if (kind == "naive") {
                spec.kind = Naive{};
            } else if (kind == "rehearsal") {
                spec.kind = Rehearsal{};
            } else if (kind == "ewc") {
                spec.kind = Ewc{};
            } else if (kind == "isolation") {
                spec.kind = Isolation{};
            } else {
                r.fail("kind", "expected one of naive, rehearsal, ewc, isolation");
            }
        }
    }
    auto misplaced = [&](const char* key) {
        if (r.has(key)) r.fail(key, "not a parameter of strategy '" + spec.name() + "'");
    };
    if (auto* reh = std::get_if<Rehearsal>(&spec.kind)) {
        reh->mix_ratio = r.number("mix_ratio", reh->mix_ratio);
        if (!(reh->mix_ratio >= 0.0 && reh->mix_ratio <= 1.0)) r.fail("mix_ratio", "must lie in [0,1]");
        reh->familiar_sample_count = r.count("familiar_sample_count", reh->familiar_sample_count);
        if (reh->familiar_sample_count == 0) r.fail("familiar_sample_count", "must be positive");
    } else {
        misplaced("mix_ratio");
        misplaced("familiar_sample_count");
    }
    if (auto* e = std::get_if<Ewc>(&spec.kind)) {
        e->lambda = r.number("lambda", e->lambda);
        if (!(e->lambda >= 0.0)) r.fail("lambda", "must be >= 0");
        e->fisher_sample_count = r.count("fisher_sample_count", e->fisher_sample_count);
        if (e->fisher_sample_count == 0) r.fail("fisher_sample_count", "must be positive");
    } else {
        misplaced("lambda");
        misplaced("fisher_sample_count");
    }
    if (auto* iso = std::get_if<Isolation>(&spec.kind)) {
        iso->freeze_shared = r.flag("freeze_shared", iso->freeze_shared);
    } else {
        misplaced("freeze_shared");
    }
    if (r.has("train")) spec.train = train_config_from_json(r.at("train"), spec.train);
    spec.validate();
    return spec;
}

json to_json(const novelty::Threshold& t) {
    json adaptation;
    if (const auto* q = std::get_if<novelty::QuantileRule>(&t.adaptation)) {
        adaptation = {{"rule", "quantile"}, {"q", q->q}, {"alpha", q->alpha}};
    } else {
        adaptation = {{"rule", "fixed"}};
    }
    return {{"value", t.value}, {"adaptation", adaptation}};
}

json to_json(const novelty::BufferStatus& s, std::size_t capacity) {
    return {{"fill", s.fill}, {"capacity", capacity}, {"is_full", s.is_full}, {"pending", s.pending}};
}

nn::NetSpec head_spec_from_json(const Reader& r, std::size_t latent_dim) {
    r.only({"layers", "hidden", "activation", "input_width"});
    nn::NetSpec spec;
    spec.input_width = r.count("input_width", latent_dim);
    auto activation = [&](const Reader& at, const char* key, nn::Activation fallback) {
        if (!at.has(key)) return fallback;
        try {
            return nn::activation_from_string(at.text(key));
        } catch (const Error&) {
            at.fail(key, "expected one of linear, relu, tanh, sigmoid");
        }
    };
    if (r.has("layers")) {
        if (r.has("hidden")) r.fail("hidden", "give either layers or hidden");
        const auto& layers = r.value().at("layers");
        if (!layers.is_array() || layers.empty()) r.fail("layers", "expected a non-empty list");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            Reader layer(layers[i], r.path().empty() ? "layers[" + std::to_string(i) + "]"
                                                     : r.path() + ".layers[" + std::to_string(i) + "]");
            layer.only({"width", "activation"});
            const auto width = layer.count("width");
            if (width == 0) layer.fail("width", "must be positive");
            spec.layers.push_back({width, activation(layer, "activation", nn::Activation::linear)});
        }
    } else {
        const auto hidden = r.count("hidden", 16);
        if (hidden > 0) spec.layers.push_back({hidden, activation(r, "activation", nn::Activation::tanh)});
        spec.layers.push_back({1, nn::Activation::linear});
    }
    return spec;
}

json to_json(const nn::NetSpec& spec) {
    json layers = json::array();
    for (const auto& l : spec.layers) layers.push_back({{"width", l.width}, {"activation", nn::to_string(l.activation)}});
    return {{"input_width", spec.input_width}, {"layers", layers}};
}

json to_json(const pre::RawSample& s) {
    json x = json::array();
    for (double v : s.x) x.push_back(pre::is_missing(v) ? json(nullptr) : json(v));
    json y = json::object();
    for (const auto& [k, v] : s.y) y[k] = pre::is_missing(v) ? json(nullptr) : json(v);
    return {{"timestamp", pre::format_iso8601(s.timestamp)}, {"x", x}, {"y", y}};
}

pre::RawSample raw_sample_from_json(const Reader& r) {
    r.only({"timestamp", "x", "y"});
    pre::RawSample s;
    const auto& ts = r.value().contains("timestamp") ? r.value().at("timestamp") : json();
    if (ts.is_string()) {
        try {
            s.timestamp = pre::parse_iso8601(ts.get<std::string>());
        } catch (const Error& e) {
            r.fail("timestamp", e.what());
        }
    } else if (ts.is_number_integer()) {
        s.timestamp = ts.get<std::int64_t>();
    } else {
        r.fail("timestamp", "expected an ISO-8601 string or epoch seconds");
    }
    if (!r.has("x") || !r.value().at("x").is_array()) r.fail("x", "expected a list of numbers (null for missing)");
    for (const auto& v : r.value().at("x")) {
        if (v.is_null()) {
            s.x.push_back(pre::missing);
        } else if (v.is_number()) {
            s.x.push_back(v.get<double>());
        } else {
            r.fail("x", "expected a list of numbers (null for missing)");
        }
    }
    if (s.x.empty()) r.fail("x", "must not be empty");
    if (r.has("y")) {
        const auto& y = r.value().at("y");
        if (!y.is_object()) r.fail("y", "expected an object of target values");
        for (const auto& [k, v] : y.items()) {
            if (v.is_null()) continue;
            if (!v.is_number() || !std::isfinite(v.get<double>())) r.fail("y", "target '" + k + "' must be a number");
            s.y[k] = v.get<double>();
        }
    }
    return s;
}

json to_json(const streams::DriftSpec& d) {
    json j{{"kind", streams::to_string(d.kind)}, {"onset", d.onset}, {"ramp", d.ramp}, {"magnitude", d.magnitude}};
    if (!d.target.empty()) j["target"] = d.target;
    return j;
}

streams::DriftSpec drift_from_json(const Reader& r) {
    r.only({"kind", "onset", "ramp", "magnitude", "target", "source", "type"});
    streams::DriftSpec d;
    try {
        d.kind = streams::drift_kind_from_string(r.text("kind"));
    } catch (const Error&) {
        r.fail("kind", "expected one of none, abrupt_input, gradual_input, abrupt_mapping, gradual_mapping");
    }
    d.onset = r.count("onset", 0);
    d.ramp = r.count("ramp", 1);
    d.magnitude = r.number("magnitude", d.kind == streams::DriftKind::abrupt_mapping ? -1.0 : 0.0);
    d.target = r.text("target", "");
    try {
        d.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::validation, "field '" + (r.path().empty() ? std::string("drift") : r.path()) + "': " +
                                               e.what());
    }
    return d;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json to_json(const strategy::UpdateResult& r) {
    json collateral = json::object();
    for (const auto& [id, pair] : r.collateral) collateral[id] = {{"before", pair.before}, {"after", pair.after}};
    json j{{"block", r.block_id},
           {"novel_before", r.novel_before},
           {"novel_after", r.novel_after},
           {"retained_before", r.retained_before},
           {"retained_after", r.retained_after},
           {"forgetting_ratio", optional_number(r.forgetting_ratio)},
           {"training_time", r.training_time},
           {"strategy", to_json(r.strategy)},
           {"status", strategy::to_string(r.status)},
           {"collateral", collateral},
           {"warnings", r.warnings}};
    if (!r.failure.empty()) j["failure"] = r.failure;
    return j;
}

json to_json(const metrics::EvalReport& report) {
    json blocks = json::array();
    for (const auto& b : report.blocks) {
        blocks.push_back({{"block", b.block_id},
                          {"updates_accepted", b.updates_accepted},
                          {"updates_rejected", b.updates_rejected},
                          {"fitting_error", b.fitting_error},
                          {"prediction_error", b.prediction_error},
                          {"forgetting_ratio", optional_number(b.forgetting_ratio)},
                          {"training_time", b.training_time}});
    }
    return {{"blocks", blocks},
            {"cl_score",
             {{"components", report.score.components}, {"weights", report.score.weights}, {"fused", report.score.fused}}}};
}

json strip_wall_clock(json value) {
    if (value.is_object()) {
        for (const char* key : {"ts", "training_time", "elapsed_seconds"}) value.erase(key);
        for (auto& [k, v] : value.items()) v = strip_wall_clock(v);
    } else if (value.is_array()) {
        for (auto& v : value) v = strip_wall_clock(v);
    }
    return value;
}

}  // namespace clear::io
