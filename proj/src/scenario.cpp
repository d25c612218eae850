#include <clear/scenario.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace clear::scenario {

namespace fs = std::filesystem;

const char* step_name(const Step& step) noexcept {
    switch (step.index()) {
        case 0: return "stream_segment";
        case 1: return "drift";
        case 2: return "add_target";
        default: return "checkpoint";
    }
}

const SourceSpec& Script::source(const std::string& name) const {
    for (const auto& s : sources) {
        if (s.name == name) return s;
    }
    throw Error(ErrorKind::not_found, "unknown source '" + name + "'");
}

namespace {

std::int64_t timestamp_field(const io::Reader& r, const char* key, std::int64_t fallback) {
    if (!r.has(key)) return fallback;
    const auto& v = r.value().at(key);
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_string()) {
        try {
            return pre::parse_iso8601(v.get<std::string>());
        } catch (const Error& e) {
            r.fail(key, e.what());
        }
    }
    r.fail(key, "expected an ISO-8601 string or seconds since the epoch");
}

SyntheticSource synthetic_from_json(const io::Reader& r) {
    r.only({"type", "features", "targets", "feature_noise", "target_noise", "start", "resolution_seconds"});
    SyntheticSource s;
    auto& c = s.config;
    c.features = r.count("features", c.features);
    if (r.has("targets")) c.targets = r.texts("targets");
    c.feature_noise = r.number("feature_noise", c.feature_noise);
    c.target_noise = r.number("target_noise", c.target_noise);
    c.start = timestamp_field(r, "start", c.start);
    c.resolution_seconds = static_cast<std::int64_t>(r.count("resolution_seconds", c.resolution_seconds));
    try {
        c.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::validation, "field '" + r.path() + "': " + e.what());
    }
    return s;
}

streams::CsvSchema schema_from_json(const io::Reader& r) {
    r.only({"name", "timestamp_column", "features", "targets", "targets_from_header", "resolution_seconds"});
    streams::CsvSchema schema;
    schema.name = r.text("name", "custom");
    schema.timestamp_column = r.text("timestamp_column", schema.timestamp_column);
    const auto& features = r.value().at("features");
    if (!features.is_array() || features.empty()) r.fail("features", "expected a non-empty array");
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto& f = features[i];
        if (f.is_string()) {
            schema.features.push_back({f.get<std::string>(), 0.0, 1.0});
            continue;
        }
        io::Reader col(f, r.path() + ".features[" + std::to_string(i) + "]");
        col.only({"name", "min", "max"});
        schema.features.push_back({col.text("name"), col.number("min", 0.0), col.number("max", 1.0)});
    }
    if (r.has("targets")) schema.targets = r.texts("targets");
    schema.targets_from_header = r.flag("targets_from_header", false);
    schema.resolution_seconds = static_cast<std::int64_t>(r.count("resolution_seconds", 3600));
    return schema;
}

CsvSource csv_from_json(const io::Reader& r, const std::string& base_dir) {
    r.only({"type", "path", "schema", "strict", "filter_malfunction", "zero_run_hours", "production_column"});
    CsvSource s;
    s.path = r.text("path");
    const fs::path p(s.path);
    s.resolved_path = p.is_absolute() ? s.path : (fs::path(base_dir) / p).string();
    const auto& schema = r.value().at("schema");
    if (schema.is_string()) {
        try {
            s.schema = streams::CsvSchema::preset(schema.get<std::string>());
        } catch (const Error& e) {
            r.fail("schema", e.what());
        }
    } else {
        s.schema = schema_from_json(r.at("schema"));
    }
    s.options.strict = r.flag("strict", false);
    s.options.filter_malfunction = r.flag("filter_malfunction", false);
    s.options.zero_run_hours = r.number("zero_run_hours", 24.0);
    s.options.production_column = r.text("production_column", "");
    return s;
}

Step step_from_json(const io::Reader& r) {
    const auto type = r.text("type");
    if (type == "stream_segment") {
        r.only({"type", "source", "count"});
        return Segment{r.text("source", ""), r.count("count")};
    }
    if (type == "drift") {
        return Drift{r.text("source", ""), io::drift_from_json(r)};
    }
    if (type == "add_target") {
        r.only({"type", "target_id", "head_spec", "strategy", "warmup_count", "source"});
        AddTarget a;
        a.target_id = r.text("target_id");
        if (a.target_id.empty()) r.fail("target_id", "must not be empty");
        a.head_spec = r.has("head_spec") ? r.value().at("head_spec") : json(nullptr);
        a.strategy = r.has("strategy") ? r.value().at("strategy") : json(nullptr);
        a.warmup_count = r.count("warmup_count", 0);
        a.source = r.text("source", "");
        return a;
    }
    if (type == "checkpoint") {
        r.only({"type", "label"});
        return Checkpoint{r.text("label", "")};
    }
    r.fail("type", "expected stream_segment, drift, add_target or checkpoint");
}

}  // namespace

Script parse_script(const json& document, const std::string& base_dir) {
    io::Reader r(document, "");
    r.only({"seed", "config", "sources", "pretrain", "events"});
    Script s;
    s.document = document;
    s.base_dir = base_dir;
    s.seed = r.u64("seed", 0);
    if (r.has("config")) {
        if (document.at("config").contains("seed")) r.fail("config", "set the seed at the top level of the script");
        json config = document.at("config");
        config["seed"] = s.seed;
        s.config = orch::config_from_json(config);
    } else {
        s.config.seed = s.seed;
    }

    if (!r.has("sources") || !document.at("sources").is_object() || document.at("sources").empty()) {
        r.fail("sources", "expected a non-empty object of named sources");
    }
    for (const auto& [name, spec] : document.at("sources").items()) {
        io::Reader sr(spec, "sources." + name);
        const auto type = sr.text("type");
        if (type == "synthetic") {
            s.sources.push_back({name, synthetic_from_json(sr)});
        } else if (type == "csv") {
            s.sources.push_back({name, csv_from_json(sr, base_dir)});
        } else {
            sr.fail("type", "expected \"synthetic\" or \"csv\"");
        }
    }
    auto known = [&](const std::string& name) {
        for (const auto& src : s.sources) {
            if (src.name == name) return true;
        }
        return false;
    };

    const std::string first = s.sources.front().name;
    auto p = r.at("pretrain");
    p.only({"source", "count"});
    s.pretrain_source = p.text("source", first);
    s.pretrain_count = p.count("count");
    if (s.pretrain_count == 0) p.fail("count", "must be positive");
    if (!known(s.pretrain_source)) p.fail("source", "unknown source '" + s.pretrain_source + "'");

    const auto& events = document.at("events");
    if (!events.is_array()) r.fail("events", "expected an array");
    bool has_segment = false;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const std::string path = "events[" + std::to_string(i) + "]";
        Step step = step_from_json(io::Reader(events[i], path));
        auto check_source = [&](std::string& name) {
            if (name.empty()) name = s.pretrain_source;
            if (!known(name)) {
                throw Error(ErrorKind::validation, "field '" + path + ".source': unknown source '" + name + "'");
            }
        };
        std::visit(
            [&](auto& e) {
                using T = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<T, Segment>) {
                    check_source(e.source);
                    has_segment = true;
                } else if constexpr (std::is_same_v<T, Drift>) {
                    check_source(e.source);
                    if (!std::holds_alternative<SyntheticSource>(s.source(e.source).kind)) {
                        throw Error(ErrorKind::validation,
                                    "field '" + path + ".source': only synthetic sources can drift");
                    }
                } else if constexpr (std::is_same_v<T, AddTarget>) {
                    check_source(e.source);
                }
            },
            step);
        s.events.push_back(std::move(step));
    }
    if (!has_segment) r.fail("events", "a script needs at least one stream_segment");
    return s;
}

Script load_script(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot read scenario '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    const auto base = fs::path(path).parent_path();
    return parse_script(io::parse(buffer.str()), base.empty() ? "." : base.string());
}

namespace {

class SyntheticFeed final : public Source {
public:
    SyntheticFeed(const streams::SyntheticConfig& config, std::uint64_t seed) : stream_(config, seed) {}

    std::optional<pre::RawSample> next() override { return stream_.next(); }
    std::size_t position() const override { return stream_.position(); }
    std::vector<std::string> feature_names() const override { return stream_.feature_names(); }
    std::vector<std::string> target_names() const override { return stream_.config().targets; }
    void add_drift(const streams::DriftSpec& absolute) override { stream_.add_drift(absolute); }

private:
    streams::SyntheticStream stream_;
};

class CsvFeed final : public Source {
public:
    explicit CsvFeed(const CsvSource& spec) : data_(streams::load_csv(spec.resolved_path, spec.schema, spec.options)) {}

    std::optional<pre::RawSample> next() override {
        if (cursor_ >= data_.samples.size()) return std::nullopt;
        return data_.samples[cursor_++];
    }
    std::size_t position() const override { return cursor_; }
    std::vector<std::string> feature_names() const override { return data_.feature_names; }
    std::vector<std::string> target_names() const override { return data_.target_names; }
    void add_drift(const streams::DriftSpec&) override {
        throw Error(ErrorKind::validation, "CSV sources cannot drift");
    }

private:
    streams::CsvData data_;
    std::size_t cursor_ = 0;
};

}  // namespace

std::unique_ptr<Source> open_source(const SourceSpec& spec, std::uint64_t script_seed) {
    if (const auto* syn = std::get_if<SyntheticSource>(&spec.kind)) {
        return std::make_unique<SyntheticFeed>(syn->config, nn::derive_seed(script_seed, "source:" + spec.name));
    }
    return std::make_unique<CsvFeed>(std::get<CsvSource>(spec.kind));
}

namespace {

orch::Config effective_config(const Script& script, const RunOptions& options,
                              const std::map<std::string, std::unique_ptr<Source>>& sources) {
    orch::Config c = script.config;
    if (options.auto_policy) c.auto_policy.enabled = *options.auto_policy;
    const auto& pretrain = *sources.at(script.pretrain_source);
    if (c.feature_names.empty()) c.feature_names = pretrain.feature_names();
    if (c.targets.empty() && !script.document.value("config", json::object()).contains("targets")) {
        // Every target of the pretraining source that no add_target event claims.
        std::set<std::string> later;
        for (const auto& e : script.events) {
            if (const auto* a = std::get_if<AddTarget>(&e)) later.insert(a->target_id);
        }
        for (const auto& t : pretrain.target_names()) {
            if (!later.count(t)) c.targets.push_back(t);
        }
    }
    c.validate();
    return c;
}

std::map<std::string, std::unique_ptr<Source>> open_all(const Script& script) {
    std::map<std::string, std::unique_ptr<Source>> out;
    for (const auto& s : script.sources) {
        try {
            out[s.name] = open_source(s, script.seed);
        } catch (const Error& e) {
            throw Error(e.kind(), "source '" + s.name + "': " + e.what());
        }
    }
    return out;
}

}  // namespace

Runner::Runner(Script script, RunOptions options)
    : script_(std::move(script)),
      sources_(open_all(script_)),
      config_(effective_config(script_, options, sources_)),
      instance_(config_) {}

Source& Runner::source(const std::string& name) { return *sources_.at(name); }

void Runner::fail(const std::string& message) const {
    const auto index = std::min(event_, script_.events.size() - 1);
    throw Error(ErrorKind::scenario,
                "event " + std::to_string(index) + " (" + step_name(script_.events[index]) + "): " + message);
}

std::vector<pre::RawSample> Runner::take(const std::string& name, std::size_t count) {
    std::vector<pre::RawSample> out;
    auto& src = source(name);
    while (out.size() < count) {
        auto s = src.next();
        if (!s) break;
        out.push_back(std::move(*s));
    }
    return out;
}

void Runner::start() {
    if (started_) return;
    started_ = true;
    auto samples = take(script_.pretrain_source, script_.pretrain_count);
    if (samples.size() < script_.pretrain_count) {
        throw Error(ErrorKind::scenario, "pretrain: source '" + script_.pretrain_source + "' holds only " +
                                             std::to_string(samples.size()) + " samples");
    }
    try {
        instance_.pretrain(samples);
    } catch (const Error& e) {
        throw Error(ErrorKind::scenario, std::string("pretrain: ") + e.what());
    }
}

bool Runner::step() {
    start();
    if (done()) return false;
    const Step& step = script_.events[event_];
    try {
        if (const auto* seg = std::get_if<Segment>(&step)) {
            if (segment_done_ < seg->count) {
                auto s = source(seg->source).next();
                if (!s) {
                    fail("source '" + seg->source + "' ran out after " + std::to_string(source(seg->source).position()) +
                         " samples");
                }
                instance_.ingest(*s);
                ++segment_done_;
            }
            if (segment_done_ >= seg->count) {
                segment_done_ = 0;
                ++event_;
            }
            return true;
        }
        if (const auto* drift = std::get_if<Drift>(&step)) {
            auto absolute = drift->spec;
            absolute.onset += source(drift->source).position();
            source(drift->source).add_drift(absolute);
            json details = io::to_json(drift->spec);
            details["source"] = drift->source;
            details["absolute_onset"] = absolute.onset;
            instance_.annotate("drift", details);
        } else if (const auto* add = std::get_if<AddTarget>(&step)) {
            if (instance_.model().has_head(add->target_id)) fail("target '" + add->target_id + "' already exists");
            const auto warmup = take(add->source, add->warmup_count);
            if (warmup.size() < add->warmup_count) {
                fail("source '" + add->source + "' ran out during warm-up");
            }
            instance_.add_target(add->target_id, add->head_spec, add->strategy, warmup);
        } else if (const auto* cp = std::get_if<Checkpoint>(&step)) {
            instance_.checkpoint(cp->label);
            ++event_;
            if (on_checkpoint_) on_checkpoint_(cp->label);
            return true;
        }
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::scenario) throw;
        fail(e.what());
    }
    ++event_;
    return true;
}

void Runner::run() {
    while (step()) {
    }
}

}  // namespace clear::scenario
