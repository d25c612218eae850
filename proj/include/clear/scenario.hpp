#pragma once

// Scenario scripts: named data sources, a pretraining slice and an ordered
// list of stream segments, drifts, target additions and checkpoints, all
// driven through one orchestrator instance.

#include <clear/orchestrator.hpp>
#include <clear/streams.hpp>

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace clear::scenario {

using json = nlohmann::json;

struct SyntheticSource {
    streams::SyntheticConfig config;
};

struct CsvSource {
    std::string path;  // as written in the script
    std::string resolved_path;
    streams::CsvSchema schema;
    streams::CsvOptions options;
};

struct SourceSpec {
    std::string name;
    std::variant<SyntheticSource, CsvSource> kind;
};

struct Segment {
    std::string source;
    std::size_t count = 0;
};

// onset counts from the source position at which the drift event runs.
struct Drift {
    std::string source;
    streams::DriftSpec spec;
};

struct AddTarget {
    std::string target_id;
    json head_spec;  // null: the configured head
    json strategy;   // null: the configured strategy
    std::size_t warmup_count = 0;
    std::string source;
};

struct Checkpoint {
    std::string label;
};

using Step = std::variant<Segment, Drift, AddTarget, Checkpoint>;

const char* step_name(const Step& step) noexcept;

struct Script {
    std::uint64_t seed = 0;
    orch::Config config;
    std::vector<SourceSpec> sources;
    std::string pretrain_source;
    std::size_t pretrain_count = 0;
    std::vector<Step> events;
    std::string base_dir = ".";
    json document;  // the script as parsed

    const SourceSpec& source(const std::string& name) const;
};

// CSV paths resolve against base_dir.
Script parse_script(const json& document, const std::string& base_dir = ".");
// Unreadable file: io error. Malformed JSON: parse error.
Script load_script(const std::string& path);

class Source {
public:
    virtual ~Source() = default;
    virtual std::optional<pre::RawSample> next() = 0;
    virtual std::size_t position() const = 0;
    virtual std::vector<std::string> feature_names() const = 0;
    virtual std::vector<std::string> target_names() const = 0;
    // Only synthetic sources drift.
    virtual void add_drift(const streams::DriftSpec& absolute) = 0;
};

std::unique_ptr<Source> open_source(const SourceSpec& spec, std::uint64_t script_seed);

struct RunOptions {
    std::optional<bool> auto_policy;  // overrides the script's config
};

// Steps through a script one sample or event at a time. Failures are
// rethrown as ErrorKind::scenario naming the event index.
class Runner {
public:
    explicit Runner(Script script, RunOptions options = {});

    const Script& script() const noexcept { return script_; }
    // The config the instance was built with, after option overrides.
    const orch::Config& config() const noexcept { return config_; }
    orch::Instance& instance() noexcept { return instance_; }
    const orch::Instance& instance() const noexcept { return instance_; }

    // Pretrains; done once, implicitly by the first step().
    void start();
    // Ingests one sample or applies one non-segment event. False when the
    // script is exhausted.
    bool step();
    void run();
    bool done() const noexcept { return event_ >= script_.events.size(); }
    std::size_t event_index() const noexcept { return event_; }

    // Called after each checkpoint event with its label.
    void on_checkpoint(std::function<void(const std::string&)> callback) { on_checkpoint_ = std::move(callback); }

private:
    Source& source(const std::string& name);
    std::vector<pre::RawSample> take(const std::string& name, std::size_t count);
    [[noreturn]] void fail(const std::string& message) const;

    Script script_;
    std::map<std::string, std::unique_ptr<Source>> sources_;
    orch::Config config_;
    orch::Instance instance_;
    bool started_ = false;
    std::size_t event_ = 0;
    std::size_t segment_done_ = 0;
    std::function<void(const std::string&)> on_checkpoint_;
};

}  // namespace clear::scenario
