#pragma once

// JSON forms of the engine's value types. Readers reject unknown fields and
// report the offending field path in validation errors.

#include <clear/metrics.hpp>
#include <clear/nn.hpp>
#include <clear/novelty.hpp>
#include <clear/preprocess.hpp>
#include <clear/strategies.hpp>
#include <clear/streams.hpp>

#include <json.hpp>

#include <initializer_list>
#include <optional>
#include <string>

namespace clear::io {

using json = nlohmann::json;

class Reader {
public:
    explicit Reader(const json& value, std::string path = "");

    const json& value() const noexcept { return value_; }
    const std::string& path() const noexcept { return path_; }
    bool has(const char* key) const;
    Reader at(const char* key) const;

    double number(const char* key) const;
    double number(const char* key, double fallback) const;
    std::size_t count(const char* key) const;
    std::size_t count(const char* key, std::size_t fallback) const;
    std::uint64_t u64(const char* key, std::uint64_t fallback) const;
    bool flag(const char* key, bool fallback) const;
    std::string text(const char* key) const;
    std::string text(const char* key, const std::string& fallback) const;
    std::vector<std::string> texts(const char* key) const;

    void only(std::initializer_list<const char*> known) const;
    [[noreturn]] void fail(const char* key, const std::string& message) const;

private:
    std::string field(const char* key) const;
    const json& get(const char* key) const;

    const json& value_;
    std::string path_;
};

// Parses text, mapping syntax errors to ErrorKind::parse.
json parse(const std::string& text);

json to_json(const nn::TrainConfig& config);
nn::TrainConfig train_config_from_json(const Reader& r, nn::TrainConfig base = {});

json to_json(const strategy::StrategySpec& spec);
// Fields overlay `base`; changing the kind starts from that kind's defaults.
strategy::StrategySpec strategy_from_json(const Reader& r, const strategy::StrategySpec& base = {});

json to_json(const novelty::Threshold& threshold);
json to_json(const novelty::BufferStatus& status, std::size_t capacity);

// {"layers":[{"width":16,"activation":"tanh"},{"width":1,"activation":"linear"}]}
// or the shorthand {"hidden":16,"activation":"tanh"}.
nn::NetSpec head_spec_from_json(const Reader& r, std::size_t latent_dim);
json to_json(const nn::NetSpec& spec);

json to_json(const pre::RawSample& sample);
pre::RawSample raw_sample_from_json(const Reader& r);

json to_json(const streams::DriftSpec& drift);
streams::DriftSpec drift_from_json(const Reader& r);

json to_json(const strategy::UpdateResult& result);
json to_json(const metrics::EvalReport& report);

json optional_number(const std::optional<double>& v);

// Removes wall-clock fields (ts, training_time, elapsed_seconds) recursively.
json strip_wall_clock(json value);

}  // namespace clear::io
