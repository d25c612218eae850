#pragma once

// Data sources: a seeded synthetic stream with injectable drift and CSV
// loading for the wind, solar and grid dataset layouts.

#include <clear/preprocess.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace clear::streams {

enum class DriftKind { none, abrupt_input, gradual_input, abrupt_mapping, gradual_mapping };

const char* to_string(DriftKind kind) noexcept;
DriftKind drift_kind_from_string(const std::string& name);

// Input drifts shift every feature by `magnitude`; mapping drifts multiply the
// centred target mapping by `magnitude` (-1 flips it). Gradual kinds blend in
// linearly over `ramp` samples starting at `onset`.
struct DriftSpec {
    DriftKind kind = DriftKind::none;
    std::size_t onset = 0;
    std::size_t ramp = 1;
    double magnitude = 0.0;
    std::string target;  // mapping drifts only; empty means every target

    void validate() const;
    bool is_gradual() const noexcept {
        return kind == DriftKind::gradual_input || kind == DriftKind::gradual_mapping;
    }
    // Blend weight in [0,1] at sample index t.
    double weight(std::size_t t) const noexcept;
};

struct SyntheticConfig {
    std::size_t features = 7;
    std::vector<std::string> targets{"y"};
    double feature_noise = 0.03;
    double target_noise = 0.02;
    std::int64_t start = 1704067200;  // 2024-01-01T00:00:00Z
    std::int64_t resolution_seconds = 3600;

    void validate() const;
};

// x_j(t) = 0.5 + A_j sin(2 pi t / P_j + phi_j) + noise, clipped to [0,1].
// Each target follows a sigmoid power curve in feature 0 plus pairwise
// feature interactions, centred at 0.5 and scaled by the active mapping
// drifts.
class SyntheticStream {
public:
    SyntheticStream(SyntheticConfig config, std::uint64_t seed);

    // onset is an absolute sample index of this stream.
    void add_drift(const DriftSpec& drift);

    pre::RawSample next();
    std::vector<pre::RawSample> take(std::size_t n);

    std::size_t position() const noexcept { return t_; }
    const SyntheticConfig& config() const noexcept { return config_; }
    std::vector<std::string> feature_names() const;
    const std::vector<DriftSpec>& drifts() const noexcept { return drifts_; }

    // Noise-free target value for already drifted features x at index t.
    double expected_target(const std::string& target, std::span<const double> x, std::size_t t) const;

private:
    struct Wave {
        double amplitude, period, phase;
    };
    struct Curve {
        double center, steepness;
        std::vector<double> pair_weights;
    };

    const Curve& curve(const std::string& target) const;

    SyntheticConfig config_;
    std::uint64_t seed_;
    std::vector<Wave> waves_;
    std::vector<Curve> curves_;
    std::vector<DriftSpec> drifts_;
    std::mt19937_64 noise_;
    std::size_t t_ = 0;
};

// A fresh stream with one drift applied.
std::vector<pre::RawSample> generate(const DriftSpec& spec, std::size_t n, std::uint64_t seed,
                                     const SyntheticConfig& config = {});

struct ColumnSpec {
    std::string name;
    double min = 0.0;
    double max = 1.0;
};

struct CsvSchema {
    std::string name;
    std::string timestamp_column = "timestamp";
    std::vector<ColumnSpec> features;
    std::vector<std::string> targets;
    bool targets_from_header = false;  // every column that is neither timestamp nor feature is a target
    std::int64_t resolution_seconds = 3600;

    static CsvSchema wind();
    static CsvSchema solar();
    static CsvSchema grid();
    static CsvSchema preset(const std::string& name);
};

struct CsvOptions {
    bool strict = false;               // out-of-range values are errors instead of flags
    bool filter_malfunction = false;   // drop zero-production runs longer than zero_run_hours
    double zero_run_hours = 24.0;
    std::string production_column;    // defaults to the first target
};

struct RangeFlag {
    std::size_t line = 0;
    std::string column;
    double value = 0.0;
};

struct CsvData {
    std::vector<std::string> feature_names;
    std::vector<std::string> target_names;
    std::vector<pre::RawSample> samples;
    std::vector<std::size_t> lines;  // source line of each kept sample
    std::vector<RangeFlag> out_of_range;
    std::size_t dropped_malfunction = 0;
};

CsvData parse_csv(std::istream& in, const CsvSchema& schema, const CsvOptions& options = {});
CsvData load_csv(const std::string& path, const CsvSchema& schema, const CsvOptions& options = {});

}  // namespace clear::streams
