#pragma once

// Preprocessing block: imputation, malfunction filtering, outlier clipping
// and scalers whose parameters can follow a drifting stream.

#include <clear/error.hpp>

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace clear::pre {

inline constexpr double missing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) noexcept { return v != v; }

// One observation as it arrives from a source: unscaled features (NaN for a
// missing cell) and whichever targets are known.
struct RawSample {
    std::int64_t timestamp = 0;  // seconds since the Unix epoch, UTC
    std::vector<double> x;
    std::map<std::string, double> y;

    bool operator==(const RawSample&) const = default;
};

// columns[j] holds every observation of feature j.
using Columns = std::vector<std::vector<double>>;

Columns to_columns(std::span<const std::vector<double>> rows);

class MinMaxScaler {
public:
    MinMaxScaler() = default;

    // Missing values are ignored; a column with no observations is an error.
    static MinMaxScaler fit(std::vector<std::string> names, const Columns& columns);

    // Elementwise extrema of the current parameters and the batch.
    MinMaxScaler partial_update(const Columns& batch) const;

    std::vector<double> transform(std::span<const double> row) const;
    std::vector<double> inverse_transform(std::span<const double> row) const;
    double transform(std::size_t feature, double value) const;

    std::size_t size() const noexcept { return names_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::vector<double>& min() const noexcept { return min_; }
    const std::vector<double>& max() const noexcept { return max_; }

    std::string to_record() const;
    static MinMaxScaler from_record(const std::string& text);

    bool operator==(const MinMaxScaler&) const = default;

private:
    std::vector<std::string> names_;
    std::vector<double> min_;
    std::vector<double> max_;
};

// Streaming mean / population variance (Welford, merged with Chan et al.).
class StandardScaler {
public:
    StandardScaler() = default;

    static StandardScaler fit(std::vector<std::string> names, const Columns& columns);
    StandardScaler partial_update(const Columns& batch) const;

    std::vector<double> transform(std::span<const double> row) const;
    std::vector<double> inverse_transform(std::span<const double> row) const;

    std::size_t size() const noexcept { return names_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::vector<double>& mean() const noexcept { return mean_; }
    std::vector<double> variance() const;
    const std::vector<std::uint64_t>& count() const noexcept { return count_; }

    std::string to_record() const;
    static StandardScaler from_record(const std::string& text);

private:
    std::vector<std::string> names_;
    std::vector<double> mean_;
    std::vector<double> m2_;
    std::vector<std::uint64_t> count_;
};

enum class ImputeStrategy { linear_interpolate, forward_fill, drop_row };

// Leading gaps are always back-filled from the first valid value; trailing
// gaps under linear_interpolate carry the last valid value forward.
struct ImputeRule {
    ImputeStrategy strategy = ImputeStrategy::linear_interpolate;
};

std::vector<double> fill_missing(std::span<const double> series, const ImputeRule& rule);

// Indices of the rows to keep after removing every maximal run of zero
// production whose duration exceeds zero_run_hours. A run of k rows at
// resolution r lasts (t_last - t_first) + r, where r is the smallest positive
// gap between consecutive timestamps.
std::vector<std::size_t> filter_malfunction(std::span<const std::int64_t> timestamps,
                                            std::span<const double> production, double zero_run_hours = 24.0);

// Power targets normalised by nominal capacity live in [0, 1].
inline double clip_unit(double v) noexcept { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// "2024-01-01T00:00:00Z"; offsets (+01:00) and a space separator are accepted
// on input, fractional seconds are not.
std::int64_t parse_iso8601(const std::string& text);
std::string format_iso8601(std::int64_t seconds);

std::string format_double(double v);
double parse_double(const std::string& text);

}  // namespace clear::pre
