#include <clear/preprocess.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

namespace clear::pre {

namespace {

void check_width(std::size_t got, std::size_t want) {
    if (got != want) {
        throw Error(ErrorKind::shape,
                    "expected " + std::to_string(want) + " features, got " + std::to_string(got));
    }
}

void check_names(const std::vector<std::string>& names, std::size_t columns) {
    check_width(columns, names.size());
    for (const auto& n : names) {
        if (n.empty() || std::any_of(n.begin(), n.end(), [](unsigned char c) { return std::isspace(c); })) {
            throw Error(ErrorKind::validation, "feature name '" + n + "' must be non-empty without whitespace");
        }
    }
}

constexpr const char* kRecordTag = "scaler/1";

std::vector<std::vector<std::string>> record_lines(const std::string& text) {
    std::vector<std::vector<std::string>> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::vector<std::string> fields;
        for (std::string f; ls >> f;) fields.push_back(f);
        if (fields.empty()) continue;
        if (fields[0] != kRecordTag) throw Error(ErrorKind::parse, "unknown scaler record '" + fields[0] + "'");
        out.push_back(std::move(fields));
    }
    return out;
}

}  // namespace

Columns to_columns(std::span<const std::vector<double>> rows) {
    Columns cols;
    if (rows.empty()) return cols;
    cols.assign(rows.front().size(), {});
    for (const auto& row : rows) {
        check_width(row.size(), cols.size());
        for (std::size_t j = 0; j < row.size(); ++j) cols[j].push_back(row[j]);
    }
    return cols;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    if (first != last && *first == '+') ++first;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) {
        throw Error(ErrorKind::parse, "not a number: '" + text + "'");
    }
    return v;
}

MinMaxScaler MinMaxScaler::fit(std::vector<std::string> names, const Columns& columns) {
    check_names(names, columns.size());
    MinMaxScaler s;
    s.names_ = std::move(names);
    s.min_.assign(columns.size(), 0.0);
    s.max_.assign(columns.size(), 0.0);
    for (std::size_t j = 0; j < columns.size(); ++j) {
        bool seen = false;
        for (double v : columns[j]) {
            if (is_missing(v)) continue;
            s.min_[j] = seen ? std::min(s.min_[j], v) : v;
            s.max_[j] = seen ? std::max(s.max_[j], v) : v;
            seen = true;
        }
        if (!seen) throw Error(ErrorKind::validation, "cannot fit column '" + s.names_[j] + "': no values");
    }
    return s;
}

MinMaxScaler MinMaxScaler::partial_update(const Columns& batch) const {
    check_width(batch.size(), names_.size());
    MinMaxScaler s = *this;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        for (double v : batch[j]) {
            if (is_missing(v)) continue;
            s.min_[j] = std::min(s.min_[j], v);
            s.max_[j] = std::max(s.max_[j], v);
        }
    }
    return s;
}

double MinMaxScaler::transform(std::size_t j, double v) const {
    if (is_missing(v)) return v;
    const double span = max_[j] - min_[j];
    return span > 0.0 ? (v - min_[j]) / span : 0.0;
}

std::vector<double> MinMaxScaler::transform(std::span<const double> row) const {
    check_width(row.size(), names_.size());
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = transform(j, row[j]);
    return out;
}

std::vector<double> MinMaxScaler::inverse_transform(std::span<const double> row) const {
    check_width(row.size(), names_.size());
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = min_[j] + row[j] * (max_[j] - min_[j]);
    return out;
}

std::string MinMaxScaler::to_record() const {
    std::string out;
    for (std::size_t j = 0; j < names_.size(); ++j) {
        out += std::string(kRecordTag) + ' ' + names_[j] + " minmax " + format_double(min_[j]) + ' ' +
               format_double(max_[j]) + '\n';
    }
    return out;
}

MinMaxScaler MinMaxScaler::from_record(const std::string& text) {
    MinMaxScaler s;
    for (const auto& f : record_lines(text)) {
        if (f.size() != 5 || f[2] != "minmax") throw Error(ErrorKind::parse, "malformed minmax record");
        s.names_.push_back(f[1]);
        s.min_.push_back(parse_double(f[3]));
        s.max_.push_back(parse_double(f[4]));
    }
    return s;
}

StandardScaler StandardScaler::fit(std::vector<std::string> names, const Columns& columns) {
    check_names(names, columns.size());
    StandardScaler empty;
    empty.names_ = std::move(names);
    empty.mean_.assign(columns.size(), 0.0);
    empty.m2_.assign(columns.size(), 0.0);
    empty.count_.assign(columns.size(), 0);
    StandardScaler s = empty.partial_update(columns);
    for (std::size_t j = 0; j < s.count_.size(); ++j) {
        if (s.count_[j] == 0) throw Error(ErrorKind::validation, "cannot fit column '" + s.names_[j] + "': no values");
    }
    return s;
}

StandardScaler StandardScaler::partial_update(const Columns& batch) const {
    check_width(batch.size(), names_.size());
    StandardScaler s = *this;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        // Moments of the batch alone, then merged.
        std::uint64_t n = 0;
        double mean = 0.0, m2 = 0.0;
        for (double v : batch[j]) {
            if (is_missing(v)) continue;
            ++n;
            const double d = v - mean;
            mean += d / static_cast<double>(n);
            m2 += d * (v - mean);
        }
        if (n == 0) continue;
        const double na = static_cast<double>(s.count_[j]);
        const double nb = static_cast<double>(n);
        const double total = na + nb;
        const double delta = mean - s.mean_[j];
        s.mean_[j] += delta * nb / total;
        s.m2_[j] += m2 + delta * delta * na * nb / total;
        s.count_[j] += n;
    }
    return s;
}

std::vector<double> StandardScaler::variance() const {
    std::vector<double> out(m2_.size(), 0.0);
    for (std::size_t j = 0; j < m2_.size(); ++j) {
        if (count_[j] > 0) out[j] = std::max(0.0, m2_[j] / static_cast<double>(count_[j]));
    }
    return out;
}

std::vector<double> StandardScaler::transform(std::span<const double> row) const {
    check_width(row.size(), names_.size());
    const auto var = variance();
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (is_missing(row[j])) {
            out[j] = row[j];
        } else {
            out[j] = var[j] > 0.0 ? (row[j] - mean_[j]) / std::sqrt(var[j]) : 0.0;
        }
    }
    return out;
}

std::vector<double> StandardScaler::inverse_transform(std::span<const double> row) const {
    check_width(row.size(), names_.size());
    const auto var = variance();
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = mean_[j] + row[j] * std::sqrt(var[j]);
    return out;
}

std::string StandardScaler::to_record() const {
    const auto var = variance();
    std::string out;
    for (std::size_t j = 0; j < names_.size(); ++j) {
        out += std::string(kRecordTag) + ' ' + names_[j] + " standard " + format_double(mean_[j]) + ' ' +
               format_double(var[j]) + ' ' + std::to_string(count_[j]) + '\n';
    }
    return out;
}

StandardScaler StandardScaler::from_record(const std::string& text) {
    StandardScaler s;
    for (const auto& f : record_lines(text)) {
        if (f.size() != 6 || f[2] != "standard") throw Error(ErrorKind::parse, "malformed standard record");
        s.names_.push_back(f[1]);
        s.mean_.push_back(parse_double(f[3]));
        const auto count = static_cast<std::uint64_t>(std::stoull(f[5]));
        s.m2_.push_back(parse_double(f[4]) * static_cast<double>(count));
        s.count_.push_back(count);
    }
    return s;
}

std::vector<double> fill_missing(std::span<const double> series, const ImputeRule& rule) {
    std::vector<double> out;
    if (rule.strategy == ImputeStrategy::drop_row) {
        for (double v : series) {
            if (!is_missing(v)) out.push_back(v);
        }
        return out;
    }
    auto first = std::find_if(series.begin(), series.end(), [](double v) { return !is_missing(v); });
    if (first == series.end()) {
        if (series.empty()) return out;
        throw Error(ErrorKind::validation, "cannot impute a series with no values");
    }
    out.assign(series.begin(), series.end());
    const auto first_idx = static_cast<std::size_t>(first - series.begin());
    for (std::size_t i = 0; i < first_idx; ++i) out[i] = *first;

    std::size_t last_valid = first_idx;
    for (std::size_t i = first_idx + 1; i < out.size(); ++i) {
        if (!is_missing(out[i])) {
            if (rule.strategy == ImputeStrategy::linear_interpolate && i - last_valid > 1) {
                const double a = out[last_valid], b = out[i];
                const double gap = static_cast<double>(i - last_valid);
                for (std::size_t k = last_valid + 1; k < i; ++k) {
                    out[k] = a + (b - a) * static_cast<double>(k - last_valid) / gap;
                }
            }
            last_valid = i;
        } else if (rule.strategy == ImputeStrategy::forward_fill) {
            out[i] = out[last_valid];
            last_valid = i;
        }
    }
    for (std::size_t i = last_valid + 1; i < out.size(); ++i) out[i] = out[last_valid];
    return out;
}

std::vector<std::size_t> filter_malfunction(std::span<const std::int64_t> timestamps,
                                            std::span<const double> production, double zero_run_hours) {
    if (timestamps.size() != production.size()) {
        throw Error(ErrorKind::shape, "timestamps and production differ in length");
    }
    std::int64_t resolution = 0;
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
        const auto step = timestamps[i] - timestamps[i - 1];
        if (step <= 0) {
            throw Error(ErrorKind::ordering, "timestamps not strictly increasing at row " + std::to_string(i));
        }
        resolution = resolution == 0 ? step : std::min(resolution, step);
    }
    const double limit = zero_run_hours * 3600.0;

    std::vector<std::size_t> keep;
    keep.reserve(timestamps.size());
    std::size_t i = 0;
    while (i < production.size()) {
        if (production[i] != 0.0) {
            keep.push_back(i++);
            continue;
        }
        std::size_t end = i;
        while (end < production.size() && production[end] == 0.0) ++end;
        const double duration = static_cast<double>(timestamps[end - 1] - timestamps[i] + resolution);
        if (duration <= limit) {
            for (std::size_t k = i; k < end; ++k) keep.push_back(k);
        }
        i = end;
    }
    return keep;
}

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date (Hinnant's algorithm).
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y = static_cast<std::int64_t>(yoe) + era * 400 + (m <= 2);
}

}  // namespace

std::int64_t parse_iso8601(const std::string& text) {
    auto fail = [&]() -> std::int64_t { throw Error(ErrorKind::parse, "not an ISO-8601 timestamp: '" + text + "'"); };
    auto digits = [&](std::size_t pos, std::size_t n) -> int {
        if (pos + n > text.size()) fail();
        int v = 0;
        for (std::size_t i = pos; i < pos + n; ++i) {
            if (!std::isdigit(static_cast<unsigned char>(text[i]))) fail();
            v = v * 10 + (text[i] - '0');
        }
        return v;
    };
    auto expect = [&](std::size_t pos, const char* options) {
        if (pos >= text.size() || !std::strchr(options, text[pos])) fail();
    };
    const int year = digits(0, 4);
    expect(4, "-");
    const int month = digits(5, 2);
    expect(7, "-");
    const int day = digits(8, 2);
    int hour = 0, minute = 0, second = 0;
    std::size_t pos = 10;
    if (pos < text.size()) {
        expect(10, "T ");
        hour = digits(11, 2);
        expect(13, ":");
        minute = digits(14, 2);
        pos = 16;
        if (pos < text.size() && text[pos] == ':') {
            second = digits(17, 2);
            pos = 19;
        }
    }
    std::int64_t offset = 0;
    if (pos < text.size()) {
        if (text[pos] == 'Z' && pos + 1 == text.size()) {
            pos += 1;
        } else if ((text[pos] == '+' || text[pos] == '-') && pos + 6 == text.size()) {
            const int oh = digits(pos + 1, 2);
            expect(pos + 3, ":");
            const int om = digits(pos + 4, 2);
            offset = (text[pos] == '+' ? 1 : -1) * (oh * 3600 + om * 60);
            pos += 6;
        } else {
            fail();
        }
    }
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) fail();
    const std::int64_t days = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
    return days * 86400 + hour * 3600 + minute * 60 + second - offset;
}

std::string format_iso8601(std::int64_t seconds) {
    std::int64_t days = seconds / 86400;
    std::int64_t rem = seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    std::int64_t y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(y), m, d,
                  static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                  static_cast<long long>(rem % 60));
    return buf;
}

}  // namespace clear::pre
