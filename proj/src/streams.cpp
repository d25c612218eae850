#include <clear/nn.hpp>
#include <clear/random.hpp>
#include <clear/streams.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <set>

namespace clear::streams {

namespace {

constexpr double two_pi = 6.283185307179586;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

const char* to_string(DriftKind kind) noexcept {
    switch (kind) {
        case DriftKind::none: return "none";
        case DriftKind::abrupt_input: return "abrupt_input";
        case DriftKind::gradual_input: return "gradual_input";
        case DriftKind::abrupt_mapping: return "abrupt_mapping";
        case DriftKind::gradual_mapping: return "gradual_mapping";
    }
    return "none";
}

DriftKind drift_kind_from_string(const std::string& name) {
    for (auto k : {DriftKind::none, DriftKind::abrupt_input, DriftKind::gradual_input, DriftKind::abrupt_mapping,
                   DriftKind::gradual_mapping}) {
        if (name == to_string(k)) return k;
    }
    throw Error(ErrorKind::validation, "unknown drift kind '" + name + "'");
}

void DriftSpec::validate() const {
    if (is_gradual() && ramp < 1) throw Error(ErrorKind::validation, "gradual drift needs ramp >= 1");
    if (!std::isfinite(magnitude)) throw Error(ErrorKind::validation, "drift magnitude must be finite");
    if (!target.empty() && kind != DriftKind::abrupt_mapping && kind != DriftKind::gradual_mapping) {
        throw Error(ErrorKind::validation, "only mapping drifts can name a target");
    }
}

double DriftSpec::weight(std::size_t t) const noexcept {
    if (kind == DriftKind::none || t < onset) return 0.0;
    if (!is_gradual()) return 1.0;
    return std::min(1.0, static_cast<double>(t - onset + 1) / static_cast<double>(ramp));
}

void SyntheticConfig::validate() const {
    if (features == 0) throw Error(ErrorKind::validation, "synthetic stream needs at least one feature");
    if (targets.empty()) throw Error(ErrorKind::validation, "synthetic stream needs at least one target");
    std::set<std::string> unique(targets.begin(), targets.end());
    if (unique.size() != targets.size()) throw Error(ErrorKind::validation, "duplicate synthetic target id");
    if (!(feature_noise >= 0.0) || !(target_noise >= 0.0)) throw Error(ErrorKind::validation, "noise must be >= 0");
    if (resolution_seconds <= 0) throw Error(ErrorKind::validation, "resolution must be positive");
}

SyntheticStream::SyntheticStream(SyntheticConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed), noise_(nn::derive_seed(seed, "noise")) {
    config_.validate();
    std::mt19937_64 shape(nn::derive_seed(seed, "features"));
    for (std::size_t j = 0; j < config_.features; ++j) {
        Wave w;
        w.amplitude = rnd::uniform(shape, 0.15, 0.3);
        w.period = rnd::uniform(shape, 24.0, 72.0);
        w.phase = rnd::uniform(shape, 0.0, two_pi);
        waves_.push_back(w);
    }
    for (const auto& id : config_.targets) {
        std::mt19937_64 rng(nn::derive_seed(seed, "target:" + id));
        Curve c;
        c.center = rnd::uniform(rng, 0.35, 0.65);
        c.steepness = rnd::uniform(rng, 6.0, 12.0);
        const std::size_t pairs = (config_.features - 1) / 2;
        double total = 0.0;
        for (std::size_t p = 0; p < pairs; ++p) {
            c.pair_weights.push_back(rnd::uniform(rng, 0.2, 1.0));
            total += c.pair_weights.back();
        }
        for (auto& w : c.pair_weights) w /= total;
        curves_.push_back(std::move(c));
    }
}

void SyntheticStream::add_drift(const DriftSpec& drift) {
    drift.validate();
    if (!drift.target.empty() && std::find(config_.targets.begin(), config_.targets.end(), drift.target) ==
                                     config_.targets.end()) {
        throw Error(ErrorKind::validation, "drift names unknown target '" + drift.target + "'");
    }
    if (drift.kind != DriftKind::none) drifts_.push_back(drift);
}

std::vector<std::string> SyntheticStream::feature_names() const {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < config_.features; ++j) names.push_back("x" + std::to_string(j));
    return names;
}

const SyntheticStream::Curve& SyntheticStream::curve(const std::string& target) const {
    for (std::size_t k = 0; k < config_.targets.size(); ++k) {
        if (config_.targets[k] == target) return curves_[k];
    }
    throw Error(ErrorKind::not_found, "synthetic stream has no target '" + target + "'");
}

double SyntheticStream::expected_target(const std::string& target, std::span<const double> x, std::size_t t) const {
    const Curve& c = curve(target);
    double g = sigmoid(c.steepness * (x[0] - c.center));
    if (!c.pair_weights.empty()) {
        double interaction = 0.0;
        for (std::size_t p = 0; p < c.pair_weights.size(); ++p) {
            interaction += c.pair_weights[p] * x[1 + 2 * p] * x[2 + 2 * p];
        }
        g = 0.7 * g + 0.3 * interaction;
    }
    double scale = 1.0;
    for (const auto& d : drifts_) {
        if (d.kind != DriftKind::abrupt_mapping && d.kind != DriftKind::gradual_mapping) continue;
        if (!d.target.empty() && d.target != target) continue;
        scale *= 1.0 + d.weight(t) * (d.magnitude - 1.0);
    }
    return 0.5 + scale * (g - 0.5);
}

pre::RawSample SyntheticStream::next() {
    pre::RawSample s;
    s.timestamp = config_.start + static_cast<std::int64_t>(t_) * config_.resolution_seconds;
    double offset = 0.0;
    for (const auto& d : drifts_) {
        if (d.kind == DriftKind::abrupt_input || d.kind == DriftKind::gradual_input) offset += d.weight(t_) * d.magnitude;
    }
    const double t = static_cast<double>(t_);
    for (const auto& w : waves_) {
        const double v = 0.5 + w.amplitude * std::sin(two_pi * t / w.period + w.phase) +
                         rnd::normal(noise_, 0.0, config_.feature_noise) + offset;
        s.x.push_back(pre::clip_unit(v));
    }
    for (const auto& id : config_.targets) {
        const double noise = rnd::normal(noise_, 0.0, config_.target_noise);
        s.y[id] = pre::clip_unit(expected_target(id, s.x, t_) + noise);
    }
    ++t_;
    return s;
}

std::vector<pre::RawSample> SyntheticStream::take(std::size_t n) {
    std::vector<pre::RawSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(next());
    return out;
}

std::vector<pre::RawSample> generate(const DriftSpec& spec, std::size_t n, std::uint64_t seed,
                                     const SyntheticConfig& config) {
    if (n == 0) throw Error(ErrorKind::validation, "generate needs n >= 1");
    SyntheticStream stream(config, seed);
    stream.add_drift(spec);
    return stream.take(n);
}

CsvSchema CsvSchema::wind() {
    CsvSchema s;
    s.name = "wind";
    for (const char* n : {"wind_speed_100m", "wind_speed_10m", "wind_direction_zonal_100m",
                          "wind_direction_meridional_100m", "air_pressure", "air_temperature", "humidity"}) {
        s.features.push_back({n, 0.0, 1.0});
    }
    s.targets = {"power"};
    s.resolution_seconds = 3600;
    return s;
}

CsvSchema CsvSchema::solar() {
    CsvSchema s;
    s.name = "solar";
    for (const char* n : {"solar_irradiance_direct", "solar_irradiance_diffuse", "cloud_cover", "air_temperature",
                          "humidity", "wind_speed", "hour_cos", "hour_sin", "month_cos", "month_sin", "season_cos",
                          "season_sin"}) {
        s.features.push_back({n, 0.0, 1.0});
    }
    s.targets = {"power"};
    s.resolution_seconds = 3 * 3600;
    return s;
}

CsvSchema CsvSchema::grid() {
    CsvSchema s;
    s.name = "grid";
    for (int j = 1; j <= 13; ++j) {
        char name[16];
        std::snprintf(name, sizeof name, "nwp_%02d", j);
        s.features.push_back({name, 0.0, 1.0});
    }
    s.targets_from_header = true;
    s.resolution_seconds = 15 * 60;
    return s;
}

CsvSchema CsvSchema::preset(const std::string& name) {
    if (name == "wind") return wind();
    if (name == "solar") return solar();
    if (name == "grid") return grid();
    throw Error(ErrorKind::validation, "unknown CSV schema preset '" + name + "'");
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out = s.substr(b, e - b);
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
    return out;
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

bool missing_cell(const std::string& cell) {
    return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "null";
}

}  // namespace

CsvData parse_csv(std::istream& in, const CsvSchema& schema, const CsvOptions& options) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw Error(ErrorKind::schema, "CSV has no header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_row(line);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (!index.emplace(header[i], i).second) throw Error(ErrorKind::schema, "duplicate column '" + header[i] + "'");
    }
    auto column = [&](const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw Error(ErrorKind::schema, "missing column '" + name + "'");
        return it->second;
    };

    CsvData data;
    const std::size_t ts_col = column(schema.timestamp_column);
    std::vector<std::size_t> feature_cols;
    for (const auto& f : schema.features) {
        feature_cols.push_back(column(f.name));
        data.feature_names.push_back(f.name);
    }
    std::vector<std::string> targets = schema.targets;
    if (schema.targets_from_header) {
        std::set<std::string> taken(data.feature_names.begin(), data.feature_names.end());
        taken.insert(schema.timestamp_column);
        for (const auto& h : header) {
            if (!taken.contains(h) && std::find(targets.begin(), targets.end(), h) == targets.end()) targets.push_back(h);
        }
    }
    if (targets.empty()) throw Error(ErrorKind::schema, "schema '" + schema.name + "' has no target column");
    std::vector<std::size_t> target_cols;
    for (const auto& t : targets) target_cols.push_back(column(t));
    data.target_names = targets;

    auto number = [&](const std::string& cell, const std::string& name) {
        try {
            return pre::parse_double(cell);
        } catch (const Error&) {
            throw Error(ErrorKind::parse,
                        "line " + std::to_string(line_no) + ", column '" + name + "': cannot parse '" + cell + "'");
        }
    };
    auto check_range = [&](double v, const std::string& name, double lo, double hi) {
        if (v >= lo && v <= hi) return;
        if (options.strict) {
            throw Error(ErrorKind::validation, "line " + std::to_string(line_no) + ", column '" + name +
                                                   "': value " + pre::format_double(v) + " outside [" +
                                                   pre::format_double(lo) + "," + pre::format_double(hi) + "]");
        }
        data.out_of_range.push_back({line_no, name, v});
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto cells = split_row(line);
        if (cells.size() != header.size()) {
            throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": expected " +
                                              std::to_string(header.size()) + " cells, found " +
                                              std::to_string(cells.size()));
        }
        pre::RawSample s;
        try {
            s.timestamp = pre::parse_iso8601(cells[ts_col]);
        } catch (const Error& e) {
            throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": " + e.what());
        }
        for (std::size_t j = 0; j < feature_cols.size(); ++j) {
            const auto& cell = cells[feature_cols[j]];
            if (missing_cell(cell)) {
                s.x.push_back(pre::missing);
                continue;
            }
            const double v = number(cell, schema.features[j].name);
            check_range(v, schema.features[j].name, schema.features[j].min, schema.features[j].max);
            s.x.push_back(v);
        }
        for (std::size_t k = 0; k < target_cols.size(); ++k) {
            const auto& cell = cells[target_cols[k]];
            if (missing_cell(cell)) continue;
            const double v = number(cell, targets[k]);
            check_range(v, targets[k], 0.0, 1.0);
            s.y[targets[k]] = v;
        }
        if (!data.samples.empty() && s.timestamp <= data.samples.back().timestamp) {
            throw Error(ErrorKind::ordering, "line " + std::to_string(line_no) + ": timestamps must increase");
        }
        data.samples.push_back(std::move(s));
        data.lines.push_back(line_no);
    }

    if (options.filter_malfunction) {
        const std::string production = options.production_column.empty() ? targets.front() : options.production_column;
        if (std::find(targets.begin(), targets.end(), production) == targets.end()) {
            throw Error(ErrorKind::schema, "production column '" + production + "' is not a target");
        }
        std::vector<std::int64_t> ts;
        std::vector<double> power;
        for (const auto& s : data.samples) {
            ts.push_back(s.timestamp);
            auto it = s.y.find(production);
            power.push_back(it == s.y.end() ? pre::missing : it->second);
        }
        const auto keep = pre::filter_malfunction(ts, power, options.zero_run_hours);
        data.dropped_malfunction = data.samples.size() - keep.size();
        std::vector<pre::RawSample> kept;
        std::vector<std::size_t> kept_lines;
        for (auto i : keep) {
            kept.push_back(std::move(data.samples[i]));
            kept_lines.push_back(data.lines[i]);
        }
        data.samples = std::move(kept);
        data.lines = std::move(kept_lines);
    }
    return data;
}

CsvData load_csv(const std::string& path, const CsvSchema& schema, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
    return parse_csv(in, schema, options);
}

}  // namespace clear::streams
