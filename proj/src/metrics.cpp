#include <clear/metrics.hpp>
#include <clear/preprocess.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace clear::metrics {

RegressionErrors regression_errors(std::span<const double> predictions, std::span<const double> truths) {
    if (predictions.size() != truths.size()) throw Error(ErrorKind::argument, "predictions and truths differ in length");
    if (truths.empty()) throw Error(ErrorKind::argument, "regression errors of an empty set");
    double sq = 0.0, abs = 0.0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const double d = predictions[i] - truths[i];
        sq += d * d;
        abs += std::abs(d);
    }
    const double n = static_cast<double>(truths.size());
    RegressionErrors e;
    e.mse = sq / n;
    e.rmse = std::sqrt(e.mse);
    e.mae = abs / n;
    return e;
}

std::optional<double> forgetting_ratio(double retained_before, double retained_after) {
    if (!(retained_before >= 0.0) || !(retained_after >= 0.0)) {
        throw Error(ErrorKind::argument, "retained errors must be nonnegative");
    }
    if (retained_before == 0.0) {
        if (retained_after == 0.0) return 0.0;
        return std::nullopt;
    }
    return (retained_after - retained_before) / retained_before;
}

CLScore cl_score(const std::map<std::string, double>& components, const std::map<std::string, double>& weights) {
    if (components.size() != weights.size()) throw Error(ErrorKind::validation, "components and weights differ in keys");
    double weight_sum = 0.0;
    double fused = 0.0;
    for (const auto& [key, value] : components) {
        auto w = weights.find(key);
        if (w == weights.end()) throw Error(ErrorKind::validation, "no weight for component '" + key + "'");
        if (!(value >= 0.0 && value <= 1.0)) {
            throw Error(ErrorKind::validation, "component '" + key + "' outside [0,1]");
        }
        if (!(w->second >= 0.0)) throw Error(ErrorKind::validation, "weight '" + key + "' is negative");
        weight_sum += w->second;
        fused += w->second * value;
    }
    if (std::abs(weight_sum - 1.0) > 1e-9) {
        throw Error(ErrorKind::validation, "weights sum to " + pre::format_double(weight_sum) + ", not 1");
    }
    return CLScore{components, weights, std::clamp(fused, 0.0, 1.0)};
}

std::map<std::string, double> equal_weights() {
    const double w = 1.0 / 6.0;
    return {{component::accuracy, w},
            {component::forward_transfer, w},
            {component::backward_transfer, w},
            {component::model_size_efficiency, w},
            {component::sample_storage_efficiency, w},
            {component::compute_efficiency, w}};
}

double accuracy_component(double mse) { return 1.0 / (1.0 + std::max(0.0, mse)); }

double forward_transfer_component(double novel_before, double novel_after) {
    if (novel_before <= 0.0) return novel_after <= 0.0 ? 1.0 : 0.0;
    return std::clamp((novel_before - novel_after) / novel_before, 0.0, 1.0);
}

double backward_transfer_component(std::optional<double> forgetting) {
    if (!forgetting) return 0.0;
    return std::clamp(1.0 / (1.0 + std::max(0.0, *forgetting)), 0.0, 1.0);
}

double model_size_component(std::size_t reference_parameters, std::size_t parameters) {
    if (parameters == 0) return 1.0;
    return std::min(1.0, static_cast<double>(reference_parameters) / static_cast<double>(parameters));
}

double storage_component(std::size_t stored_samples, std::size_t ingested_samples) {
    if (ingested_samples == 0) return 1.0;
    return std::clamp(1.0 - static_cast<double>(stored_samples) / static_cast<double>(ingested_samples), 0.0, 1.0);
}

double compute_component(double budget_seconds, double actual_seconds) {
    if (actual_seconds <= 0.0) return 1.0;
    return std::min(1.0, budget_seconds / actual_seconds);
}

namespace {

std::string optional_number(const std::optional<double>& v) {
    return v ? pre::format_double(*v) : std::string("undefined");
}

}  // namespace

std::string to_csv(const EvalReport& report) {
    std::ostringstream os;
    os << "block,updates_accepted,updates_rejected,fitting_error,prediction_error,forgetting_ratio,training_time_s\n";
    for (const auto& b : report.blocks) {
        os << b.block_id << ',' << b.updates_accepted << ',' << b.updates_rejected << ','
           << pre::format_double(b.fitting_error) << ',' << pre::format_double(b.prediction_error) << ','
           << optional_number(b.forgetting_ratio) << ',' << pre::format_double(b.training_time) << '\n';
    }
    os << "\ncomponent,value,weight\n";
    for (const auto& [key, value] : report.score.components) {
        os << key << ',' << pre::format_double(value) << ',' << pre::format_double(report.score.weights.at(key)) << '\n';
    }
    os << "cl_score," << pre::format_double(report.score.fused) << ",\n";
    return os.str();
}

std::string to_text(const EvalReport& report) {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-16s %8s %8s %14s %14s %12s %10s\n", "block", "accepted", "rejected",
                  "fitting_err", "prediction_err", "forgetting", "train_s");
    os << line;
    for (const auto& b : report.blocks) {
        std::snprintf(line, sizeof line, "%-16s %8zu %8zu %14.6g %14.6g %12s %10.4f\n", b.block_id.c_str(),
                      b.updates_accepted, b.updates_rejected, b.fitting_error, b.prediction_error,
                      (b.forgetting_ratio ? pre::format_double(*b.forgetting_ratio).substr(0, 12) : "undefined").c_str(),
                      b.training_time);
        os << line;
    }
    os << '\n';
    for (const auto& [key, value] : report.score.components) {
        std::snprintf(line, sizeof line, "%-26s %8.4f  (weight %.4f)\n", key.c_str(), value, report.score.weights.at(key));
        os << line;
    }
    std::snprintf(line, sizeof line, "%-26s %8.4f\n", "CL score", report.score.fused);
    os << line;
    return os.str();
}

}  // namespace clear::metrics
