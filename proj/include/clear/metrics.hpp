#pragma once

#include <clear/error.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clear::metrics {

struct RegressionErrors {
    double mse = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
};

RegressionErrors regression_errors(std::span<const double> predictions, std::span<const double> truths);

// Relative error increase on the retained set: (after - before) / before.
// Negative values mean the update also helped the retained data. nullopt is
// the undefined case (before == 0, after > 0); both zero gives 0.
std::optional<double> forgetting_ratio(double retained_before, double retained_after);

namespace component {
inline constexpr const char* accuracy = "accuracy";
inline constexpr const char* forward_transfer = "forward_transfer";
inline constexpr const char* backward_transfer = "backward_transfer";
inline constexpr const char* model_size_efficiency = "model_size_efficiency";
inline constexpr const char* sample_storage_efficiency = "sample_storage_efficiency";
inline constexpr const char* compute_efficiency = "compute_efficiency";
}  // namespace component

struct CLScore {
    std::map<std::string, double> components;
    std::map<std::string, double> weights;
    double fused = 0.0;
};

// fused = sum_k w_k c_k. Weights must be nonnegative and sum to 1 (1e-9),
// components must lie in [0,1], and both maps must share their keys.
CLScore cl_score(const std::map<std::string, double>& components, const std::map<std::string, double>& weights);

std::map<std::string, double> equal_weights();

// Normalisations of the raw run statistics into [0,1] components.
double accuracy_component(double mse);
double forward_transfer_component(double novel_before, double novel_after);
double backward_transfer_component(std::optional<double> forgetting);
double model_size_component(std::size_t reference_parameters, std::size_t parameters);
double storage_component(std::size_t stored_samples, std::size_t ingested_samples);
double compute_component(double budget_seconds, double actual_seconds);

struct BlockEval {
    std::string block_id;
    std::size_t updates_accepted = 0;
    std::size_t updates_rejected = 0;
    double fitting_error = 0.0;      // MSE on the samples the block was last trained on
    double prediction_error = 0.0;   // mean score on stream samples seen after the last accepted update
    std::optional<double> forgetting_ratio;
    double training_time = 0.0;      // seconds, summed over updates (wall clock)
};

struct EvalReport {
    std::vector<BlockEval> blocks;
    CLScore score;
};

// One row per block plus the fused score; training_time is the only
// wall-clock column.
std::string to_csv(const EvalReport& report);
std::string to_text(const EvalReport& report);

}  // namespace clear::metrics
