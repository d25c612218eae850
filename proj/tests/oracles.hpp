#pragma once

// Test-only reference computations. These deliberately avoid the library's
// backward pass and batching code so they can check it.

#include <clear/nn.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

namespace oracle {

inline double batch_loss(const clear::nn::DenseNet& net, std::span<const clear::nn::Example> batch) {
    double total = 0.0;
    for (const auto& ex : batch) {
        const auto out = net.forward(ex.input);
        double s = 0.0;
        for (std::size_t j = 0; j < out.size(); ++j) s += (out[j] - ex.target[j]) * (out[j] - ex.target[j]);
        total += s / static_cast<double>(out.size());
    }
    return total / static_cast<double>(batch.size());
}

// Central finite differences of the batch MSE for every parameter.
inline std::vector<double> finite_difference_gradient(clear::nn::DenseNet net,
                                                      std::span<const clear::nn::Example> batch,
                                                      double h = 1e-5) {
    std::vector<double> grad(net.parameter_count());
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double up = batch_loss(net, batch);
        params[i] = keep - h;
        const double down = batch_loss(net, batch);
        params[i] = keep;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

// Random net with at most three layers and at most 32 units per layer.
inline clear::nn::DenseNet random_net(std::mt19937_64& rng) {
    using namespace clear::nn;
    std::uniform_int_distribution<std::size_t> depth(1, 3), width(1, 32), act(0, 3);
    NetSpec spec{width(rng), {}};
    const std::size_t layers = depth(rng);
    for (std::size_t k = 0; k < layers; ++k) {
        spec.layers.push_back({width(rng), static_cast<Activation>(act(rng))});
    }
    return DenseNet(spec, rng());
}

inline std::vector<clear::nn::Example> random_batch(const clear::nn::DenseNet& net, std::size_t n,
                                                    std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<clear::nn::Example> batch(n);
    for (auto& ex : batch) {
        ex.input.resize(net.input_width());
        ex.target.resize(net.output_width());
        for (auto& v : ex.input) v = unit(rng);
        for (auto& v : ex.target) v = unit(rng);
    }
    return batch;
}

// Linear-interpolated empirical quantile on a sorted copy (numpy "linear").
inline double sorted_quantile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace oracle
