#pragma once

// Feed-forward substrate: dense layers, MSE backprop, SGD/Adam training,
// the shared autoencoder and the multi-head regressor that grows heads.

#include <clear/error.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace clear::nn {

enum class Activation { linear, relu, tanh, sigmoid };

const char* to_string(Activation a) noexcept;
Activation activation_from_string(const std::string& name);

struct LayerSpec {
    std::size_t width = 0;
    Activation activation = Activation::linear;
};

struct NetSpec {
    std::size_t input_width = 0;
    std::vector<LayerSpec> layers;

    std::size_t output_width() const { return layers.empty() ? input_width : layers.back().width; }
    bool operator==(const NetSpec&) const = default;
};

enum class Init {
    seeded_random,      // uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
    zero_output_layer,  // as seeded_random, but the last layer's weights and bias are zero
};

// One supervised pair; the loss is the mean over output dimensions of the
// squared error, averaged again over the batch.
struct Example {
    std::vector<double> input;
    std::vector<double> target;
};

using ParameterVector = std::vector<double>;

// Dense network with all parameters stored contiguously: for each layer the
// row-major [out x in] weight matrix followed by its bias vector.
class DenseNet {
public:
    struct Layer {
        std::size_t in = 0;
        std::size_t out = 0;
        Activation activation = Activation::linear;
        std::size_t weight_offset = 0;
        std::size_t bias_offset = 0;
    };

    // Activations recorded during a forward pass; values[0] is the input.
    struct Trace {
        std::vector<std::vector<double>> values;
    };

    DenseNet() = default;
    DenseNet(const NetSpec& spec, std::uint64_t seed, Init init = Init::seeded_random);

    const NetSpec& spec() const noexcept { return spec_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t input_width() const noexcept { return spec_.input_width; }
    std::size_t output_width() const noexcept { return spec_.output_width(); }
    const std::vector<Layer>& layers() const noexcept { return layers_; }

    std::size_t parameter_count() const noexcept { return params_.size(); }
    std::span<const double> parameters() const noexcept { return params_; }
    std::span<double> parameters() noexcept { return params_; }
    void set_parameters(std::span<const double> values);

    std::span<double> weights(std::size_t layer);
    std::span<double> bias(std::size_t layer);

    std::vector<double> forward(std::span<const double> x) const;
    Trace forward_trace(std::span<const double> x) const;

    // Accumulates dL/dparams into grad (same layout as parameters()) and
    // returns dL/dx.
    std::vector<double> backward(const Trace& trace, std::span<const double> d_output,
                                 std::span<double> grad) const;

    // "7>16:tanh>8:linear"
    std::string descriptor() const;

    bool all_finite() const noexcept;

private:
    NetSpec spec_;
    std::uint64_t seed_ = 0;
    std::vector<Layer> layers_;
    ParameterVector params_;
};

double mse(std::span<const double> prediction, std::span<const double> truth);

// Gradient of the batch MSE with respect to every weight and bias of net.
ParameterVector gradients(const DenseNet& net, std::span<const Example> batch);

// Composition of networks applied in order (e.g. encoder then head). Stages
// are borrowed; frozen stages still propagate gradients to earlier stages.
class Chain {
public:
    Chain& then(DenseNet& net, bool trainable = true);

    std::size_t input_width() const;
    std::size_t output_width() const;
    std::size_t trainable_parameter_count() const;
    ParameterVector trainable_parameters() const;
    void set_trainable_parameters(std::span<const double> values);

    std::vector<double> forward(std::span<const double> x) const;
    double loss(std::span<const Example> data) const;

    // Mean batch loss; grad is overwritten with the gradient over trainable
    // stages, concatenated in stage order.
    double loss_and_gradient(std::span<const Example> pool, std::span<const std::size_t> batch,
                             std::span<double> grad) const;
    double loss_and_gradient(std::span<const Example> batch, std::span<double> grad) const;

private:
    struct Stage {
        DenseNet* net;
        bool trainable;
    };
    std::vector<Stage> stages_;
};

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

enum class Optimizer { sgd, adam };

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    Optimizer optimizer = Optimizer::adam;
    AdamParams adam;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double elapsed_seconds = 0.0;
    std::size_t epochs_run = 0;
};

// Extra objective on the trainable parameter vector. Adds its gradient into
// grad and returns its value.
using Penalty = std::function<double(std::span<const double> params, std::span<double> grad)>;

// Produces the mini-batches (index lists into the pool) for one epoch.
using BatchPlan =
    std::function<std::vector<std::vector<std::size_t>>(std::size_t epoch, std::mt19937_64& rng)>;

BatchPlan shuffled_batches(std::size_t pool_size, std::size_t batch_size);

// Loss reported in TrainReport is the plain MSE over `pool`; the penalty only
// shapes the updates.
TrainReport train(Chain& chain, std::span<const Example> pool, const TrainConfig& config,
                  const BatchPlan& plan = {}, const Penalty& penalty = {});
TrainReport train(DenseNet& net, std::span<const Example> data, const TrainConfig& config);

struct AutoencoderSpec {
    std::size_t input_width = 0;
    std::size_t hidden_width = 16;
    std::size_t latent_dim = 8;
};

class Autoencoder {
public:
    Autoencoder() = default;
    Autoencoder(const AutoencoderSpec& spec, std::uint64_t seed);

    std::size_t input_width() const noexcept { return encoder.input_width(); }
    std::size_t latent_dim() const noexcept { return encoder.output_width(); }

    std::vector<double> encode(std::span<const double> x) const { return encoder.forward(x); }
    std::vector<double> reconstruct(std::span<const double> x) const;

    DenseNet encoder;
    DenseNet decoder;
};

NetSpec default_head_spec(std::size_t latent_dim, std::size_t hidden_width = 16);

class MultiHeadRegressor {
public:
    MultiHeadRegressor() = default;
    MultiHeadRegressor(const AutoencoderSpec& spec, std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t input_width() const noexcept { return shared.input_width(); }
    std::size_t latent_dim() const noexcept { return shared.latent_dim(); }

    bool has_head(const std::string& target_id) const { return heads_.contains(target_id); }
    const DenseNet& head(const std::string& target_id) const;
    DenseNet& head(const std::string& target_id);
    const std::map<std::string, DenseNet>& heads() const noexcept { return heads_; }

    void add_head(const std::string& target_id, const NetSpec& head_spec,
                  Init init = Init::zero_output_layer);

    double predict(const std::string& target_id, std::span<const double> x) const;

    // encoder -> head
    Chain predictor_chain(const std::string& target_id, bool train_shared);
    // encoder -> decoder
    Chain autoencoder_chain();

    std::string descriptor() const;

    Autoencoder shared;

private:
    std::uint64_t seed_ = 0;
    std::map<std::string, DenseNet> heads_;
};

std::uint64_t derive_seed(std::uint64_t base, const std::string& tag) noexcept;

struct WeightSnapshot {
    static constexpr std::uint32_t format_version = 1;

    std::string architecture;
    std::uint64_t seed = 0;
    std::vector<double> values;

    bool operator==(const WeightSnapshot&) const = default;
};

WeightSnapshot snapshot(const DenseNet& net);
void restore(DenseNet& net, const WeightSnapshot& snap);

// Layer order: encoder, decoder, then heads sorted by target id.
WeightSnapshot snapshot(const MultiHeadRegressor& model);
void restore(MultiHeadRegressor& model, const WeightSnapshot& snap);

void write_snapshot(std::ostream& out, const WeightSnapshot& snap);
WeightSnapshot read_snapshot(std::istream& in);
void save_snapshot(const std::string& path, const WeightSnapshot& snap);
WeightSnapshot load_snapshot(const std::string& path);

}  // namespace clear::nn
