#include <clear/nn.hpp>
#include <clear/random.hpp>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace clear {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::argument: return "argument";
        case ErrorKind::shape: return "shape";
        case ErrorKind::not_found: return "not_found";
        case ErrorKind::conflict: return "conflict";
        case ErrorKind::validation: return "validation";
        case ErrorKind::io: return "io";
        case ErrorKind::parse: return "parse";
        case ErrorKind::divergence: return "divergence";
        case ErrorKind::incompatible_snapshot: return "incompatible_snapshot";
        case ErrorKind::strategy: return "strategy";
        case ErrorKind::schema: return "schema";
        case ErrorKind::ordering: return "ordering";
        case ErrorKind::internal: return "internal";
        case ErrorKind::missing_target: return "missing_target";
        case ErrorKind::scenario: return "scenario";
    }
    return "unknown";
}

}  // namespace clear

namespace clear::nn {

namespace {

double activate(Activation a, double z) {
    switch (a) {
        case Activation::linear: return z;
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::tanh: return std::tanh(z);
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
    }
    return z;
}

// Derivative expressed through the activation's output.
double activation_slope(Activation a, double out) {
    switch (a) {
        case Activation::linear: return 1.0;
        case Activation::relu: return out > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: return 1.0 - out * out;
        case Activation::sigmoid: return out * (1.0 - out);
    }
    return 1.0;
}

void require_width(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw Error(ErrorKind::shape, std::string(what) + ": expected width " + std::to_string(want) +
                                          ", got " + std::to_string(got));
    }
}

}  // namespace

const char* to_string(Activation a) noexcept {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    return "linear";
}

Activation activation_from_string(const std::string& name) {
    if (name == "linear") return Activation::linear;
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    throw Error(ErrorKind::validation, "unknown activation '" + name + "'");
}

DenseNet::DenseNet(const NetSpec& spec, std::uint64_t seed, Init init) : spec_(spec), seed_(seed) {
    if (spec.input_width == 0 || spec.layers.empty()) {
        throw Error(ErrorKind::argument, "network needs a positive input width and at least one layer");
    }
    std::size_t in = spec.input_width;
    std::size_t offset = 0;
    for (const auto& ls : spec.layers) {
        if (ls.width == 0) throw Error(ErrorKind::argument, "layer width must be positive");
        Layer layer{in, ls.width, ls.activation, offset, offset + in * ls.width};
        offset = layer.bias_offset + ls.width;
        layers_.push_back(layer);
        in = ls.width;
    }
    params_.assign(offset, 0.0);

    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto& layer = layers_[k];
        const double limit = 1.0 / std::sqrt(static_cast<double>(layer.in));
        const bool zero = init == Init::zero_output_layer && k + 1 == layers_.size();
        for (std::size_t i = layer.weight_offset; i < layer.bias_offset + layer.out; ++i) {
            const double u = rnd::uniform01(rng);
            params_[i] = zero ? 0.0 : (2.0 * u - 1.0) * limit;
        }
    }
}

void DenseNet::set_parameters(std::span<const double> values) {
    require_width(values.size(), params_.size(), "set_parameters");
    std::copy(values.begin(), values.end(), params_.begin());
}

std::span<double> DenseNet::weights(std::size_t layer) {
    const auto& l = layers_.at(layer);
    return std::span<double>(params_).subspan(l.weight_offset, l.in * l.out);
}

std::span<double> DenseNet::bias(std::size_t layer) {
    const auto& l = layers_.at(layer);
    return std::span<double>(params_).subspan(l.bias_offset, l.out);
}

std::vector<double> DenseNet::forward(std::span<const double> x) const {
    require_width(x.size(), input_width(), "forward");
    std::vector<double> current(x.begin(), x.end());
    std::vector<double> next;
    for (const auto& layer : layers_) {
        next.assign(layer.out, 0.0);
        const double* w = params_.data() + layer.weight_offset;
        const double* b = params_.data() + layer.bias_offset;
        for (std::size_t r = 0; r < layer.out; ++r) {
            double z = b[r];
            const double* row = w + r * layer.in;
            for (std::size_t c = 0; c < layer.in; ++c) z += row[c] * current[c];
            next[r] = activate(layer.activation, z);
        }
        current.swap(next);
    }
    return current;
}

DenseNet::Trace DenseNet::forward_trace(std::span<const double> x) const {
    require_width(x.size(), input_width(), "forward");
    Trace trace;
    trace.values.reserve(layers_.size() + 1);
    trace.values.emplace_back(x.begin(), x.end());
    for (const auto& layer : layers_) {
        const auto& current = trace.values.back();
        std::vector<double> next(layer.out);
        const double* w = params_.data() + layer.weight_offset;
        const double* b = params_.data() + layer.bias_offset;
        for (std::size_t r = 0; r < layer.out; ++r) {
            double z = b[r];
            const double* row = w + r * layer.in;
            for (std::size_t c = 0; c < layer.in; ++c) z += row[c] * current[c];
            next[r] = activate(layer.activation, z);
        }
        trace.values.push_back(std::move(next));
    }
    return trace;
}

std::vector<double> DenseNet::backward(const Trace& trace, std::span<const double> d_output,
                                       std::span<double> grad) const {
    require_width(d_output.size(), output_width(), "backward");
    const bool accumulate = !grad.empty();
    if (accumulate) require_width(grad.size(), params_.size(), "backward gradient");

    std::vector<double> upstream(d_output.begin(), d_output.end());
    std::vector<double> delta;
    for (std::size_t k = layers_.size(); k-- > 0;) {
        const auto& layer = layers_[k];
        const auto& out = trace.values[k + 1];
        const auto& in = trace.values[k];
        delta.resize(layer.out);
        for (std::size_t r = 0; r < layer.out; ++r) {
            delta[r] = upstream[r] * activation_slope(layer.activation, out[r]);
        }
        const double* w = params_.data() + layer.weight_offset;
        std::vector<double> down(layer.in, 0.0);
        for (std::size_t r = 0; r < layer.out; ++r) {
            const double d = delta[r];
            const double* row = w + r * layer.in;
            for (std::size_t c = 0; c < layer.in; ++c) down[c] += row[c] * d;
            if (accumulate) {
                double* gw = grad.data() + layer.weight_offset + r * layer.in;
                for (std::size_t c = 0; c < layer.in; ++c) gw[c] += d * in[c];
                grad[layer.bias_offset + r] += d;
            }
        }
        upstream.swap(down);
    }
    return upstream;
}

std::string DenseNet::descriptor() const {
    std::ostringstream os;
    os << spec_.input_width;
    for (const auto& l : spec_.layers) os << '>' << l.width << ':' << to_string(l.activation);
    return os.str();
}

bool DenseNet::all_finite() const noexcept {
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

double mse(std::span<const double> prediction, std::span<const double> truth) {
    require_width(prediction.size(), truth.size(), "mse");
    if (truth.empty()) throw Error(ErrorKind::argument, "mse of empty vectors");
    double sum = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = prediction[i] - truth[i];
        sum += d * d;
    }
    return sum / static_cast<double>(truth.size());
}

ParameterVector gradients(const DenseNet& net, std::span<const Example> batch) {
    if (batch.empty()) throw Error(ErrorKind::argument, "gradients: empty batch");
    ParameterVector grad(net.parameter_count(), 0.0);
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) {
        const auto trace = net.forward_trace(ex.input);
        const auto& out = trace.values.back();
        require_width(ex.target.size(), out.size(), "target");
        std::vector<double> d_out(out.size());
        for (std::size_t j = 0; j < out.size(); ++j) {
            d_out[j] = 2.0 * (out[j] - ex.target[j]) / static_cast<double>(out.size()) * scale;
        }
        net.backward(trace, d_out, grad);
    }
    return grad;
}

Chain& Chain::then(DenseNet& net, bool trainable) {
    if (!stages_.empty()) {
        require_width(net.input_width(), stages_.back().net->output_width(), "chain stage");
    }
    stages_.push_back({&net, trainable});
    return *this;
}

std::size_t Chain::input_width() const {
    return stages_.empty() ? 0 : stages_.front().net->input_width();
}

std::size_t Chain::output_width() const {
    return stages_.empty() ? 0 : stages_.back().net->output_width();
}

std::size_t Chain::trainable_parameter_count() const {
    std::size_t n = 0;
    for (const auto& s : stages_) {
        if (s.trainable) n += s.net->parameter_count();
    }
    return n;
}

ParameterVector Chain::trainable_parameters() const {
    ParameterVector out;
    out.reserve(trainable_parameter_count());
    for (const auto& s : stages_) {
        if (!s.trainable) continue;
        auto p = std::as_const(*s.net).parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

void Chain::set_trainable_parameters(std::span<const double> values) {
    require_width(values.size(), trainable_parameter_count(), "set_trainable_parameters");
    std::size_t offset = 0;
    for (auto& s : stages_) {
        if (!s.trainable) continue;
        const std::size_t n = s.net->parameter_count();
        s.net->set_parameters(values.subspan(offset, n));
        offset += n;
    }
}

std::vector<double> Chain::forward(std::span<const double> x) const {
    std::vector<double> current(x.begin(), x.end());
    for (const auto& s : stages_) current = s.net->forward(current);
    return current;
}

double Chain::loss(std::span<const Example> data) const {
    if (data.empty()) throw Error(ErrorKind::argument, "loss over empty data");
    double sum = 0.0;
    for (const auto& ex : data) sum += mse(forward(ex.input), ex.target);
    return sum / static_cast<double>(data.size());
}

double Chain::loss_and_gradient(std::span<const Example> pool, std::span<const std::size_t> batch,
                                std::span<double> grad) const {
    if (batch.empty()) throw Error(ErrorKind::argument, "gradients: empty batch");
    require_width(grad.size(), trainable_parameter_count(), "gradient buffer");
    std::fill(grad.begin(), grad.end(), 0.0);

    // Stages before the first trainable one need no backward pass.
    std::size_t first_trainable = stages_.size();
    for (std::size_t i = 0; i < stages_.size(); ++i) {
        if (stages_[i].trainable) {
            first_trainable = i;
            break;
        }
    }
    std::vector<std::size_t> offsets(stages_.size(), 0);
    for (std::size_t i = 0, off = 0; i < stages_.size(); ++i) {
        offsets[i] = off;
        if (stages_[i].trainable) off += stages_[i].net->parameter_count();
    }

    const double scale = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    std::vector<DenseNet::Trace> traces(stages_.size());
    for (std::size_t idx : batch) {
        const Example& ex = pool[idx];
        std::vector<double> current = ex.input;
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            traces[i] = stages_[i].net->forward_trace(current);
            current = traces[i].values.back();
        }
        require_width(ex.target.size(), current.size(), "target");
        const double n_out = static_cast<double>(current.size());
        std::vector<double> d_out(current.size());
        double loss = 0.0;
        for (std::size_t j = 0; j < current.size(); ++j) {
            const double d = current[j] - ex.target[j];
            loss += d * d;
            d_out[j] = 2.0 * d / n_out * scale;
        }
        total += loss / n_out;
        if (first_trainable == stages_.size()) continue;
        for (std::size_t i = stages_.size(); i-- > first_trainable;) {
            const auto& s = stages_[i];
            std::span<double> slot;
            if (s.trainable) slot = grad.subspan(offsets[i], s.net->parameter_count());
            d_out = s.net->backward(traces[i], d_out, slot);
        }
    }
    return total * scale;
}

double Chain::loss_and_gradient(std::span<const Example> batch, std::span<double> grad) const {
    std::vector<std::size_t> all(batch.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return loss_and_gradient(batch, all, grad);
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw Error(ErrorKind::validation, "batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw Error(ErrorKind::validation, "learning_rate must be > 0");
    }
    if (optimizer == Optimizer::adam) {
        if (adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0 ||
            !(adam.epsilon > 0.0)) {
            throw Error(ErrorKind::validation, "adam parameters out of range");
        }
    }
}

BatchPlan shuffled_batches(std::size_t pool_size, std::size_t batch_size) {
    return [pool_size, batch_size](std::size_t, std::mt19937_64& rng) {
        std::vector<std::size_t> order(pool_size);
        std::iota(order.begin(), order.end(), std::size_t{0});
        rnd::shuffle(order, rng);
        std::vector<std::vector<std::size_t>> batches;
        for (std::size_t i = 0; i < pool_size; i += batch_size) {
            const std::size_t end = std::min(pool_size, i + batch_size);
            batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
        }
        return batches;
    };
}

TrainReport train(Chain& chain, std::span<const Example> pool, const TrainConfig& config,
                  const BatchPlan& plan, const Penalty& penalty) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    TrainReport report;
    if (pool.empty()) {
        if (config.epochs != 0) throw Error(ErrorKind::argument, "train: empty dataset");
        return report;
    }
    report.initial_loss = chain.loss(pool);

    const BatchPlan batches_for = plan ? plan : shuffled_batches(pool.size(), config.batch_size);
    std::mt19937_64 rng(config.seed);
    ParameterVector params = chain.trainable_parameters();
    ParameterVector grad(params.size()), m(params.size(), 0.0), v(params.size(), 0.0);
    std::uint64_t step = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (const auto& batch : batches_for(epoch, rng)) {
            if (batch.empty()) continue;
            double loss = chain.loss_and_gradient(pool, batch, grad);
            if (penalty) loss += penalty(params, grad);
            if (!std::isfinite(loss)) {
                throw DivergenceError(epoch, "non-finite loss at epoch " + std::to_string(epoch));
            }
            ++step;
            if (config.optimizer == Optimizer::sgd) {
                for (std::size_t i = 0; i < params.size(); ++i) params[i] -= config.learning_rate * grad[i];
            } else {
                const auto& a = config.adam;
                const double c1 = 1.0 - std::pow(a.beta1, static_cast<double>(step));
                const double c2 = 1.0 - std::pow(a.beta2, static_cast<double>(step));
                for (std::size_t i = 0; i < params.size(); ++i) {
                    m[i] = a.beta1 * m[i] + (1.0 - a.beta1) * grad[i];
                    v[i] = a.beta2 * v[i] + (1.0 - a.beta2) * grad[i] * grad[i];
                    params[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + a.epsilon);
                }
            }
            chain.set_trainable_parameters(params);
        }
        if (!std::all_of(params.begin(), params.end(), [](double p) { return std::isfinite(p); })) {
            throw DivergenceError(epoch, "non-finite weights after epoch " + std::to_string(epoch));
        }
        report.epochs_run = epoch + 1;
    }

    report.final_loss = chain.loss(pool);
    if (!std::isfinite(report.final_loss)) {
        throw DivergenceError(config.epochs, "non-finite loss after training");
    }
    report.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

TrainReport train(DenseNet& net, std::span<const Example> data, const TrainConfig& config) {
    Chain chain;
    chain.then(net);
    return train(chain, data, config);
}

Autoencoder::Autoencoder(const AutoencoderSpec& spec, std::uint64_t seed)
    : encoder(NetSpec{spec.input_width,
                      {{spec.hidden_width, Activation::tanh}, {spec.latent_dim, Activation::linear}}},
              derive_seed(seed, "encoder")),
      decoder(NetSpec{spec.latent_dim,
                      {{spec.hidden_width, Activation::tanh}, {spec.input_width, Activation::linear}}},
              derive_seed(seed, "decoder")) {}

std::vector<double> Autoencoder::reconstruct(std::span<const double> x) const {
    return decoder.forward(encoder.forward(x));
}

NetSpec default_head_spec(std::size_t latent_dim, std::size_t hidden_width) {
    return NetSpec{latent_dim, {{hidden_width, Activation::tanh}, {1, Activation::linear}}};
}

MultiHeadRegressor::MultiHeadRegressor(const AutoencoderSpec& spec, std::uint64_t seed)
    : shared(spec, seed), seed_(seed) {}

const DenseNet& MultiHeadRegressor::head(const std::string& target_id) const {
    auto it = heads_.find(target_id);
    if (it == heads_.end()) throw Error(ErrorKind::not_found, "no head for target '" + target_id + "'");
    return it->second;
}

DenseNet& MultiHeadRegressor::head(const std::string& target_id) {
    return const_cast<DenseNet&>(std::as_const(*this).head(target_id));
}

void MultiHeadRegressor::add_head(const std::string& target_id, const NetSpec& head_spec, Init init) {
    if (heads_.contains(target_id)) {
        throw Error(ErrorKind::conflict, "head '" + target_id + "' already exists");
    }
    require_width(head_spec.input_width, latent_dim(), "head input");
    if (head_spec.output_width() != 1) throw Error(ErrorKind::shape, "head must emit exactly one output");
    heads_.emplace(target_id, DenseNet(head_spec, derive_seed(seed_, "head:" + target_id), init));
}

double MultiHeadRegressor::predict(const std::string& target_id, std::span<const double> x) const {
    return head(target_id).forward(shared.encode(x))[0];
}

Chain MultiHeadRegressor::predictor_chain(const std::string& target_id, bool train_shared) {
    Chain chain;
    chain.then(shared.encoder, train_shared).then(head(target_id), true);
    return chain;
}

Chain MultiHeadRegressor::autoencoder_chain() {
    Chain chain;
    chain.then(shared.encoder).then(shared.decoder);
    return chain;
}

std::string MultiHeadRegressor::descriptor() const {
    std::string out = "enc=" + shared.encoder.descriptor() + ";dec=" + shared.decoder.descriptor();
    for (const auto& [id, net] : heads_) out += ";head[" + id + "]=" + net.descriptor();
    return out;
}

std::uint64_t derive_seed(std::uint64_t base, const std::string& tag) noexcept {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : tag) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL + h;  // splitmix64 finalizer
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

WeightSnapshot snapshot(const DenseNet& net) {
    auto p = net.parameters();
    return WeightSnapshot{net.descriptor(), net.seed(), std::vector<double>(p.begin(), p.end())};
}

void restore(DenseNet& net, const WeightSnapshot& snap) {
    if (snap.architecture != net.descriptor() || snap.values.size() != net.parameter_count()) {
        throw Error(ErrorKind::incompatible_snapshot,
                    "snapshot architecture '" + snap.architecture + "' does not match '" + net.descriptor() + "'");
    }
    net.set_parameters(snap.values);
}

namespace {

template <typename Model, typename F>
void for_each_net(Model& model, F&& f) {
    f(model.shared.encoder);
    f(model.shared.decoder);
    for (const auto& entry : model.heads()) f(model.head(entry.first));
}

}  // namespace

WeightSnapshot snapshot(const MultiHeadRegressor& model) {
    WeightSnapshot snap{model.descriptor(), model.seed(), {}};
    for_each_net(model, [&](const DenseNet& net) {
        auto p = net.parameters();
        snap.values.insert(snap.values.end(), p.begin(), p.end());
    });
    return snap;
}

void restore(MultiHeadRegressor& model, const WeightSnapshot& snap) {
    std::size_t total = 0;
    for_each_net(model, [&](const DenseNet& net) { total += net.parameter_count(); });
    if (snap.architecture != model.descriptor() || snap.values.size() != total) {
        throw Error(ErrorKind::incompatible_snapshot,
                    "snapshot architecture '" + snap.architecture + "' does not match '" + model.descriptor() + "'");
    }
    std::size_t offset = 0;
    std::span<const double> values(snap.values);
    for_each_net(model, [&](DenseNet& net) {
        net.set_parameters(values.subspan(offset, net.parameter_count()));
        offset += net.parameter_count();
    });
}

namespace {

constexpr char kMagic[8] = {'C', 'L', 'R', 'W', 'S', 'N', 'A', 'P'};

void put_u64(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 4);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw Error(ErrorKind::parse, "truncated snapshot");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
    return v;
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw Error(ErrorKind::parse, "truncated snapshot");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[i];
    return v;
}

}  // namespace

void write_snapshot(std::ostream& out, const WeightSnapshot& snap) {
    out.write(kMagic, sizeof kMagic);
    put_u32(out, WeightSnapshot::format_version);
    put_u32(out, static_cast<std::uint32_t>(snap.architecture.size()));
    out.write(snap.architecture.data(), static_cast<std::streamsize>(snap.architecture.size()));
    put_u64(out, snap.seed);
    put_u64(out, snap.values.size());
    for (double v : snap.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
    if (!out) throw Error(ErrorKind::io, "failed to write snapshot");
}

WeightSnapshot read_snapshot(std::istream& in) {
    char magic[8];
    if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kMagic)) {
        throw Error(ErrorKind::parse, "not a weight snapshot");
    }
    const auto version = get_u32(in);
    if (version != WeightSnapshot::format_version) {
        throw Error(ErrorKind::incompatible_snapshot, "unsupported snapshot format " + std::to_string(version));
    }
    WeightSnapshot snap;
    snap.architecture.resize(get_u32(in));
    if (!in.read(snap.architecture.data(), static_cast<std::streamsize>(snap.architecture.size()))) {
        throw Error(ErrorKind::parse, "truncated snapshot");
    }
    snap.seed = get_u64(in);
    const auto count = get_u64(in);
    snap.values.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) snap.values.push_back(std::bit_cast<double>(get_u64(in)));
    return snap;
}

void save_snapshot(const std::string& path, const WeightSnapshot& snap) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot open '" + path + "' for writing");
    write_snapshot(out, snap);
}

WeightSnapshot load_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
    return read_snapshot(in);
}

}  // namespace clear::nn
