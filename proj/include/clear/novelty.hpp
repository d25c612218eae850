#pragma once

// Novelty detection and the per-block buffers: every block scores each
// sample, splits it into novelty or familiarity by a threshold, and the
// novelty buffer filling up is what triggers an update.

#include <clear/nn.hpp>

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace clear::novelty {

struct Sample {
    std::int64_t timestamp = 0;
    std::uint64_t seq = 0;        // ingestion order, 1-based; 0 for samples that never entered the stream
    std::vector<double> x;        // preprocessed features
    std::optional<double> y;      // preprocessed target for this block, if known
    std::vector<double> raw_x;    // features before scaling (kept so buffers can be rescaled)
    double score = 0.0;           // score at the time the sample was routed
};

enum class Verdict { novel, familiar };

const char* to_string(Verdict v) noexcept;

struct BufferStatus {
    std::size_t fill = 0;
    bool is_full = false;
    std::size_t pending = 0;
};

// Bounded buffer; pushes beyond capacity wait in an overflow queue and are
// promoted on drain, so nothing is ever dropped.
class NoveltyBuffer {
public:
    explicit NoveltyBuffer(std::size_t capacity = 64);

    BufferStatus push(Sample sample);
    std::vector<Sample> drain();

    // Shrinking moves the newest items to the front of the overflow queue.
    void set_capacity(std::size_t capacity);
    // Removes items and overflow alike.
    std::vector<Sample> clear();

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t fill() const noexcept { return items_.size(); }
    bool is_full() const noexcept { return items_.size() == capacity_; }
    const std::deque<Sample>& items() const noexcept { return items_; }
    const std::deque<Sample>& pending() const noexcept { return pending_; }
    BufferStatus status() const noexcept { return {fill(), is_full(), pending_.size()}; }

    template <typename F>
    void for_each(F&& f) {
        for (auto& s : items_) f(s);
        for (auto& s : pending_) f(s);
    }

private:
    std::size_t capacity_;
    std::deque<Sample> items_;
    std::deque<Sample> pending_;
};

// Unbounded unless a retention cap is set; the oldest items fall out first.
class FamiliarityBuffer {
public:
    explicit FamiliarityBuffer(std::optional<std::size_t> cap = std::nullopt) : cap_(cap) {}

    // Returns the samples evicted by the retention cap.
    std::vector<Sample> push(Sample sample);
    std::vector<Sample> drain();
    std::vector<Sample> set_cap(std::optional<std::size_t> cap);

    std::optional<std::size_t> cap() const noexcept { return cap_; }
    std::size_t fill() const noexcept { return items_.size(); }
    BufferStatus status() const noexcept { return {fill(), false, 0}; }
    const std::deque<Sample>& items() const noexcept { return items_; }

    template <typename F>
    void for_each(F&& f) {
        for (auto& s : items_) f(s);
    }

private:
    std::vector<Sample> trim();

    std::optional<std::size_t> cap_;
    std::deque<Sample> items_;
};

struct QuantileRule {
    double q = 0.95;
    double alpha = 1.2;
};
struct FixedRule {};

struct Threshold {
    double value = 0.0;
    std::variant<QuantileRule, FixedRule> adaptation = QuantileRule{};

    void validate() const;
};

// Sort-free linear-interpolated empirical quantile.
double quantile(std::span<const double> values, double q);

// Quantile rule: value <- alpha * quantile_q(scores). Fixed thresholds come
// back unchanged. nullopt when there are no scores to adapt to.
std::optional<Threshold> adjust_threshold(const Threshold& threshold, std::span<const double> post_update_scores);

// Ties go to Familiar.
Verdict classify(double score, const Threshold& threshold);

class NoveltyDetector {
public:
    virtual ~NoveltyDetector() = default;
    virtual double score(std::span<const double> output, std::span<const double> truth) const = 0;
    virtual Verdict classify(double score, const Threshold& threshold) const = 0;
};

class MseDetector final : public NoveltyDetector {
public:
    double score(std::span<const double> output, std::span<const double> truth) const override {
        return nn::mse(output, truth);
    }
    Verdict classify(double score, const Threshold& threshold) const override {
        return novelty::classify(score, threshold);
    }
};

struct BlockRole {
    enum class Kind { autoencoder, predictor };
    Kind kind = Kind::autoencoder;
    std::string target_id;

    static BlockRole autoencoder() { return {Kind::autoencoder, {}}; }
    static BlockRole predictor(std::string target) { return {Kind::predictor, std::move(target)}; }
    bool is_predictor() const noexcept { return kind == Kind::predictor; }
};

// Reconstruction MSE for the autoencoder block, prediction MSE for a
// predictor block (which needs sample.y).
double score(const nn::MultiHeadRegressor& model, const BlockRole& role, const Sample& sample,
             const NoveltyDetector& detector = MseDetector{});

// timestamp,seq,<features...>,target,score
void write_csv(std::ostream& out, std::span<const Sample> samples, std::span<const std::string> feature_names);

}  // namespace clear::novelty
