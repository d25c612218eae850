#include <clear/novelty.hpp>
#include <clear/preprocess.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace clear::novelty {

const char* to_string(Verdict v) noexcept {
    return v == Verdict::novel ? "novel" : "familiar";
}

NoveltyBuffer::NoveltyBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw Error(ErrorKind::validation, "novelty buffer capacity must be positive");
}

BufferStatus NoveltyBuffer::push(Sample sample) {
    if (items_.size() < capacity_ && pending_.empty()) {
        items_.push_back(std::move(sample));
    } else {
        pending_.push_back(std::move(sample));
    }
    return status();
}

std::vector<Sample> NoveltyBuffer::drain() {
    std::vector<Sample> out(std::make_move_iterator(items_.begin()), std::make_move_iterator(items_.end()));
    items_.clear();
    while (!pending_.empty() && items_.size() < capacity_) {
        items_.push_back(std::move(pending_.front()));
        pending_.pop_front();
    }
    return out;
}

void NoveltyBuffer::set_capacity(std::size_t capacity) {
    if (capacity == 0) throw Error(ErrorKind::validation, "novelty buffer capacity must be positive");
    capacity_ = capacity;
    while (items_.size() > capacity_) {
        pending_.push_front(std::move(items_.back()));
        items_.pop_back();
    }
    while (!pending_.empty() && items_.size() < capacity_) {
        items_.push_back(std::move(pending_.front()));
        pending_.pop_front();
    }
}

std::vector<Sample> NoveltyBuffer::clear() {
    std::vector<Sample> out;
    out.reserve(items_.size() + pending_.size());
    for (auto& s : items_) out.push_back(std::move(s));
    for (auto& s : pending_) out.push_back(std::move(s));
    items_.clear();
    pending_.clear();
    return out;
}

std::vector<Sample> FamiliarityBuffer::push(Sample sample) {
    items_.push_back(std::move(sample));
    return trim();
}

std::vector<Sample> FamiliarityBuffer::drain() {
    std::vector<Sample> out(std::make_move_iterator(items_.begin()), std::make_move_iterator(items_.end()));
    items_.clear();
    return out;
}

std::vector<Sample> FamiliarityBuffer::set_cap(std::optional<std::size_t> cap) {
    cap_ = cap;
    return trim();
}

std::vector<Sample> FamiliarityBuffer::trim() {
    std::vector<Sample> evicted;
    if (!cap_) return evicted;
    while (items_.size() > *cap_) {
        evicted.push_back(std::move(items_.front()));
        items_.pop_front();
    }
    return evicted;
}

void Threshold::validate() const {
    if (!(value >= 0.0) || !std::isfinite(value)) throw Error(ErrorKind::validation, "threshold must be >= 0");
    if (const auto* rule = std::get_if<QuantileRule>(&adaptation)) {
        if (!(rule->q >= 0.0 && rule->q <= 1.0)) throw Error(ErrorKind::validation, "quantile q must lie in [0,1]");
        if (!(rule->alpha > 0.0) || !std::isfinite(rule->alpha)) {
            throw Error(ErrorKind::validation, "quantile alpha must be > 0");
        }
    }
}

double quantile(std::span<const double> values, double q) {
    if (values.empty()) throw Error(ErrorKind::argument, "quantile of an empty set");
    if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorKind::argument, "quantile level outside [0,1]");
    std::vector<double> work(values.begin(), values.end());
    const double pos = q * static_cast<double>(work.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(lo), work.end());
    const double low = work[lo];
    if (lo + 1 >= work.size()) return low;
    const double high = *std::min_element(work.begin() + static_cast<std::ptrdiff_t>(lo) + 1, work.end());
    return low + (pos - static_cast<double>(lo)) * (high - low);
}

std::optional<Threshold> adjust_threshold(const Threshold& threshold, std::span<const double> post_update_scores) {
    if (post_update_scores.empty()) return std::nullopt;
    Threshold next = threshold;
    if (const auto* rule = std::get_if<QuantileRule>(&threshold.adaptation)) {
        next.value = rule->alpha * quantile(post_update_scores, rule->q);
    }
    return next;
}

Verdict classify(double score, const Threshold& threshold) {
    if (!(score >= 0.0)) throw Error(ErrorKind::internal, "negative or NaN novelty score");
    return score > threshold.value ? Verdict::novel : Verdict::familiar;
}

double score(const nn::MultiHeadRegressor& model, const BlockRole& role, const Sample& sample,
             const NoveltyDetector& detector) {
    if (role.kind == BlockRole::Kind::autoencoder) {
        return detector.score(model.shared.reconstruct(sample.x), sample.x);
    }
    if (!sample.y) throw Error(ErrorKind::missing_target, "predictor '" + role.target_id + "' needs a target");
    const double prediction = model.predict(role.target_id, sample.x);
    const double truth = *sample.y;
    return detector.score(std::span<const double>(&prediction, 1), std::span<const double>(&truth, 1));
}

void write_csv(std::ostream& out, std::span<const Sample> samples, std::span<const std::string> feature_names) {
    out << "timestamp,seq";
    for (const auto& n : feature_names) out << ',' << n;
    out << ",target,score\n";
    for (const auto& s : samples) {
        out << s.timestamp << ',' << s.seq;
        for (double v : s.x) out << ',' << pre::format_double(v);
        out << ',' << (s.y ? pre::format_double(*s.y) : std::string()) << ',' << pre::format_double(s.score) << '\n';
    }
}

}  // namespace clear::novelty
