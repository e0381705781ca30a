#pragma once

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "drs/diff.hpp"
#include "drs/error.hpp"
#include "drs/metrics.hpp"

namespace drs {

enum class RiskLabel { Safe, Risky };

constexpr std::string_view to_string(RiskLabel label) { return label == RiskLabel::Risky ? "risky" : "safe"; }

struct RiskScore {
    double probability = 0;
    double threshold = 0.5;
    RiskLabel label = RiskLabel::Safe;
    double confidence = 0;  // probability of the predicted label
    std::string scorer_id;
};

inline RiskScore make_risk_score(double probability, double threshold, std::string scorer_id) {
    RiskScore s;
    s.probability = probability;
    s.threshold = threshold;
    s.label = probability >= threshold ? RiskLabel::Risky : RiskLabel::Safe;
    s.confidence = s.label == RiskLabel::Risky ? probability : 1.0 - probability;
    s.scorer_id = std::move(scorer_id);
    return s;
}

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Baseline: logistic regression over one-hot bucket indicators.

inline constexpr std::size_t kBaselineWeightCount = kMetricCount * kBucketLevels + 1;

class BaselineModel {
public:
    BaselineModel() : weights_(kBaselineWeightCount, 0.0) {}

    explicit BaselineModel(std::vector<double> weights, bool trained = true)
        : weights_(std::move(weights)), trained_(trained) {
        if (weights_.size() != kBaselineWeightCount) {
            throw Error(Errc::InvalidArgument, "baseline weight vector must have " +
                                                   std::to_string(kBaselineWeightCount) + " entries");
        }
    }

    static constexpr std::size_t feature_index(Metric m, Bucket b) {
        return index_of(m) * kBucketLevels + static_cast<std::size_t>(b);
    }
    static constexpr std::size_t bias_index() { return kBaselineWeightCount - 1; }

    double weight(Metric m, Bucket b) const { return weights_[feature_index(m, b)]; }
    double bias() const { return weights_[bias_index()]; }
    const std::vector<double>& weights() const { return weights_; }
    bool trained() const { return trained_; }

    double logit(const BucketedMetrics& bm) const {
        double z = bias();
        for (std::size_t i = 0; i < kMetricCount; ++i) z += weights_[i * kBucketLevels + static_cast<std::size_t>(bm[i])];
        return z;
    }

    double probability(const BucketedMetrics& bm) const { return sigmoid(logit(bm)); }

private:
    std::vector<double> weights_;
    bool trained_ = false;
};

struct TrainingExample {
    BucketedMetrics buckets{};
    bool buggy = false;
};

/// Full-batch gradient descent on mean log-loss plus an L2 penalty on the
/// indicator weights (the bias is not penalized). No randomness involved:
/// equal inputs and options give bit-identical weights.
struct TrainOptions {
    int iterations = 2000;
    double learning_rate = 0.5;
    double l2 = 1e-4;
};

inline BaselineModel train_baseline(std::span<const TrainingExample> examples, const TrainOptions& opts = {}) {
    std::size_t positives = 0;
    for (const auto& e : examples) positives += e.buggy ? 1 : 0;
    const std::size_t negatives = examples.size() - positives;
    if (positives < 2 || negatives < 2) {
        throw Error(Errc::DegenerateTrainingSet, "training set needs at least two examples of each class (got " +
                                                     std::to_string(positives) + " buggy, " +
                                                     std::to_string(negatives) + " clean)");
    }
    if (opts.iterations <= 0 || !(opts.learning_rate > 0)) {
        throw Error(Errc::InvalidArgument, "iterations and learning rate must be positive");
    }

    std::vector<double> w(kBaselineWeightCount, 0.0);
    std::vector<double> grad(kBaselineWeightCount);
    const double inv_n = 1.0 / static_cast<double>(examples.size());

    for (int it = 0; it < opts.iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const auto& e : examples) {
            double z = w.back();
            for (std::size_t i = 0; i < kMetricCount; ++i) z += w[i * kBucketLevels + static_cast<std::size_t>(e.buckets[i])];
            double residual = sigmoid(z) - (e.buggy ? 1.0 : 0.0);
            for (std::size_t i = 0; i < kMetricCount; ++i) {
                grad[i * kBucketLevels + static_cast<std::size_t>(e.buckets[i])] += residual;
            }
            grad.back() += residual;
        }
        for (std::size_t j = 0; j + 1 < w.size(); ++j) {
            w[j] -= opts.learning_rate * (grad[j] * inv_n + opts.l2 * w[j]);
        }
        w.back() -= opts.learning_rate * grad.back() * inv_n;
    }
    return BaselineModel(std::move(w), true);
}

// Model file: "drs-baseline v1" then one weight per line, bias last.
inline constexpr std::string_view kBaselineMagic = "drs-baseline v1";

inline void write_baseline(std::ostream& os, const BaselineModel& model) {
    os << kBaselineMagic << '\n' << std::setprecision(17);
    for (double w : model.weights()) os << w << '\n';
}

inline BaselineModel read_baseline(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kBaselineMagic) {
        throw Error(Errc::InvalidModelFile, "missing baseline model header");
    }
    std::vector<double> w;
    double v = 0;
    while (is >> v) w.push_back(v);
    if (!is.eof() || w.size() != kBaselineWeightCount) {
        throw Error(Errc::InvalidModelFile, "baseline model must list " + std::to_string(kBaselineWeightCount) +
                                                " numeric weights");
    }
    return BaselineModel(std::move(w), true);
}

// ---------------------------------------------------------------------------
// Scorer abstraction.

/// Everything a backend may look at. The builtin scorer only reads the
/// buckets; remote backends receive the raw diff, message and known metric
/// values and do their own structuring.
struct ScoreInput {
    std::string_view diff;
    std::string_view commit_message;
    const StructuredText* structured = nullptr;
    BucketedMetrics buckets{};
    ChangeMetrics metrics;
};

class Scorer {
public:
    virtual ~Scorer() = default;
    virtual double probability(const ScoreInput& input) const = 0;
    virtual std::string id() const = 0;
    // Readiness probe; liveness of the caller does not depend on it.
    virtual bool available() const { return true; }
};

class BuiltinScorer final : public Scorer {
public:
    explicit BuiltinScorer(BaselineModel model) : model_(std::move(model)) {}

    double probability(const ScoreInput& input) const override { return model_.probability(input.buckets); }
    std::string id() const override { return model_.trained() ? "builtin-logreg" : "builtin-logreg-untrained"; }

    const BaselineModel& model() const { return model_; }

private:
    BaselineModel model_;
};

struct BuiltinBackend {};

struct RemoteBackend {
    std::string base_url;
    int timeout_ms = 10000;
    std::size_t max_diff_bytes = 1 << 20;
};

struct ScorerConfig {
    std::variant<BuiltinBackend, RemoteBackend> backend = BuiltinBackend{};
    double threshold = 0.5;

    void validate() const {
        if (!(threshold >= 0.0 && threshold <= 1.0)) {
            throw Error(Errc::InvalidArgument, "threshold must lie in [0,1]");
        }
        if (const auto* remote = std::get_if<RemoteBackend>(&backend)) {
            if (remote->timeout_ms <= 0) throw Error(Errc::InvalidArgument, "timeout_ms must be positive");
            if (remote->max_diff_bytes == 0) throw Error(Errc::InvalidArgument, "max_diff_bytes must be positive");
            if (remote->base_url.empty()) throw Error(Errc::InvalidArgument, "remote backend needs a base URL");
        }
    }
};

inline RiskScore score(const ScoreInput& input, const Scorer& scorer, double threshold) {
    double p = scorer.probability(input);
    if (!(p >= 0.0 && p <= 1.0)) {
        throw Error(Errc::MalformedBackendResponse, "scorer returned probability outside [0,1]");
    }
    return make_risk_score(p, threshold, scorer.id());
}

// ---------------------------------------------------------------------------
// CLM-as-classifier: the first generated token carries the label.

enum class ClmLabel { Safe, Risky, Unparseable };

inline ClmLabel clm_token_to_label(std::string_view token) {
    while (!token.empty() && detail::is_space(token.front())) token.remove_prefix(1);
    while (!token.empty() && detail::is_space(token.back())) token.remove_suffix(1);
    if (token == "1") return ClmLabel::Risky;
    if (token == "0") return ClmLabel::Safe;
    return ClmLabel::Unparseable;
}

}  // namespace drs
