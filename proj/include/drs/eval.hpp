#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "drs/dataset.hpp"
#include "drs/error.hpp"

namespace drs {

// ---------------------------------------------------------------------------
// Splitting and resampling

struct Split {
    Dataset train;
    Dataset valid;
    Dataset test;
};

/// Stable sort by author timestamp, then cut by cumulative counts: floor
/// for train and validation, the remainder goes to test.
inline Split chronological_split(const Dataset& ds, std::array<double, 3> fractions = {0.8, 0.1, 0.1}) {
    if (ds.empty()) throw Error(Errc::EmptyDataset, "cannot split an empty dataset");
    double sum = fractions[0] + fractions[1] + fractions[2];
    if (std::any_of(fractions.begin(), fractions.end(), [](double f) { return !(f >= 0.0); }) ||
        std::abs(sum - 1.0) > 1e-9) {
        throw Error(Errc::InvalidArgument, "split fractions must be non-negative and sum to 1");
    }
    std::vector<LabeledCommit> rows = ds.rows;
    std::stable_sort(rows.begin(), rows.end(), [](const LabeledCommit& a, const LabeledCommit& b) {
        return a.commit.author_timestamp < b.commit.author_timestamp;
    });
    const double n = static_cast<double>(rows.size());
    // The epsilon absorbs representation error such as 0.1 * 30 = 3.0000000000000004.
    auto n_train = static_cast<std::size_t>(std::floor(fractions[0] * n + 1e-9));
    auto n_valid = static_cast<std::size_t>(std::floor(fractions[1] * n + 1e-9));
    n_train = std::min(n_train, rows.size());
    n_valid = std::min(n_valid, rows.size() - n_train);

    Split out;
    auto first = rows.begin();
    auto valid_begin = first + static_cast<std::ptrdiff_t>(n_train);
    auto test_begin = valid_begin + static_cast<std::ptrdiff_t>(n_valid);
    out.train.rows.assign(std::make_move_iterator(first), std::make_move_iterator(valid_begin));
    out.valid.rows.assign(std::make_move_iterator(valid_begin), std::make_move_iterator(test_begin));
    out.test.rows.assign(std::make_move_iterator(test_begin), std::make_move_iterator(rows.end()));
    return out;
}

namespace detail {

// Unbiased draw from [0, n) by rejection; std distributions are not
// portable across standard libraries and reports must be reproducible.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = 0;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

}  // namespace detail

/// Label of the strictly larger class, nullopt when the classes tie or
/// only one class is present.
inline std::optional<bool> majority_label(const Dataset& ds) {
    std::size_t buggy = 0;
    for (const auto& r : ds.rows) buggy += r.buggy ? 1 : 0;
    std::size_t clean = ds.size() - buggy;
    if (buggy == 0 || clean == 0 || buggy == clean) return std::nullopt;
    return buggy > clean;
}

/// Keeps every minority row and round(ratio * |majority|) majority rows
/// drawn uniformly without replacement. Row order is preserved. Returns the
/// input unchanged when no majority class is defined.
inline Dataset undersample_majority(const Dataset& train, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw Error(Errc::InvalidArgument, "undersampling ratio must lie in (0,1]");
    auto majority = majority_label(train);
    if (!majority) {
        spdlog::warn("undersampling skipped: no strict majority class among {} rows", train.size());
        return train;
    }

    std::vector<std::size_t> majority_rows;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (train.rows[i].buggy == *majority) majority_rows.push_back(i);
    }
    const auto keep = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(majority_rows.size())));

    // Partial Fisher-Yates: the first `keep` slots become the sample.
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < keep; ++i) {
        std::size_t j = i + detail::uniform_below(rng, majority_rows.size() - i);
        std::swap(majority_rows[i], majority_rows[j]);
    }
    std::vector<char> selected(train.size(), 0);
    for (std::size_t i = 0; i < keep; ++i) selected[majority_rows[i]] = 1;

    Dataset out;
    out.skipped_rows = train.skipped_rows;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (train.rows[i].buggy != *majority || selected[i]) out.rows.push_back(train.rows[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Classification metrics

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    bool operator==(const ConfusionCounts&) const = default;
};

struct EvalReport {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    double accuracy = 0;
    std::optional<double> roc_auc;
    double threshold = 0;
    ConfusionCounts counts;
};

namespace detail {

inline void check_scores(std::span<const double> scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) {
        throw Error(Errc::LengthMismatch, "scores and labels differ in length (" + std::to_string(scores.size()) +
                                              " vs " + std::to_string(labels.size()) + ")");
    }
    if (std::any_of(scores.begin(), scores.end(), [](double s) { return !std::isfinite(s); })) {
        throw Error(Errc::InvalidArgument, "scores must be finite");
    }
}

inline std::size_t count_positive(const std::vector<bool>& labels) {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
}

}  // namespace detail

/// Precision, recall and F1 from counts, with 0 for any 0/0 ratio. Every
/// F1 in this library goes through here so that values computed by
/// different routes compare exactly.
inline EvalReport report_from_counts(const ConfusionCounts& c, double threshold) {
    EvalReport r;
    r.counts = c;
    r.threshold = threshold;
    r.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    r.recall = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    r.f1 = (r.precision + r.recall) > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    r.accuracy = c.total() > 0 ? static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total()) : 0.0;
    return r;
}

/// Predict positive when score >= tau. roc_auc is left empty.
inline EvalReport classification_metrics(std::span<const double> scores, const std::vector<bool>& labels, double tau) {
    detail::check_scores(scores, labels);
    if (scores.empty()) throw Error(Errc::InvalidArgument, "classification metrics need at least one score");
    ConfusionCounts c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool predicted = scores[i] >= tau;
        if (predicted && labels[i]) ++c.tp;
        else if (predicted) ++c.fp;
        else if (labels[i]) ++c.fn;
        else ++c.tn;
    }
    return report_from_counts(c, tau);
}

/// Mann-Whitney estimate of P(score_pos > score_neg), ties counted half,
/// from midranks. Twice the rank sum is an integer, so the numerator is
/// exact.
inline double roc_auc(std::span<const double> scores, const std::vector<bool>& labels) {
    detail::check_scores(scores, labels);
    const std::size_t n = scores.size();
    const std::size_t n_pos = detail::count_positive(labels);
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw Error(Errc::SingleClassInput, "ROC-AUC needs both positive and negative labels");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // 2 * (sum of 1-based midranks of positives)
    unsigned long long twice_rank_sum = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        // ranks i+1 .. j+1 share midrank (i+j+2)/2
        const unsigned long long twice_midrank = i + j + 2;
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]]) twice_rank_sum += twice_midrank;
        }
        i = j + 1;
    }
    const unsigned long long p = n_pos;
    const long double u2 = static_cast<long double>(twice_rank_sum) - static_cast<long double>(p * (p + 1));
    return static_cast<double>(u2 / (2.0L * static_cast<long double>(p) * static_cast<long double>(n_neg)));
}

struct ThresholdChoice {
    double tau = 0;
    double f1 = 0;
};

/// Candidate thresholds for the sweep: 0, 1 and the midpoints between
/// consecutive distinct scores, ascending.
inline std::vector<double> threshold_candidates(std::span<const double> scores) {
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<double> out{0.0, 1.0};
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) out.push_back(sorted[i] + (sorted[i + 1] - sorted[i]) / 2.0);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// Best-F1 threshold over threshold_candidates; ties go to the larger tau.
inline ThresholdChoice sweep_threshold(std::span<const double> scores, const std::vector<bool>& labels) {
    detail::check_scores(scores, labels);
    const std::size_t n_pos = detail::count_positive(labels);
    if (n_pos == 0) throw Error(Errc::SingleClassInput, "threshold sweep needs at least one positive label");

    // Descending scores with running positive counts answer "how many
    // predicted and how many true among score >= tau" by binary search.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<double> desc(order.size());
    std::vector<std::size_t> pos_prefix(order.size() + 1, 0);
    for (std::size_t i = 0; i < order.size(); ++i) {
        desc[i] = scores[order[i]];
        pos_prefix[i + 1] = pos_prefix[i] + (labels[order[i]] ? 1 : 0);
    }

    // F1 = 2TP / (2TP + FP + FN); candidates are compared on that ratio in
    // integers so that mathematically equal F1 values tie exactly.
    ThresholdChoice best{0.0, -1.0};
    std::uint64_t best_num = 0, best_den = 0;
    bool have_best = false;
    for (double tau : threshold_candidates(scores)) {
        // first index with score < tau
        auto it = std::partition_point(desc.begin(), desc.end(), [tau](double s) { return s >= tau; });
        std::size_t predicted = static_cast<std::size_t>(it - desc.begin());
        ConfusionCounts c;
        c.tp = pos_prefix[predicted];
        c.fp = predicted - c.tp;
        c.fn = n_pos - c.tp;
        c.tn = scores.size() - predicted - c.fn;
        const std::uint64_t num = 2 * c.tp;
        const std::uint64_t den = std::max<std::uint64_t>(2 * c.tp + c.fp + c.fn, 1);
        if (!have_best || num * best_den >= best_num * den) {
            best = {tau, report_from_counts(c, tau).f1};
            best_num = num;
            best_den = den;
            have_best = true;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Gating

/// ceil(k/100 * n), at least one row when k > 0. The epsilon keeps exact
/// products such as 30% of 10 from rounding up to 4.
inline std::size_t top_k_count(std::size_t n, double k_percent) {
    if (!(k_percent > 0.0 && k_percent <= 100.0)) throw Error(Errc::InvalidArgument, "k must lie in (0,100]");
    if (n == 0) return 0;
    double exact = k_percent * static_cast<double>(n) / 100.0;
    auto count = static_cast<std::size_t>(std::ceil(exact - 1e-9));
    return std::clamp<std::size_t>(count, 1, n);
}

/// Row indices by descending score, ties kept in input order.
inline std::vector<std::size_t> rank_by_score(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

inline double recall_at_top_k(std::span<const double> scores, const std::vector<bool>& labels, double k_percent) {
    detail::check_scores(scores, labels);
    const std::size_t n_pos = detail::count_positive(labels);
    if (n_pos == 0) throw Error(Errc::SingleClassInput, "recall@top-k needs at least one positive label");
    const std::size_t n_top = top_k_count(scores.size(), k_percent);
    auto order = rank_by_score(scores);
    std::size_t captured = 0;
    for (std::size_t i = 0; i < n_top; ++i) captured += labels[order[i]] ? 1 : 0;
    return static_cast<double>(captured) / static_cast<double>(n_pos);
}

struct TopPercent {
    double k = 30;
};

struct FixedThreshold {
    double tau = 0.5;
};

using GatePolicy = std::variant<TopPercent, FixedThreshold>;

inline void validate(const GatePolicy& policy) {
    if (const auto* top = std::get_if<TopPercent>(&policy)) {
        if (!(top->k > 0.0 && top->k <= 100.0)) throw Error(Errc::InvalidArgument, "top-percent k must lie in (0,100]");
    } else {
        double tau = std::get<FixedThreshold>(policy).tau;
        if (!(tau >= 0.0 && tau <= 1.0)) throw Error(Errc::InvalidArgument, "tau must lie in [0,1]");
    }
}

struct GateReport {
    std::size_t gated_count = 0;
    std::size_t total = 0;
    std::size_t buggy_total = 0;
    std::size_t buggy_gated = 0;
    double captured_fraction = 0;  // buggy_gated / buggy_total, 0 without buggy rows
    double gated_fraction = 0;     // gated_count / total
};

inline GateReport simulate_gate(std::span<const double> scores, const std::vector<bool>& labels,
                                const GatePolicy& policy) {
    detail::check_scores(scores, labels);
    if (scores.empty()) throw Error(Errc::InvalidArgument, "gate simulation needs at least one score");
    validate(policy);

    GateReport r;
    r.total = scores.size();
    r.buggy_total = detail::count_positive(labels);
    if (const auto* top = std::get_if<TopPercent>(&policy)) {
        r.gated_count = top_k_count(r.total, top->k);
        auto order = rank_by_score(scores);
        for (std::size_t i = 0; i < r.gated_count; ++i) r.buggy_gated += labels[order[i]] ? 1 : 0;
    } else {
        double tau = std::get<FixedThreshold>(policy).tau;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= tau) {
                ++r.gated_count;
                r.buggy_gated += labels[i] ? 1 : 0;
            }
        }
    }
    r.captured_fraction =
        r.buggy_total > 0 ? static_cast<double>(r.buggy_gated) / static_cast<double>(r.buggy_total) : 0.0;
    r.gated_fraction = static_cast<double>(r.gated_count) / static_cast<double>(r.total);
    return r;
}

// ---------------------------------------------------------------------------
// JSON views

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j = {
        {"precision", r.precision},
        {"recall", r.recall},
        {"f1", r.f1},
        {"accuracy", r.accuracy},
        {"threshold", r.threshold},
        {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}}},
    };
    j["roc_auc"] = r.roc_auc ? nlohmann::json(*r.roc_auc) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json to_json(const GatePolicy& policy) {
    if (const auto* top = std::get_if<TopPercent>(&policy)) return {{"kind", "top_percent"}, {"k", top->k}};
    return {{"kind", "fixed_threshold"}, {"tau", std::get<FixedThreshold>(policy).tau}};
}

inline nlohmann::json to_json(const GateReport& r) {
    return {
        {"gated_count", r.gated_count},         {"total", r.total},
        {"buggy_total", r.buggy_total},         {"buggy_gated", r.buggy_gated},
        {"captured_fraction", r.captured_fraction}, {"gated_fraction", r.gated_fraction},
    };
}

}  // namespace drs
