#pragma once

// Brute-force reference implementations. They share no code with the
// library beyond its public types.

#include <algorithm>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace drs::testkit {

struct Instance {
    std::vector<double> scores;
    std::vector<bool> labels;
};

/// Random scored instance with n in [min_n, max_n]. With `ties`, half the
/// instances draw scores from an 11-point grid so equal scores are common.
inline Instance random_instance(std::mt19937_64& rng, std::size_t min_n, std::size_t max_n, bool ties,
                                bool both_classes = false) {
    std::uniform_int_distribution<std::size_t> size(min_n, max_n);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (;;) {
        Instance inst;
        std::size_t n = size(rng);
        bool grid = ties && rng() % 2 == 0;
        double prevalence = 0.05 + 0.9 * unit(rng);
        for (std::size_t i = 0; i < n; ++i) {
            inst.scores.push_back(grid ? static_cast<double>(rng() % 11) / 10.0 : unit(rng));
            inst.labels.push_back(unit(rng) < prevalence);
        }
        std::size_t pos = static_cast<std::size_t>(std::count(inst.labels.begin(), inst.labels.end(), true));
        if (!both_classes || (pos > 0 && pos < n)) return inst;
    }
}

/// Fraction of (positive, negative) pairs ordered correctly, ties half.
inline double auc_pairwise(const std::vector<double>& s, const std::vector<bool>& y) {
    std::uint64_t twice_wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!y[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j]) continue;
            ++pairs;
            if (s[i] > s[j]) twice_wins += 2;
            else if (s[i] == s[j]) twice_wins += 1;
        }
    }
    return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pairs));
}

/// F1 at tau as the exact ratio 2TP / (2TP + FP + FN), denominator >= 1.
inline std::pair<std::uint64_t, std::uint64_t> f1_ratio(const std::vector<double>& s, const std::vector<bool>& y,
                                                        double tau) {
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        bool flagged = s[i] >= tau;
        if (flagged && y[i]) ++tp;
        if (flagged && !y[i]) ++fp;
        if (!flagged && y[i]) ++fn;
    }
    std::uint64_t den = 2 * tp + fp + fn;
    return {2 * tp, den == 0 ? 1 : den};
}

inline double f1_at(const std::vector<double>& s, const std::vector<bool>& y, double tau) {
    auto [num, den] = f1_ratio(s, y, tau);
    return static_cast<double>(num) / static_cast<double>(den);
}

/// a >= b for ratios given as (num, den).
inline bool ratio_ge(std::pair<std::uint64_t, std::uint64_t> a, std::pair<std::uint64_t, std::uint64_t> b) {
    return a.first * b.second >= b.first * a.second;
}

struct SweepOracle {
    double tau = 0;
    double f1 = 0;
};

/// Tries 0, 1 and every midpoint of adjacent distinct scores; keeps the
/// largest tau among the F1 maximizers.
inline SweepOracle sweep_brute_force(const std::vector<double>& s, const std::vector<bool>& y) {
    std::vector<double> distinct = s;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<double> candidates{0.0, 1.0};
    for (std::size_t i = 1; i < distinct.size(); ++i) {
        candidates.push_back(distinct[i - 1] + (distinct[i] - distinct[i - 1]) / 2.0);
    }
    SweepOracle best;
    std::pair<std::uint64_t, std::uint64_t> best_ratio{0, 1};
    bool first = true;
    for (double tau : candidates) {
        auto r = f1_ratio(s, y, tau);
        bool better = first || (ratio_ge(r, best_ratio) && !ratio_ge(best_ratio, r));
        bool tie_larger = !first && ratio_ge(r, best_ratio) && ratio_ge(best_ratio, r) && tau > best.tau;
        if (better || tie_larger) {
            best = {tau, static_cast<double>(r.first) / static_cast<double>(r.second)};
            best_ratio = r;
            first = false;
        }
    }
    return best;
}

/// Recall among the first ceil(k*n/100) rows of a descending order where a
/// row's position is the number of rows strictly above it plus the earlier
/// rows that tie with it. Integer k only.
inline double recall_at_top_k_oracle(const std::vector<double>& s, const std::vector<bool>& y, int k) {
    const std::size_t n = s.size();
    std::size_t n_top = (static_cast<std::size_t>(k) * n + 99) / 100;
    if (n_top == 0) n_top = 1;
    std::size_t captured = 0, positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!y[i]) continue;
        ++positives;
        std::size_t position = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (s[j] > s[i] || (s[j] == s[i] && j < i)) ++position;
        }
        if (position < n_top) ++captured;
    }
    return static_cast<double>(captured) / static_cast<double>(positives);
}

}  // namespace drs::testkit
