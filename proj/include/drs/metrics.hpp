#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "drs/diff.hpp"
#include "drs/error.hpp"

namespace drs {

// Order matters: it is the rendering order of the metric block and the
// column order of calibration files.
enum class Metric : std::size_t { la, ld, nf, nd, ns, ent, ndev, age, nuc, exp, rexp, sexp };

inline constexpr std::size_t kMetricCount = 12;

inline constexpr std::array<std::string_view, kMetricCount> kMetricKeys = {
    "la", "ld", "nf", "nd", "ns", "ent", "ndev", "age", "nuc", "exp", "rexp", "sexp"};

inline constexpr std::array<std::string_view, kMetricCount> kMetricTokenNames = {
    "num_lines_added",
    "num_lines_deleted",
    "num_files_touched",
    "num_directories_touched",
    "num_subsystems_touched",
    "change_entropy",
    "num_developers_touched_files",
    "time_from_last_change",
    "num_changes_in_files",
    "author_experience",
    "author_recent_experience",
    "author_subsystem_experience",
};

inline constexpr std::array<Metric, kMetricCount> kAllMetrics = {
    Metric::la, Metric::ld,   Metric::nf,  Metric::nd,  Metric::ns,   Metric::ent,
    Metric::ndev, Metric::age, Metric::nuc, Metric::exp, Metric::rexp, Metric::sexp};

constexpr std::size_t index_of(Metric m) { return static_cast<std::size_t>(m); }
constexpr std::string_view key_of(Metric m) { return kMetricKeys[index_of(m)]; }
constexpr std::string_view token_name_of(Metric m) { return kMetricTokenNames[index_of(m)]; }

/// Accepts either the short column key ("la") or the token name
/// ("num_lines_added").
inline std::optional<Metric> metric_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        if (kMetricKeys[i] == name || kMetricTokenNames[i] == name) return kAllMetrics[i];
    }
    return std::nullopt;
}

/// Twelve change metrics; nullopt marks a value that is unknown (history
/// metrics on live diffs).
struct ChangeMetrics {
    std::array<std::optional<double>, kMetricCount> values{};

    std::optional<double>& operator[](Metric m) { return values[index_of(m)]; }
    const std::optional<double>& operator[](Metric m) const { return values[index_of(m)]; }

    bool operator==(const ChangeMetrics&) const = default;
};

enum class Bucket : std::uint8_t { VeryLow, Low, Medium, High, VeryHigh, Unknown };

inline constexpr std::size_t kBucketLevels = 6;

constexpr std::string_view to_string(Bucket b) {
    switch (b) {
    case Bucket::VeryLow: return "VERY_LOW";
    case Bucket::Low: return "LOW";
    case Bucket::Medium: return "MEDIUM";
    case Bucket::High: return "HIGH";
    case Bucket::VeryHigh: return "VERY_HIGH";
    case Bucket::Unknown: return "UNKNOWN";
    }
    return "UNKNOWN";
}

using BucketedMetrics = std::array<Bucket, kMetricCount>;

struct BucketCuts {
    double q20 = 0;
    double q40 = 0;
    double q60 = 0;
    double q80 = 0;

    bool valid() const { return q20 <= q40 && q40 <= q60 && q60 <= q80; }
    bool operator==(const BucketCuts&) const = default;
};

/// Per-metric cut points. With log_scale set, values pass through log1p
/// before both fitting and bucketing.
struct BucketThresholds {
    std::array<BucketCuts, kMetricCount> cuts{};
    bool log_scale = false;

    const BucketCuts& operator[](Metric m) const { return cuts[index_of(m)]; }
    bool operator==(const BucketThresholds&) const = default;
};

/// Fallback cuts for deployments without a fitted calibration file. Values
/// are coarse guesses in each metric's own units; fit real ones with
/// `drs calibrate`.
inline BucketThresholds fallback_thresholds() {
    BucketThresholds t;
    t.cuts = {{
        {5, 20, 60, 200},        // la
        {2, 10, 40, 150},        // ld
        {1, 2, 4, 8},            // nf
        {1, 2, 3, 5},            // nd
        {1, 1, 2, 3},            // ns
        {0.2, 0.4, 0.6, 0.8},    // ent
        {2, 5, 10, 20},          // ndev
        {1, 7, 30, 120},         // age (days)
        {5, 20, 60, 200},        // nuc
        {50, 200, 800, 2500},    // exp
        {5, 20, 60, 200},        // rexp
        {20, 100, 400, 1200},    // sexp
    }};
    return t;
}

namespace detail {

inline std::string parent_dir(const std::string& path) {
    std::size_t slash = path.rfind('/');
    return slash == std::string::npos ? std::string{} : path.substr(0, slash);
}

inline std::string first_segment(const std::string& path) {
    std::size_t slash = path.find('/');
    return slash == std::string::npos ? std::string{} : path.substr(0, slash);
}

}  // namespace detail

/// Normalized Shannon entropy of the changed-line distribution over files:
/// -sum(p log2 p) / log2(n); 0 when n <= 1 or nothing changed.
inline double change_entropy(const std::vector<std::size_t>& changed_per_file) {
    const std::size_t n = changed_per_file.size();
    std::size_t total = 0;
    for (std::size_t c : changed_per_file) total += c;
    if (n <= 1 || total == 0) return 0.0;
    double h = 0.0;
    for (std::size_t c : changed_per_file) {
        if (c == 0) continue;
        double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    double normalized = h / std::log2(static_cast<double>(n));
    return std::clamp(normalized, 0.0, 1.0);
}

/// Fills the six diff-derived metrics; history metrics stay unknown.
inline ChangeMetrics compute_diff_metrics(const DiffDocument& doc) {
    ChangeMetrics m;
    std::size_t added = 0;
    std::size_t removed = 0;
    std::set<std::string> dirs;
    std::set<std::string> subsystems;
    std::vector<std::size_t> changed;
    changed.reserve(doc.files.size());
    for (const auto& f : doc.files) {
        added += f.added_lines.size();
        removed += f.removed_lines.size();
        dirs.insert(detail::parent_dir(f.path));
        subsystems.insert(detail::first_segment(f.path));
        changed.push_back(f.added_lines.size() + f.removed_lines.size());
    }
    m[Metric::la] = static_cast<double>(added);
    m[Metric::ld] = static_cast<double>(removed);
    m[Metric::nf] = static_cast<double>(doc.files.size());
    m[Metric::nd] = static_cast<double>(dirs.size());
    m[Metric::ns] = static_cast<double>(subsystems.size());
    m[Metric::ent] = change_entropy(changed);
    return m;
}

inline double bucket_transform(double value, bool log_scale) {
    return log_scale ? std::log1p(std::max(value, 0.0)) : value;
}

/// Nearest-rank percentile on a sorted sample: element ceil(p/100 * N).
inline double nearest_rank(const std::vector<double>& sorted, int percent) {
    const std::size_t n = sorted.size();
    std::size_t rank = (static_cast<std::size_t>(percent) * n + 99) / 100;
    rank = std::clamp<std::size_t>(rank, 1, n);
    return sorted[rank - 1];
}

inline constexpr std::size_t kMinCalibrationSamples = 5;

inline BucketCuts fit_cuts(std::vector<double> samples, bool log_scale = false, std::string_view metric = "metric") {
    std::vector<double> finite;
    finite.reserve(samples.size());
    for (double v : samples) {
        if (std::isfinite(v)) finite.push_back(bucket_transform(v, log_scale));
    }
    if (finite.size() < kMinCalibrationSamples) {
        throw Error(Errc::InsufficientSamples, std::string(metric) + ": need at least " +
                                                   std::to_string(kMinCalibrationSamples) + " finite samples, got " +
                                                   std::to_string(finite.size()));
    }
    std::sort(finite.begin(), finite.end());
    return {nearest_rank(finite, 20), nearest_rank(finite, 40), nearest_rank(finite, 60), nearest_rank(finite, 80)};
}

inline BucketThresholds fit_bucket_thresholds(const std::array<std::vector<double>, kMetricCount>& samples,
                                              bool log_scale = false) {
    BucketThresholds t;
    t.log_scale = log_scale;
    for (std::size_t i = 0; i < kMetricCount; ++i) t.cuts[i] = fit_cuts(samples[i], log_scale, kMetricKeys[i]);
    return t;
}

/// Strict-less rule: a value equal to a cut falls into the upper bucket.
inline Bucket bucketize(std::optional<double> value, const BucketCuts& cuts, bool log_scale = false) {
    if (!value || std::isnan(*value)) return Bucket::Unknown;
    double v = bucket_transform(*value, log_scale);
    if (v < cuts.q20) return Bucket::VeryLow;
    if (v < cuts.q40) return Bucket::Low;
    if (v < cuts.q60) return Bucket::Medium;
    if (v < cuts.q80) return Bucket::High;
    return Bucket::VeryHigh;
}

inline BucketedMetrics bucket_metrics(const ChangeMetrics& metrics, const BucketThresholds& thresholds) {
    BucketedMetrics out{};
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        out[i] = bucketize(metrics.values[i], thresholds.cuts[i], thresholds.log_scale);
    }
    return out;
}

/// Twelve lines "[<token name>:] [<LEVEL>]", newline separated, no
/// trailing newline.
inline std::string render_metric_tokens(const BucketedMetrics& bm) {
    std::string out;
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        if (i > 0) out += '\n';
        out += '[';
        out += kMetricTokenNames[i];
        out += ":] [";
        out += to_string(bm[i]);
        out += ']';
    }
    return out;
}

// Calibration file:
//
//   drs-calibration v1
//   transform raw|log1p
//   la <q20> <q40> <q60> <q80>
//   ... one record per metric, fixed order
inline constexpr std::string_view kCalibrationMagic = "drs-calibration v1";

inline void write_calibration(std::ostream& os, const BucketThresholds& t) {
    os << kCalibrationMagic << '\n';
    os << "transform " << (t.log_scale ? "log1p" : "raw") << '\n';
    std::ostringstream line;
    line << std::setprecision(17);
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        const auto& c = t.cuts[i];
        line.str({});
        line << kMetricKeys[i] << ' ' << c.q20 << ' ' << c.q40 << ' ' << c.q60 << ' ' << c.q80 << '\n';
        os << line.str();
    }
}

inline BucketThresholds read_calibration(std::istream& is) {
    auto fail = [](const std::string& why) { throw Error(Errc::InvalidCalibration, why); };
    std::string line;
    if (!std::getline(is, line) || line != kCalibrationMagic) fail("missing calibration header");
    BucketThresholds t;
    if (!std::getline(is, line)) fail("missing transform line");
    if (line == "transform raw") {
        t.log_scale = false;
    } else if (line == "transform log1p") {
        t.log_scale = true;
    } else {
        fail("unknown transform: " + line);
    }
    std::array<bool, kMetricCount> seen{};
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string name;
        BucketCuts c;
        if (!(fields >> name >> c.q20 >> c.q40 >> c.q60 >> c.q80)) fail("bad record: " + line);
        auto metric = metric_from_name(name);
        if (!metric) fail("unknown metric: " + name);
        if (!c.valid()) fail("cuts not ascending for " + name);
        t.cuts[index_of(*metric)] = c;
        seen[index_of(*metric)] = true;
    }
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        if (!seen[i]) fail("missing record for " + std::string(kMetricKeys[i]));
    }
    return t;
}

}  // namespace drs
