#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "drs/diff.hpp"
#include "drs/metrics.hpp"
#include "support/generators.hpp"

namespace {

using namespace drs;

FileDelta file_with(std::string path, std::size_t added, std::size_t removed) {
    FileDelta f;
    f.path = std::move(path);
    for (std::size_t i = 0; i < added; ++i) f.added_lines.push_back("a" + std::to_string(i));
    for (std::size_t i = 0; i < removed; ++i) f.removed_lines.push_back("r" + std::to_string(i));
    return f;
}

TEST(ChangeMetricsTest, EmptyDocument) {
    auto m = compute_diff_metrics(DiffDocument{});
    EXPECT_EQ(m[Metric::la], 0.0);
    EXPECT_EQ(m[Metric::ld], 0.0);
    EXPECT_EQ(m[Metric::nf], 0.0);
    EXPECT_EQ(m[Metric::nd], 0.0);
    EXPECT_EQ(m[Metric::ns], 0.0);
    EXPECT_EQ(m[Metric::ent], 0.0);
    for (Metric h : {Metric::ndev, Metric::age, Metric::nuc, Metric::exp, Metric::rexp, Metric::sexp}) {
        EXPECT_FALSE(m[h].has_value());
    }
}

TEST(ChangeMetricsTest, TwoEqualFilesInOneDirectory) {
    DiffDocument doc;
    doc.files = {file_with("a/x.c", 5, 0), file_with("a/y.c", 5, 0)};
    auto m = compute_diff_metrics(doc);
    EXPECT_EQ(m[Metric::la], 10.0);
    EXPECT_EQ(m[Metric::nf], 2.0);
    EXPECT_EQ(m[Metric::nd], 1.0);
    EXPECT_EQ(m[Metric::ns], 1.0);
    EXPECT_DOUBLE_EQ(*m[Metric::ent], 1.0);
}

TEST(ChangeMetricsTest, SkewedEntropy) {
    DiffDocument doc;
    doc.files = {file_with("a/x.c", 9, 0), file_with("b/y.c", 1, 0)};
    auto m = compute_diff_metrics(doc);
    double expected = -(0.9 * std::log2(0.9) + 0.1 * std::log2(0.1));
    EXPECT_NEAR(*m[Metric::ent], expected, 1e-12);
    EXPECT_NEAR(*m[Metric::ent], 0.468995593589281, 1e-12);
    EXPECT_EQ(m[Metric::nd], 2.0);
    EXPECT_EQ(m[Metric::ns], 2.0);
}

TEST(ChangeMetricsTest, SingleFileHasZeroEntropy) {
    DiffDocument doc;
    doc.files = {file_with("src/main.c", 3, 7)};
    auto m = compute_diff_metrics(doc);
    EXPECT_EQ(m[Metric::ent], 0.0);
    EXPECT_EQ(m[Metric::ld], 7.0);
}

TEST(ChangeMetricsTest, DirectoriesAndSubsystems) {
    DiffDocument doc;
    doc.files = {file_with("README.md", 1, 0), file_with("src/a/x.c", 1, 0), file_with("src/b/y.c", 1, 0),
                 file_with("src/a/z.c", 1, 0), file_with("docs/i.md", 1, 0)};
    auto m = compute_diff_metrics(doc);
    EXPECT_EQ(m[Metric::nf], 5.0);
    EXPECT_EQ(m[Metric::nd], 4.0);  // "", src/a, src/b, docs
    EXPECT_EQ(m[Metric::ns], 3.0);  // "", src, docs
}

TEST(ChangeMetricsTest, EntropyStaysInUnitInterval) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<std::size_t> counts(1 + rng() % 8);
        for (auto& c : counts) c = rng() % 50;
        double e = change_entropy(counts);
        EXPECT_GE(e, 0.0);
        EXPECT_LE(e, 1.0 + 1e-12);
    }
}

TEST(ChangeMetricsTest, PermutationInvariant) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        auto doc = testkit::random_document(rng);
        auto before = compute_diff_metrics(doc);
        std::shuffle(doc.files.begin(), doc.files.end(), rng);
        auto after = compute_diff_metrics(doc);
        for (std::size_t i = 0; i < kMetricCount; ++i) {
            if (before.values[i]) {
                EXPECT_NEAR(*before.values[i], *after.values[i], 1e-12) << kMetricKeys[i];
            } else {
                EXPECT_FALSE(after.values[i].has_value());
            }
        }
    }
}

TEST(BucketFitTest, OneToHundred) {
    std::vector<double> s(100);
    std::iota(s.begin(), s.end(), 1.0);
    auto c = fit_cuts(s);
    EXPECT_EQ(c, (BucketCuts{20, 40, 60, 80}));
}

TEST(BucketFitTest, ConstantSamples) {
    auto c = fit_cuts({7, 7, 7, 7, 7});
    EXPECT_EQ(c, (BucketCuts{7, 7, 7, 7}));
    EXPECT_EQ(bucketize(7.0, c), Bucket::VeryHigh);
    EXPECT_EQ(bucketize(6.0, c), Bucket::VeryLow);
}

TEST(BucketFitTest, TwoPointSamplesAreMonotone) {
    auto c = fit_cuts({1, 9, 1, 9, 9, 1});
    EXPECT_TRUE(c.valid());
    EXPECT_LE(c.q20, c.q80);
}

TEST(BucketFitTest, TooFewSamples) {
    try {
        (void)fit_cuts({1, 2, 3, 4});
        FAIL() << "expected InsufficientSamples";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::InsufficientSamples);
    }
    // non-finite values do not count
    EXPECT_THROW((void)fit_cuts({1, 2, 3, 4, NAN}), Error);
}

TEST(BucketFitTest, RandomSamplesGiveValidCuts) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-50, 50);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> s(5 + rng() % 40);
        for (auto& v : s) v = std::round(u(rng));
        EXPECT_TRUE(fit_cuts(s).valid());
    }
}

TEST(BucketizeTest, StrictLessRule) {
    BucketCuts c{20, 40, 60, 80};
    EXPECT_EQ(bucketize(-1.0, c), Bucket::VeryLow);
    EXPECT_EQ(bucketize(19.99, c), Bucket::VeryLow);
    EXPECT_EQ(bucketize(20.0, c), Bucket::Low);
    EXPECT_EQ(bucketize(40.0, c), Bucket::Medium);
    EXPECT_EQ(bucketize(60.0, c), Bucket::High);
    EXPECT_EQ(bucketize(79.0, c), Bucket::High);
    EXPECT_EQ(bucketize(80.0, c), Bucket::VeryHigh);
    EXPECT_EQ(bucketize(std::nullopt, c), Bucket::Unknown);
    EXPECT_EQ(bucketize(NAN, c), Bucket::Unknown);
}

TEST(BucketizeTest, Monotone) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 100);
    for (int trial = 0; trial < 100; ++trial) {
        double q[4] = {u(rng), u(rng), u(rng), u(rng)};
        std::sort(q, q + 4);
        BucketCuts c{q[0], q[1], q[2], q[3]};
        std::vector<double> v(50);
        for (auto& x : v) x = u(rng);
        std::sort(v.begin(), v.end());
        for (std::size_t i = 1; i < v.size(); ++i) {
            EXPECT_LE(static_cast<int>(bucketize(v[i - 1], c)), static_cast<int>(bucketize(v[i], c)));
        }
    }
}

TEST(BucketizeTest, LogScaleFitsAndBucketsInTransformedSpace) {
    std::vector<double> s(100);
    std::iota(s.begin(), s.end(), 1.0);
    auto c = fit_cuts(s, true);
    EXPECT_DOUBLE_EQ(c.q20, std::log1p(20.0));
    EXPECT_EQ(bucketize(40.0, c, true), Bucket::Medium);
    EXPECT_EQ(bucketize(39.0, c, true), Bucket::Low);
}

TEST(RenderTokensTest, CanonicalOrderAndSpelling) {
    BucketedMetrics bm;
    bm.fill(Bucket::Medium);
    bm[index_of(Metric::la)] = Bucket::Low;
    bm[index_of(Metric::sexp)] = Bucket::VeryHigh;
    bm[index_of(Metric::ndev)] = Bucket::Unknown;
    std::string text = render_metric_tokens(bm);

    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    ASSERT_EQ(lines.size(), 12u);
    EXPECT_EQ(lines[0], "[num_lines_added:] [LOW]");
    EXPECT_EQ(lines[1], "[num_lines_deleted:] [MEDIUM]");
    EXPECT_EQ(lines[2], "[num_files_touched:] [MEDIUM]");
    EXPECT_EQ(lines[3], "[num_directories_touched:] [MEDIUM]");
    EXPECT_EQ(lines[4], "[num_subsystems_touched:] [MEDIUM]");
    EXPECT_EQ(lines[5], "[change_entropy:] [MEDIUM]");
    EXPECT_EQ(lines[6], "[num_developers_touched_files:] [UNKNOWN]");
    EXPECT_EQ(lines[7], "[time_from_last_change:] [MEDIUM]");
    EXPECT_EQ(lines[8], "[num_changes_in_files:] [MEDIUM]");
    EXPECT_EQ(lines[9], "[author_experience:] [MEDIUM]");
    EXPECT_EQ(lines[10], "[author_recent_experience:] [MEDIUM]");
    EXPECT_EQ(lines[11], "[author_subsystem_experience:] [VERY_HIGH]");
    EXPECT_NE(text.back(), '\n');
}

TEST(MetricNamesTest, ShortAndTokenNamesResolve) {
    EXPECT_EQ(metric_from_name("la"), Metric::la);
    EXPECT_EQ(metric_from_name("num_lines_added"), Metric::la);
    EXPECT_EQ(metric_from_name("author_subsystem_experience"), Metric::sexp);
    EXPECT_FALSE(metric_from_name("lines").has_value());
}

TEST(CalibrationFileTest, RoundTrip) {
    std::array<std::vector<double>, kMetricCount> samples;
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0, 1000);
    for (auto& s : samples) {
        s.resize(37);
        for (auto& v : s) v = u(rng);
    }
    auto t = fit_bucket_thresholds(samples);
    std::stringstream buf;
    write_calibration(buf, t);
    auto back = read_calibration(buf);
    EXPECT_EQ(back, t);

    std::stringstream again;
    write_calibration(again, back);
    std::stringstream first;
    write_calibration(first, t);
    EXPECT_EQ(again.str(), first.str());
}

TEST(CalibrationFileTest, RejectsBadInput) {
    auto expect_invalid = [](const std::string& text) {
        std::istringstream in(text);
        try {
            (void)read_calibration(in);
            ADD_FAILURE() << "accepted: " << text;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), Errc::InvalidCalibration);
        }
    };
    expect_invalid("");
    expect_invalid("drs-calibration v2\ntransform raw\n");
    expect_invalid("drs-calibration v1\ntransform sqrt\n");
    expect_invalid("drs-calibration v1\ntransform raw\nla 1 2 3 4\n");  // 11 missing
    expect_invalid("drs-calibration v1\ntransform raw\nla 4 3 2 1\n");

    std::stringstream ok;
    write_calibration(ok, fallback_thresholds());
    std::string text = ok.str() + "bogus 1 2 3 4\n";
    expect_invalid(text);
}

}  // namespace
