#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <random>
#include <sstream>

#include "drs/dataset.hpp"
#include "drs/eval.hpp"
#include "support/oracles.hpp"
#include "support/paths.hpp"

namespace {

using namespace drs;

Dataset synthetic(std::size_t clean, std::size_t buggy) {
    Dataset ds;
    for (std::size_t i = 0; i < clean + buggy; ++i) {
        LabeledCommit r;
        r.commit.sha = std::to_string(i);
        r.commit.author_timestamp = static_cast<std::int64_t>(i);
        r.buggy = i >= clean;
        ds.rows.push_back(r);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset loading

TEST(LoadDatasetTest, ThreeRowFixture) {
    auto ds = load_dataset_file(testkit::data_path("three_rows.csv"));
    ASSERT_EQ(ds.size(), 3u);
    EXPECT_EQ(ds.skipped_rows, 0u);
    EXPECT_EQ(ds.rows[0].commit.repo, "apache/hive");
    EXPECT_EQ(ds.rows[0].commit.author_timestamp, 1551434400);
    EXPECT_EQ(ds.rows[1].commit.author_timestamp, 1551434400);
    EXPECT_EQ(ds.rows[2].commit.author_timestamp, 1551508200);
    EXPECT_TRUE(ds.rows[0].buggy);
    EXPECT_FALSE(ds.rows[1].buggy);
    EXPECT_TRUE(ds.rows[2].buggy);
    EXPECT_EQ(ds.rows[0].commit.message, "Fix OOM in join, again");
    EXPECT_EQ(ds.rows[1].commit.message, "Tidy \"imports\"");
    EXPECT_EQ(ds.rows[2].commit.message, "Rework\nmulti-line message");
    EXPECT_EQ(ds.rows[0].metrics[Metric::rexp], 12.3);
    EXPECT_EQ(ds.rows[2].metrics[Metric::sexp], 400.0);
}

TEST(LoadDatasetTest, MissingColumn) {
    try {
        (void)load_dataset_file(testkit::data_path("missing_buggy.csv"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::MissingColumn);
        EXPECT_NE(std::string(e.what()).find("buggy"), std::string::npos);
    }
}

TEST(LoadDatasetTest, NonNumericRowSkipped) {
    auto ds = load_dataset_file(testkit::data_path("bad_la.csv"));
    EXPECT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.skipped_rows, 1u);
    EXPECT_EQ(ds.rows[1].commit.sha, "cccc");
}

TEST(LoadDatasetTest, EmptyAndMissingFiles) {
    std::istringstream empty("");
    try {
        (void)load_dataset(empty);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::EmptyDataset);
    }
    std::istringstream header_only(
        "commit_id,project,author_date,buggy,la,ld,nf,nd,ns,ent,ndev,age,nuc,exp,rexp,sexp\n");
    EXPECT_THROW((void)load_dataset(header_only), Error);
    try {
        (void)load_dataset_file("/nonexistent/ds.csv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::IoError);
    }
}

TEST(ParseTimestampTest, Forms) {
    EXPECT_EQ(detail::parse_timestamp("0"), 0);
    EXPECT_EQ(detail::parse_timestamp("1970-01-02T00:00:00Z"), 86400);
    EXPECT_EQ(detail::parse_timestamp("2000-03-01 00:00:00"), 951868800);
    EXPECT_EQ(detail::parse_timestamp("2000-03-01T01:00:00+01:00"), 951868800);
    EXPECT_EQ(detail::parse_timestamp("2000-03-01T00:00:00.250Z"), 951868800);
    EXPECT_FALSE(detail::parse_timestamp("yesterday"));
    EXPECT_FALSE(detail::parse_timestamp("2000-13-01T00:00:00Z"));
    EXPECT_FALSE(detail::parse_timestamp("2000-03-01T00:00:00 PST"));
}

// ---------------------------------------------------------------------------
// Splitting and undersampling

TEST(ChronologicalSplitTest, TenRows) {
    Dataset ds = synthetic(5, 5);
    std::reverse(ds.rows.begin(), ds.rows.end());
    auto s = chronological_split(ds);
    ASSERT_EQ(s.train.size(), 8u);
    ASSERT_EQ(s.valid.size(), 1u);
    ASSERT_EQ(s.test.size(), 1u);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(s.train.rows[i].commit.author_timestamp, static_cast<std::int64_t>(i));
    EXPECT_EQ(s.valid.rows[0].commit.author_timestamp, 8);
    EXPECT_EQ(s.test.rows[0].commit.author_timestamp, 9);
}

TEST(ChronologicalSplitTest, TiesKeepInputOrder) {
    Dataset ds = synthetic(10, 10);
    for (auto& r : ds.rows) r.commit.author_timestamp = 42;
    auto s = chronological_split(ds);
    std::vector<std::string> order;
    for (const auto* part : {&s.train, &s.valid, &s.test}) {
        for (const auto& r : part->rows) order.push_back(r.commit.sha);
    }
    for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(order[i], std::to_string(i));
}

TEST(ChronologicalSplitTest, CountsAndOrderingProperty) {
    std::mt19937_64 rng(8);
    for (std::size_t n : {1u, 3u, 7u, 30u, 100u, 101u, 999u}) {
        Dataset ds = synthetic(n / 2, n - n / 2);
        for (auto& r : ds.rows) r.commit.author_timestamp = static_cast<std::int64_t>(rng() % 50);
        auto s = chronological_split(ds);
        EXPECT_EQ(s.train.size(), static_cast<std::size_t>(0.8 * n + 1e-9));
        EXPECT_EQ(s.valid.size(), static_cast<std::size_t>(0.1 * n + 1e-9));
        EXPECT_EQ(s.train.size() + s.valid.size() + s.test.size(), n);

        std::multiset<std::string> in, out;
        for (const auto& r : ds.rows) in.insert(r.commit.sha);
        std::int64_t last = INT64_MIN;
        for (const auto* part : {&s.train, &s.valid, &s.test}) {
            for (const auto& r : part->rows) {
                out.insert(r.commit.sha);
                EXPECT_GE(r.commit.author_timestamp, last);
                last = r.commit.author_timestamp;
            }
        }
        EXPECT_EQ(in, out);
    }
}

TEST(ChronologicalSplitTest, RejectsBadFractions) {
    EXPECT_THROW(chronological_split(synthetic(2, 2), {0.5, 0.5, 0.5}), Error);
    EXPECT_THROW(chronological_split(Dataset{}), Error);
}

TEST(UndersampleTest, SeventyPercentOfMajority) {
    auto ds = synthetic(100, 30);
    auto out = undersample_majority(ds, 0.7, 1234);
    std::size_t clean = 0, buggy = 0;
    for (const auto& r : out.rows) (r.buggy ? buggy : clean)++;
    EXPECT_EQ(clean, 70u);
    EXPECT_EQ(buggy, 30u);

    auto again = undersample_majority(ds, 0.7, 1234);
    ASSERT_EQ(again.size(), out.size());
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(again.rows[i].commit.sha, out.rows[i].commit.sha);

    auto other = undersample_majority(ds, 0.7, 99);
    bool differs = false;
    for (std::size_t i = 0; i < out.size(); ++i) differs |= other.rows[i].commit.sha != out.rows[i].commit.sha;
    EXPECT_TRUE(differs);
}

TEST(UndersampleTest, BuggyMajority) {
    auto out = undersample_majority(synthetic(10, 41), 0.5, 7);
    std::size_t clean = 0, buggy = 0;
    for (const auto& r : out.rows) (r.buggy ? buggy : clean)++;
    EXPECT_EQ(clean, 10u);
    EXPECT_EQ(buggy, 21u);  // round(20.5) away from zero
}

TEST(UndersampleTest, IdentityCases) {
    auto ds = synthetic(100, 30);
    EXPECT_EQ(undersample_majority(ds, 1.0, 1).size(), 130u);
    EXPECT_EQ(undersample_majority(synthetic(50, 0), 0.7, 1).size(), 50u);
    EXPECT_EQ(undersample_majority(synthetic(20, 20), 0.7, 1).size(), 40u);
    EXPECT_THROW(undersample_majority(ds, 0.0, 1), Error);
    EXPECT_THROW(undersample_majority(ds, 1.5, 1), Error);
}

TEST(UndersampleTest, PropertyNeverDropsMinority) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t clean = rng() % 60, buggy = rng() % 60;
        double ratio = 0.05 + 0.95 * static_cast<double>(rng() % 1000) / 999.0;
        auto ds = synthetic(clean, buggy);
        auto out = undersample_majority(ds, ratio, rng());
        std::size_t oc = 0, ob = 0;
        for (const auto& r : out.rows) (r.buggy ? ob : oc)++;
        if (clean > buggy && buggy > 0) {
            EXPECT_EQ(ob, buggy);
            EXPECT_EQ(oc, static_cast<std::size_t>(std::llround(ratio * clean)));
        } else if (buggy > clean && clean > 0) {
            EXPECT_EQ(oc, clean);
            EXPECT_EQ(ob, static_cast<std::size_t>(std::llround(ratio * buggy)));
        } else {
            EXPECT_EQ(out.size(), ds.size());
        }
    }
}

// ---------------------------------------------------------------------------
// Classification metrics and ROC-AUC

TEST(ClassificationMetricsTest, HandConfusionMatrix) {
    std::vector<double> s{0.9, 0.7, 0.4, 0.2};
    std::vector<bool> y{true, false, true, false};
    auto r = classification_metrics(s, y, 0.5);
    EXPECT_EQ(r.counts.tp, 1u);
    EXPECT_EQ(r.counts.fp, 1u);
    EXPECT_EQ(r.counts.fn, 1u);
    EXPECT_EQ(r.counts.tn, 1u);
    EXPECT_EQ(r.precision, 0.5);
    EXPECT_EQ(r.recall, 0.5);
    EXPECT_EQ(r.f1, 0.5);
    EXPECT_EQ(r.accuracy, 0.5);
    EXPECT_EQ(r.threshold, 0.5);
}

TEST(ClassificationMetricsTest, ConventionsAndErrors) {
    std::vector<double> s{0.9, 0.1};
    std::vector<bool> y{true, false};
    auto perfect = classification_metrics(s, y, 0.5);
    EXPECT_EQ(perfect.f1, 1.0);
    EXPECT_EQ(perfect.accuracy, 1.0);

    auto none = classification_metrics(s, y, 0.95);
    EXPECT_EQ(none.precision, 0.0);
    EXPECT_EQ(none.f1, 0.0);

    std::vector<double> three{0.1, 0.2, 0.3};
    try {
        (void)classification_metrics(three, y, 0.5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::LengthMismatch);
    }
    EXPECT_THROW((void)classification_metrics({}, {}, 0.5), Error);
}

TEST(RocAucTest, Examples) {
    std::vector<double> a{0.9, 0.8, 0.3, 0.1};
    EXPECT_EQ(roc_auc(a, {true, true, false, false}), 1.0);
    std::vector<double> b{0.9, 0.6, 0.4, 0.1};
    EXPECT_EQ(roc_auc(b, {true, false, true, false}), 0.75);
    std::vector<double> c{0.5, 0.5};
    EXPECT_EQ(roc_auc(c, {true, false}), 0.5);
    try {
        (void)roc_auc(c, {true, true});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::SingleClassInput);
    }
}

TEST(RocAucTest, MatchesPairwiseOracle) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 300; ++trial) {
        auto inst = testkit::random_instance(rng, 2, 50, true, true);
        EXPECT_NEAR(roc_auc(inst.scores, inst.labels), testkit::auc_pairwise(inst.scores, inst.labels), 1e-12);
    }
}

// ---------------------------------------------------------------------------
// Threshold sweep

TEST(SweepTest, Examples) {
    std::vector<double> s{0.2, 0.4, 0.9};
    auto best = sweep_threshold(s, {false, true, true});
    EXPECT_DOUBLE_EQ(best.tau, 0.3);
    EXPECT_EQ(best.f1, 1.0);

    auto all_pos = sweep_threshold(s, {true, true, true});
    EXPECT_EQ(all_pos.tau, 0.0);
    EXPECT_EQ(all_pos.f1, 1.0);

    EXPECT_THROW((void)sweep_threshold(s, {false, false, false}), Error);
}

TEST(SweepTest, CandidatesIncludeEndpointsAndMidpoints) {
    std::vector<double> s{0.5, 0.1, 0.5, 0.3};
    auto c = threshold_candidates(s);
    std::vector<double> expected{0.0, 0.2, 0.4, 1.0};
    ASSERT_EQ(c.size(), expected.size());
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_DOUBLE_EQ(c[i], expected[i]);
}

TEST(SweepTest, GlobalMaxOverCandidatesWithLargestTie) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 300; ++trial) {
        auto inst = testkit::random_instance(rng, 1, 40, true);
        if (std::none_of(inst.labels.begin(), inst.labels.end(), [](bool b) { return b; })) continue;
        auto best = sweep_threshold(inst.scores, inst.labels);
        auto oracle = testkit::sweep_brute_force(inst.scores, inst.labels);
        EXPECT_NEAR(best.f1, oracle.f1, 1e-12);
        EXPECT_EQ(best.tau, oracle.tau);
    }
}

// ---------------------------------------------------------------------------
// Recall@top-k and gating

TEST(TopKTest, CountUsesCeil) {
    EXPECT_EQ(top_k_count(10, 30), 3u);
    EXPECT_EQ(top_k_count(10, 31), 4u);
    EXPECT_EQ(top_k_count(10, 0.1), 1u);
    EXPECT_EQ(top_k_count(1000, 30), 300u);
    EXPECT_EQ(top_k_count(7, 100), 7u);
    EXPECT_THROW((void)top_k_count(10, 0), Error);
    EXPECT_THROW((void)top_k_count(10, 100.5), Error);
}

TEST(TopKTest, HandCountedRecall) {
    // 2 buggy commits ranked 1st and 6th
    std::vector<double> s{1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1};
    std::vector<bool> y(10, false);
    y[0] = y[5] = true;
    EXPECT_EQ(recall_at_top_k(s, y, 30), 0.5);
    EXPECT_EQ(recall_at_top_k(s, y, 60), 1.0);
}

TEST(TopKTest, StableTieBreak) {
    std::vector<double> s{0.5, 0.5, 0.5, 0.5};
    std::vector<bool> y{false, true, false, false};
    EXPECT_EQ(recall_at_top_k(s, y, 25), 0.0);
    EXPECT_EQ(recall_at_top_k(s, y, 50), 1.0);
}

TEST(TopKTest, MonotoneAndMatchesOracle) {
    std::mt19937_64 rng(51);
    for (int trial = 0; trial < 200; ++trial) {
        auto inst = testkit::random_instance(rng, 1, 60, true);
        if (std::none_of(inst.labels.begin(), inst.labels.end(), [](bool b) { return b; })) continue;
        double prev = 0;
        for (int k = 1; k <= 100; ++k) {
            double r = recall_at_top_k(inst.scores, inst.labels, k);
            EXPECT_GE(r, prev);
            EXPECT_EQ(r, testkit::recall_at_top_k_oracle(inst.scores, inst.labels, k));
            prev = r;
        }
        EXPECT_EQ(prev, 1.0);
    }
}

TEST(GateTest, TopPercentAgreesWithRecall) {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        auto inst = testkit::random_instance(rng, 1, 60, true);
        if (std::none_of(inst.labels.begin(), inst.labels.end(), [](bool b) { return b; })) continue;
        double k = 1 + static_cast<double>(rng() % 100);
        auto g = simulate_gate(inst.scores, inst.labels, TopPercent{k});
        EXPECT_EQ(g.captured_fraction, recall_at_top_k(inst.scores, inst.labels, k));
        EXPECT_EQ(g.gated_count, top_k_count(inst.scores.size(), k));
    }
}

TEST(GateTest, FixedThresholdEdges) {
    std::vector<double> s{0.1, 0.4, 0.8, 0.95};
    std::vector<bool> y{false, true, true, false};
    auto all = simulate_gate(s, y, FixedThreshold{0.0});
    EXPECT_EQ(all.gated_count, 4u);
    EXPECT_EQ(all.captured_fraction, 1.0);
    EXPECT_EQ(all.gated_fraction, 1.0);

    auto none = simulate_gate(s, y, FixedThreshold{0.99});
    EXPECT_EQ(none.gated_count, 0u);
    EXPECT_EQ(none.captured_fraction, 0.0);

    auto half = simulate_gate(s, y, FixedThreshold{0.5});
    EXPECT_EQ(half.gated_count, 2u);
    EXPECT_EQ(half.buggy_gated, 1u);
    EXPECT_EQ(half.captured_fraction, 0.5);

    std::vector<bool> clean(4, false);
    EXPECT_EQ(simulate_gate(s, clean, FixedThreshold{0.0}).captured_fraction, 0.0);
    EXPECT_THROW((void)simulate_gate(s, y, FixedThreshold{1.1}), Error);
    EXPECT_THROW((void)simulate_gate(s, y, TopPercent{0}), Error);
    EXPECT_THROW((void)simulate_gate({}, {}, TopPercent{10}), Error);
}

TEST(GateTest, JsonShape) {
    std::vector<double> s{0.1, 0.9};
    auto g = simulate_gate(s, {false, true}, TopPercent{50});
    auto j = to_json(g);
    EXPECT_EQ(j["gated_count"], 1);
    EXPECT_EQ(j["captured_fraction"], 1.0);
    EXPECT_EQ(j["gated_fraction"], 0.5);
    EXPECT_EQ(to_json(GatePolicy{TopPercent{30}})["kind"], "top_percent");
    EXPECT_EQ(to_json(GatePolicy{FixedThreshold{0.4}})["tau"], 0.4);

    auto r = classification_metrics(s, {false, true}, 0.5);
    auto rj = to_json(r);
    EXPECT_TRUE(rj["roc_auc"].is_null());
    EXPECT_EQ(rj["counts"]["tp"], 1);
}

}  // namespace
