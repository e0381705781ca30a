#pragma once

// Operator commands: calibrate, train-baseline, evaluate, gate-sim,
// score-file. JSON goes to stdout (or --out), a short summary to stderr.
// Exit codes: 0 ok, 1 evaluation-domain failure, 2 usage or IO failure.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "drs/api.hpp"
#include "drs/dataset.hpp"
#include "drs/diff.hpp"
#include "drs/error.hpp"
#include "drs/eval.hpp"
#include "drs/metrics.hpp"
#include "drs/remote.hpp"
#include "drs/scoring.hpp"

namespace drs {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

inline constexpr std::array<double, 3> kReportedTopK = {5, 10, 30};

/// Errors a user fixes by changing flags or files exit 2; everything that
/// goes wrong inside the evaluation exits 1.
inline int exit_code_for(Errc code) {
    switch (code) {
    case Errc::InvalidArgument:
    case Errc::IoError:
    case Errc::MissingColumn:
    case Errc::InvalidCalibration:
    case Errc::InvalidModelFile: return kExitUsage;
    default: return kExitDomain;
    }
}

struct CliOptions {
    std::string dataset;
    std::string calibration;
    std::string model;
    std::string backend = "builtin";  // or a seq-cls service URL
    std::string scores;
    std::string diff;
    std::string message;
    std::string out;
    double ratio = 0.7;
    std::uint64_t seed = 42;
    std::optional<double> top_percent;
    std::optional<double> tau;
    bool log_scale = false;
    int timeout_ms = 10000;
};

namespace cli_detail {

inline std::vector<bool> labels_of(const Dataset& ds) {
    std::vector<bool> y;
    y.reserve(ds.size());
    for (const auto& r : ds.rows) y.push_back(r.buggy);
    return y;
}

inline BucketThresholds fit_on(const Dataset& train, bool log_scale) {
    std::array<std::vector<double>, kMetricCount> samples;
    for (const auto& r : train.rows) {
        for (std::size_t i = 0; i < kMetricCount; ++i) {
            if (r.metrics.values[i]) samples[i].push_back(*r.metrics.values[i]);
        }
    }
    return fit_bucket_thresholds(samples, log_scale);
}

inline BucketThresholds load_calibration(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open calibration file: " + path);
    return read_calibration(in);
}

inline BaselineModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open model file: " + path);
    return read_baseline(in);
}

inline std::vector<TrainingExample> training_examples(const Dataset& ds, const BucketThresholds& t) {
    std::vector<TrainingExample> out;
    out.reserve(ds.size());
    for (const auto& r : ds.rows) out.push_back({bucket_metrics(r.metrics, t), r.buggy});
    return out;
}

inline std::vector<double> score_rows(const Dataset& ds, const Scorer& scorer, const BucketThresholds& t) {
    std::vector<double> out;
    out.reserve(ds.size());
    for (const auto& r : ds.rows) {
        ScoreInput in;
        in.diff = r.commit.raw_diff;
        in.commit_message = r.commit.message;
        in.buckets = bucket_metrics(r.metrics, t);
        in.metrics = r.metrics;
        double p = scorer.probability(in);
        if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::MalformedBackendResponse, "scorer returned p outside [0,1]");
        out.push_back(p);
    }
    return out;
}

inline void require_both_classes(const Dataset& ds, std::string_view name) {
    std::size_t pos = 0;
    for (const auto& r : ds.rows) pos += r.buggy ? 1 : 0;
    if (ds.empty() || pos == 0 || pos == ds.size()) {
        throw Error(Errc::SingleClassInput, std::string(name) + " split has " + std::to_string(pos) + " buggy and " +
                                                std::to_string(ds.size() - pos) +
                                                " clean commits; both classes are required");
    }
}

inline void emit(const CliOptions& o, const std::string& text, std::ostream& out) {
    if (o.out.empty()) {
        out << text;
        return;
    }
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw Error(Errc::IoError, "cannot write " + o.out);
    f << text;
    if (!f) throw Error(Errc::IoError, "write failed: " + o.out);
}

inline std::unique_ptr<Scorer> scorer_for(const CliOptions& o, BaselineModel model) {
    ScorerConfig sc;
    if (o.backend != "builtin") {
        if (o.backend.rfind("http://", 0) != 0 && o.backend.rfind("https://", 0) != 0) {
            throw Error(Errc::InvalidArgument, "--backend must be 'builtin' or an http(s) URL");
        }
        sc.backend = RemoteBackend{o.backend, o.timeout_ms, 1 << 20};
    }
    return make_scorer(sc, std::move(model));
}

/// Reads "score,buggy" rows (header optional).
inline std::pair<std::vector<double>, std::vector<bool>> load_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open scores file: " + path);
    std::vector<double> s;
    std::vector<bool> y;
    std::vector<std::string> fields;
    std::size_t line = 0;
    while (detail::read_csv_record(in, fields)) {
        ++line;
        if (fields.size() == 1 && detail::trim(fields[0]).empty()) continue;
        if (fields.size() < 2) throw Error(Errc::IoError, path + ":" + std::to_string(line) + ": expected score,buggy");
        // the last two columns are score and label so that files from
        // `score-file --dataset` (sha,score,buggy) load unchanged
        auto score = detail::parse_double(fields[fields.size() - 2]);
        auto label = detail::parse_bool(fields.back());
        if (!score || !label) {
            if (line == 1) continue;  // header
            throw Error(Errc::IoError, path + ":" + std::to_string(line) + ": bad score or label");
        }
        s.push_back(*score);
        y.push_back(*label);
    }
    if (s.empty()) throw Error(Errc::EmptyDataset, "scores file has no rows: " + path);
    return {std::move(s), std::move(y)};
}

inline std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

}  // namespace cli_detail

// -- commands ------------------------------------------------------------------

/// Fits cut points on the train split only.
inline int cmd_calibrate(const CliOptions& o, std::ostream& out, std::ostream& err) {
    Dataset ds = load_dataset_file(o.dataset);
    Split split = chronological_split(ds);
    BucketThresholds t = cli_detail::fit_on(split.train, o.log_scale);
    std::ostringstream file;
    write_calibration(file, t);
    cli_detail::emit(o, file.str(), out);
    err << "calibrated on " << split.train.size() << " train rows (" << ds.size() << " total, " << ds.skipped_rows
        << " skipped)\n";
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        const auto& c = t.cuts[i];
        err << "  " << std::left << std::setw(5) << kMetricKeys[i] << c.q20 << ' ' << c.q40 << ' ' << c.q60 << ' '
            << c.q80 << '\n';
    }
    return kExitOk;
}

struct TrainedBaseline {
    BucketThresholds thresholds;
    BaselineModel model;
    Split split;
    std::size_t train_rows = 0;  // after undersampling
};

/// Undersample train, calibrate (unless a file is given), train.
inline TrainedBaseline train_on_split(const CliOptions& o, Split split) {
    TrainedBaseline tb;
    tb.split = std::move(split);
    cli_detail::require_both_classes(tb.split.train, "train");
    tb.thresholds = o.calibration.empty() ? cli_detail::fit_on(tb.split.train, o.log_scale)
                                          : cli_detail::load_calibration(o.calibration);
    Dataset sampled = undersample_majority(tb.split.train, o.ratio, o.seed);
    tb.train_rows = sampled.size();
    auto examples = cli_detail::training_examples(sampled, tb.thresholds);
    tb.model = train_baseline(examples);
    return tb;
}

inline TrainedBaseline train_from_dataset(const CliOptions& o) {
    return train_on_split(o, chronological_split(load_dataset_file(o.dataset)));
}

inline int cmd_train_baseline(const CliOptions& o, std::ostream& out, std::ostream& err) {
    TrainedBaseline tb = train_from_dataset(o);
    std::ostringstream file;
    write_baseline(file, tb.model);
    cli_detail::emit(o, file.str(), out);
    err << "trained baseline on " << tb.train_rows << " undersampled train rows (ratio " << o.ratio << ", seed "
        << o.seed << ")\n";
    return kExitOk;
}

inline nlohmann::json evaluate_report(const CliOptions& o) {
    Split split = chronological_split(load_dataset_file(o.dataset));
    cli_detail::require_both_classes(split.valid, "validation");
    cli_detail::require_both_classes(split.test, "test");

    BucketThresholds thresholds;
    BaselineModel model;
    std::size_t train_rows = 0;
    if (o.backend == "builtin" && o.model.empty()) {
        TrainedBaseline tb = train_on_split(o, split);
        thresholds = tb.thresholds;
        model = std::move(tb.model);
        train_rows = tb.train_rows;
    } else {
        thresholds = o.calibration.empty() ? cli_detail::fit_on(split.train, o.log_scale)
                                           : cli_detail::load_calibration(o.calibration);
        if (!o.model.empty()) model = cli_detail::load_model(o.model);
    }
    auto scorer = cli_detail::scorer_for(o, std::move(model));

    auto valid_scores = cli_detail::score_rows(split.valid, *scorer, thresholds);
    ThresholdChoice chosen = sweep_threshold(valid_scores, cli_detail::labels_of(split.valid));

    auto test_scores = cli_detail::score_rows(split.test, *scorer, thresholds);
    auto test_labels = cli_detail::labels_of(split.test);
    EvalReport test = classification_metrics(test_scores, test_labels, chosen.tau);
    test.roc_auc = roc_auc(test_scores, test_labels);

    nlohmann::json topk = nlohmann::json::object();
    for (double k : kReportedTopK) {
        topk[std::to_string(static_cast<int>(k))] = recall_at_top_k(test_scores, test_labels, k);
    }
    return {
        {"scorer_id", scorer->id()},
        {"seed", o.seed},
        {"ratio", o.ratio},
        {"split", {{"train", split.train.size()}, {"valid", split.valid.size()}, {"test", split.test.size()}}},
        {"train_rows_after_undersampling", train_rows},
        {"validation", {{"threshold", chosen.tau}, {"f1", chosen.f1}}},
        {"test", to_json(test)},
        {"recall_at_top_k", topk},
        {"threshold_frozen", test.threshold == chosen.tau},
    };
}

inline int cmd_evaluate(const CliOptions& o, std::ostream& out, std::ostream& err) {
    nlohmann::json report = evaluate_report(o);
    cli_detail::emit(o, report.dump(2) + "\n", out);
    const auto& t = report["test"];
    err << "validation tau=" << cli_detail::fmt(report["validation"]["threshold"].get<double>())
        << " test f1=" << cli_detail::fmt(t["f1"].get<double>()) << " auc=" << cli_detail::fmt(t["roc_auc"].get<double>())
        << " recall@30%=" << cli_detail::fmt(report["recall_at_top_k"]["30"].get<double>()) << '\n';
    return kExitOk;
}

inline int cmd_gate_sim(const CliOptions& o, std::ostream& out, std::ostream& err) {
    if (o.top_percent && o.tau) throw Error(Errc::InvalidArgument, "give either --top-percent or --tau, not both");
    GatePolicy policy = o.tau ? GatePolicy{FixedThreshold{*o.tau}} : GatePolicy{TopPercent{o.top_percent.value_or(30.0)}};
    validate(policy);

    std::vector<double> scores;
    std::vector<bool> labels;
    if (!o.scores.empty()) {
        std::tie(scores, labels) = cli_detail::load_scores(o.scores);
    } else if (!o.dataset.empty()) {
        if (o.backend == "builtin" && o.model.empty()) {
            throw Error(Errc::InvalidArgument, "gate-sim on a dataset needs --model or a remote --backend");
        }
        Dataset ds = load_dataset_file(o.dataset);
        BucketThresholds t = o.calibration.empty() ? fallback_thresholds() : cli_detail::load_calibration(o.calibration);
        auto scorer = cli_detail::scorer_for(o, o.model.empty() ? BaselineModel{} : cli_detail::load_model(o.model));
        scores = cli_detail::score_rows(ds, *scorer, t);
        labels = cli_detail::labels_of(ds);
    } else {
        throw Error(Errc::InvalidArgument, "gate-sim needs --scores or --dataset");
    }

    GateReport r = simulate_gate(scores, labels, policy);
    nlohmann::json j = {{"policy", to_json(policy)}, {"report", to_json(r)}};
    cli_detail::emit(o, j.dump(2) + "\n", out);
    err << "gated " << r.gated_count << "/" << r.total << " (" << cli_detail::fmt(r.gated_fraction) << "), captured "
        << r.buggy_gated << "/" << r.buggy_total << " buggy (" << cli_detail::fmt(r.captured_fraction) << ")\n";
    return kExitOk;
}

/// One diff (--diff) gives a prediction object; a dataset (--dataset)
/// gives sha,score,buggy rows for gate-sim.
inline int cmd_score_file(const CliOptions& o, std::ostream& out, std::ostream& err) {
    if (o.diff.empty() == o.dataset.empty()) throw Error(Errc::InvalidArgument, "score-file needs exactly one of --diff or --dataset");
    BucketThresholds t = o.calibration.empty() ? fallback_thresholds() : cli_detail::load_calibration(o.calibration);
    auto scorer = cli_detail::scorer_for(o, o.model.empty() ? BaselineModel{} : cli_detail::load_model(o.model));
    if (o.backend == "builtin" && o.model.empty()) err << "warning: no --model given; the untrained baseline scores 0.5\n";

    if (!o.diff.empty()) {
        std::ifstream in(o.diff, std::ios::binary);
        if (!in) throw Error(Errc::IoError, "cannot open diff file: " + o.diff);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        DiffDocument doc = parse_unified_diff(text);
        ChangeMetrics metrics = compute_diff_metrics(doc);
        BucketedMetrics buckets = bucket_metrics(metrics, t);
        Commit commit;
        commit.message = o.message;
        commit.raw_diff = text;
        StructuredText st =
            truncate_to_budget(structure_commit(commit, render_metric_tokens(buckets), doc), kDefaultUnitBudget);

        ScoreInput input;
        input.diff = text;
        input.commit_message = o.message;
        input.structured = &st;
        input.buckets = buckets;
        input.metrics = metrics;
        double threshold = o.tau.value_or(0.5);
        if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error(Errc::InvalidArgument, "--tau must lie in [0,1]");
        PredictResponse r = make_predict_response(score(input, *scorer, threshold), st.truncated);
        cli_detail::emit(o, to_json(r).dump(2) + "\n", out);
        err << r.label << " p=" << cli_detail::fmt(r.probability) << '\n';
        return kExitOk;
    }

    Dataset ds = load_dataset_file(o.dataset);
    auto scores = cli_detail::score_rows(ds, *scorer, t);
    std::ostringstream csv;
    csv << "commit_id,score,buggy\n" << std::setprecision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        csv << ds.rows[i].commit.sha << ',' << scores[i] << ',' << (ds.rows[i].buggy ? "true" : "false") << '\n';
    }
    cli_detail::emit(o, csv.str(), out);
    err << "scored " << ds.size() << " rows\n";
    return kExitOk;
}

// -- entry point -----------------------------------------------------------------

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"drs: diff risk scoring tools"};
    app.require_subcommand(1);
    CliOptions o;

    auto dataset = [&](CLI::App* sub, bool required) {
        auto* opt = sub->add_option("--dataset", o.dataset, "dataset CSV")->check(CLI::ExistingFile);
        if (required) opt->required();
    };
    auto common = [&](CLI::App* sub) {
        sub->add_option("--calibration", o.calibration, "calibration file")->check(CLI::ExistingFile);
        sub->add_option("--backend", o.backend, "'builtin' or a seq-cls service URL");
        sub->add_option("--model", o.model, "baseline model file")->check(CLI::ExistingFile);
        sub->add_option("--timeout-ms", o.timeout_ms, "remote backend timeout")->check(CLI::PositiveNumber);
        sub->add_option("--out", o.out, "output path (default stdout)");
    };
    auto sampling = [&](CLI::App* sub) {
        sub->add_option("--ratio", o.ratio, "share of the majority class kept in train")->check(CLI::Range(0.0, 1.0));
        sub->add_option("--seed", o.seed, "undersampling seed");
        sub->add_flag("--log-scale", o.log_scale, "bucket on log1p(value)");
    };

    auto* calibrate = app.add_subcommand("calibrate", "fit bucket cut points on the train split");
    dataset(calibrate, true);
    calibrate->add_flag("--log-scale", o.log_scale, "bucket on log1p(value)");
    calibrate->add_option("--out", o.out, "output path (default stdout)");

    auto* train = app.add_subcommand("train-baseline", "train the logistic-regression baseline");
    dataset(train, true);
    train->add_option("--calibration", o.calibration, "calibration file")->check(CLI::ExistingFile);
    train->add_option("--out", o.out, "output path (default stdout)");
    sampling(train);

    auto* evaluate = app.add_subcommand("evaluate", "split, train, sweep tau on validation, report on test");
    dataset(evaluate, true);
    common(evaluate);
    sampling(evaluate);

    auto* gate = app.add_subcommand("gate-sim", "simulate a gating policy");
    dataset(gate, false);
    common(gate);
    gate->add_option("--scores", o.scores, "CSV of score,buggy rows")->check(CLI::ExistingFile);
    gate->add_option("--top-percent", o.top_percent, "gate the top k% by score");
    gate->add_option("--tau", o.tau, "gate scores >= tau");

    auto* score_file = app.add_subcommand("score-file", "score one diff file or every dataset row");
    dataset(score_file, false);
    common(score_file);
    score_file->add_option("--diff", o.diff, "unified diff file")->check(CLI::ExistingFile);
    score_file->add_option("--message", o.message, "commit message for --diff");
    score_file->add_option("--tau", o.tau, "decision threshold for --diff (default 0.5)");

    std::vector<const char*> argv{"drs"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    try {
        if (calibrate->parsed()) return cmd_calibrate(o, out, err);
        if (train->parsed()) return cmd_train_baseline(o, out, err);
        if (evaluate->parsed()) return cmd_evaluate(o, out, err);
        if (gate->parsed()) return cmd_gate_sim(o, out, err);
        if (score_file->parsed()) return cmd_score_file(o, out, err);
    } catch (const Error& e) {
        err << "error: " << e.name() << ": " << e.what() << '\n';
        return exit_code_for(e.code());
    }
    return kExitUsage;
}

}  // namespace drs
