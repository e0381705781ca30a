#pragma once

// Request handling for the gateway, independent of the HTTP server so the
// bot can call it in-process and tests can drive it directly.

#include <chrono>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "drs/api.hpp"
#include "drs/diff.hpp"
#include "drs/env.hpp"
#include "drs/error.hpp"
#include "drs/hosting.hpp"
#include "drs/metrics.hpp"
#include "drs/remote.hpp"
#include "drs/scoring.hpp"

namespace drs {

inline constexpr std::string_view kVersion = "0.3.0";

enum class BackendKind { Builtin, Remote };

struct GatewayConfig {
    BackendKind backend = BackendKind::Builtin;
    std::string backend_url;  // seq-cls and clm service base URL
    double threshold = 0.5;
    std::size_t max_diff_bytes = 1 << 20;
    int timeout_ms = 10000;
    std::size_t max_seq_units = kDefaultUnitBudget;
    UnitRule unit_rule = UnitRule::Words;
    std::size_t batch_cap = 64;
    bool explain_enabled = false;
    std::string calibration_path;
    std::string model_path;
    std::string github_token;
    std::string github_api_url = "https://api.github.com";
    std::string host = "0.0.0.0";
    int port = 8000;
    std::string cors_origin;

    void validate() const {
        if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error(Errc::InvalidArgument, "DRS_THRESHOLD must lie in [0,1]");
        if (max_diff_bytes == 0) throw Error(Errc::InvalidArgument, "DRS_MAX_DIFF_BYTES must be positive");
        if (timeout_ms <= 0) throw Error(Errc::InvalidArgument, "DRS_TIMEOUT_MS must be positive");
        if (max_seq_units == 0) throw Error(Errc::InvalidArgument, "DRS_MAX_SEQ_UNITS must be positive");
        if (batch_cap == 0) throw Error(Errc::InvalidArgument, "DRS_BATCH_CAP must be positive");
        if (backend == BackendKind::Remote && backend_url.empty()) {
            throw Error(Errc::InvalidArgument, "DRS_BACKEND_KIND=remote needs DRS_BACKEND_URL");
        }
        if (explain_enabled && backend_url.empty()) {
            throw Error(Errc::InvalidArgument, "DRS_EXPLAIN_ENABLED needs DRS_BACKEND_URL for the clm service");
        }
    }

    RemoteBackend remote_backend() const { return RemoteBackend{backend_url, timeout_ms, max_diff_bytes}; }
};

inline GatewayConfig gateway_config_from_env(const Env& env) {
    GatewayConfig c;
    std::string kind = env.get_or("DRS_BACKEND_KIND", "builtin");
    if (kind == "builtin") {
        c.backend = BackendKind::Builtin;
    } else if (kind == "remote") {
        c.backend = BackendKind::Remote;
    } else {
        throw Error(Errc::InvalidArgument, "DRS_BACKEND_KIND must be builtin or remote, got " + kind);
    }
    c.backend_url = env.get_or("DRS_BACKEND_URL", "");
    c.threshold = env.number_or("DRS_THRESHOLD", c.threshold);
    c.max_diff_bytes = env.number_or("DRS_MAX_DIFF_BYTES", c.max_diff_bytes);
    c.timeout_ms = env.number_or("DRS_TIMEOUT_MS", c.timeout_ms);
    c.max_seq_units = env.number_or("DRS_MAX_SEQ_UNITS", c.max_seq_units);
    std::string rule = env.get_or("DRS_UNIT_RULE", "words");
    if (rule == "words") {
        c.unit_rule = UnitRule::Words;
    } else if (rule == "bytes") {
        c.unit_rule = UnitRule::Bytes;
    } else {
        throw Error(Errc::InvalidArgument, "DRS_UNIT_RULE must be words or bytes, got " + rule);
    }
    c.batch_cap = env.number_or("DRS_BATCH_CAP", c.batch_cap);
    c.explain_enabled = env.flag_or("DRS_EXPLAIN_ENABLED", false);
    c.calibration_path = env.get_or("DRS_CALIBRATION_PATH", "");
    c.model_path = env.get_or("DRS_MODEL_PATH", "");
    c.github_token = env.get_or("GITHUB_TOKEN", "");
    c.github_api_url = env.get_or("DRS_GITHUB_API_URL", c.github_api_url);
    c.host = env.get_or("DRS_HOST", c.host);
    c.port = env.number_or("DRS_PORT", c.port);
    c.cors_origin = env.get_or("DRS_CORS_ORIGIN", "");
    c.validate();
    return c;
}

/// Status code for a domain error as seen by HTTP clients.
inline int http_status_for(Errc code) {
    switch (code) {
    case Errc::InvalidPayload:
    case Errc::InvalidArgument:
    case Errc::MalformedDiff: return 400;
    case Errc::Unauthorized: return 401;
    case Errc::FeatureDisabled: return 403;
    case Errc::CommitNotFound: return 404;
    case Errc::DiffTooLarge:
    case Errc::BatchTooLarge:
    case Errc::BudgetTooSmall: return 413;
    case Errc::BackendTimeout: return 504;
    case Errc::BackendUnavailable:
    case Errc::MalformedBackendResponse:
    case Errc::HostingServiceError: return 502;
    default: return 500;
    }
}

/// Error name on the wire. Backend transport and protocol failures share
/// one public name.
inline std::string_view wire_error_name(Errc code) {
    switch (code) {
    case Errc::BackendUnavailable:
    case Errc::MalformedBackendResponse: return "BackendFailure";
    case Errc::InvalidArgument:
    case Errc::MalformedDiff: return "InvalidPayload";
    default: return to_string(code);
    }
}

struct HttpReply {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
    std::vector<std::pair<std::string, std::string>> headers;
};

inline HttpReply json_reply(int status, const nlohmann::json& j) { return {status, j.dump(), "application/json", {}}; }

inline HttpReply error_reply(const Error& e) {
    int status = http_status_for(e.code());
    auto body = error_json(wire_error_name(e.code()), e.what(), status);
    HttpReply reply = json_reply(status, body);
    if (e.retry_after_seconds) {
        body["retry_after"] = *e.retry_after_seconds;
        reply.body = body.dump();
        reply.headers.emplace_back("Retry-After", std::to_string(*e.retry_after_seconds));
    }
    return reply;
}

/// Everything a request needs. Immutable after construction; the handlers
/// are const and safe to call from many threads.
class Gateway {
public:
    Gateway(GatewayConfig cfg, std::unique_ptr<Scorer> scorer, BucketThresholds thresholds,
            std::shared_ptr<const HostingClient> hosting = nullptr)
        : cfg_(std::move(cfg)), scorer_(std::move(scorer)), thresholds_(thresholds), hosting_(std::move(hosting)) {
        cfg_.validate();
        if (!scorer_) throw Error(Errc::InvalidArgument, "gateway needs a scorer");
        if (!cfg_.backend_url.empty()) clm_.emplace(cfg_.remote_backend());
    }

    const GatewayConfig& config() const { return cfg_; }
    const Scorer& scorer() const { return *scorer_; }

    // -- core operations (throw drs::Error) ---------------------------------

    PredictResponse predict(const PredictRequest& req) const {
        if (req.diff.size() > cfg_.max_diff_bytes) {
            throw Error(Errc::DiffTooLarge, "diff of " + std::to_string(req.diff.size()) + " bytes exceeds limit of " +
                                                std::to_string(cfg_.max_diff_bytes));
        }
        DiffDocument doc;
        if (!req.diff.empty()) doc = parse_unified_diff(req.diff);

        ChangeMetrics metrics = compute_diff_metrics(doc);
        for (std::size_t i = 0; i < kMetricCount; ++i) {
            if (req.metrics.values[i]) metrics.values[i] = req.metrics.values[i];
        }
        BucketedMetrics buckets = bucket_metrics(metrics, thresholds_);

        Commit commit;
        commit.message = req.commit_message;
        commit.raw_diff = req.diff;
        StructuredText st = structure_commit(commit, render_metric_tokens(buckets), doc, cfg_.unit_rule);
        st = truncate_to_budget(st, cfg_.max_seq_units);

        ScoreInput input;
        input.diff = req.diff;
        input.commit_message = req.commit_message;
        input.structured = &st;
        input.buckets = buckets;
        input.metrics = metrics;
        return make_predict_response(score(input, *scorer_, cfg_.threshold), st.truncated);
    }

    Commit resolve_commit(const ShaRequest& req) const {
        if (!hosting_ || !hosting_->has_credentials()) {
            throw Error(Errc::Unauthorized, "no hosting-service credentials configured (set GITHUB_TOKEN)");
        }
        return hosting_->get_commit(req.owner_repo, req.commit_sha);
    }

    PredictResponse predict_by_sha(const ShaRequest& req) const {
        Commit c = resolve_commit(req);
        PredictRequest pr;
        pr.diff = c.raw_diff;
        pr.commit_message = c.message;
        PredictResponse r = predict(pr);
        r.sha = c.sha.empty() ? req.commit_sha : c.sha;
        r.repo = req.owner_repo;
        return r;
    }

    // -- HTTP-shaped handlers -----------------------------------------------

    HttpReply health() const {
        std::string backend;
        if (cfg_.backend == BackendKind::Builtin) {
            backend = "builtin";
        } else {
            backend = scorer_->available() ? "remote" : "unavailable";
        }
        return json_reply(200, {{"status", "ok"},
                                {"version", kVersion},
                                {"backend", backend},
                                {"scorer_id", scorer_->id()},
                                {"threshold", cfg_.threshold},
                                {"explain_enabled", cfg_.explain_enabled}});
    }

    HttpReply handle_predict(const std::string& body) const {
        return guarded([&] { return json_reply(200, to_json(predict(parse_predict_request(body)))); });
    }

    HttpReply handle_predict_batch(const std::string& body) const {
        return guarded([&] {
            auto j = nlohmann::json::parse(body, nullptr, false);
            if (j.is_discarded()) throw Error(Errc::InvalidPayload, "body is not valid JSON");
            if (!j.is_array()) throw Error(Errc::InvalidPayload, "batch body must be a JSON array");
            if (j.empty()) throw Error(Errc::InvalidPayload, "batch must hold at least one request");
            if (j.size() > cfg_.batch_cap) {
                throw Error(Errc::BatchTooLarge, "batch of " + std::to_string(j.size()) + " exceeds cap of " +
                                                    std::to_string(cfg_.batch_cap));
            }
            nlohmann::json out = nlohmann::json::array();
            for (const auto& item : j) out.push_back(batch_slot(item));
            return json_reply(200, out);
        });
    }

    HttpReply handle_predict_by_sha(const std::string& body) const {
        return guarded([&] { return json_reply(200, to_json(predict_by_sha(parse_sha_request(body)))); });
    }

    /// Opaque proxy: the JSON body goes to the backend's /clm/predict and
    /// its text comes back unmodified.
    HttpReply handle_clm_predict(const std::string& body) const {
        return guarded([&] {
            require_clm();
            (void)parse_predict_request(body);
            if (body.size() > cfg_.max_diff_bytes) throw Error(Errc::DiffTooLarge, "request exceeds DRS_MAX_DIFF_BYTES");
            return HttpReply{200, clm_->post_raw("/clm/predict", body), "text/plain; charset=utf-8", {}};
        });
    }

    /// Resolves the commit here, then forwards {diff, commit_message} to the
    /// backend's /clm/predict.
    HttpReply handle_clm_predict_by_sha(const std::string& body) const {
        return guarded([&] {
            require_clm();
            ShaRequest req = parse_sha_request(body);
            Commit c = resolve_commit(req);
            if (c.raw_diff.size() > cfg_.max_diff_bytes) {
                throw Error(Errc::DiffTooLarge, "commit diff exceeds DRS_MAX_DIFF_BYTES");
            }
            nlohmann::json fwd = {{"diff", c.raw_diff}, {"commit_message", c.message}};
            return HttpReply{200, clm_->post_raw("/clm/predict", fwd.dump()), "text/plain; charset=utf-8", {}};
        });
    }

private:
    template <typename F>
    static HttpReply guarded(F&& f) {
        try {
            return f();
        } catch (const Error& e) {
            return error_reply(e);
        }
    }

    nlohmann::json batch_slot(const nlohmann::json& item) const {
        try {
            return to_json(predict(predict_request_from_json(item)));
        } catch (const Error& e) {
            return error_json(wire_error_name(e.code()), e.what(), http_status_for(e.code()));
        }
    }

    void require_clm() const {
        if (!cfg_.explain_enabled) throw Error(Errc::FeatureDisabled, "explanations are disabled (DRS_EXPLAIN_ENABLED)");
        if (!clm_) throw Error(Errc::BackendUnavailable, "no clm backend configured");
    }

    GatewayConfig cfg_;
    std::unique_ptr<Scorer> scorer_;
    BucketThresholds thresholds_;
    std::shared_ptr<const HostingClient> hosting_;
    std::optional<RemoteClient> clm_;
};

/// Loads calibration and model files named in the config and builds the
/// scorer; missing paths fall back to built-in cut points and an untrained
/// model.
inline std::unique_ptr<Gateway> make_gateway(const GatewayConfig& cfg,
                                             std::shared_ptr<const HostingClient> hosting = nullptr) {
    BucketThresholds thresholds = fallback_thresholds();
    if (!cfg.calibration_path.empty()) {
        std::ifstream in(cfg.calibration_path);
        if (!in) throw Error(Errc::IoError, "cannot open calibration file: " + cfg.calibration_path);
        thresholds = read_calibration(in);
    } else {
        spdlog::warn("DRS_CALIBRATION_PATH unset; using fallback bucket cut points");
    }
    BaselineModel model;
    if (!cfg.model_path.empty()) {
        std::ifstream in(cfg.model_path);
        if (!in) throw Error(Errc::IoError, "cannot open model file: " + cfg.model_path);
        model = read_baseline(in);
    } else if (cfg.backend == BackendKind::Builtin) {
        spdlog::warn("DRS_MODEL_PATH unset; builtin scorer is untrained and returns 0.5");
    }
    ScorerConfig sc;
    sc.threshold = cfg.threshold;
    if (cfg.backend == BackendKind::Remote) sc.backend = cfg.remote_backend();
    return std::make_unique<Gateway>(cfg, make_scorer(sc, std::move(model)), thresholds, std::move(hosting));
}

}  // namespace drs
