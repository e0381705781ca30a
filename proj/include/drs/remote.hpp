#pragma once

// Client for a model service speaking the seq-cls JSON contract:
//
//   POST <base>/seq-cls/predict        {"diff", "commit_message", "metrics"?}
//                                      -> {"probability": number, "label"?}
//   POST <base>/seq-cls/predict_batch  [request...] -> [response...]
//   POST <base>/clm/...                JSON in, raw text out

#include <chrono>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "drs/error.hpp"
#include "drs/http_util.hpp"
#include "drs/scoring.hpp"

namespace drs {

struct RemotePayload {
    std::string diff;
    std::string commit_message;
    std::optional<nlohmann::json> metrics;
};

inline nlohmann::json to_json(const RemotePayload& p) {
    nlohmann::json j = {{"diff", p.diff}, {"commit_message", p.commit_message}};
    if (p.metrics) j["metrics"] = *p.metrics;
    return j;
}

/// Known metric values keyed by short column name; nullopt when none known.
inline std::optional<nlohmann::json> metrics_json(const ChangeMetrics& m) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        if (m.values[i]) j[std::string(kMetricKeys[i])] = *m.values[i];
    }
    if (j.empty()) return std::nullopt;
    return j;
}

namespace detail {

inline double parse_probability(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("probability") || !j["probability"].is_number()) {
        throw Error(Errc::MalformedBackendResponse, "backend response lacks a numeric \"probability\"");
    }
    double p = j["probability"].get<double>();
    if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::MalformedBackendResponse, "backend probability outside [0,1]");
    return p;
}

inline bool transient_status(int status) { return status == 502 || status == 503 || status == 504; }

}  // namespace detail

class RemoteClient {
public:
    explicit RemoteClient(RemoteBackend cfg) : cfg_(std::move(cfg)), url_(split_base_url(cfg_.base_url)) {}

    const RemoteBackend& config() const { return cfg_; }

    double predict(const RemotePayload& payload) const {
        check_payload(payload);
        std::string body = post_json("/seq-cls/predict", to_json(payload).dump());
        return detail::parse_probability(parse(body));
    }

    std::vector<double> predict_batch(std::span<const RemotePayload> payloads) const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& p : payloads) {
            check_payload(p);
            arr.push_back(to_json(p));
        }
        nlohmann::json j = parse(post_json("/seq-cls/predict_batch", arr.dump()));
        if (!j.is_array() || j.size() != payloads.size()) {
            throw Error(Errc::MalformedBackendResponse, "batch response must be an array of " +
                                                            std::to_string(payloads.size()) + " entries");
        }
        std::vector<double> out;
        out.reserve(j.size());
        for (const auto& item : j) out.push_back(detail::parse_probability(item));
        return out;
    }

    /// Forwards a JSON body and returns the response body untouched.
    std::string post_raw(const std::string& path, const std::string& body) const { return post_json(path, body); }

    bool healthy() const {
        httplib::Client cli(url_.origin);
        auto probe = std::chrono::milliseconds(std::min(cfg_.timeout_ms, 1000));
        cli.set_connection_timeout(probe);
        cli.set_read_timeout(probe);
        auto res = cli.Get(url_.path_prefix + "/health");
        return res && res->status >= 200 && res->status < 300;
    }

private:
    void check_payload(const RemotePayload& p) const {
        if (p.diff.empty() && p.commit_message.empty()) {
            throw Error(Errc::InvalidArgument, "payload needs a diff or a commit message");
        }
        if (p.diff.size() > cfg_.max_diff_bytes) {
            throw Error(Errc::DiffTooLarge, "diff of " + std::to_string(p.diff.size()) + " bytes exceeds limit of " +
                                                std::to_string(cfg_.max_diff_bytes));
        }
    }

    static nlohmann::json parse(const std::string& body) {
        auto j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded()) throw Error(Errc::MalformedBackendResponse, "backend returned non-JSON body");
        return j;
    }

    // One retry with 50-150 ms jitter on connection failures, timeouts and
    // 502/503/504; everything else surfaces immediately.
    std::string post_json(const std::string& path, const std::string& body) const {
        for (int attempt = 0;; ++attempt) {
            httplib::Client cli(url_.origin);
            auto timeout = std::chrono::milliseconds(cfg_.timeout_ms);
            cli.set_connection_timeout(timeout);
            cli.set_read_timeout(timeout);
            cli.set_write_timeout(timeout);
            auto res = cli.Post(url_.path_prefix + path, body, "application/json");

            bool transient = !res || detail::transient_status(res->status);
            if (transient && attempt == 0) {
                thread_local std::mt19937 rng{std::random_device{}()};
                std::uniform_int_distribution<int> jitter(50, 150);
                std::this_thread::sleep_for(std::chrono::milliseconds(jitter(rng)));
                continue;
            }
            if (!res) {
                auto err = res.error();
                if (err == httplib::Error::Read || err == httplib::Error::Write ||
                    err == httplib::Error::ConnectionTimeout) {
                    throw Error(Errc::BackendTimeout, "model backend timed out: " + httplib::to_string(err));
                }
                throw Error(Errc::BackendUnavailable, "model backend unreachable: " + httplib::to_string(err));
            }
            if (res->status < 200 || res->status >= 300) {
                throw Error(Errc::BackendUnavailable, "model backend answered HTTP " + std::to_string(res->status));
            }
            return res->body;
        }
    }

    RemoteBackend cfg_;
    BaseUrl url_;
};

class RemoteScorer final : public Scorer {
public:
    explicit RemoteScorer(RemoteBackend cfg) : client_(std::move(cfg)) {}

    double probability(const ScoreInput& input) const override {
        RemotePayload payload{std::string(input.diff), std::string(input.commit_message), metrics_json(input.metrics)};
        return client_.predict(payload);
    }
    std::string id() const override { return "remote-seq-cls"; }
    bool available() const override { return client_.healthy(); }

    const RemoteClient& client() const { return client_; }

private:
    RemoteClient client_;
};

inline std::unique_ptr<Scorer> make_scorer(const ScorerConfig& cfg, BaselineModel model = {}) {
    cfg.validate();
    if (const auto* remote = std::get_if<RemoteBackend>(&cfg.backend)) return std::make_unique<RemoteScorer>(*remote);
    return std::make_unique<BuiltinScorer>(std::move(model));
}

}  // namespace drs
