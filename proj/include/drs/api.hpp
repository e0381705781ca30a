#pragma once

// Wire types of the gateway's JSON endpoints.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "drs/error.hpp"
#include "drs/metrics.hpp"
#include "drs/scoring.hpp"

namespace drs {

struct PredictRequest {
    std::string diff;
    std::string commit_message;
    ChangeMetrics metrics;  // caller-supplied values; unset slots are computed or UNKNOWN
};

struct PredictResponse {
    double probability = 0;
    std::string label;
    double confidence = 0;
    double threshold = 0;
    std::string scorer_id;
    bool truncated = false;
    std::optional<std::string> sha;  // set by the by-sha routes
    std::optional<std::string> repo;
};

struct ShaRequest {
    std::string owner_repo;
    std::string commit_sha;
};

inline PredictResponse make_predict_response(const RiskScore& s, bool truncated) {
    return {s.probability, std::string(to_string(s.label)), s.confidence, s.threshold, s.scorer_id, truncated, {}, {}};
}

inline nlohmann::json to_json(const PredictResponse& r) {
    nlohmann::json j = {
        {"probability", r.probability}, {"label", r.label},         {"confidence", r.confidence},
        {"threshold", r.threshold},     {"scorer_id", r.scorer_id}, {"truncated", r.truncated},
    };
    if (r.sha) j["sha"] = *r.sha;
    if (r.repo) j["repo"] = *r.repo;
    return j;
}

inline PredictResponse predict_response_from_json(const nlohmann::json& j) {
    try {
        PredictResponse r;
        r.probability = j.at("probability").get<double>();
        r.label = j.at("label").get<std::string>();
        r.confidence = j.at("confidence").get<double>();
        r.threshold = j.at("threshold").get<double>();
        r.scorer_id = j.at("scorer_id").get<std::string>();
        r.truncated = j.at("truncated").get<bool>();
        if (j.contains("sha")) r.sha = j["sha"].get<std::string>();
        if (j.contains("repo")) r.repo = j["repo"].get<std::string>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::MalformedBackendResponse, std::string("bad prediction object: ") + e.what());
    }
}

inline nlohmann::json to_json(const PredictRequest& r) {
    nlohmann::json j = {{"diff", r.diff}, {"commit_message", r.commit_message}};
    nlohmann::json m = nlohmann::json::object();
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        if (r.metrics.values[i]) m[std::string(kMetricKeys[i])] = *r.metrics.values[i];
    }
    if (!m.empty()) j["metrics"] = m;
    return j;
}

namespace detail {

[[noreturn]] inline void invalid_payload(const std::string& why) { throw Error(Errc::InvalidPayload, why); }

inline std::string optional_string(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return {};
    if (!j[key].is_string()) invalid_payload(std::string("\"") + key + "\" must be a string");
    return j[key].get<std::string>();
}

}  // namespace detail

/// Accepts {"diff", "commit_message", "metrics"?}. Metric keys may be the
/// short column names (la, ld, ...) or the token names; values are numbers
/// or null.
inline PredictRequest predict_request_from_json(const nlohmann::json& j) {
    if (!j.is_object()) detail::invalid_payload("request must be a JSON object");
    PredictRequest r;
    r.diff = detail::optional_string(j, "diff");
    r.commit_message = detail::optional_string(j, "commit_message");
    if (r.diff.empty() && r.commit_message.empty()) {
        detail::invalid_payload("request needs a non-empty \"diff\" or \"commit_message\"");
    }
    if (j.contains("metrics") && !j["metrics"].is_null()) {
        const auto& m = j["metrics"];
        if (!m.is_object()) detail::invalid_payload("\"metrics\" must be an object");
        for (const auto& [key, value] : m.items()) {
            auto metric = metric_from_name(key);
            if (!metric) detail::invalid_payload("unknown metric \"" + key + "\"");
            if (value.is_null()) continue;
            if (!value.is_number()) detail::invalid_payload("metric \"" + key + "\" must be a number");
            double v = value.get<double>();
            if (!std::isfinite(v) || v < 0) detail::invalid_payload("metric \"" + key + "\" must be finite and >= 0");
            r.metrics[*metric] = v;
        }
    }
    return r;
}

inline PredictRequest parse_predict_request(const std::string& body) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) detail::invalid_payload("body is not valid JSON");
    return predict_request_from_json(j);
}

/// Accepts {"owner_repo": "owner/name", "commit_sha": hex}. Abbreviated
/// SHAs of at least 7 digits are passed through to the hosting service.
inline ShaRequest parse_sha_request(const std::string& body) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) detail::invalid_payload("body is not valid JSON");
    if (!j.is_object()) detail::invalid_payload("request must be a JSON object");
    ShaRequest r;
    r.owner_repo = detail::optional_string(j, "owner_repo");
    r.commit_sha = detail::optional_string(j, "commit_sha");
    auto slash = r.owner_repo.find('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 == r.owner_repo.size() ||
        r.owner_repo.find('/', slash + 1) != std::string::npos) {
        detail::invalid_payload("\"owner_repo\" must look like owner/name");
    }
    bool hex = !r.commit_sha.empty() && std::all_of(r.commit_sha.begin(), r.commit_sha.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
    });
    if (!hex || r.commit_sha.size() < 7 || r.commit_sha.size() > 40) {
        detail::invalid_payload("\"commit_sha\" must be 7 to 40 hex digits");
    }
    return r;
}

/// Body of every non-2xx JSON reply and of failed batch slots.
inline nlohmann::json error_json(std::string_view error, const std::string& message, int status) {
    return {{"error", error}, {"message", message}, {"status", status}};
}

}  // namespace drs
