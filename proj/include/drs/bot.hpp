#pragma once

// Webhook consumer: verifies deliveries, scores PR commits through a
// prediction service and keeps one result card per PR up to date.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <httplib.h>
#include <json.hpp>
#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <spdlog/spdlog.h>

#include "drs/api.hpp"
#include "drs/error.hpp"
#include "drs/gateway.hpp"
#include "drs/hosting.hpp"
#include "drs/http_util.hpp"

namespace drs {

// ---------------------------------------------------------------------------
// Signatures

inline std::string hmac_sha256_hex(std::string_view key, std::string_view data) {
    unsigned char mac[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), reinterpret_cast<const unsigned char*>(data.data()),
         data.size(), mac, &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[mac[i] >> 4]);
        out.push_back(kHex[mac[i] & 0xf]);
    }
    return out;
}

/// Checks an X-Hub-Signature-256 header ("sha256=<hex>") against the raw
/// body. The comparison does not short-circuit.
inline bool verify_signature(std::string_view secret, std::string_view body, std::string_view header) {
    constexpr std::string_view prefix = "sha256=";
    if (secret.empty() || header.substr(0, prefix.size()) != prefix) return false;
    std::string expected = hmac_sha256_hex(secret, body);
    std::string_view given = header.substr(prefix.size());
    if (given.size() != expected.size()) return false;
    return CRYPTO_memcmp(expected.data(), given.data(), expected.size()) == 0;
}

// ---------------------------------------------------------------------------
// Events

enum class EventKind { PullRequestOpened, PullRequestSynchronize, Push, IssueComment };

struct WebhookEvent {
    EventKind kind = EventKind::PullRequestOpened;
    std::string repo;
    std::optional<int> pr_number;
    std::optional<std::string> comment_body;
    std::string delivery_id;
    std::optional<std::int64_t> installation_id;
    std::vector<std::string> push_commits;  // push only, oldest first
    std::string head_sha;
};

/// Parses the events the bot reacts to; anything else is nullopt.
inline std::optional<WebhookEvent> parse_webhook(std::string_view event_name, std::string delivery_id,
                                                 const nlohmann::json& payload) {
    if (!payload.is_object()) return std::nullopt;
    WebhookEvent ev;
    ev.delivery_id = std::move(delivery_id);
    try {
        if (payload.contains("repository")) ev.repo = payload["repository"].value("full_name", "");
        if (payload.contains("installation") && payload["installation"].contains("id")) {
            ev.installation_id = payload["installation"]["id"].get<std::int64_t>();
        }
        const std::string action = payload.value("action", "");
        if (event_name == "pull_request") {
            if (action == "opened") {
                ev.kind = EventKind::PullRequestOpened;
            } else if (action == "synchronize") {
                ev.kind = EventKind::PullRequestSynchronize;
            } else {
                return std::nullopt;
            }
            ev.pr_number = payload.at("number").get<int>();
            ev.head_sha = payload.at("pull_request").at("head").value("sha", "");
        } else if (event_name == "issue_comment") {
            if (action != "created") return std::nullopt;
            const auto& issue = payload.at("issue");
            if (!issue.contains("pull_request")) return std::nullopt;  // plain issue
            ev.kind = EventKind::IssueComment;
            ev.pr_number = issue.at("number").get<int>();
            ev.comment_body = payload.at("comment").value("body", "");
        } else if (event_name == "push") {
            ev.kind = EventKind::Push;
            if (payload.contains("commits") && payload["commits"].is_array()) {
                for (const auto& c : payload["commits"]) ev.push_commits.push_back(c.value("id", ""));
            }
            ev.head_sha = payload.value("after", "");
        } else {
            return std::nullopt;
        }
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
    if (ev.repo.empty()) return std::nullopt;
    return ev;
}

/// True when the first whitespace-delimited token of the body is exactly
/// "/drs".
inline bool is_drs_command(std::string_view body) {
    std::size_t i = 0;
    while (i < body.size() && detail::is_space(body[i])) ++i;
    std::size_t j = i;
    while (j < body.size() && !detail::is_space(body[j])) ++j;
    return body.substr(i, j - i) == "/drs";
}

// ---------------------------------------------------------------------------
// Cards

inline constexpr std::string_view kCardMarker = "<!-- drs-bot -->";

struct CardRow {
    std::string sha;
    std::optional<PredictResponse> result;
    std::string error;  // set when result is empty
};

struct Card {
    std::vector<CardRow> rows;
    std::string scorer_id;
    double threshold = 0.5;
    std::string failure;  // whole-run failure note for degraded cards
};

inline std::string format_fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

/// Markdown card, one row per commit in PR order.
inline std::string render_card(const Card& card) {
    std::string out;
    out += kCardMarker;
    out += "\n### DRS risk report\n\n";
    if (!card.failure.empty()) {
        out += "> Scoring failed: " + card.failure + "\n";
        if (card.rows.empty()) return out;
        out += "\n";
    }
    if (card.rows.empty()) {
        out += "_no commits to score_\n";
        return out;
    }
    out += "| commit | label | confidence |\n";
    out += "|--------|-------|------------|\n";
    for (const auto& row : card.rows) {
        std::string sha = "`" + row.sha.substr(0, 7) + "`";
        if (row.result) {
            out += "| " + sha + " | " + row.result->label + " | " + format_fixed2(row.result->confidence) + " |\n";
        } else {
            out += "| " + sha + " | error | - |\n";
        }
    }
    out += "\n";
    for (const auto& row : card.rows) {
        if (!row.result && !row.error.empty()) out += "- `" + row.sha.substr(0, 7) + "`: " + row.error + "\n";
    }
    if (!card.scorer_id.empty()) {
        out += "<sub>scorer " + card.scorer_id + ", threshold " + format_fixed2(card.threshold) + "</sub>\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prediction service

struct SlotError {
    std::string error;
    std::string message;
    int status = 500;
};

using BatchSlot = std::variant<PredictResponse, SlotError>;

class PredictionService {
public:
    virtual ~PredictionService() = default;
    /// Index-aligned results; throws drs::Error when the whole call fails.
    virtual std::vector<BatchSlot> predict_batch(const std::vector<PredictRequest>& requests) const = 0;
};

/// Calls a Gateway object in the same process.
class InProcessPrediction final : public PredictionService {
public:
    explicit InProcessPrediction(const Gateway& gw) : gw_(gw) {}

    std::vector<BatchSlot> predict_batch(const std::vector<PredictRequest>& requests) const override {
        std::vector<BatchSlot> out;
        for (const auto& r : requests) {
            try {
                out.emplace_back(gw_.predict(r));
            } catch (const Error& e) {
                out.emplace_back(SlotError{std::string(wire_error_name(e.code())), e.what(), http_status_for(e.code())});
            }
        }
        return out;
    }

private:
    const Gateway& gw_;
};

/// POSTs to a gateway's /seq-cls/predict_batch.
class HttpPrediction final : public PredictionService {
public:
    HttpPrediction(std::string gateway_url, int timeout_ms = 30000)
        : url_(split_base_url(gateway_url)), timeout_ms_(timeout_ms) {}

    std::vector<BatchSlot> predict_batch(const std::vector<PredictRequest>& requests) const override {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : requests) arr.push_back(to_json(r));
        httplib::Client cli(url_.origin);
        auto timeout = std::chrono::milliseconds(timeout_ms_);
        cli.set_connection_timeout(timeout);
        cli.set_read_timeout(timeout);
        auto res = cli.Post(url_.path_prefix + "/seq-cls/predict_batch", arr.dump(), "application/json");
        if (!res) throw Error(Errc::BackendUnavailable, "gateway unreachable: " + httplib::to_string(res.error()));
        if (res->status != 200) {
            throw Error(Errc::BackendUnavailable, "gateway answered HTTP " + std::to_string(res->status));
        }
        auto j = nlohmann::json::parse(res->body, nullptr, false);
        if (j.is_discarded() || !j.is_array() || j.size() != requests.size()) {
            throw Error(Errc::MalformedBackendResponse, "gateway batch response is not an aligned array");
        }
        std::vector<BatchSlot> out;
        for (const auto& item : j) {
            if (item.contains("error")) {
                out.emplace_back(SlotError{item.value("error", ""), item.value("message", ""), item.value("status", 500)});
            } else {
                out.emplace_back(predict_response_from_json(item));
            }
        }
        return out;
    }

private:
    BaseUrl url_;
    int timeout_ms_;
};

// ---------------------------------------------------------------------------
// Delivery dedup and per-PR locks

/// Remembers delivery ids for a retention window (and at most `capacity`
/// of them).
class DeliveryCache {
public:
    using Clock = std::chrono::steady_clock;

    explicit DeliveryCache(std::chrono::seconds retention = std::chrono::hours(24), std::size_t capacity = 100000)
        : retention_(retention), capacity_(capacity) {}

    /// True the first time an id is seen within the window.
    bool first_seen(const std::string& id, Clock::time_point now = Clock::now()) {
        std::lock_guard<std::mutex> lock(mu_);
        while (!order_.empty() && (now - order_.front().second > retention_ || order_.size() > capacity_)) {
            auto it = seen_.find(order_.front().first);
            if (it != seen_.end() && it->second == order_.front().second) seen_.erase(it);
            order_.pop_front();
        }
        if (seen_.count(id) != 0) return false;
        seen_[id] = now;
        order_.emplace_back(id, now);
        return true;
    }

private:
    std::chrono::seconds retention_;
    std::size_t capacity_;
    std::mutex mu_;
    std::unordered_map<std::string, Clock::time_point> seen_;
    std::deque<std::pair<std::string, Clock::time_point>> order_;
};

class KeyedMutex {
public:
    std::unique_lock<std::mutex> lock(const std::string& key) {
        std::shared_ptr<std::mutex> m;
        {
            std::lock_guard<std::mutex> guard(mu_);
            auto& slot = locks_[key];
            if (!slot) slot = std::make_shared<std::mutex>();
            m = slot;
        }
        // The map keeps the mutex alive for the life of the bot.
        return std::unique_lock<std::mutex>(*m);
    }

private:
    std::mutex mu_;
    std::unordered_map<std::string, std::shared_ptr<std::mutex>> locks_;
};

// ---------------------------------------------------------------------------
// Bot

struct BotConfig {
    std::string webhook_secret;
    bool pr_only = true;
    std::chrono::seconds dedup_retention = std::chrono::hours(24);
    std::size_t batch_cap = 64;
    std::string scorer_id;  // shown in the card footer
    double threshold = 0.5;
};

enum class BotAction { Ignored, Posted, Updated, Rejected, Failed };

constexpr std::string_view to_string(BotAction a) {
    switch (a) {
    case BotAction::Ignored: return "ignored";
    case BotAction::Posted: return "posted";
    case BotAction::Updated: return "updated";
    case BotAction::Rejected: return "rejected";
    case BotAction::Failed: return "failed";
    }
    return "ignored";
}

struct BotOutcome {
    int status = 200;
    BotAction action = BotAction::Ignored;
    std::string reason;
};

/// Maps an installation id (absent for static-token setups) to a client.
using HostingFactory = std::function<std::shared_ptr<const HostingClient>(std::optional<std::int64_t>)>;

class Bot {
public:
    Bot(BotConfig cfg, HostingFactory hosting, std::shared_ptr<const PredictionService> prediction)
        : cfg_(std::move(cfg)), hosting_(std::move(hosting)), prediction_(std::move(prediction)),
          deliveries_(cfg_.dedup_retention) {
        if (cfg_.webhook_secret.empty()) throw Error(Errc::InvalidArgument, "webhook secret must not be empty");
        if (cfg_.batch_cap == 0) throw Error(Errc::InvalidArgument, "batch cap must be positive");
    }

    /// Full delivery path: signature, dedup, parse, act.
    BotOutcome handle_delivery(std::string_view event_name, const std::string& delivery_id,
                               std::string_view signature_header, const std::string& raw_body) {
        if (!verify_signature(cfg_.webhook_secret, raw_body, signature_header)) {
            return {401, BotAction::Rejected, std::string(to_string(Errc::SignatureMismatch))};
        }
        auto payload = nlohmann::json::parse(raw_body, nullptr, false);
        if (payload.is_discarded()) return {400, BotAction::Rejected, "body is not JSON"};
        if (delivery_id.empty()) return {400, BotAction::Rejected, "missing delivery id"};
        if (!deliveries_.first_seen(delivery_id)) return {200, BotAction::Ignored, "duplicate delivery"};

        auto event = parse_webhook(event_name, delivery_id, payload);
        if (!event) return {200, BotAction::Ignored, "unhandled event"};
        return handle_event(*event);
    }

    BotOutcome handle_event(const WebhookEvent& ev) {
        switch (ev.kind) {
        case EventKind::PullRequestOpened:
        case EventKind::PullRequestSynchronize: return score_pull_request(ev);
        case EventKind::IssueComment: return handle_command(ev);
        case EventKind::Push:
            if (cfg_.pr_only) return {200, BotAction::Ignored, "push events ignored in PR-only mode"};
            return score_push(ev);
        }
        return {200, BotAction::Ignored, "unhandled event"};
    }

    BotOutcome handle_command(const WebhookEvent& ev) {
        if (!ev.comment_body || !is_drs_command(*ev.comment_body)) {
            return {200, BotAction::Ignored, "comment is not a /drs command"};
        }
        return score_pull_request(ev);
    }

private:
    BotOutcome score_pull_request(const WebhookEvent& ev) {
        const std::string key = ev.repo + "#" + std::to_string(*ev.pr_number);
        auto lock = pr_locks_.lock(key);
        try {
            auto hosting = hosting_(ev.installation_id);
            auto commits = hosting->list_pull_commits(ev.repo, *ev.pr_number);
            for (auto& c : commits) {
                Commit full = hosting->get_commit(ev.repo, c.sha);
                c.raw_diff = std::move(full.raw_diff);
                if (c.message.empty()) c.message = std::move(full.message);
            }
            std::string body = render_card(score_commits(commits));

            for (const auto& existing : hosting->list_issue_comments(ev.repo, *ev.pr_number)) {
                if (existing.body.rfind(kCardMarker, 0) == 0) {
                    hosting->update_issue_comment(ev.repo, existing.id, body);
                    spdlog::info("delivery={} {} card updated ({} commits)", ev.delivery_id, key, commits.size());
                    return {200, BotAction::Updated, key};
                }
            }
            hosting->create_issue_comment(ev.repo, *ev.pr_number, body);
            spdlog::info("delivery={} {} card posted ({} commits)", ev.delivery_id, key, commits.size());
            return {200, BotAction::Posted, key};
        } catch (const Error& e) {
            spdlog::warn("delivery={} {} failed: {}", ev.delivery_id, key, e.what());
            return {502, BotAction::Failed, e.what()};
        }
    }

    BotOutcome score_push(const WebhookEvent& ev) {
        if (ev.push_commits.empty() || ev.head_sha.empty()) return {200, BotAction::Ignored, "push without commits"};
        auto lock = pr_locks_.lock(ev.repo + "@" + ev.head_sha);
        try {
            auto hosting = hosting_(ev.installation_id);
            std::vector<Commit> commits;
            for (const auto& sha : ev.push_commits) commits.push_back(hosting->get_commit(ev.repo, sha));
            hosting->create_commit_comment(ev.repo, ev.head_sha, render_card(score_commits(commits)));
            return {200, BotAction::Posted, ev.repo + "@" + ev.head_sha};
        } catch (const Error& e) {
            return {502, BotAction::Failed, e.what()};
        }
    }

    /// Scores in chunks of batch_cap. A failed call degrades the card
    /// instead of aborting the delivery.
    Card score_commits(const std::vector<Commit>& commits) const {
        Card card;
        card.scorer_id = cfg_.scorer_id;
        card.threshold = cfg_.threshold;
        for (std::size_t start = 0; start < commits.size(); start += cfg_.batch_cap) {
            const std::size_t end = std::min(commits.size(), start + cfg_.batch_cap);
            std::vector<PredictRequest> reqs;
            for (std::size_t i = start; i < end; ++i) {
                PredictRequest r;
                r.diff = commits[i].raw_diff;
                r.commit_message = commits[i].message;
                reqs.push_back(std::move(r));
            }
            std::vector<BatchSlot> slots;
            try {
                slots = prediction_->predict_batch(reqs);
            } catch (const Error& e) {
                card.failure = std::string(wire_error_name(e.code())) + ": " + e.what();
                slots.assign(reqs.size(), SlotError{"BackendFailure", "not scored", 502});
            }
            for (std::size_t i = start; i < end; ++i) {
                CardRow row;
                row.sha = commits[i].sha;
                const auto& slot = slots[i - start];
                if (const auto* ok = std::get_if<PredictResponse>(&slot)) {
                    row.result = *ok;
                    if (card.scorer_id.empty()) card.scorer_id = ok->scorer_id;
                    card.threshold = ok->threshold;
                } else {
                    row.error = std::get<SlotError>(slot).message;
                }
                card.rows.push_back(std::move(row));
            }
        }
        return card;
    }

    BotConfig cfg_;
    HostingFactory hosting_;
    std::shared_ptr<const PredictionService> prediction_;
    DeliveryCache deliveries_;
    KeyedMutex pr_locks_;
};

/// Registers POST <path> for webhook deliveries.
inline void mount_bot(httplib::Server& server, Bot& bot, const std::string& path = "/webhook") {
    server.Post(path, [&bot](const httplib::Request& req, httplib::Response& res) {
        auto outcome = bot.handle_delivery(req.get_header_value("X-GitHub-Event"), req.get_header_value("X-GitHub-Delivery"),
                                           req.get_header_value("X-Hub-Signature-256"), req.body);
        res.status = outcome.status;
        res.set_content(nlohmann::json{{"action", to_string(outcome.action)}, {"reason", outcome.reason}}.dump(),
                        "application/json");
    });
    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"status":"ok"})", "application/json");
    });
}

}  // namespace drs
