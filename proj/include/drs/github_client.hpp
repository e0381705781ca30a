#pragma once

// GitHub REST implementation of HostingClient, plus the token sources a
// GitHub App needs (static token, or app JWT exchanged for an installation
// token).

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>
#include <openssl/pem.h>

#include "drs/dataset.hpp"
#include "drs/error.hpp"
#include "drs/hosting.hpp"
#include "drs/http_util.hpp"

namespace drs {

namespace detail {

inline std::string base64url(std::string_view data) {
    std::string out(4 * ((data.size() + 2) / 3), '\0');
    int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                            reinterpret_cast<const unsigned char*>(data.data()), static_cast<int>(data.size()));
    out.resize(static_cast<std::size_t>(n));
    while (!out.empty() && out.back() == '=') out.pop_back();
    for (char& c : out) {
        if (c == '+') c = '-';
        else if (c == '/') c = '_';
    }
    return out;
}

inline std::string rs256_sign(const std::string& pem, std::string_view message) {
    std::unique_ptr<BIO, decltype(&BIO_free)> bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())), BIO_free);
    if (!bio) throw Error(Errc::InvalidArgument, "cannot read app private key");
    std::unique_ptr<EVP_PKEY, decltype(&EVP_PKEY_free)> key(PEM_read_bio_PrivateKey(bio.get(), nullptr, nullptr, nullptr),
                                                            EVP_PKEY_free);
    if (!key) throw Error(Errc::InvalidArgument, "app private key is not a PEM private key");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    std::size_t len = 0;
    if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, EVP_sha256(), nullptr, key.get()) != 1 ||
        EVP_DigestSign(ctx.get(), nullptr, &len, reinterpret_cast<const unsigned char*>(message.data()),
                       message.size()) != 1) {
        throw Error(Errc::InvalidArgument, "RS256 signing failed");
    }
    std::string sig(len, '\0');
    if (EVP_DigestSign(ctx.get(), reinterpret_cast<unsigned char*>(sig.data()), &len,
                       reinterpret_cast<const unsigned char*>(message.data()), message.size()) != 1) {
        throw Error(Errc::InvalidArgument, "RS256 signing failed");
    }
    sig.resize(len);
    return sig;
}

}  // namespace detail

/// JWT identifying the app itself, valid for nine minutes from `now`.
inline std::string make_app_jwt(const std::string& app_id, const std::string& private_key_pem, std::int64_t now) {
    const std::string header = detail::base64url(R"({"alg":"RS256","typ":"JWT"})");
    const nlohmann::json claims = {{"iat", now - 60}, {"exp", now + 540}, {"iss", app_id}};
    const std::string payload = detail::base64url(claims.dump());
    const std::string signing_input = header + "." + payload;
    return signing_input + "." + detail::base64url(detail::rs256_sign(private_key_pem, signing_input));
}

class TokenSource {
public:
    virtual ~TokenSource() = default;
    virtual std::optional<std::string> token() const = 0;
    virtual bool configured() const { return true; }
};

class StaticToken final : public TokenSource {
public:
    explicit StaticToken(std::string token) : token_(std::move(token)) {}
    std::optional<std::string> token() const override {
        if (token_.empty()) return std::nullopt;
        return token_;
    }
    bool configured() const override { return !token_.empty(); }

private:
    std::string token_;
};

struct GitHubConfig {
    std::string api_url = "https://api.github.com";
    int timeout_ms = 10000;
    std::string user_agent = "drs-bot";
};

namespace detail {

inline std::int64_t unix_now() {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

inline std::optional<int> retry_after(const httplib::Response& res) {
    if (res.has_header("Retry-After")) {
        try {
            return std::stoi(res.get_header_value("Retry-After"));
        } catch (const std::exception&) {
        }
    }
    if (res.get_header_value("x-ratelimit-remaining") == "0" && res.has_header("x-ratelimit-reset")) {
        try {
            auto reset = std::stoll(res.get_header_value("x-ratelimit-reset"));
            return static_cast<int>(std::max<std::int64_t>(0, reset - unix_now()));
        } catch (const std::exception&) {
        }
    }
    return std::nullopt;
}

/// Minimal REST transport: JSON or raw bodies, bearer auth, error mapping.
class GitHubTransport {
public:
    GitHubTransport(GitHubConfig cfg) : cfg_(std::move(cfg)), url_(split_base_url(cfg_.api_url)) {}

    struct Call {
        std::string method;
        std::string path;
        std::string body;
        std::string accept = "application/vnd.github+json";
        std::optional<std::string> bearer;
        bool not_found_is_missing_commit = false;
    };

    std::string send(const Call& call) const {
        httplib::Client cli(url_.origin);
        auto timeout = std::chrono::milliseconds(cfg_.timeout_ms);
        cli.set_connection_timeout(timeout);
        cli.set_read_timeout(timeout);
        cli.set_write_timeout(timeout);
        httplib::Headers headers = {
            {"Accept", call.accept},
            {"User-Agent", cfg_.user_agent},
            {"X-GitHub-Api-Version", "2022-11-28"},
        };
        if (call.bearer) headers.emplace("Authorization", "Bearer " + *call.bearer);
        const std::string path = url_.path_prefix + call.path;

        httplib::Result res{nullptr, httplib::Error::Unknown};
        if (call.method == "GET") {
            res = cli.Get(path, headers);
        } else if (call.method == "POST") {
            res = cli.Post(path, headers, call.body, "application/json");
        } else if (call.method == "PATCH") {
            res = cli.Patch(path, headers, call.body, "application/json");
        } else {
            throw Error(Errc::InvalidArgument, "unsupported method " + call.method);
        }
        if (!res) {
            throw Error(Errc::HostingServiceError, "hosting service unreachable: " + httplib::to_string(res.error()));
        }
        const int status = res->status;
        if (status >= 200 && status < 300) return res->body;

        std::string detail_msg = call.method + " " + call.path + " -> HTTP " + std::to_string(status);
        if (status == 401) throw Error(Errc::Unauthorized, "hosting service rejected credentials: " + detail_msg);
        if ((status == 404 || status == 422) && call.not_found_is_missing_commit) {
            throw Error(Errc::CommitNotFound, "commit not found: " + detail_msg);
        }
        Error err(Errc::HostingServiceError, "hosting service error: " + detail_msg);
        if (status == 403 || status == 429) {
            err.retry_after_seconds = retry_after(*res);
            if (err.retry_after_seconds || status == 429) {
                err = Error(Errc::HostingServiceError, "hosting service rate limit: " + detail_msg);
                err.retry_after_seconds = retry_after(*res).value_or(60);
            }
        }
        throw err;
    }

    const GitHubConfig& config() const { return cfg_; }

private:
    GitHubConfig cfg_;
    BaseUrl url_;
};

inline nlohmann::json parse_json(const std::string& body) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::HostingServiceError, "hosting service returned non-JSON body");
    return j;
}

}  // namespace detail

/// Installation access token for a GitHub App, refreshed a minute before
/// it expires.
class AppInstallationToken final : public TokenSource {
public:
    AppInstallationToken(GitHubConfig cfg, std::string app_id, std::string private_key_pem, std::int64_t installation_id)
        : transport_(std::move(cfg)), app_id_(std::move(app_id)), pem_(std::move(private_key_pem)),
          installation_id_(installation_id) {}

    std::optional<std::string> token() const override {
        std::lock_guard<std::mutex> lock(mu_);
        const std::int64_t now = detail::unix_now();
        if (cached_ && now < expires_at_ - 60) return cached_;
        detail::GitHubTransport::Call call;
        call.method = "POST";
        call.path = "/app/installations/" + std::to_string(installation_id_) + "/access_tokens";
        call.bearer = make_app_jwt(app_id_, pem_, now);
        auto j = detail::parse_json(transport_.send(call));
        if (!j.contains("token") || !j["token"].is_string()) {
            throw Error(Errc::HostingServiceError, "installation token response lacks a token");
        }
        cached_ = j["token"].get<std::string>();
        expires_at_ = now + 3600;
        return cached_;
    }

private:
    detail::GitHubTransport transport_;
    std::string app_id_;
    std::string pem_;
    std::int64_t installation_id_;
    mutable std::mutex mu_;
    mutable std::optional<std::string> cached_;
    mutable std::int64_t expires_at_ = 0;
};

class GitHubClient final : public HostingClient {
public:
    GitHubClient(GitHubConfig cfg, std::shared_ptr<const TokenSource> tokens)
        : transport_(std::move(cfg)), tokens_(std::move(tokens)) {}

    bool has_credentials() const override { return tokens_ && tokens_->configured(); }

    Commit get_commit(const std::string& repo, const std::string& sha) const override {
        auto call = make("GET", "/repos/" + repo + "/commits/" + sha);
        call.not_found_is_missing_commit = true;
        auto j = detail::parse_json(transport_.send(call));
        Commit c;
        c.repo = repo;
        try {
            c.sha = j.at("sha").get<std::string>();
            c.message = j.at("commit").at("message").get<std::string>();
            const auto& author = j.at("commit").at("author");
            if (author.contains("date") && author["date"].is_string()) {
                c.author_timestamp = iso_to_unix(author["date"].get<std::string>());
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::HostingServiceError, std::string("unexpected commit payload: ") + e.what());
        }
        call.accept = "application/vnd.github.diff";
        c.raw_diff = transport_.send(call);
        return c;
    }

    std::vector<Commit> list_pull_commits(const std::string& repo, int pr) const override {
        std::vector<Commit> out;
        for (int page = 1;; ++page) {
            auto j = detail::parse_json(transport_.send(
                make("GET", "/repos/" + repo + "/pulls/" + std::to_string(pr) + "/commits?per_page=100&page=" +
                                std::to_string(page))));
            if (!j.is_array()) throw Error(Errc::HostingServiceError, "PR commit list is not an array");
            for (const auto& item : j) {
                Commit c;
                c.repo = repo;
                c.sha = item.value("sha", "");
                if (item.contains("commit")) c.message = item["commit"].value("message", "");
                out.push_back(std::move(c));
            }
            if (j.size() < 100) break;
        }
        return out;
    }

    std::vector<IssueComment> list_issue_comments(const std::string& repo, int pr) const override {
        std::vector<IssueComment> out;
        for (int page = 1;; ++page) {
            auto j = detail::parse_json(transport_.send(
                make("GET", "/repos/" + repo + "/issues/" + std::to_string(pr) + "/comments?per_page=100&page=" +
                                std::to_string(page))));
            if (!j.is_array()) throw Error(Errc::HostingServiceError, "comment list is not an array");
            for (const auto& item : j) out.push_back({item.value("id", std::int64_t{0}), item.value("body", "")});
            if (j.size() < 100) break;
        }
        return out;
    }

    std::int64_t create_issue_comment(const std::string& repo, int pr, const std::string& body) const override {
        auto call = make("POST", "/repos/" + repo + "/issues/" + std::to_string(pr) + "/comments");
        call.body = nlohmann::json{{"body", body}}.dump();
        auto j = detail::parse_json(transport_.send(call));
        return j.value("id", std::int64_t{0});
    }

    void update_issue_comment(const std::string& repo, std::int64_t comment_id, const std::string& body) const override {
        auto call = make("PATCH", "/repos/" + repo + "/issues/comments/" + std::to_string(comment_id));
        call.body = nlohmann::json{{"body", body}}.dump();
        (void)transport_.send(call);
    }

    void create_commit_comment(const std::string& repo, const std::string& sha, const std::string& body) const override {
        auto call = make("POST", "/repos/" + repo + "/commits/" + sha + "/comments");
        call.body = nlohmann::json{{"body", body}}.dump();
        (void)transport_.send(call);
    }

    /// ISO-8601 commit date to unix seconds; 0 when unparseable.
    static std::int64_t iso_to_unix(const std::string& iso) { return detail::parse_timestamp(iso).value_or(0); }

private:
    detail::GitHubTransport::Call make(std::string method, std::string path) const {
        detail::GitHubTransport::Call call;
        call.method = std::move(method);
        call.path = std::move(path);
        if (tokens_) call.bearer = tokens_->token();
        return call;
    }

    detail::GitHubTransport transport_;
    std::shared_ptr<const TokenSource> tokens_;
};

}  // namespace drs
