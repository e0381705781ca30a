#pragma once

// Hosting-service operations used by the gateway (commit lookup) and the bot
// (PR commits and comments). github_client.hpp implements them over REST.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "drs/diff.hpp"

namespace drs {

struct IssueComment {
    std::int64_t id = 0;
    std::string body;
};

class HostingClient {
public:
    virtual ~HostingClient() = default;

    virtual bool has_credentials() const = 0;

    /// Message and unified diff of one commit. Throws CommitNotFound,
    /// Unauthorized or HostingServiceError (retry_after_seconds set when
    /// rate limited).
    virtual Commit get_commit(const std::string& repo, const std::string& sha) const = 0;

    /// Commits of a pull request in PR order; raw_diff is left empty.
    virtual std::vector<Commit> list_pull_commits(const std::string& repo, int pr) const = 0;

    virtual std::vector<IssueComment> list_issue_comments(const std::string& repo, int pr) const = 0;
    virtual std::int64_t create_issue_comment(const std::string& repo, int pr, const std::string& body) const = 0;
    virtual void update_issue_comment(const std::string& repo, std::int64_t comment_id,
                                      const std::string& body) const = 0;
    virtual void create_commit_comment(const std::string& repo, const std::string& sha,
                                       const std::string& body) const = 0;
};

}  // namespace drs
