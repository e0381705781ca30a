// GitHub webhook bot: drs-bot [--env-file FILE] [--host H] [--port P]
//
// Scores through a running gateway when DRS_GATEWAY_URL is set, otherwise
// builds a gateway in-process from the same DRS_* settings.

#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "drs/bot.hpp"
#include "drs/env.hpp"
#include "drs/gateway.hpp"
#include "drs/github_client.hpp"

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw drs::Error(drs::Errc::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"drs-bot: pull request risk cards"};
    std::string env_file;
    std::string host = "0.0.0.0";
    int port = 0;
    app.add_option("--env-file", env_file, "KEY=VALUE configuration file")->check(CLI::ExistingFile);
    app.add_option("--host", host, "bind address");
    app.add_option("--port", port, "listen port (overrides DRS_BOT_PORT)");
    CLI11_PARSE(app, argc, argv);

    try {
        drs::Env env(env_file.empty() ? drs::EnvMap{} : drs::load_env_file(env_file));
        if (port <= 0) port = env.number_or("DRS_BOT_PORT", 8080);

        drs::BotConfig bot_cfg;
        bot_cfg.webhook_secret = env.get_or("GITHUB_WEBHOOK_SECRET", "");
        bot_cfg.pr_only = env.flag_or("DRS_BOT_PR_ONLY", true);
        bot_cfg.dedup_retention = std::chrono::seconds(env.number_or("DRS_BOT_DEDUP_SECONDS", 86400));
        if (bot_cfg.webhook_secret.empty()) {
            std::cerr << "drs-bot: GITHUB_WEBHOOK_SECRET is required\n";
            return 2;
        }

        drs::GitHubConfig gh;
        gh.api_url = env.get_or("DRS_GITHUB_API_URL", gh.api_url);
        gh.user_agent = "drs-bot";

        // Static token, or a GitHub App with one token source per installation.
        drs::HostingFactory hosting;
        const std::string token = env.get_or("GITHUB_TOKEN", "");
        const std::string app_id = env.get_or("GITHUB_APP_ID", "");
        if (!app_id.empty()) {
            const std::string pem = read_text(env.get_or("GITHUB_APP_PRIVATE_KEY_PATH", ""));
            (void)drs::make_app_jwt(app_id, pem, 0);  // fail fast on a bad key
            auto cache = std::make_shared<std::map<std::int64_t, std::shared_ptr<const drs::HostingClient>>>();
            auto mu = std::make_shared<std::mutex>();
            hosting = [gh, app_id, pem, cache, mu](std::optional<std::int64_t> installation) {
                if (!installation) throw drs::Error(drs::Errc::Unauthorized, "delivery carries no installation id");
                std::lock_guard<std::mutex> lock(*mu);
                auto& slot = (*cache)[*installation];
                if (!slot) {
                    auto tokens = std::make_shared<drs::AppInstallationToken>(gh, app_id, pem, *installation);
                    slot = std::make_shared<drs::GitHubClient>(gh, tokens);
                }
                return slot;
            };
        } else if (!token.empty()) {
            auto client = std::make_shared<drs::GitHubClient>(gh, std::make_shared<drs::StaticToken>(token));
            hosting = [client](std::optional<std::int64_t>) { return client; };
        } else {
            std::cerr << "drs-bot: set GITHUB_TOKEN or GITHUB_APP_ID and GITHUB_APP_PRIVATE_KEY_PATH\n";
            return 2;
        }

        std::unique_ptr<drs::Gateway> local_gateway;
        std::shared_ptr<const drs::PredictionService> prediction;
        const std::string gateway_url = env.get_or("DRS_GATEWAY_URL", "");
        if (!gateway_url.empty()) {
            prediction = std::make_shared<drs::HttpPrediction>(gateway_url, env.number_or("DRS_TIMEOUT_MS", 30000));
            spdlog::info("scoring through gateway at {}", gateway_url);
        } else {
            local_gateway = drs::make_gateway(drs::gateway_config_from_env(env));
            prediction = std::make_shared<drs::InProcessPrediction>(*local_gateway);
            bot_cfg.scorer_id = local_gateway->scorer().id();
            bot_cfg.threshold = local_gateway->config().threshold;
            spdlog::info("scoring in-process with {}", bot_cfg.scorer_id);
        }

        drs::Bot bot(bot_cfg, hosting, prediction);
        httplib::Server server;
        drs::mount_bot(server, bot);
        g_server = &server;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        spdlog::info("drs-bot listening on {}:{} (pr_only={})", host, port, bot_cfg.pr_only);
        if (!server.listen(host, port)) {
            spdlog::error("cannot listen on {}:{}", host, port);
            return 2;
        }
        return 0;
    } catch (const drs::Error& e) {
        std::cerr << "drs-bot: " << e.name() << ": " << e.what() << '\n';
        return 2;
    }
}
