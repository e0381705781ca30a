// HTTP gateway: drs-gateway [--env-file FILE] [--host H] [--port P]

#include <csignal>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "drs/env.hpp"
#include "drs/gateway.hpp"
#include "drs/gateway_server.hpp"
#include "drs/github_client.hpp"

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"drs-gateway: diff risk scoring HTTP service"};
    std::string env_file;
    std::string host;
    int port = 0;
    app.add_option("--env-file", env_file, "KEY=VALUE configuration file")->check(CLI::ExistingFile);
    app.add_option("--host", host, "bind address (overrides DRS_HOST)");
    app.add_option("--port", port, "listen port (overrides DRS_PORT)");
    CLI11_PARSE(app, argc, argv);

    try {
        drs::Env env(env_file.empty() ? drs::EnvMap{} : drs::load_env_file(env_file));
        drs::GatewayConfig cfg = drs::gateway_config_from_env(env);
        if (!host.empty()) cfg.host = host;
        if (port > 0) cfg.port = port;

        std::shared_ptr<const drs::HostingClient> hosting;
        if (!cfg.github_token.empty()) {
            drs::GitHubConfig gh;
            gh.api_url = cfg.github_api_url;
            gh.timeout_ms = cfg.timeout_ms;
            gh.user_agent = "drs-gateway";
            hosting = std::make_shared<drs::GitHubClient>(gh, std::make_shared<drs::StaticToken>(cfg.github_token));
        } else {
            spdlog::warn("GITHUB_TOKEN unset; by-sha routes will answer 401");
        }

        auto gateway = drs::make_gateway(cfg, hosting);
        httplib::Server server;
        drs::mount_gateway(server, *gateway);
        g_server = &server;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);

        spdlog::info("drs-gateway {} listening on {}:{} (scorer {}, threshold {}, explain {})", drs::kVersion,
                     cfg.host, cfg.port, gateway->scorer().id(), cfg.threshold, cfg.explain_enabled);
        if (!server.listen(cfg.host, cfg.port)) {
            spdlog::error("cannot listen on {}:{}", cfg.host, cfg.port);
            return 2;
        }
        return 0;
    } catch (const drs::Error& e) {
        std::cerr << "drs-gateway: " << e.name() << ": " << e.what() << '\n';
        return 2;
    }
}
