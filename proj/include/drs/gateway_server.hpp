#pragma once

// Mounts the gateway's routes on an httplib server.

#include <atomic>
#include <chrono>
#include <string>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "drs/gateway.hpp"

namespace drs {

namespace detail {

inline void send(httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    for (const auto& [k, v] : reply.headers) res.set_header(k, v);
    res.set_content(reply.body, reply.content_type);
}

}  // namespace detail

/// Registers /health, /seq-cls/*, /clm/* and the /api/v1/drs/predict
/// alias. The gateway must outlive the server.
inline void mount_gateway(httplib::Server& server, const Gateway& gw) {
    using Handler = HttpReply (Gateway::*)(const std::string&) const;
    static std::atomic<std::uint64_t> next_id{1};

    auto post = [&server, &gw](const std::string& path, Handler handler) {
        server.Post(path, [&gw, handler, path](const httplib::Request& req, httplib::Response& res) {
            const std::uint64_t id = next_id++;
            const auto start = std::chrono::steady_clock::now();
            HttpReply reply = (gw.*handler)(req.body);
            detail::send(res, reply);
            const auto us =
                std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start).count();
            spdlog::info("req={} {} status={} in={}B out={}B latency_ms={:.2f}", id, path, reply.status,
                         req.body.size(), reply.body.size(), static_cast<double>(us) / 1000.0);
        });
    };

    server.Get("/health", [&gw](const httplib::Request&, httplib::Response& res) { detail::send(res, gw.health()); });
    post("/seq-cls/predict", &Gateway::handle_predict);
    post("/seq-cls/predict_batch", &Gateway::handle_predict_batch);
    post("/seq-cls/predict_by_sha", &Gateway::handle_predict_by_sha);
    post("/clm/predict", &Gateway::handle_clm_predict);
    post("/clm/predict_by_sha", &Gateway::handle_clm_predict_by_sha);
    post("/api/v1/drs/predict", &Gateway::handle_predict);

    const std::string origin = gw.config().cors_origin;
    if (!origin.empty()) {
        server.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Origin", origin);
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        });
        server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    }
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            res.set_content(error_json("NotFound", "no such route", res.status).dump(), "application/json");
        }
    });
    server.set_exception_handler([](const httplib::Request& req, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        spdlog::error("{} failed: {}", req.path, what);
        res.status = 500;
        res.set_content(error_json("InternalError", "internal error", 500).dump(), "application/json");
    });
}

}  // namespace drs
