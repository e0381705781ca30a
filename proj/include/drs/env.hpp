#pragma once

// Single env-file configuration shared by the gateway and the bot.
//
// File syntax: KEY=VALUE per line, '#' comments, optional "export "
// prefix, values optionally wrapped in single or double quotes. Variables
// already set in the process environment win over the file.

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "drs/diff.hpp"
#include "drs/error.hpp"

namespace drs {

using EnvMap = std::map<std::string, std::string, std::less<>>;

inline EnvMap parse_env_text(std::string_view text) {
    EnvMap out;
    std::size_t lineno = 0;
    for (const auto& raw : detail::split_lines(text)) {
        ++lineno;
        std::string_view line = raw;
        while (!line.empty() && detail::is_space(line.front())) line.remove_prefix(1);
        while (!line.empty() && detail::is_space(line.back())) line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        if (line.substr(0, 7) == "export ") line.remove_prefix(7);
        auto eq = line.find('=');
        if (eq == std::string_view::npos || eq == 0) {
            throw Error(Errc::InvalidArgument, "env file line " + std::to_string(lineno) + ": expected KEY=VALUE");
        }
        std::string_view key = line.substr(0, eq);
        while (!key.empty() && detail::is_space(key.back())) key.remove_suffix(1);
        std::string_view value = line.substr(eq + 1);
        while (!value.empty() && detail::is_space(value.front())) value.remove_prefix(1);
        if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
            value = value.substr(1, value.size() - 2);
        } else if (auto hash = value.find(" #"); hash != std::string_view::npos) {
            value = value.substr(0, hash);
            while (!value.empty() && detail::is_space(value.back())) value.remove_suffix(1);
        }
        out[std::string(key)] = std::string(value);
    }
    return out;
}

inline EnvMap load_env_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open env file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_env_text(text);
}

/// Lookup that prefers the process environment, then the file map.
class Env {
public:
    Env() = default;
    explicit Env(EnvMap file, bool use_process_env = true) : file_(std::move(file)), process_(use_process_env) {}

    std::optional<std::string> get(std::string_view key) const {
        if (process_) {
            if (const char* v = std::getenv(std::string(key).c_str()); v != nullptr) return std::string(v);
        }
        if (auto it = file_.find(key); it != file_.end()) return it->second;
        return std::nullopt;
    }

    std::string get_or(std::string_view key, std::string fallback) const { return get(key).value_or(std::move(fallback)); }

    template <typename T>
    T number_or(std::string_view key, T fallback) const {
        auto v = get(key);
        if (!v || v->empty()) return fallback;
        T out{};
        auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc{} || ptr != v->data() + v->size()) {
            throw Error(Errc::InvalidArgument, std::string(key) + " is not a valid number: " + *v);
        }
        return out;
    }

    bool flag_or(std::string_view key, bool fallback) const {
        auto v = get(key);
        if (!v || v->empty()) return fallback;
        if (*v == "1" || *v == "true" || *v == "TRUE" || *v == "True" || *v == "yes" || *v == "on") return true;
        if (*v == "0" || *v == "false" || *v == "FALSE" || *v == "False" || *v == "no" || *v == "off") return false;
        throw Error(Errc::InvalidArgument, std::string(key) + " is not a boolean: " + *v);
    }

private:
    EnvMap file_;
    bool process_ = true;
};

}  // namespace drs
