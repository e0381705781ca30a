#pragma once

#include <string>
#include <string_view>

#include "drs/error.hpp"

namespace drs {

struct BaseUrl {
    std::string origin;       // scheme://host[:port]
    std::string path_prefix;  // "" or "/something" without trailing slash
};

/// Splits "http://host:8000/drs-api/" into origin and path prefix.
inline BaseUrl split_base_url(std::string_view url) {
    std::size_t scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) {
        throw Error(Errc::InvalidArgument, "URL needs an http:// or https:// scheme: " + std::string(url));
    }
    std::string_view scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw Error(Errc::InvalidArgument, "unsupported URL scheme: " + std::string(scheme));
    }
    std::size_t path_start = url.find('/', scheme_end + 3);
    BaseUrl out;
    out.origin = std::string(url.substr(0, path_start));
    if (path_start != std::string_view::npos) {
        std::string_view path = url.substr(path_start);
        while (!path.empty() && path.back() == '/') path.remove_suffix(1);
        out.path_prefix = std::string(path);
    }
    if (out.origin.size() <= scheme_end + 3) throw Error(Errc::InvalidArgument, "URL has no host: " + std::string(url));
    return out;
}

}  // namespace drs
