#pragma once

#include <string>

#include <httplib.h>

#include "jppo/llm_bridge.hpp"

namespace jppo::llm_bridge {

/// Plain-HTTP transport over cpp-httplib.
inline Transport http_transport()
{
    return [](const HttpRequest& req) -> HttpResponse {
        const Url u = parse_url(req.url);
        httplib::Client cli(u.host, u.port);
        const auto secs = static_cast<time_t>(req.timeout_s);
        const auto usecs = static_cast<time_t>((req.timeout_s - static_cast<double>(secs)) * 1e6);
        cli.set_connection_timeout(secs, usecs);
        cli.set_read_timeout(secs, usecs);
        cli.set_write_timeout(secs, usecs);
        httplib::Headers headers;
        std::string content_type = "application/json";
        for (const auto& [k, v] : req.headers) {
            if (k == "Content-Type") {
                content_type = v;
            } else {
                headers.emplace(k, v);
            }
        }
        auto res = cli.Post(u.path, headers, req.body, content_type);
        if (!res) {
            const auto err = res.error();
            if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout) {
                throw BridgeTimeout("request to " + req.url + " timed out or was cut off: " + httplib::to_string(err));
            }
            throw BridgeError("request to " + req.url + " failed: " + httplib::to_string(err), true);
        }
        return HttpResponse{res->status, res->body};
    };
}

} // namespace jppo::llm_bridge
