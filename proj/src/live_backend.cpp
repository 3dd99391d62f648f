#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include "codeopt/oracle.hpp"

namespace codeopt {

LiveBackendConfig LiveBackendConfig::from_env(std::filesystem::path template_dir) {
    LiveBackendConfig cfg;
    const char* url = std::getenv("ENGINE_ORACLE_URL");
    const char* key = std::getenv("ENGINE_ORACLE_KEY");
    if (url == nullptr || *url == '\0') {
        throw Error(ErrorCode::ConfigError, "ENGINE_ORACLE_URL is not set");
    }
    cfg.url = url;
    cfg.api_key = key == nullptr ? "" : key;
    cfg.template_dir = std::move(template_dir);
    return cfg;
}

namespace {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

Endpoint split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::ConfigError, "oracle URL needs a scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

LiveBackend::LiveBackend(LiveBackendConfig cfg)
    : cfg_(std::move(cfg)), templates_(cfg_.template_dir) {
    split_url(cfg_.url);
}

nlohmann::json LiveBackend::build_body(const OracleRequest& request) const {
    nlohmann::json body;
    body["model"] = cfg_.model;
    body["temperature"] = cfg_.temperature;
    body["messages"] = nlohmann::json::array({
        {{"role", "system"},
         {"content", "role: " + std::string(to_string(request.role))}},
        {{"role", "user"}, {"content", templates_.render(request)}},
    });
    return body;
}

OracleResponse LiveBackend::complete(const OracleRequest& request) {
    if (request.role == OracleRole::Embed) {
        // Similarity must stay reproducible, so embeddings never go over the wire.
        auto it = request.context.find("text");
        OracleResponse resp;
        resp.embedding = hash_embedding(it == request.context.end() ? "" : it->second, cfg_.embed);
        return resp;
    }

    const auto ep = split_url(cfg_.url);
    httplib::Client client(ep.origin);
    const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
    client.set_connection_timeout(secs);
    client.set_read_timeout(secs);
    client.set_write_timeout(secs);
    if (!cfg_.api_key.empty()) client.set_bearer_token_auth(cfg_.api_key);

    const auto body = build_body(request).dump();
    auto res = client.Post(ep.path, body, "application/json");
    if (!res) {
        throw TransientBackendError("request failed: " + httplib::to_string(res.error()));
    }
    if (res->status == 429 || res->status >= 500) {
        throw TransientBackendError("HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
        throw BackendUnavailable(1, "HTTP " + std::to_string(res->status) + ": " + res->body);
    }

    OracleResponse out;
    try {
        auto j = nlohmann::json::parse(res->body);
        out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        out.structured = std::move(j);
    } catch (const nlohmann::json::exception& e) {
        throw TransientBackendError(std::string("malformed completion: ") + e.what());
    }
    return out;
}

}  // namespace codeopt
