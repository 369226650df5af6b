#include <cstdlib>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "forge/agent.hpp"
#include "forge/error.hpp"

namespace forge::agent {

using nlohmann::json;

HttpBackendConfig HttpBackendConfig::from_env() {
    HttpBackendConfig c;
    if (const char* v = std::getenv("FORGE_AGENT_ENDPOINT")) c.endpoint = v;
    if (const char* v = std::getenv("FORGE_AGENT_TOKEN")) c.token = v;
    if (const char* v = std::getenv("FORGE_AGENT_TIMEOUT_S")) {
        char* end = nullptr;
        const long n = std::strtol(v, &end, 10);
        if (end == v || *end != '\0' || n <= 0)
            throw ConfigError(fmt::format("FORGE_AGENT_TIMEOUT_S must be a positive integer, got `{}`", v));
        c.timeout = std::chrono::seconds(n);
    }
    return c;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    const std::string scheme = "http://";
    if (config_.endpoint.rfind(scheme, 0) != 0)
        throw ConfigError(fmt::format("agent endpoint must be an http:// URL, got `{}`", config_.endpoint));
    const auto slash = config_.endpoint.find('/', scheme.size());
    base_ = config_.endpoint.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : config_.endpoint.substr(slash);
    if (base_.size() == scheme.size()) throw ConfigError("agent endpoint has no host");
}

// One POST per invocation. The request carries the role's readable files;
// the service answers with the files to write or remove plus the raw
// agent-res.xml, all of which are applied through the scoped workspace.
Usage HttpBackend::run(const AgentInvocation& inv, std::chrono::steady_clock::time_point deadline) {
    auto& ws = *inv.workspace;
    json files = json::object();
    for (const auto& p : ws.list()) files[p] = ws.read(p);
    const json req = {
        {"pipeline_id", inv.pipeline_id}, {"role", std::string(to_string(inv.role))},
        {"session_id", inv.session_id},   {"resume", inv.resume},
        {"message", inv.message},         {"briefing", inv.briefing},
        {"files", files},
    };

    const auto remaining = std::chrono::duration_cast<std::chrono::seconds>(deadline - std::chrono::steady_clock::now());
    const auto wait = std::max<std::chrono::seconds>(std::min(remaining, config_.timeout), std::chrono::seconds(1));
    httplib::Client cli(base_);
    cli.set_connection_timeout(std::chrono::seconds(10));
    cli.set_read_timeout(wait);
    cli.set_write_timeout(std::chrono::seconds(60));
    httplib::Headers headers;
    if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);

    auto res = cli.Post(path_, headers, req.dump(), "application/json");
    if (!res) {
        if (res.error() == httplib::Error::Read && std::chrono::steady_clock::now() >= deadline)
            throw BackendTimeout(fmt::format("agent service did not answer within {} s", wait.count()));
        throw BackendCrash(fmt::format("agent service request failed: {}", httplib::to_string(res.error())));
    }
    if (res->status != 200)
        throw BackendCrash(fmt::format("agent service returned HTTP {}: {}", res->status, res->body.substr(0, 200)));

    json body;
    try {
        body = json::parse(res->body);
    } catch (const json::exception& e) {
        throw BackendCrash(fmt::format("agent service returned invalid JSON: {}", e.what()));
    }
    try {
        if (body.contains("writes"))
            for (const auto& [p, content] : body.at("writes").items()) {
                try {
                    ws.write(p, content.get<std::string>());
                } catch (const AccessDenied&) {
                }
            }
        if (body.contains("removes"))
            for (const auto& p : body.at("removes")) {
                try {
                    ws.remove(p.get<std::string>());
                } catch (const AccessDenied&) {
                }
            }
        if (body.contains("response")) ws.write(taskpkg::files::agent_res, body.at("response").get<std::string>());
        Usage u;
        if (body.contains("turns") && !body.at("turns").is_null()) u.turns = body.at("turns").get<std::int64_t>();
        if (body.contains("tokens") && !body.at("tokens").is_null()) u.tokens = body.at("tokens").get<std::int64_t>();
        return u;
    } catch (const json::exception& e) {
        throw BackendCrash(fmt::format("agent service reply has the wrong shape: {}", e.what()));
    }
}

}  // namespace forge::agent
