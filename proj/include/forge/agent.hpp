#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/taskpkg.hpp"
#include "forge/workspace.hpp"

namespace forge::agent {

enum class Signal { continue_, error, pause };
std::string_view to_string(Signal s);

struct AgentResponse {
    Signal signal = Signal::continue_;
    std::optional<std::string> reason;
    std::optional<std::string> file;
    std::int64_t turns = 0;
    std::int64_t tokens = 0;
    bool metered = false;  // turns/tokens came from a real meter

    friend bool operator==(const AgentResponse&, const AgentResponse&) = default;
};

// agent-res.xml: root <agent-res>, children <signal> (required), <reason>,
// <file>, optional <turns>/<tokens>; unknown elements are ignored.
// Throws MalformedResponse or InvalidSignal; never returns a value that
// violates the pause/error payload invariants.
AgentResponse parse_agent_response(std::string_view raw);
std::string render_agent_response(const AgentResponse& response);

struct Usage {
    std::optional<std::int64_t> turns;
    std::optional<std::int64_t> tokens;
};

struct AgentInvocation {
    std::string pipeline_id;
    Role role = Role::analyzer;
    std::string session_id;
    taskpkg::Workspace* workspace = nullptr;
    std::vector<std::string> briefing;
    bool resume = false;
    std::string message;  // feedback or resume notification; empty on first activation
};

// A runner for one agent session step. Implementations perform all file
// work through `invocation.workspace` and finish by writing agent-res.xml.
// Must tolerate concurrent calls for different pipelines.
class AgentBackend {
public:
    virtual ~AgentBackend() = default;
    virtual Usage run(const AgentInvocation& invocation, std::chrono::steady_clock::time_point deadline) = 0;
    virtual std::string name() const = 0;
};

struct UsageTotals {
    std::int64_t turns = 0;
    std::int64_t tokens = 0;
    int invocations = 0;
    bool fully_metered = true;
};

// Per-pipeline session bookkeeping and the invoke/resume operations.
class AgentSessions {
public:
    AgentSessions(AgentBackend& backend, std::filesystem::path pkg_root, std::string pipeline_id,
                  taskpkg::AccessLog& log, std::chrono::milliseconds timeout);

    // New activation of `role`, or a follow-up in an existing session when
    // `session_id` is given (throws UnknownSession for ids never issued).
    // Errors: BackendTimeout, BackendCrash, MalformedResponse, InvalidSignal.
    AgentResponse invoke(Role role, std::string message = {}, std::optional<std::string> session_id = {});

    // Continues a session that paused, with a notification that the
    // requested revision is done. Single use per pause.
    AgentResponse resume(const std::string& session_id, std::string message = {});

    // Latest session issued for a role.
    std::optional<std::string> session_of(Role role) const;
    std::optional<Role> role_of(const std::string& session_id) const;

    const UsageTotals& totals() const { return totals_; }

private:
    AgentResponse run(Role role, const std::string& session_id, bool resume, std::string message);

    AgentBackend& backend_;
    std::filesystem::path root_;
    std::string pipeline_id_;
    taskpkg::AccessLog& log_;
    std::chrono::milliseconds timeout_;
    int next_id_ = 1;
    std::map<std::string, Role> issued_;
    std::map<std::string, bool> paused_;
    std::map<Role, std::string> latest_;
    UsageTotals totals_;
};

// -------------------------------------------------------------------------
// Scripted mock backend

struct ScriptStep {
    Role role = Role::analyzer;
    std::map<std::string, std::string> write;                  // path -> content
    std::vector<std::pair<std::string, std::string>> copy;     // (host source, package path); dirs recurse
    std::vector<std::string> read;
    std::vector<std::string> remove;
    std::optional<AgentResponse> response;                     // default: continue
    std::optional<std::string> raw_response;                   // written verbatim instead
    bool crash = false;
    int delay_ms = 0;
    std::optional<std::int64_t> turns;
    std::optional<std::int64_t> tokens;
};

struct Scenario {
    std::vector<ScriptStep> steps;                              // shared by every pipeline
    std::map<std::string, std::vector<ScriptStep>> pipelines;  // per-pipeline replacement scripts

    // JSON scenario file; `copy` sources resolve against `base_dir`.
    static Scenario parse(std::string_view json_text, const std::filesystem::path& base_dir);
    static Scenario load(const std::filesystem::path& path);
};

// Replays a scenario: each (pipeline, role) consumes its role's steps in
// order; once exhausted the role answers `continue` without side effects.
class ScriptedBackend : public AgentBackend {
public:
    explicit ScriptedBackend(Scenario scenario);
    Usage run(const AgentInvocation& invocation, std::chrono::steady_clock::time_point deadline) override;
    std::string name() const override { return "mock"; }

private:
    Scenario scenario_;
    std::mutex mu_;
    std::map<std::pair<std::string, Role>, std::size_t> cursor_;
};

// -------------------------------------------------------------------------
// Remote backend over HTTP/JSON

struct HttpBackendConfig {
    std::string endpoint;  // http://host:port/path
    std::string token;
    std::chrono::seconds timeout{1800};

    // FORGE_AGENT_ENDPOINT, FORGE_AGENT_TOKEN, FORGE_AGENT_TIMEOUT_S
    static HttpBackendConfig from_env();
};

class HttpBackend : public AgentBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    Usage run(const AgentInvocation& invocation, std::chrono::steady_clock::time_point deadline) override;
    std::string name() const override { return "http"; }

private:
    HttpBackendConfig config_;
    std::string base_;
    std::string path_;
};

}  // namespace forge::agent
