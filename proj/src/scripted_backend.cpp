#include <algorithm>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "forge/agent.hpp"
#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge::agent {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

Signal signal_from(const std::string& s) {
    if (s == "continue") return Signal::continue_;
    if (s == "error") return Signal::error;
    if (s == "pause") return Signal::pause;
    throw ConfigError(fmt::format("scenario: unknown signal `{}`", s));
}

ScriptStep parse_step(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("scenario: each step must be an object");
    ScriptStep s;
    s.role = role_from_string(j.at("role").get<std::string>());
    if (j.contains("write"))
        for (const auto& [k, v] : j.at("write").items()) s.write[k] = v.get<std::string>();
    if (j.contains("copy")) {
        for (const auto& c : j.at("copy")) {
            std::string from, to;
            if (c.is_array() && c.size() == 2) {
                from = c[0].get<std::string>();
                to = c[1].get<std::string>();
            } else {
                from = c.at("from").get<std::string>();
                to = c.value("to", std::string{});
            }
            fs::path src(from);
            if (src.is_relative()) src = base_dir / src;
            s.copy.emplace_back(src.lexically_normal().string(), to);
        }
    }
    if (j.contains("read")) s.read = j.at("read").get<std::vector<std::string>>();
    if (j.contains("remove")) s.remove = j.at("remove").get<std::vector<std::string>>();
    if (j.contains("response")) {
        const auto& r = j.at("response");
        AgentResponse resp;
        if (r.is_string()) {
            resp.signal = signal_from(r.get<std::string>());
        } else {
            resp.signal = signal_from(r.at("signal").get<std::string>());
            if (r.contains("reason")) resp.reason = r.at("reason").get<std::string>();
            if (r.contains("file")) resp.file = r.at("file").get<std::string>();
        }
        s.response = resp;
    }
    if (j.contains("raw_response")) s.raw_response = j.at("raw_response").get<std::string>();
    s.crash = j.value("crash", false);
    s.delay_ms = j.value("delay_ms", 0);
    if (j.contains("turns")) s.turns = j.at("turns").get<std::int64_t>();
    if (j.contains("tokens")) s.tokens = j.at("tokens").get<std::int64_t>();
    return s;
}

std::vector<ScriptStep> parse_steps(const json& arr, const fs::path& base_dir) {
    if (!arr.is_array()) throw ConfigError("scenario: steps must be an array");
    std::vector<ScriptStep> out;
    for (const auto& j : arr) out.push_back(parse_step(j, base_dir));
    return out;
}

void copy_into(taskpkg::Workspace& ws, const fs::path& src, const std::string& dst) {
    if (fs::is_directory(src)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(src))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            const auto rel = fs::relative(f, src).generic_string();
            ws.write(dst.empty() ? rel : dst + "/" + rel, text::read_file(f));
        }
    } else if (fs::is_regular_file(src)) {
        ws.write(dst.empty() ? src.filename().string() : dst, text::read_file(src));
    } else {
        throw ConfigError(fmt::format("scenario: copy source {} does not exist", src.string()));
    }
}

// Denied operations are already in the access log; a scripted agent that
// hits one simply carries on, as a real agent would after a refusal.
template <typename F>
void attempt(F&& f) {
    try {
        f();
    } catch (const AccessDenied&) {
    }
}

}  // namespace

Scenario Scenario::parse(std::string_view json_text, const fs::path& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("scenario: {}", e.what()));
    }
    Scenario sc;
    try {
        if (j.is_array()) {
            sc.steps = parse_steps(j, base_dir);
            return sc;
        }
        if (j.contains("steps")) sc.steps = parse_steps(j.at("steps"), base_dir);
        if (j.contains("pipelines"))
            for (const auto& [id, steps] : j.at("pipelines").items()) sc.pipelines[id] = parse_steps(steps, base_dir);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("scenario: {}", e.what()));
    }
    return sc;
}

Scenario Scenario::load(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw ConfigError(fmt::format("scenario file {} not found", path.string()));
    return parse(text::read_file(path), path.parent_path());
}

ScriptedBackend::ScriptedBackend(Scenario scenario) : scenario_(std::move(scenario)) {}

Usage ScriptedBackend::run(const AgentInvocation& inv, std::chrono::steady_clock::time_point deadline) {
    const ScriptStep* step = nullptr;
    {
        std::lock_guard lock(mu_);
        const auto pit = scenario_.pipelines.find(inv.pipeline_id);
        const auto& steps = pit != scenario_.pipelines.end() ? pit->second : scenario_.steps;
        auto& cur = cursor_[{inv.pipeline_id, inv.role}];
        std::size_t seen = 0;
        for (const auto& s : steps) {
            if (s.role != inv.role) continue;
            if (seen++ == cur) {
                step = &s;
                ++cur;
                break;
            }
        }
    }
    auto& ws = *inv.workspace;
    if (!step) {
        ws.write(taskpkg::files::agent_res, render_agent_response({}));
        return {};
    }
    if (step->delay_ms > 0) {
        const auto until = std::chrono::steady_clock::now() + std::chrono::milliseconds(step->delay_ms);
        // overshooting the deadline by a little is enough to trigger a timeout
        std::this_thread::sleep_until(std::min(until, deadline + std::chrono::milliseconds(5)));
    }
    if (step->crash) throw BackendCrash(fmt::format("scripted crash in {}", to_string(inv.role)));

    for (const auto& p : step->read) attempt([&] { ws.read(p); });
    for (const auto& [from, to] : step->copy) attempt([&] { copy_into(ws, from, to); });
    for (const auto& [p, content] : step->write) attempt([&] { ws.write(p, content); });
    for (const auto& p : step->remove) attempt([&] { ws.remove(p); });

    if (step->raw_response) ws.write(taskpkg::files::agent_res, *step->raw_response);
    else ws.write(taskpkg::files::agent_res, render_agent_response(step->response.value_or(AgentResponse{})));
    return {step->turns, step->tokens};
}

}  // namespace forge::agent
