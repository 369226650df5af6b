#include "forge/orchestrator.hpp"

#include <array>
#include <ctime>
#include <fstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "forge/error.hpp"
#include "forge/text.hpp"
#include "forge/triage.hpp"
#include "forge/worker_pool.hpp"

namespace forge::orchestrator {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 7> kStageNames{"S1_collect",    "S2_generate",   "S3_build",   "S4_vuln_verify",
                                                      "S5_fix_verify", "S6_holistic", "DONE"};
constexpr std::array<std::string_view, 3> kTerminalNames{"Reproduced", "Failed", "Irreproducible"};

std::string now_iso() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    return fmt::format("{}.{:03d}Z", buf, ms);
}

int stage_number(Stage s) { return static_cast<int>(s) + 1; }

}  // namespace

std::string_view to_string(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

Stage stage_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kStageNames.size(); ++i)
        if (kStageNames[i] == s) return static_cast<Stage>(i);
    throw ConfigError(fmt::format("unknown stage `{}`", s));
}

std::string_view to_string(Terminal t) { return kTerminalNames[static_cast<std::size_t>(t)]; }

Terminal terminal_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kTerminalNames.size(); ++i)
        if (kTerminalNames[i] == s) return static_cast<Terminal>(i);
    throw ConfigError(fmt::format("unknown terminal state `{}`", s));
}

int PipelineState::retries_at(Stage s) const {
    auto it = retries.find(s);
    return it == retries.end() ? 0 : it->second;
}

std::vector<Stage> PipelineState::stages_visited() const {
    std::vector<Stage> out;
    for (const auto& e : event_log)
        if (e.kind == "stage_enter" && (out.empty() || out.back() != e.stage)) out.push_back(e.stage);
    return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json event_json(const Event& e) {
    json j = {{"time", e.time}, {"stage", std::string(to_string(e.stage))}, {"kind", e.kind}, {"detail", e.detail}};
    j["role"] = e.role ? json(std::string(forge::to_string(*e.role))) : json(nullptr);
    return j;
}

Event event_from(const json& j) {
    Event e;
    e.time = j.at("time").get<std::string>();
    e.stage = stage_from_string(j.at("stage").get<std::string>());
    e.kind = j.at("kind").get<std::string>();
    e.detail = j.value("detail", std::string{});
    if (j.contains("role") && !j.at("role").is_null()) e.role = role_from_string(j.at("role").get<std::string>());
    return e;
}

}  // namespace

std::string event_to_json(const Event& e) { return event_json(e).dump(); }

std::string state_to_json(const PipelineState& s) {
    json retries = json::object();
    for (const auto& [stage, n] : s.retries) retries[std::string(to_string(stage))] = n;
    json events = json::array();
    for (const auto& e : s.event_log) events.push_back(event_json(e));
    json j = {
        {"cve_id", s.cve_id},
        {"stage", std::string(to_string(s.stage))},
        {"retries", retries},
        {"terminal", s.terminal ? json(std::string(to_string(*s.terminal))) : json(nullptr)},
        {"terminal_reason", s.terminal_reason},
        {"usage",
         {{"turns", s.usage.turns},
          {"tokens", s.usage.tokens},
          {"invocations", s.usage.invocations},
          {"fully_metered", s.usage.fully_metered}}},
        {"event_log", events},
    };
    j["paused_session"] = s.paused_session ? json{{"role", std::string(forge::to_string(s.paused_session->first))},
                                                  {"session_id", s.paused_session->second}}
                                           : json(nullptr);
    return j.dump(2);
}

PipelineState state_from_json(std::string_view text) {
    try {
        const auto j = json::parse(text);
        PipelineState s;
        s.cve_id = j.at("cve_id").get<std::string>();
        s.stage = stage_from_string(j.at("stage").get<std::string>());
        for (const auto& [k, v] : j.at("retries").items()) s.retries[stage_from_string(k)] = v.get<int>();
        if (!j.at("terminal").is_null()) s.terminal = terminal_from_string(j.at("terminal").get<std::string>());
        s.terminal_reason = j.value("terminal_reason", std::string{});
        if (j.contains("paused_session") && !j.at("paused_session").is_null()) {
            const auto& p = j.at("paused_session");
            s.paused_session = {role_from_string(p.at("role").get<std::string>()), p.at("session_id").get<std::string>()};
        }
        if (j.contains("usage")) {
            const auto& u = j.at("usage");
            s.usage.turns = u.value("turns", std::int64_t{0});
            s.usage.tokens = u.value("tokens", std::int64_t{0});
            s.usage.invocations = u.value("invocations", 0);
            s.usage.fully_metered = u.value("fully_metered", true);
        }
        for (const auto& e : j.at("event_log")) s.event_log.push_back(event_from(e));
        if (s.terminal.has_value() != (s.stage == Stage::DONE))
            throw ConfigError("state.json: terminal and stage DONE must go together");
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("state.json: {}", e.what()));
    } catch (const UnknownRole& e) {
        throw ConfigError(fmt::format("state.json: {}", e.what()));
    }
}

// ---------------------------------------------------------------------------

FeedbackTicket make_ticket(Role from_role, const agent::AgentResponse& pause) {
    const std::string raw = pause.file.value_or("");
    const auto path = text::normalize_relative(raw);
    const auto owner = path.empty() ? std::nullopt : taskpkg::owner_of(path);
    if (!owner) throw UnownedFile(fmt::format("pause targets `{}`, which no role owns", raw));
    if (*owner == from_role)
        throw UnownedFile(fmt::format("{} paused on its own file `{}`", forge::to_string(from_role), path));
    return {from_role, path, *owner, pause.reason.value_or("")};
}

harness::GateVerdict ExecutorGates::env_ready(const fs::path& pkg_root, const std::string& id) {
    return harness::check_env_ready(executor_, pkg_root, id, timeouts_);
}
harness::GateVerdict ExecutorGates::fix_ready(const fs::path& pkg_root, const std::string& id) {
    return harness::check_fix_ready(executor_, pkg_root, id, timeouts_);
}
harness::GateVerdict ExecutorGates::cve_ready(const fs::path& pkg_root, const std::string& id) {
    return harness::check_cve_ready(executor_, pkg_root, id, timeouts_);
}

fs::path workspace_dir(const fs::path& pipeline_dir) { return pipeline_dir / "workspace"; }

// ---------------------------------------------------------------------------
// pipeline

namespace {

enum class Exchange { ok, agent_failure, terminal };

class Pipeline {
public:
    Pipeline(const corpus::CveRecord& rec, agent::AgentBackend& backend, GateRunner& gates, fs::path dir,
             const PipelineOptions& opt)
        : rec_(rec), gates_(gates), dir_(std::move(dir)), ws_(workspace_dir(dir_)), opt_(opt),
          sessions_(backend, ws_, rec.cve_id, log_, opt.agent_timeout) {}

    PipelineState run() {
        fs::create_directories(ws_);
        const auto state_file = dir_ / "state.json";
        if (fs::is_regular_file(state_file)) {
            st_ = state_from_json(text::read_file(state_file));
            if (st_.terminal) return st_;
            st_.paused_session.reset();
            emit("resumed", std::nullopt, fmt::format("continuing at {}", to_string(st_.stage)));
        } else {
            st_.cve_id = rec_.cve_id;
            const int score = opt_.reproduce_score ? *opt_.reproduce_score
                                                   : triage::reproduce_score(rec_, triage::default_rules()).s_base;
            text::write_file(ws_ / fmt::format("{}.md", rec_.cve_id), corpus::render_digest(rec_, score).markdown);
        }

        bool go = true;
        for (Stage s = st_.stage; go && s != Stage::DONE; s = static_cast<Stage>(static_cast<int>(s) + 1)) {
            enter(s);
            switch (s) {
                case Stage::S1_collect: go = generation(Role::analyzer); break;
                case Stage::S2_generate: go = generation(Role::generator); break;
                case Stage::S3_build: go = generation(Role::builder); break;
                case Stage::S4_vuln_verify: go = verification(Role::validator, harness::Gate::env_ready); break;
                case Stage::S5_fix_verify: go = verification(Role::solver, harness::Gate::fix_ready); break;
                case Stage::S6_holistic: go = holistic(); break;
                case Stage::DONE: break;
            }
        }
        return st_;
    }

    void fail_unexpected(const std::string& what) {
        if (st_.terminal) return;
        finish(Terminal::Failed, "unexpected error: " + what);
    }

private:
    void save() {
        st_.usage = sessions_.totals();
        const auto tmp = dir_ / "state.json.tmp";
        text::write_file(tmp, state_to_json(st_));
        fs::rename(tmp, dir_ / "state.json");
        std::ofstream access(dir_ / "access.jsonl", std::ios::trunc);
        for (const auto& a : log_.entries())
            access << json{{"role", std::string(forge::to_string(a.role))}, {"op", a.op}, {"path", a.path}}.dump()
                   << "\n";
        std::ofstream denied(dir_ / "denials.jsonl", std::ios::trunc);
        for (const auto& a : log_.denials())
            denied << json{{"role", std::string(forge::to_string(a.role))}, {"op", a.op}, {"path", a.path}}.dump()
                   << "\n";
    }

    void emit(std::string kind, std::optional<Role> role, std::string detail) {
        Event e{now_iso(), st_.stage, std::move(kind), role, std::move(detail)};
        std::ofstream(dir_ / "events.jsonl", std::ios::app) << event_to_json(e) << "\n";
        st_.event_log.push_back(std::move(e));
        st_.access = log_.entries();
        save();
    }

    void enter(Stage s) {
        st_.stage = s;
        emit("stage_enter", std::nullopt, "");
    }

    void finish(Terminal t, std::string reason) {
        st_.terminal = t;
        st_.terminal_reason = reason;
        st_.stage = Stage::DONE;
        emit("terminal", std::nullopt, fmt::format("{}: {}", to_string(t), reason));
    }

    bool consume_retry() {
        auto& n = st_.retries[st_.stage];
        if (n >= opt_.max_retries) return false;
        ++n;
        emit("retry", std::nullopt, fmt::format("attempt {} of {}", n, opt_.max_retries));
        return true;
    }

    void log_response(Role role, const agent::AgentResponse& r) {
        std::string detail(agent::to_string(r.signal));
        if (r.file) detail += " file=" + *r.file;
        if (r.reason) detail += " reason=" + *r.reason;
        emit("response", role, detail);
    }

    // One agent activation including any pause/feedback detours.
    Exchange exchange(Role role, const std::string& message, agent::AgentResponse& out) {
        const auto session = sessions_.session_of(role);
        try {
            emit("invoke", role, session ? "follow-up in " + *session : "new session");
            out = sessions_.invoke(role, message, session);
        } catch (const Error& e) {
            emit("agent_failure", role, fmt::format("{}: {}", e.kind(), e.what()));
            last_failure_ = fmt::format("{}: {}", e.kind(), e.what());
            return Exchange::agent_failure;
        }
        log_response(role, out);

        int rounds = 0;
        while (out.signal == agent::Signal::pause) {
            const auto sid = *sessions_.session_of(role);
            FeedbackTicket ticket;
            try {
                ticket = make_ticket(role, out);
            } catch (const UnownedFile& e) {
                // an unusable pause is handled like a malformed response
                emit("agent_failure", role, fmt::format("MalformedResponse: {}", e.what()));
                last_failure_ = fmt::format("MalformedResponse: {}", e.what());
                return Exchange::agent_failure;
            }
            if (++rounds > opt_.max_feedback_rounds) {
                finish(Terminal::Failed, fmt::format("more than {} feedback rounds in {}", opt_.max_feedback_rounds,
                                                     to_string(st_.stage)));
                return Exchange::terminal;
            }
            st_.paused_session = {role, sid};
            emit("feedback", role,
                 fmt::format("{} -> {}: {}", ticket.target_file, forge::to_string(ticket.owner_role), ticket.reason));

            agent::AgentResponse owner_resp;
            try {
                const auto owner_session = sessions_.session_of(ticket.owner_role);
                emit("invoke", ticket.owner_role, owner_session ? "follow-up in " + *owner_session : "new session");
                owner_resp = sessions_.invoke(
                    ticket.owner_role,
                    fmt::format("Revision requested by {} for {}: {}", forge::to_string(role), ticket.target_file,
                                ticket.reason),
                    owner_session);
            } catch (const Error& e) {
                emit("agent_failure", ticket.owner_role, fmt::format("{}: {}", e.kind(), e.what()));
                finish(Terminal::Failed, fmt::format("{} could not revise {}: {}", forge::to_string(ticket.owner_role),
                                                     ticket.target_file, e.what()));
                return Exchange::terminal;
            }
            log_response(ticket.owner_role, owner_resp);
            if (owner_resp.signal != agent::Signal::continue_) {
                finish(Terminal::Failed,
                       fmt::format("{} answered {} to the revision of {}", forge::to_string(ticket.owner_role),
                                   agent::to_string(owner_resp.signal), ticket.target_file));
                return Exchange::terminal;
            }
            st_.paused_session.reset();
            try {
                emit("resume", role, sid);
                out = sessions_.resume(sid, fmt::format("{} was revised by {}.", ticket.target_file,
                                                        forge::to_string(ticket.owner_role)));
            } catch (const Error& e) {
                emit("agent_failure", role, fmt::format("{}: {}", e.kind(), e.what()));
                last_failure_ = fmt::format("{}: {}", e.kind(), e.what());
                return Exchange::agent_failure;
            }
            log_response(role, out);
        }
        return Exchange::ok;
    }

    bool irreproducible(Role role, const agent::AgentResponse& r) {
        finish(Terminal::Irreproducible,
               fmt::format("determined as irreproducible by {}: {}", forge::to_string(role), r.reason.value_or("")));
        return false;
    }

    // S1..S3: agent produces files, then the static stage gate.
    bool generation(Role role) {
        const int gate_stage = stage_number(st_.stage);
        std::string message;
        while (true) {
            agent::AgentResponse r;
            const auto ex = exchange(role, message, r);
            if (ex == Exchange::terminal) return false;
            if (ex == Exchange::ok) {
                if (r.signal == agent::Signal::error) return irreproducible(role, r);
                const auto report = taskpkg::validate_stage_outputs(ws_, gate_stage);
                message = describe(report);
                emit("gate", std::nullopt, fmt::format("stage {} outputs: {}", gate_stage, message));
                if (report.passed) return true;
            } else {
                message = "The previous attempt failed: " + last_failure_;
            }
            if (!consume_retry()) {
                finish(Terminal::Failed, fmt::format("{} failed after {} retries: {}", to_string(st_.stage),
                                                     opt_.max_retries, message));
                return false;
            }
        }
    }

    static std::string describe(const taskpkg::StageGateReport& r) {
        if (r.passed) return "pass";
        std::string out = "fail";
        if (!r.missing_files.empty()) out += fmt::format("; missing or empty: {}", fmt::join(r.missing_files, ", "));
        for (const auto& [file, msg] : r.schema_errors) out += fmt::format("; {}: {}", file, msg);
        return out;
    }

    harness::GateVerdict gate(harness::Gate g) {
        try {
            switch (g) {
                case harness::Gate::env_ready: return gates_.env_ready(ws_, rec_.cve_id);
                case harness::Gate::fix_ready: return gates_.fix_ready(ws_, rec_.cve_id);
                case harness::Gate::cve_ready: return gates_.cve_ready(ws_, rec_.cve_id);
            }
        } catch (const std::exception& e) {
            harness::GateVerdict v;
            v.gate = g;
            v.detail = fmt::format("gate error: {}", e.what());
            return v;
        }
        return {};
    }

    harness::GateVerdict run_gate(harness::Gate g) {
        auto v = gate(g);
        emit("gate", std::nullopt, fmt::format("{} {}: {}", harness::to_string(g), v.pass ? "pass" : "fail", v.detail));
        return v;
    }

    // S4/S5: the gate is checked first; the agent repairs after each failure.
    bool verification(Role role, harness::Gate g) {
        while (true) {
            const auto v = run_gate(g);
            if (v.pass) return true;
            if (!consume_retry()) {
                finish(Terminal::Failed, fmt::format("{} still failing after {} retries: {}", harness::to_string(g),
                                                     opt_.max_retries, v.detail));
                return false;
            }
            agent::AgentResponse r;
            const auto ex = exchange(role, fmt::format("{} failed: {}", harness::to_string(g), v.detail), r);
            if (ex == Exchange::terminal) return false;
            if (ex == Exchange::ok && r.signal == agent::Signal::error) return irreproducible(role, r);
        }
    }

    // S6: end-to-end check, Checker review regardless, then the final check.
    bool holistic() {
        const auto first = run_gate(harness::Gate::cve_ready);
        std::string message = fmt::format("cve_ready {}: {}", first.pass ? "passed" : "failed", first.detail);
        while (true) {
            agent::AgentResponse r;
            const auto ex = exchange(Role::checker, message, r);
            if (ex == Exchange::terminal) return false;
            if (ex == Exchange::ok) {
                if (r.signal == agent::Signal::error) return irreproducible(Role::checker, r);
                break;
            }
            if (!consume_retry()) {
                finish(Terminal::Failed, fmt::format("checker failed after {} retries: {}", opt_.max_retries,
                                                     last_failure_));
                return false;
            }
            message = "The previous attempt failed: " + last_failure_;
        }
        const auto last = run_gate(harness::Gate::cve_ready);
        if (last.pass) finish(Terminal::Reproduced, "cve_ready passed on a fresh environment");
        else finish(Terminal::Failed, "final cve_ready failed: " + last.detail);
        return false;
    }

    const corpus::CveRecord& rec_;
    GateRunner& gates_;
    fs::path dir_;
    fs::path ws_;
    PipelineOptions opt_;
    taskpkg::AccessLog log_;
    agent::AgentSessions sessions_;
    PipelineState st_;
    std::string last_failure_;
};

}  // namespace

PipelineState run_pipeline(const corpus::CveRecord& record, agent::AgentBackend& backend, GateRunner& gates,
                           const fs::path& pipeline_dir, const PipelineOptions& options) {
    Pipeline p(record, backend, gates, pipeline_dir, options);
    try {
        return p.run();
    } catch (const std::exception& e) {
        p.fail_unexpected(e.what());
        return p.run();  // state is terminal now, so this just reloads it
    }
}

std::map<std::string, PipelineState> run_batch(const std::vector<corpus::CveRecord>& records,
                                               agent::AgentBackend& backend, GateRunner& gates,
                                               const BatchOptions& options) {
    std::vector<PipelineState> results(records.size());
    parallel_for(records.size(), options.workers, [&](std::size_t i) {
        const auto& rec = records[i];
        try {
            results[i] = run_pipeline(rec, backend, gates, options.run_dir / rec.cve_id, options.pipeline);
        } catch (const std::exception& e) {
            PipelineState s;
            s.cve_id = rec.cve_id;
            s.stage = Stage::DONE;
            s.terminal = Terminal::Failed;
            s.terminal_reason = fmt::format("unexpected error: {}", e.what());
            results[i] = std::move(s);
        }
    });
    std::map<std::string, PipelineState> out;
    for (auto& s : results) out.emplace(s.cve_id, std::move(s));
    return out;
}

}  // namespace forge::orchestrator
