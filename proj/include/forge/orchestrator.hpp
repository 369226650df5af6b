#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/agent.hpp"
#include "forge/corpus.hpp"
#include "forge/harness.hpp"
#include "forge/taskpkg.hpp"
#include "forge/workspace.hpp"

namespace forge::orchestrator {

enum class Stage { S1_collect, S2_generate, S3_build, S4_vuln_verify, S5_fix_verify, S6_holistic, DONE };
std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);
inline constexpr int kStageCount = 6;

enum class Terminal { Reproduced, Failed, Irreproducible };
std::string_view to_string(Terminal t);
Terminal terminal_from_string(std::string_view s);

struct Event {
    std::string time;  // UTC, ISO-8601 with milliseconds
    Stage stage = Stage::S1_collect;
    std::string kind;  // stage_enter | invoke | resume | response | gate | retry | feedback | agent_failure | terminal | resumed
    std::optional<Role> role;
    std::string detail;
};

struct PipelineState {
    std::string cve_id;
    Stage stage = Stage::S1_collect;
    std::map<Stage, int> retries;
    std::optional<std::pair<Role, std::string>> paused_session;
    std::optional<Terminal> terminal;
    std::string terminal_reason;
    std::vector<Event> event_log;
    agent::UsageTotals usage;
    std::vector<taskpkg::AccessEntry> access;  // kept in access.jsonl, not state.json

    int retries_at(Stage s) const;
    // Stages entered, in order.
    std::vector<Stage> stages_visited() const;
};

std::string state_to_json(const PipelineState& state);
PipelineState state_from_json(std::string_view json_text);  // throws ConfigError
std::string event_to_json(const Event& e);

struct FeedbackTicket {
    Role from_role = Role::validator;
    std::string target_file;
    Role owner_role = Role::builder;
    std::string reason;
};

// Resolves the owner of a pause target. Throws UnownedFile.
FeedbackTicket make_ticket(Role from_role, const agent::AgentResponse& pause);

// The three gate predicates as seen by a pipeline.
class GateRunner {
public:
    virtual ~GateRunner() = default;
    virtual harness::GateVerdict env_ready(const std::filesystem::path& pkg_root, const std::string& instance_id) = 0;
    virtual harness::GateVerdict fix_ready(const std::filesystem::path& pkg_root, const std::string& instance_id) = 0;
    virtual harness::GateVerdict cve_ready(const std::filesystem::path& pkg_root, const std::string& instance_id) = 0;
};

// Each call runs on a fresh environment from `executor`.
class ExecutorGates : public GateRunner {
public:
    ExecutorGates(harness::Executor& executor, harness::Timeouts timeouts = {})
        : executor_(executor), timeouts_(timeouts) {}
    harness::GateVerdict env_ready(const std::filesystem::path& pkg_root, const std::string& instance_id) override;
    harness::GateVerdict fix_ready(const std::filesystem::path& pkg_root, const std::string& instance_id) override;
    harness::GateVerdict cve_ready(const std::filesystem::path& pkg_root, const std::string& instance_id) override;

private:
    harness::Executor& executor_;
    harness::Timeouts timeouts_;
};

struct PipelineOptions {
    int max_retries = 3;
    int max_feedback_rounds = 5;  // per stage
    std::chrono::milliseconds agent_timeout{std::chrono::minutes(30)};
    std::optional<int> reproduce_score;  // digest header; computed from the default rules when unset
};

// Runs one CVE to a terminal state. `pipeline_dir` holds state.json,
// events.jsonl, access.jsonl, denials.jsonl and the package under
// workspace/. A directory whose state.json is already terminal is returned
// as is; a non-terminal one resumes at its recorded stage.
PipelineState run_pipeline(const corpus::CveRecord& record, agent::AgentBackend& backend, GateRunner& gates,
                           const std::filesystem::path& pipeline_dir, const PipelineOptions& options = {});

std::filesystem::path workspace_dir(const std::filesystem::path& pipeline_dir);

struct BatchOptions {
    int workers = 20;
    std::filesystem::path run_dir;  // pipelines go to run_dir/<cve-id>
    PipelineOptions pipeline;
};

// Pipelines never throw out of the batch; an unexpected exception becomes
// a Failed state for that CVE only.
std::map<std::string, PipelineState> run_batch(const std::vector<corpus::CveRecord>& records,
                                               agent::AgentBackend& backend, GateRunner& gates,
                                               const BatchOptions& options);

}  // namespace forge::orchestrator
