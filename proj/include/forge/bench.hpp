#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/agent.hpp"
#include "forge/harness.hpp"

namespace forge::bench {

struct TaskResult {
    std::string cve_id;
    bool solved = false;
    std::int64_t turns = 0;
    std::int64_t tokens = 0;
    bool metered = false;      // false: turns/tokens were not reported and are recorded as 0
    std::string publish_date;  // YYYY-MM-DD
    std::string language;
    std::string cwe_category;
    std::string detail;

    friend bool operator==(const TaskResult&, const TaskResult&) = default;
};

struct BenchReport {
    int total = 0;
    int solved = 0;
    double pass_rate_pct = 0;
    double mean_turns_success = 0;
    double mean_tokens_success = 0;
    double mean_turns_failed = 0;
    double mean_tokens_failed = 0;
    std::shared_ptr<BenchReport> pre;  // set together with post by partitioned reports
    std::shared_ptr<BenchReport> post;

    bool operator==(const BenchReport& o) const;
};

// 100 * solved / total rounded to 2 decimals. Throws EmptyResults.
double pass_rate(int solved, int total);
double pass_rate(const std::vector<TaskResult>& results);

// pre: publish_date <= release; post: the rest. Input order is kept.
// Throws ConfigError for a malformed date.
std::pair<std::vector<TaskResult>, std::vector<TaskResult>> partition_by_release(
    const std::vector<TaskResult>& results, std::string_view model_release);

// Aggregates without partitions; an empty set gives an all-zero report.
BenchReport summarize(const std::vector<TaskResult>& results);
BenchReport summarize(const std::vector<TaskResult>& results, std::string_view model_release);

struct Report {
    BenchReport overall;
    // group key (language | cwe_category | partition) -> group value -> report
    std::map<std::string, std::map<std::string, BenchReport>> groups;
    std::vector<TaskResult> results;

    bool operator==(const Report&) const = default;
};

// Group keys: language, cwe_category, partition (needs model_release).
Report build_report(const std::vector<TaskResult>& results, const std::vector<std::string>& group_keys,
                    std::optional<std::string> model_release = {});
std::string report_to_json(const Report& report);
Report report_from_json(std::string_view json_text);  // throws ConfigError
std::string report_to_text(const Report& report);

// ---------------------------------------------------------------------------
// Running agents against packages

struct BenchTask {
    std::filesystem::path root;
    std::string cve_id;
    std::string instruction;
    std::string publish_date;
    std::string language;
    std::string cwe_category;
};

// Reads task.yaml plus task-meta.json ({cve_id, publish_date, language,
// cwe_category}), falling back to the package's digest for missing fields.
BenchTask load_task(const std::filesystem::path& pkg_root);
// Every package directory (one holding task.yaml) below `dir`, sorted.
std::vector<BenchTask> load_tasks(const std::filesystem::path& dir);

struct Attempt {
    agent::Usage usage;
    std::string log_tail;
};

// An agent under evaluation. It works inside the running environment,
// which holds neither tests nor the reference solution.
class BenchAgent {
public:
    virtual ~BenchAgent() = default;
    virtual Attempt attempt(const BenchTask& task, harness::Environment& env,
                            std::chrono::steady_clock::time_point deadline) = 0;
    virtual std::string name() const = 0;
};

// Replays the package's own solution.sh.
class GoldenReplayAgent : public BenchAgent {
public:
    Attempt attempt(const BenchTask& task, harness::Environment& env, std::chrono::steady_clock::time_point) override;
    std::string name() const override { return "golden"; }
};

class NullAgent : public BenchAgent {
public:
    Attempt attempt(const BenchTask&, harness::Environment&, std::chrono::steady_clock::time_point) override {
        return {};
    }
    std::string name() const override { return "null"; }
};

// Runs fixed shell commands in the environment, one turn each.
class ScriptedShellAgent : public BenchAgent {
public:
    explicit ScriptedShellAgent(std::vector<std::string> commands) : commands_(std::move(commands)) {}
    Attempt attempt(const BenchTask& task, harness::Environment& env, std::chrono::steady_clock::time_point) override;
    std::string name() const override { return "scripted"; }

private:
    std::vector<std::string> commands_;
};

// Remote agent driven turn by turn over HTTP/JSON: each reply lists shell
// commands to run; their outputs go back in the next request until the
// service answers done.
class HttpBenchAgent : public BenchAgent {
public:
    explicit HttpBenchAgent(agent::HttpBackendConfig config, int max_turns = 100);
    Attempt attempt(const BenchTask& task, harness::Environment& env,
                    std::chrono::steady_clock::time_point deadline) override;
    std::string name() const override { return "http"; }

private:
    agent::HttpBackendConfig config_;
    int max_turns_;
};

struct BenchOptions {
    int workers = 20;
    harness::Timeouts timeouts;
    std::chrono::milliseconds agent_timeout{std::chrono::minutes(30)};
};

// Per task: fresh environment, env_ready guard, agent attempt, both suites.
// solved holds iff the fix_ready predicate holds afterwards. Errors become
// solved=false with detail. Results follow the order of `tasks`.
std::vector<TaskResult> run_benchmark(const std::vector<BenchTask>& tasks, BenchAgent& agent,
                                      harness::Executor& executor, const BenchOptions& options = {});

}  // namespace forge::bench
