#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/process.hpp"

namespace forge::harness {

enum class Suite { func, vuln };
std::string_view to_string(Suite s);

struct SuiteResult {
    Suite suite = Suite::func;
    int passed = 0;
    int failed = 0;
    double duration_s = 0;
    std::string raw_tail;
    bool error = false;  // no summary trailer was found
    std::vector<std::string> failing_tests;

    static SuiteResult of(Suite s) {
        SuiteResult r;
        r.suite = s;
        return r;
    }
    friend bool operator==(const SuiteResult&, const SuiteResult&) = default;
};

// Counts from the last pytest-style trailer in `output`, e.g.
// "===== 3 failed, 21 passed in 0.65s =====". "errors" count as failures.
// Total: never throws.
SuiteResult parse_test_summary(std::string_view output);

enum class Gate { env_ready, fix_ready, cve_ready };
std::string_view to_string(Gate g);
Gate gate_from_string(std::string_view s);  // throws ConfigError

struct GateVerdict {
    Gate gate = Gate::env_ready;
    bool pass = false;
    SuiteResult func = SuiteResult::of(Suite::func);
    SuiteResult vuln = SuiteResult::of(Suite::vuln);
    std::string detail;
    std::string environment_id;          // instance the suites ran in
    std::vector<GateVerdict> components;  // cve_ready: the env_ready and fix_ready verdicts
};

// Truth tables.
bool env_ready_holds(const SuiteResult& func, const SuiteResult& vuln);
bool fix_ready_holds(const SuiteResult& func, const SuiteResult& vuln);
GateVerdict env_ready_verdict(const SuiteResult& func, const SuiteResult& vuln);
GateVerdict fix_ready_verdict(const SuiteResult& func, const SuiteResult& vuln);

struct Timeouts {
    std::chrono::seconds build{900};
    std::chrono::seconds startup{120};
    std::chrono::seconds tests{600};
};

// A running task environment. Paths passed to exec scripts must come from
// copy_in, which returns the path as the environment sees it.
class Environment {
public:
    virtual ~Environment() = default;
    virtual process::Result exec(const std::string& script, std::chrono::milliseconds timeout) = 0;
    virtual std::string copy_in(const std::filesystem::path& host_src, const std::string& env_dest) = 0;
    virtual void teardown() = 0;  // idempotent
    virtual std::string id() const = 0;
};

class Executor {
public:
    virtual ~Executor() = default;
    // Builds and starts a fresh environment for the package at `pkg_root`.
    // Throws BuildFailure or StartupTimeout; nothing is left running then.
    virtual std::unique_ptr<Environment> bring_up(const std::filesystem::path& pkg_root,
                                                  const std::string& instance_id) = 0;
    virtual std::string name() const = 0;
    // Best-effort teardown of every environment still up (interrupts).
    virtual void shutdown() {}
};

// Tears the environment down when it goes out of scope.
class EnvironmentGuard {
public:
    explicit EnvironmentGuard(std::unique_ptr<Environment> env) : env_(std::move(env)) {}
    ~EnvironmentGuard();
    EnvironmentGuard(const EnvironmentGuard&) = delete;
    EnvironmentGuard& operator=(const EnvironmentGuard&) = delete;
    Environment& operator*() { return *env_; }
    Environment* operator->() { return env_.get(); }

private:
    std::unique_ptr<Environment> env_;
};

// Runs tests/run-tests.sh once per test file. Throws TestScriptMissing,
// TestRunnerCrash (timeout or no trailer).
std::pair<SuiteResult, SuiteResult> run_suites(Environment& env, const std::filesystem::path& pkg_root,
                                               const Timeouts& timeouts = {});

struct ApplyReport {
    int exit_code = -1;
    bool timed_out = false;
    std::string output_tail;
    bool ok() const { return exit_code == 0 && !timed_out; }
};
ApplyReport apply_solution(Environment& env, const std::filesystem::path& pkg_root, const Timeouts& timeouts = {});

// Gates on an existing environment. Errors become pass=false with detail.
GateVerdict check_env_ready(Environment& env, const std::filesystem::path& pkg_root, const Timeouts& timeouts = {});
GateVerdict check_fix_ready(Environment& env, const std::filesystem::path& pkg_root, const Timeouts& timeouts = {});

// Gates on a fresh environment, torn down before returning.
GateVerdict check_env_ready(Executor& ex, const std::filesystem::path& pkg_root, const std::string& instance_id,
                            const Timeouts& timeouts = {});
GateVerdict check_fix_ready(Executor& ex, const std::filesystem::path& pkg_root, const std::string& instance_id,
                            const Timeouts& timeouts = {});
GateVerdict check_cve_ready(Executor& ex, const std::filesystem::path& pkg_root, const std::string& instance_id,
                            const Timeouts& timeouts = {});

// -------------------------------------------------------------------------
// Drivers

struct LocalExecutorOptions {
    std::filesystem::path scratch_root;  // default: a directory under the system temp dir
    Timeouts timeouts;
    std::chrono::milliseconds health_interval{100};
};

// Runs packages on the host in a scratch directory. The Dockerfile is
// interpreted for WORKDIR, ENV and COPY/ADD only; other instructions are
// skipped. task-deps/local-setup.sh runs after the copy step when present.
// Scripts see APP_ROOT (the mapped WORKDIR), HOME, TMPDIR and PATH.
class LocalExecutor : public Executor {
public:
    explicit LocalExecutor(LocalExecutorOptions options = {});
    std::unique_ptr<Environment> bring_up(const std::filesystem::path& pkg_root, const std::string& instance_id) override;
    std::string name() const override { return "local"; }
    void shutdown() override;
    const std::filesystem::path& scratch_root() const { return options_.scratch_root; }

private:
    LocalExecutorOptions options_;
};

struct ComposeExecutorOptions {
    std::string runtime = "docker";  // `<runtime> compose ...`
    std::string project_prefix = "forge";
    Timeouts timeouts;
};

// Drives `<runtime> compose`: build, up -d --wait, cp, exec -T, down -v.
class ComposeExecutor : public Executor {
public:
    explicit ComposeExecutor(ComposeExecutorOptions options = {});
    std::unique_ptr<Environment> bring_up(const std::filesystem::path& pkg_root, const std::string& instance_id) override;
    std::string name() const override { return "compose"; }
    void shutdown() override;

    // Whether the runtime and its compose plugin respond.
    static bool available(const std::string& runtime = "docker");
    // Containers still labelled with the project; empty after teardown.
    std::vector<std::string> project_containers(const std::string& project) const;
    std::string project_name(const std::string& instance_id) const;

    struct Live;

private:
    ComposeExecutorOptions options_;
    std::shared_ptr<Live> live_;
};

// Dockerfile instructions the local driver understands.
struct DockerfileStep {
    std::string instruction;  // upper-case
    std::vector<std::string> args;
    int line = 0;
};
std::vector<DockerfileStep> parse_dockerfile(std::string_view text);

// Primary service of a compose file: the first service with a `build`
// key, else the first service.
struct ComposeService {
    std::string name;
    std::optional<std::string> healthcheck;  // shell command
    std::filesystem::path build_context;     // relative to the compose file
};
ComposeService primary_service(const std::filesystem::path& compose_file);

}  // namespace forge::harness
