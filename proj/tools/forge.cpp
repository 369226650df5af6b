// forge: command-line entry point.
#include <signal.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "forge/bench.hpp"
#include "forge/corpus.hpp"
#include "forge/error.hpp"
#include "forge/harness.hpp"
#include "forge/orchestrator.hpp"
#include "forge/taxonomy.hpp"
#include "forge/text.hpp"
#include "forge/triage.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace forge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitTaskFailure = 1;
constexpr int kExitConfig = 2;

// ---------------------------------------------------------------------------
// configuration: flags > FORGE_* env > config file > defaults

struct RunConfig {
    std::optional<fs::path> corpus;
    std::optional<fs::path> rules;
    std::optional<fs::path> taxonomy;
    std::optional<fs::path> keywords;
    fs::path run_root = "runs";
    int workers = 20;
    std::optional<std::string> backend;  // default: mock for reproduce, golden for bench
    std::optional<fs::path> scenario;
    std::string executor = "local";
    std::string runtime = "docker";
    harness::Timeouts timeouts;
    std::chrono::seconds agent_timeout{1800};
    std::optional<std::string> release_date;
    std::optional<fs::path> report;
};

// Values exactly as given on the command line; unset means "not passed".
struct Flags {
    std::optional<std::string> config;
    std::optional<std::string> corpus, rules, taxonomy, keywords, run_root, backend, scenario, executor, runtime;
    std::optional<int> workers;
    std::optional<int> build_timeout, startup_timeout, test_timeout, agent_timeout;
    std::optional<std::string> release_date, report;
    bool json = false;
    bool strict = false;
};

int parse_positive(const std::string& v, const std::string& what) {
    try {
        std::size_t used = 0;
        const int n = std::stoi(v, &used);
        if (used != v.size() || n < 1) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ConfigError(fmt::format("{} must be a positive integer, got `{}`", what, v));
    }
}

void apply_yaml(RunConfig& c, const fs::path& file) {
    if (!fs::is_regular_file(file)) throw ConfigError(fmt::format("config file {} not found", file.string()));
    YAML::Node y;
    try {
        y = YAML::LoadFile(file.string());
    } catch (const YAML::Exception& e) {
        throw ConfigError(fmt::format("{}: {}", file.string(), e.what()));
    }
    if (!y || y.IsNull()) return;
    if (!y.IsMap()) throw ConfigError(fmt::format("{}: expected a mapping", file.string()));
    const auto base = file.parent_path();
    auto path = [&](const char* key) -> std::optional<fs::path> {
        if (!y[key]) return std::nullopt;
        fs::path p = y[key].as<std::string>();
        return p.is_relative() ? base / p : p;
    };
    try {
        if (auto p = path("corpus")) c.corpus = p;
        if (auto p = path("rules")) c.rules = p;
        if (auto p = path("taxonomy")) c.taxonomy = p;
        if (auto p = path("keywords")) c.keywords = p;
        if (auto p = path("run_root")) c.run_root = *p;
        if (auto p = path("scenario")) c.scenario = p;
        if (auto p = path("report")) c.report = p;
        if (y["workers"]) c.workers = parse_positive(y["workers"].as<std::string>(), "workers");
        if (y["backend"]) c.backend = y["backend"].as<std::string>();
        if (y["executor"]) c.executor = y["executor"].as<std::string>();
        if (y["runtime"]) c.runtime = y["runtime"].as<std::string>();
        if (y["release_date"]) c.release_date = y["release_date"].as<std::string>();
        if (const auto t = y["timeouts"]) {
            if (t["build_s"]) c.timeouts.build = std::chrono::seconds(parse_positive(t["build_s"].as<std::string>(), "timeouts.build_s"));
            if (t["startup_s"]) c.timeouts.startup = std::chrono::seconds(parse_positive(t["startup_s"].as<std::string>(), "timeouts.startup_s"));
            if (t["tests_s"]) c.timeouts.tests = std::chrono::seconds(parse_positive(t["tests_s"].as<std::string>(), "timeouts.tests_s"));
            if (t["agent_s"]) c.agent_timeout = std::chrono::seconds(parse_positive(t["agent_s"].as<std::string>(), "timeouts.agent_s"));
        }
    } catch (const YAML::Exception& e) {
        throw ConfigError(fmt::format("{}: {}", file.string(), e.what()));
    }
}

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

void apply_env(RunConfig& c) {
    if (auto v = env("FORGE_CORPUS")) c.corpus = *v;
    if (auto v = env("FORGE_RULES")) c.rules = *v;
    if (auto v = env("FORGE_TAXONOMY")) c.taxonomy = *v;
    if (auto v = env("FORGE_KEYWORDS")) c.keywords = *v;
    if (auto v = env("FORGE_RUN_ROOT")) c.run_root = *v;
    if (auto v = env("FORGE_WORKERS")) c.workers = parse_positive(*v, "FORGE_WORKERS");
    if (auto v = env("FORGE_BACKEND")) c.backend = *v;
    if (auto v = env("FORGE_SCENARIO")) c.scenario = *v;
    if (auto v = env("FORGE_EXECUTOR")) c.executor = *v;
    if (auto v = env("FORGE_RUNTIME")) c.runtime = *v;
    if (auto v = env("FORGE_BUILD_TIMEOUT_S")) c.timeouts.build = std::chrono::seconds(parse_positive(*v, "FORGE_BUILD_TIMEOUT_S"));
    if (auto v = env("FORGE_STARTUP_TIMEOUT_S")) c.timeouts.startup = std::chrono::seconds(parse_positive(*v, "FORGE_STARTUP_TIMEOUT_S"));
    if (auto v = env("FORGE_TEST_TIMEOUT_S")) c.timeouts.tests = std::chrono::seconds(parse_positive(*v, "FORGE_TEST_TIMEOUT_S"));
    if (auto v = env("FORGE_AGENT_TIMEOUT_S")) c.agent_timeout = std::chrono::seconds(parse_positive(*v, "FORGE_AGENT_TIMEOUT_S"));
    if (auto v = env("FORGE_RELEASE_DATE")) c.release_date = *v;
    if (auto v = env("FORGE_REPORT")) c.report = *v;
}

void apply_flags(RunConfig& c, const Flags& f) {
    if (f.corpus) c.corpus = *f.corpus;
    if (f.rules) c.rules = *f.rules;
    if (f.taxonomy) c.taxonomy = *f.taxonomy;
    if (f.keywords) c.keywords = *f.keywords;
    if (f.run_root) c.run_root = *f.run_root;
    if (f.workers) c.workers = parse_positive(std::to_string(*f.workers), "--workers");
    if (f.backend) c.backend = *f.backend;
    if (f.scenario) c.scenario = *f.scenario;
    if (f.executor) c.executor = *f.executor;
    if (f.runtime) c.runtime = *f.runtime;
    if (f.build_timeout) c.timeouts.build = std::chrono::seconds(parse_positive(std::to_string(*f.build_timeout), "--build-timeout"));
    if (f.startup_timeout) c.timeouts.startup = std::chrono::seconds(parse_positive(std::to_string(*f.startup_timeout), "--startup-timeout"));
    if (f.test_timeout) c.timeouts.tests = std::chrono::seconds(parse_positive(std::to_string(*f.test_timeout), "--test-timeout"));
    if (f.agent_timeout) c.agent_timeout = std::chrono::seconds(parse_positive(std::to_string(*f.agent_timeout), "--agent-timeout"));
    if (f.release_date) c.release_date = *f.release_date;
    if (f.report) c.report = *f.report;
}

RunConfig resolve(const Flags& f) {
    RunConfig c;
    std::optional<std::string> config = f.config ? f.config : env("FORGE_CONFIG");
    if (config) apply_yaml(c, *config);
    apply_env(c);
    apply_flags(c, f);
    for (const auto* p : {&c.rules, &c.taxonomy, &c.keywords, &c.scenario})
        if (*p && !fs::is_regular_file(**p)) throw ConfigError(fmt::format("{} does not exist", (*p)->string()));
    if (c.corpus && !fs::exists(*c.corpus)) throw ConfigError(fmt::format("{} does not exist", c.corpus->string()));
    return c;
}

const triage::RuleSet& rules_of(const RunConfig& c, std::optional<triage::RuleSet>& storage) {
    if (!c.rules) return triage::default_rules();
    storage = triage::load_rules(*c.rules);
    return *storage;
}

const taxonomy::CweCategoryMap& taxonomy_of(const RunConfig& c, std::optional<taxonomy::CweCategoryMap>& storage) {
    if (!c.taxonomy) return taxonomy::CweCategoryMap::defaults();
    storage = taxonomy::CweCategoryMap::load(*c.taxonomy);
    return *storage;
}

corpus::ReferenceKeywords keywords_of(const RunConfig& c) {
    if (!c.keywords) return corpus::ReferenceKeywords::defaults();
    return corpus::ReferenceKeywords::parse(text::read_file(*c.keywords));
}

corpus::Corpus corpus_of(const RunConfig& c) {
    if (!c.corpus) throw ConfigError("no corpus given (--corpus, FORGE_CORPUS or `corpus` in the config file)");
    return corpus::load_corpus(*c.corpus, keywords_of(c));
}

json issues_json(const std::vector<corpus::LoadIssue>& issues) {
    json a = json::array();
    for (const auto& i : issues) a.push_back({{"file", i.file.string()}, {"kind", i.kind}, {"message", i.message}});
    return a;
}

void warn_issues(const std::vector<corpus::LoadIssue>& issues) {
    for (const auto& i : issues) std::cerr << fmt::format("warning: {}: {}: {}\n", i.file.string(), i.kind, i.message);
}

// ---------------------------------------------------------------------------
// interrupt handling: a dedicated thread waits for SIGINT/SIGTERM and
// tears down whatever the active executor still holds.

std::atomic<harness::Executor*> g_executor{nullptr};

void install_signal_thread() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    std::thread([set] {
        int sig = 0;
        if (sigwait(&set, &sig) != 0) return;
        std::cerr << "interrupted, tearing down environments\n";
        if (auto* ex = g_executor.load()) ex->shutdown();
        else process::kill_all();
        std::_Exit(128 + sig);
    }).detach();
}

std::unique_ptr<harness::Executor> make_executor(const RunConfig& c, const fs::path& scratch) {
    if (c.executor == "local") {
        harness::LocalExecutorOptions o;
        o.timeouts = c.timeouts;
        if (!scratch.empty()) o.scratch_root = scratch;
        return std::make_unique<harness::LocalExecutor>(o);
    }
    if (c.executor == "compose") {
        if (!harness::ComposeExecutor::available(c.runtime))
            throw ConfigError(fmt::format("`{} compose` is not available on this host", c.runtime));
        harness::ComposeExecutorOptions o;
        o.runtime = c.runtime;
        o.timeouts = c.timeouts;
        return std::make_unique<harness::ComposeExecutor>(o);
    }
    throw ConfigError(fmt::format("unknown executor `{}` (local or compose)", c.executor));
}

std::string default_run_id() {
    const auto t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "run-%Y%m%d-%H%M%S", &tm);
    return buf;
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_ingest(const RunConfig& c, const Flags& f, const std::optional<std::string>& out_dir) {
    auto corpus = corpus_of(c);
    std::optional<triage::RuleSet> rs;
    const auto& rules = rules_of(c, rs);
    const fs::path out = out_dir ? fs::path(*out_dir) : c.run_root / "digests";
    json written = json::array();
    for (const auto& rec : corpus.records) {
        const auto score = triage::reproduce_score(rec, rules).s_base;
        const auto path = out / fmt::format("{}.md", rec.cve_id);
        text::write_file(path, corpus::render_digest(rec, score).markdown);
        written.push_back({{"cve_id", rec.cve_id}, {"score", score}, {"digest", path.string()}});
    }
    if (f.json) {
        std::cout << json{{"digests", written}, {"issues", issues_json(corpus.issues)}}.dump(2) << "\n";
    } else {
        warn_issues(corpus.issues);
        std::cout << fmt::format("wrote {} digests to {} ({} files skipped)\n", written.size(), out.string(),
                                 corpus.issues.size());
    }
    return f.strict && !corpus.issues.empty() ? kExitTaskFailure : kExitOk;
}

struct TriageArgs {
    int quota = 100;
    std::optional<std::string> out;
    int phase1 = 2;
    int category_cap = 10;
    int repo_cap = 10;
    bool judge = false;
};

int cmd_triage(const RunConfig& c, const Flags& f, const TriageArgs& a) {
    if (a.quota < 0) throw ConfigError("--quota must be >= 0");
    auto corpus = corpus_of(c);
    std::optional<triage::RuleSet> rs;
    std::optional<taxonomy::CweCategoryMap> tx;
    const auto& rules = rules_of(c, rs);
    const auto& tax = taxonomy_of(c, tx);

    std::vector<corpus::CveRecord> candidates = std::move(corpus.records);
    json dropped = json::array();
    std::optional<std::string> warning;
    if (a.judge) {
        triage::KeywordJudge judge(tax);
        auto outcome = triage::judge_filter(candidates, judge);
        candidates = std::move(outcome.kept);
        for (const auto& [id, why] : outcome.dropped) dropped.push_back({{"cve_id", id}, {"reason", why}});
        warning = outcome.warning;
    }
    triage::SelectionOptions opt{a.phase1, a.category_cap, a.repo_cap};
    const auto sel = triage::select_benchmark(std::move(candidates), rules, tax, a.quota, opt);

    json picks = json::array();
    for (const auto& s : sel) {
        json matched = json::array();
        for (const auto& [name, pts] : s.score.matched_rules) matched.push_back({{"rule", name}, {"points", pts}});
        picks.push_back({{"cve_id", s.cve_id},
                         {"phase", s.phase},
                         {"category", s.category},
                         {"repo", s.repo},
                         {"s_base", s.score.s_base},
                         {"s_final", s.score.s_final},
                         {"matched_rules", matched}});
    }
    json doc = {{"quota", a.quota}, {"selected", picks}, {"judge_dropped", dropped},
                {"issues", issues_json(corpus.issues)}};
    doc["warning"] = warning ? json(*warning) : json(nullptr);
    const fs::path out = a.out ? fs::path(*a.out) : c.run_root / "selection.json";
    text::write_file(out, doc.dump(2) + "\n");
    if (f.json) {
        std::cout << doc.dump(2) << "\n";
    } else {
        warn_issues(corpus.issues);
        if (warning) std::cerr << "warning: " << *warning << "\n";
        for (const auto& s : sel)
            std::cout << fmt::format("{:<18} phase {}  s_base {:>4}  s_final {:>7.2f}  {}  {}\n", s.cve_id, s.phase,
                                     s.score.s_base, s.score.s_final, s.category, s.repo);
        std::cout << fmt::format("selected {} of quota {} -> {}\n", sel.size(), a.quota, out.string());
    }
    return kExitOk;
}

std::vector<corpus::CveRecord> resolve_cves(const RunConfig& c, const std::string& spec) {
    const fs::path p(spec);
    if (fs::is_directory(p)) {
        auto corpus = corpus::load_corpus(p, keywords_of(c));
        warn_issues(corpus.issues);
        return corpus.records;
    }
    std::vector<std::string> ids;
    if (fs::is_regular_file(p)) {
        const auto body = text::read_file(p);
        if (p.extension() == ".json") {
            // a single CVE record, or a selection file written by `triage`
            const auto j = json::parse(body, nullptr, false);
            if (!j.is_discarded() && j.is_object() && j.contains("selected")) {
                for (const auto& s : j.at("selected")) ids.push_back(s.at("cve_id").get<std::string>());
            } else {
                auto corpus = corpus::load_corpus(p, keywords_of(c));
                warn_issues(corpus.issues);
                return corpus.records;
            }
        } else {
            for (const auto& line : text::split(body, '\n')) {
                const auto t = text::trim(line);
                if (!t.empty() && t.front() != '#') ids.emplace_back(t);
            }
        }
    } else {
        for (const auto& part : text::split(spec, ','))
            if (!text::trim(part).empty()) ids.emplace_back(text::trim(part));
    }
    auto corpus = corpus_of(c);
    std::map<std::string, const corpus::CveRecord*> by_id;
    for (const auto& r : corpus.records) by_id[r.cve_id] = &r;
    std::vector<corpus::CveRecord> out;
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw ConfigError(fmt::format("{} is not in the corpus", id));
        out.push_back(*it->second);
    }
    return out;
}

int cmd_reproduce(const RunConfig& c, const Flags& f, const std::string& cves, const std::optional<std::string>& run_id_flag) {
    const auto records = resolve_cves(c, cves);
    std::unique_ptr<agent::AgentBackend> backend;
    const auto backend_name = c.backend.value_or("mock");
    if (backend_name == "mock") {
        if (!c.scenario) throw ConfigError("--backend mock needs --scenario");
        backend = std::make_unique<agent::ScriptedBackend>(agent::Scenario::load(*c.scenario));
    } else if (backend_name == "http") {
        auto hc = agent::HttpBackendConfig::from_env();
        if (hc.endpoint.empty()) throw ConfigError("--backend http needs FORGE_AGENT_ENDPOINT");
        backend = std::make_unique<agent::HttpBackend>(hc);
    } else {
        throw ConfigError(fmt::format("unknown backend `{}` (mock or http)", backend_name));
    }
    const auto run_id = run_id_flag.value_or(default_run_id());
    const auto run_dir = c.run_root / run_id;
    auto executor = make_executor(c, run_dir / ".scratch");
    g_executor = executor.get();
    orchestrator::ExecutorGates gates(*executor, c.timeouts);
    orchestrator::BatchOptions opt;
    opt.workers = c.workers;
    opt.run_dir = run_dir;
    opt.pipeline.agent_timeout = c.agent_timeout;
    const auto results = orchestrator::run_batch(records, *backend, gates, opt);
    g_executor = nullptr;
    std::error_code ec;
    fs::remove_all(run_dir / ".scratch", ec);

    int not_reproduced = 0;
    json out = json::object();
    for (const auto& [id, st] : results) {
        const auto term = std::string(orchestrator::to_string(*st.terminal));
        if (*st.terminal != orchestrator::Terminal::Reproduced) ++not_reproduced;
        out[id] = {{"terminal", term},
                   {"reason", st.terminal_reason},
                   {"workspace", orchestrator::workspace_dir(run_dir / id).string()}};
    }
    text::write_file(run_dir / "results.json", out.dump(2) + "\n");
    if (f.json) {
        std::cout << json{{"run_id", run_id}, {"run_dir", run_dir.string()}, {"results", out}}.dump(2) << "\n";
    } else {
        for (const auto& [id, st] : results)
            std::cout << fmt::format("{:<18} {:<15} {}\n", id, orchestrator::to_string(*st.terminal), st.terminal_reason);
        std::cout << fmt::format("{} of {} reproduced; run directory {}\n", results.size() - not_reproduced,
                                 results.size(), run_dir.string());
    }
    return f.strict && not_reproduced > 0 ? kExitTaskFailure : kExitOk;
}

json verdict_json(const harness::GateVerdict& v) {
    auto suite = [](const harness::SuiteResult& s) {
        return json{{"passed", s.passed}, {"failed", s.failed}, {"duration_s", s.duration_s}, {"error", s.error},
                    {"failing_tests", s.failing_tests}};
    };
    json comps = json::array();
    for (const auto& c : v.components) comps.push_back(verdict_json(c));
    return {{"gate", std::string(harness::to_string(v.gate))},
            {"pass", v.pass},
            {"func", suite(v.func)},
            {"vuln", suite(v.vuln)},
            {"detail", v.detail},
            {"environment", v.environment_id},
            {"components", comps}};
}

int cmd_verify(const RunConfig& c, const Flags& f, const std::string& pkg, const std::string& gate_name) {
    const auto gate = harness::gate_from_string(gate_name);
    if (!fs::is_directory(pkg)) throw ConfigError(fmt::format("{} is not a package directory", pkg));
    const auto scratch = fs::temp_directory_path() / fmt::format("forge-verify-{}", ::getpid());
    auto executor = make_executor(c, scratch);
    g_executor = executor.get();
    const auto id = fs::path(pkg).lexically_normal().filename().string();
    harness::GateVerdict v;
    switch (gate) {
        case harness::Gate::env_ready: v = harness::check_env_ready(*executor, pkg, id, c.timeouts); break;
        case harness::Gate::fix_ready: v = harness::check_fix_ready(*executor, pkg, id, c.timeouts); break;
        case harness::Gate::cve_ready: v = harness::check_cve_ready(*executor, pkg, id, c.timeouts); break;
    }
    g_executor = nullptr;
    std::error_code ec;
    fs::remove_all(scratch, ec);
    if (f.json) {
        std::cout << verdict_json(v).dump(2) << "\n";
    } else {
        std::cout << fmt::format("{}: {}\n", harness::to_string(gate), v.pass ? "PASS" : "FAIL");
        std::cout << fmt::format("  func: {} passed, {} failed\n  vuln: {} passed, {} failed\n  {}\n", v.func.passed,
                                 v.func.failed, v.vuln.passed, v.vuln.failed, v.detail);
    }
    return f.strict && !v.pass ? kExitTaskFailure : kExitOk;
}

struct BenchArgs {
    std::optional<std::string> tasks;
    std::vector<std::string> group_by;
    std::vector<std::string> commands;
};

int cmd_bench(const RunConfig& c, const Flags& f, const BenchArgs& a) {
    if (!a.tasks) throw ConfigError("bench needs --tasks <dir>");
    const auto tasks = bench::load_tasks(*a.tasks);
    std::unique_ptr<bench::BenchAgent> agent;
    const auto backend = c.backend.value_or("golden");
    if (backend == "golden") agent = std::make_unique<bench::GoldenReplayAgent>();
    else if (backend == "null") agent = std::make_unique<bench::NullAgent>();
    else if (backend == "scripted") agent = std::make_unique<bench::ScriptedShellAgent>(a.commands);
    else if (backend == "http") {
        auto hc = agent::HttpBackendConfig::from_env();
        if (hc.endpoint.empty()) throw ConfigError("--backend http needs FORGE_AGENT_ENDPOINT");
        agent = std::make_unique<bench::HttpBenchAgent>(hc);
    } else {
        throw ConfigError(fmt::format("unknown bench backend `{}` (golden, null, scripted or http)", backend));
    }
    std::vector<std::string> groups = a.group_by;
    for (const auto& g : groups)
        if (g == "partition" && !c.release_date) throw ConfigError("--group-by partition needs --release-date");
    if (c.release_date) bench::partition_by_release({}, *c.release_date);  // validates the date

    const auto scratch = c.run_root / fmt::format(".bench-scratch-{}", ::getpid());
    auto executor = make_executor(c, scratch);
    g_executor = executor.get();
    bench::BenchOptions opt;
    opt.workers = c.workers;
    opt.timeouts = c.timeouts;
    opt.agent_timeout = c.agent_timeout;
    const auto results = bench::run_benchmark(tasks, *agent, *executor, opt);
    g_executor = nullptr;
    std::error_code ec;
    fs::remove_all(scratch, ec);

    const auto report = bench::build_report(results, groups, c.release_date);
    const auto report_json = bench::report_to_json(report);
    if (c.report) text::write_file(*c.report, report_json + "\n");
    if (f.json) std::cout << report_json << "\n";
    else std::cout << bench::report_to_text(report);
    if (results.empty()) {
        std::cerr << "warning: no task packages found under " << *a.tasks << "\n";
        return f.strict ? kExitTaskFailure : kExitOk;
    }
    const bool all_solved = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.solved; });
    return f.strict && !all_solved ? kExitTaskFailure : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"forge: CVE records to verified, executable security task packages"};
    app.require_subcommand(1);
    app.fallthrough();
    Flags f;
    app.add_option("--config", f.config, "YAML config file (env FORGE_CONFIG)");
    app.add_flag("--json", f.json, "machine-readable JSON on stdout");
    app.add_flag("--strict", f.strict, "exit 1 when any task-level result is a failure");
    app.add_option("--run-root", f.run_root, "root for run output (env FORGE_RUN_ROOT, default runs)");
    app.add_option("--rules", f.rules, "scoring rules file (env FORGE_RULES)");
    app.add_option("--taxonomy", f.taxonomy, "CWE taxonomy file (env FORGE_TAXONOMY)");
    app.add_option("--keywords", f.keywords, "reference keyword file (env FORGE_KEYWORDS)");

    auto add_exec_opts = [&](CLI::App* sub) {
        sub->add_option("--executor", f.executor, "local or compose (env FORGE_EXECUTOR, default local)");
        sub->add_option("--runtime", f.runtime, "container runtime for compose (env FORGE_RUNTIME, default docker)");
        sub->add_option("--build-timeout", f.build_timeout, "seconds (env FORGE_BUILD_TIMEOUT_S, default 900)");
        sub->add_option("--startup-timeout", f.startup_timeout, "seconds (env FORGE_STARTUP_TIMEOUT_S, default 120)");
        sub->add_option("--test-timeout", f.test_timeout, "seconds (env FORGE_TEST_TIMEOUT_S, default 600)");
    };

    auto* ingest = app.add_subcommand("ingest", "render CVE JSON records as markdown digests");
    std::optional<std::string> ingest_out;
    ingest->add_option("--corpus", f.corpus, "CVE JSON file or directory (env FORGE_CORPUS)");
    ingest->add_option("--out", ingest_out, "digest directory (default <run-root>/digests)");

    auto* tri = app.add_subcommand("triage", "score records and select a benchmark set");
    TriageArgs ta;
    tri->add_option("--corpus", f.corpus, "CVE JSON file or directory (env FORGE_CORPUS)");
    tri->add_option("--quota", ta.quota, "number of records to select")->capture_default_str();
    tri->add_option("--out", ta.out, "selection file (default <run-root>/selection.json)");
    tri->add_option("--phase1-per-category", ta.phase1, "Top-25 seeding picks per category")->capture_default_str();
    tri->add_option("--category-cap", ta.category_cap, "phase-2 picks per category")->capture_default_str();
    tri->add_option("--repo-cap", ta.repo_cap, "phase-2 picks per repository")->capture_default_str();
    tri->add_flag("--judge", ta.judge, "apply the offline keyword judge before selection");

    auto* rep = app.add_subcommand("reproduce", "run reproduction pipelines");
    std::string cves;
    std::optional<std::string> run_id;
    rep->add_option("--cves", cves, "comma-separated ids, id list file, selection file, or directory of records")
        ->required();
    rep->add_option("--corpus", f.corpus, "corpus the ids resolve against (env FORGE_CORPUS)");
    rep->add_option("--out", f.run_root, "run root (env FORGE_RUN_ROOT)");
    rep->add_option("--run-id", run_id, "run directory name (default run-<UTC timestamp>)");
    rep->add_option("--workers", f.workers, "concurrent pipelines (env FORGE_WORKERS, default 20)");
    rep->add_option("--backend", f.backend, "mock or http (env FORGE_BACKEND, default mock)");
    rep->add_option("--scenario", f.scenario, "scenario file for the mock backend (env FORGE_SCENARIO)");
    rep->add_option("--agent-timeout", f.agent_timeout, "seconds per agent invocation (env FORGE_AGENT_TIMEOUT_S)");
    add_exec_opts(rep);

    auto* ver = app.add_subcommand("verify", "run one gate against a task package");
    std::string pkg;
    std::string gate = "cve_ready";
    ver->add_option("pkg", pkg, "task package directory")->required();
    ver->add_option("--gate", gate, "env_ready, fix_ready or cve_ready")->capture_default_str();
    add_exec_opts(ver);

    auto* ben = app.add_subcommand("bench", "evaluate an agent on task packages");
    BenchArgs ba;
    ben->add_option("--tasks", ba.tasks, "directory of task packages")->required();
    ben->add_option("--backend", f.backend, "golden, null, scripted or http (env FORGE_BACKEND)");
    ben->add_option("--command", ba.commands, "shell command for the scripted agent (repeatable)");
    ben->add_option("--workers", f.workers, "concurrent tasks (env FORGE_WORKERS, default 20)");
    ben->add_option("--release-date", f.release_date, "model release date YYYY-MM-DD (env FORGE_RELEASE_DATE)");
    ben->add_option("--report", f.report, "report JSON path (env FORGE_REPORT)");
    ben->add_option("--group-by", ba.group_by, "language, cwe_category, partition (repeatable)");
    ben->add_option("--agent-timeout", f.agent_timeout, "seconds per task (env FORGE_AGENT_TIMEOUT_S)");
    add_exec_opts(ben);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        if (app.get_subcommands().empty()) {
            // top-level help lists every subcommand with its flags
            std::cout << app.help("", CLI::AppFormatMode::All);
            return kExitOk;
        }
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e, std::cerr, std::cerr);
        std::cerr << "\n" << app.help();
        return kExitConfig;
    }

    install_signal_thread();
    try {
        auto cfg = resolve(f);
        if (*ingest) return cmd_ingest(cfg, f, ingest_out);
        if (*tri) return cmd_triage(cfg, f, ta);
        if (*rep) return cmd_reproduce(cfg, f, cves, run_id);
        if (*ver) return cmd_verify(cfg, f, pkg, gate);
        if (*ben) return cmd_bench(cfg, f, ba);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
