#include "forge/bench.hpp"

#include <cmath>
#include <regex>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "forge/corpus.hpp"
#include "forge/error.hpp"
#include "forge/taskpkg.hpp"
#include "forge/taxonomy.hpp"
#include "forge/text.hpp"
#include "forge/worker_pool.hpp"

namespace forge::bench {

namespace fs = std::filesystem;
using nlohmann::json;

bool BenchReport::operator==(const BenchReport& o) const {
    auto same = [](const std::shared_ptr<BenchReport>& a, const std::shared_ptr<BenchReport>& b) {
        if (!a || !b) return !a && !b;
        return *a == *b;
    };
    return total == o.total && solved == o.solved && pass_rate_pct == o.pass_rate_pct &&
           mean_turns_success == o.mean_turns_success && mean_tokens_success == o.mean_tokens_success &&
           mean_turns_failed == o.mean_turns_failed && mean_tokens_failed == o.mean_tokens_failed &&
           same(pre, o.pre) && same(post, o.post);
}

double pass_rate(int solved, int total) {
    if (total <= 0) throw EmptyResults("pass rate of an empty result set");
    // integer rounding of 10000*solved/total, half away from zero
    const long long num = 10000LL * solved;
    const long long q = (2 * num + total) / (2LL * total);
    return static_cast<double>(q) / 100.0;
}

double pass_rate(const std::vector<TaskResult>& results) {
    int solved = 0;
    for (const auto& r : results) solved += r.solved ? 1 : 0;
    return pass_rate(solved, static_cast<int>(results.size()));
}

namespace {

std::string check_date(std::string_view d) {
    static const std::regex re(R"(\d{4}-\d{2}-\d{2})");
    const std::string head(d.substr(0, 10));
    if (!std::regex_match(head, re)) throw ConfigError(fmt::format("`{}` is not a YYYY-MM-DD date", d));
    return head;
}

}  // namespace

std::pair<std::vector<TaskResult>, std::vector<TaskResult>> partition_by_release(const std::vector<TaskResult>& results,
                                                                                 std::string_view model_release) {
    const auto release = check_date(model_release);
    std::pair<std::vector<TaskResult>, std::vector<TaskResult>> out;
    for (const auto& r : results) {
        if (check_date(r.publish_date) <= release) out.first.push_back(r);
        else out.second.push_back(r);
    }
    return out;
}

BenchReport summarize(const std::vector<TaskResult>& results) {
    BenchReport b;
    b.total = static_cast<int>(results.size());
    double ts = 0, ks = 0, tf = 0, kf = 0;
    for (const auto& r : results) {
        if (r.solved) {
            ++b.solved;
            ts += static_cast<double>(r.turns);
            ks += static_cast<double>(r.tokens);
        } else {
            tf += static_cast<double>(r.turns);
            kf += static_cast<double>(r.tokens);
        }
    }
    const int failed = b.total - b.solved;
    if (b.total > 0) b.pass_rate_pct = pass_rate(b.solved, b.total);
    if (b.solved > 0) {
        b.mean_turns_success = ts / b.solved;
        b.mean_tokens_success = ks / b.solved;
    }
    if (failed > 0) {
        b.mean_turns_failed = tf / failed;
        b.mean_tokens_failed = kf / failed;
    }
    return b;
}

BenchReport summarize(const std::vector<TaskResult>& results, std::string_view model_release) {
    auto b = summarize(results);
    const auto [pre, post] = partition_by_release(results, model_release);
    b.pre = std::make_shared<BenchReport>(summarize(pre));
    b.post = std::make_shared<BenchReport>(summarize(post));
    return b;
}

Report build_report(const std::vector<TaskResult>& results, const std::vector<std::string>& group_keys,
                    std::optional<std::string> model_release) {
    Report rep;
    rep.results = results;
    rep.overall = model_release ? summarize(results, *model_release) : summarize(results);
    for (const auto& key : group_keys) {
        std::map<std::string, std::vector<TaskResult>> buckets;
        if (key == "partition") {
            if (!model_release) throw ConfigError("grouping by partition needs a model release date");
            auto [pre, post] = partition_by_release(results, *model_release);
            buckets["pre"] = std::move(pre);
            buckets["post"] = std::move(post);
        } else if (key == "language" || key == "cwe_category") {
            for (const auto& r : results) buckets[key == "language" ? r.language : r.cwe_category].push_back(r);
        } else {
            throw ConfigError(fmt::format("unknown group key `{}` (language, cwe_category, partition)", key));
        }
        auto& g = rep.groups[key];
        for (const auto& [value, rs] : buckets) g[value] = summarize(rs);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// serialization

namespace {

json to_json(const BenchReport& b) {
    json j = {
        {"total", b.total},
        {"solved", b.solved},
        {"pass_rate_pct", b.pass_rate_pct},
        {"mean_turns_success", b.mean_turns_success},
        {"mean_tokens_success", b.mean_tokens_success},
        {"mean_turns_failed", b.mean_turns_failed},
        {"mean_tokens_failed", b.mean_tokens_failed},
    };
    j["partitions"] = b.pre && b.post ? json{{"pre", to_json(*b.pre)}, {"post", to_json(*b.post)}} : json(nullptr);
    return j;
}

BenchReport report_from(const json& j) {
    BenchReport b;
    b.total = j.at("total").get<int>();
    b.solved = j.at("solved").get<int>();
    b.pass_rate_pct = j.at("pass_rate_pct").get<double>();
    b.mean_turns_success = j.at("mean_turns_success").get<double>();
    b.mean_tokens_success = j.at("mean_tokens_success").get<double>();
    b.mean_turns_failed = j.at("mean_turns_failed").get<double>();
    b.mean_tokens_failed = j.at("mean_tokens_failed").get<double>();
    if (j.contains("partitions") && !j.at("partitions").is_null()) {
        b.pre = std::make_shared<BenchReport>(report_from(j.at("partitions").at("pre")));
        b.post = std::make_shared<BenchReport>(report_from(j.at("partitions").at("post")));
    }
    return b;
}

json to_json(const TaskResult& r) {
    return {{"cve_id", r.cve_id},   {"solved", r.solved},         {"turns", r.turns},
            {"tokens", r.tokens},   {"metered", r.metered},       {"publish_date", r.publish_date},
            {"language", r.language}, {"cwe_category", r.cwe_category}, {"detail", r.detail}};
}

TaskResult result_from(const json& j) {
    TaskResult r;
    r.cve_id = j.at("cve_id").get<std::string>();
    r.solved = j.at("solved").get<bool>();
    r.turns = j.at("turns").get<std::int64_t>();
    r.tokens = j.at("tokens").get<std::int64_t>();
    r.metered = j.value("metered", false);
    r.publish_date = j.value("publish_date", std::string{});
    r.language = j.value("language", std::string{});
    r.cwe_category = j.value("cwe_category", std::string{});
    r.detail = j.value("detail", std::string{});
    return r;
}

}  // namespace

std::string report_to_json(const Report& rep) {
    json groups = json::object();
    for (const auto& [key, values] : rep.groups) {
        json g = json::object();
        for (const auto& [value, b] : values) g[value] = to_json(b);
        groups[key] = g;
    }
    json results = json::array();
    for (const auto& r : rep.results) results.push_back(to_json(r));
    return json{{"overall", to_json(rep.overall)}, {"groups", groups}, {"results", results}}.dump(2);
}

Report report_from_json(std::string_view text) {
    try {
        const auto j = json::parse(text);
        Report rep;
        rep.overall = report_from(j.at("overall"));
        for (const auto& [key, values] : j.at("groups").items()) {
            auto& g = rep.groups[key];
            for (const auto& [value, b] : values.items()) g[value] = report_from(b);
        }
        for (const auto& r : j.at("results")) rep.results.push_back(result_from(r));
        return rep;
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("bench report: {}", e.what()));
    }
}

namespace {

std::string row(std::string_view label, const BenchReport& b) {
    auto tokens = [](double t) { return t >= 1000 ? fmt::format("{:.1f}K", t / 1000) : fmt::format("{:.0f}", t); };
    const bool any_s = b.solved > 0, any_f = b.total - b.solved > 0;
    return fmt::format("{:<24} {:>5} {:>9.2f} {:>9} {:>9} {:>9} {:>9}\n", label, b.total, b.pass_rate_pct,
                       any_s ? fmt::format("{:.1f}", b.mean_turns_success) : "--",
                       any_s ? tokens(b.mean_tokens_success) : "--",
                       any_f ? fmt::format("{:.1f}", b.mean_turns_failed) : "--",
                       any_f ? tokens(b.mean_tokens_failed) : "--");
}

}  // namespace

std::string report_to_text(const Report& rep) {
    std::string out;
    out += fmt::format("{:<24} {:>5} {:>9} {:>19} {:>19}\n", "", "", "", "Success", "Failed");
    out += fmt::format("{:<24} {:>5} {:>9} {:>9} {:>9} {:>9} {:>9}\n", "Group", "N", "Pass (%)", "Turns", "Tokens",
                       "Turns", "Tokens");
    out += std::string(80, '-') + "\n";
    out += row("all", rep.overall);
    if (rep.overall.pre) {
        out += row("  pre-release", *rep.overall.pre);
        out += row("  post-release", *rep.overall.post);
    }
    for (const auto& [key, values] : rep.groups) {
        out += fmt::format("[{}]\n", key);
        for (const auto& [value, b] : values) out += row("  " + (value.empty() ? std::string("(none)") : value), b);
    }
    return out;
}

// ---------------------------------------------------------------------------
// tasks

BenchTask load_task(const fs::path& pkg_root) {
    if (!fs::is_directory(pkg_root)) throw NotADirectory(pkg_root.string());
    BenchTask t;
    t.root = pkg_root;
    t.instruction = taskpkg::read_task_spec(pkg_root / taskpkg::files::task_yaml).instruction;

    const auto meta = pkg_root / "task-meta.json";
    if (fs::is_regular_file(meta)) {
        try {
            const auto j = json::parse(text::read_file(meta));
            t.cve_id = j.value("cve_id", std::string{});
            t.publish_date = j.value("publish_date", std::string{});
            t.language = j.value("language", std::string{});
            t.cwe_category = j.value("cwe_category", std::string{});
        } catch (const json::exception& e) {
            throw ConfigError(fmt::format("{}: {}", meta.string(), e.what()));
        }
    }
    if (t.cve_id.empty() || t.publish_date.empty() || t.cwe_category.empty()) {
        for (const auto& e : fs::directory_iterator(pkg_root)) {
            const auto name = e.path().filename().string();
            if (e.is_regular_file() && e.path().extension() == ".md" &&
                corpus::is_valid_cve_id(e.path().stem().string())) {
                const auto s = corpus::summarize_digest(text::read_file(e.path()));
                if (t.cve_id.empty()) t.cve_id = s.cve_id;
                if (t.publish_date.empty()) t.publish_date = s.published;
                if (t.cwe_category.empty()) t.cwe_category = taxonomy::CweCategoryMap::defaults().primary_category(s.cwes);
                break;
            }
        }
    }
    if (t.cve_id.empty()) t.cve_id = pkg_root.filename().string();
    if (t.language.empty()) t.language = "unknown";
    if (t.cwe_category.empty()) t.cwe_category = taxonomy::kUnclassified;
    return t;
}

std::vector<BenchTask> load_tasks(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw NotADirectory(dir.string());
    std::vector<fs::path> roots;
    if (fs::is_regular_file(dir / taskpkg::files::task_yaml)) roots.push_back(dir);
    for (auto it = fs::recursive_directory_iterator(dir); it != fs::recursive_directory_iterator(); ++it) {
        if (!it->is_directory()) continue;
        if (fs::is_regular_file(it->path() / taskpkg::files::task_yaml)) {
            roots.push_back(it->path());
            it.disable_recursion_pending();
        }
    }
    std::sort(roots.begin(), roots.end());
    std::vector<BenchTask> tasks;
    for (const auto& r : roots) tasks.push_back(load_task(r));
    return tasks;
}

// ---------------------------------------------------------------------------
// agents

Attempt GoldenReplayAgent::attempt(const BenchTask& task, harness::Environment& env,
                                   std::chrono::steady_clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::seconds>(deadline - std::chrono::steady_clock::now());
    harness::Timeouts t;
    t.tests = std::max(left, std::chrono::seconds(1));
    const auto report = harness::apply_solution(env, task.root, t);
    Attempt a;
    a.log_tail = report.output_tail;
    if (!report.ok()) a.log_tail = fmt::format("solution.sh exited {}\n{}", report.exit_code, report.output_tail);
    return a;
}

Attempt ScriptedShellAgent::attempt(const BenchTask&, harness::Environment& env,
                                    std::chrono::steady_clock::time_point deadline) {
    Attempt a;
    std::int64_t turns = 0;
    for (const auto& cmd : commands_) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) break;
        const auto r = env.exec(cmd, left);
        ++turns;
        a.log_tail = text::tail(a.log_tail + r.output, 4096);
    }
    a.usage.turns = turns;
    return a;
}

HttpBenchAgent::HttpBenchAgent(agent::HttpBackendConfig config, int max_turns)
    : config_(std::move(config)), max_turns_(max_turns) {
    if (config_.endpoint.rfind("http://", 0) != 0)
        throw ConfigError(fmt::format("agent endpoint must be an http:// URL, got `{}`", config_.endpoint));
}

Attempt HttpBenchAgent::attempt(const BenchTask& task, harness::Environment& env,
                                std::chrono::steady_clock::time_point deadline) {
    const auto slash = config_.endpoint.find('/', 7);
    httplib::Client cli(config_.endpoint.substr(0, slash));
    const auto path = slash == std::string::npos ? std::string("/") : config_.endpoint.substr(slash);
    httplib::Headers headers;
    if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);

    Attempt a;
    json outputs = json::array();
    std::optional<std::int64_t> turns, tokens;
    for (int turn = 0; turn < max_turns_; ++turn) {
        const auto left = std::chrono::duration_cast<std::chrono::seconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) break;
        cli.set_read_timeout(std::min(left, config_.timeout));
        const json req = {{"task_id", task.cve_id}, {"instruction", task.instruction}, {"turn", turn}, {"outputs", outputs}};
        auto res = cli.Post(path, headers, req.dump(), "application/json");
        if (!res) throw BackendCrash(fmt::format("agent service request failed: {}", httplib::to_string(res.error())));
        if (res->status != 200) throw BackendCrash(fmt::format("agent service returned HTTP {}", res->status));
        json body;
        try {
            body = json::parse(res->body);
        } catch (const json::exception& e) {
            throw BackendCrash(fmt::format("agent service returned invalid JSON: {}", e.what()));
        }
        if (body.contains("turns")) turns = body["turns"].get<std::int64_t>();
        if (body.contains("tokens")) tokens = body["tokens"].get<std::int64_t>();
        outputs = json::array();
        for (const auto& c : body.value("commands", json::array())) {
            const auto cmd = c.get<std::string>();
            const auto r = env.exec(cmd, std::chrono::duration_cast<std::chrono::milliseconds>(
                                             std::max(left, std::chrono::seconds(1))));
            outputs.push_back({{"command", cmd}, {"exit_code", r.exit_code}, {"output", text::tail(r.output, 16384)}});
            a.log_tail = text::tail(a.log_tail + r.output, 4096);
        }
        if (body.value("done", false)) break;
    }
    a.usage = {turns, tokens};
    return a;
}

// ---------------------------------------------------------------------------

std::vector<TaskResult> run_benchmark(const std::vector<BenchTask>& tasks, BenchAgent& agent,
                                      harness::Executor& executor, const BenchOptions& options) {
    std::vector<TaskResult> results(tasks.size());
    parallel_for(tasks.size(), options.workers, [&](std::size_t i) {
        const auto& task = tasks[i];
        TaskResult& r = results[i];
        r.cve_id = task.cve_id;
        r.publish_date = task.publish_date;
        r.language = task.language;
        r.cwe_category = task.cwe_category;
        try {
            harness::EnvironmentGuard env(executor.bring_up(task.root, "bench-" + task.cve_id));
            const auto guard = harness::check_env_ready(*env, task.root, options.timeouts);
            if (!guard.pass) {
                r.detail = "env_ready guard failed: " + guard.detail;
                return;
            }
            const auto att = agent.attempt(task, *env, std::chrono::steady_clock::now() + options.agent_timeout);
            r.metered = att.usage.turns.has_value() || att.usage.tokens.has_value();
            r.turns = att.usage.turns.value_or(0);
            r.tokens = att.usage.tokens.value_or(0);
            const auto [func, vuln] = harness::run_suites(*env, task.root, options.timeouts);
            r.solved = harness::fix_ready_holds(func, vuln);
            r.detail = harness::fix_ready_verdict(func, vuln).detail;
        } catch (const Error& e) {
            r.solved = false;
            r.detail = fmt::format("{}: {}", e.kind(), e.what());
        } catch (const std::exception& e) {
            r.solved = false;
            r.detail = e.what();
        }
    });
    return results;
}

}  // namespace forge::bench
