#include "forge/harness.hpp"

#include <atomic>
#include <cctype>
#include <charconv>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <unistd.h>
#include <yaml-cpp/yaml.h>

#include "forge/error.hpp"
#include "forge/taskpkg.hpp"
#include "forge/text.hpp"

namespace forge::harness {

namespace fs = std::filesystem;

std::string_view to_string(Suite s) { return s == Suite::func ? "func" : "vuln"; }

std::string_view to_string(Gate g) {
    switch (g) {
        case Gate::env_ready: return "env_ready";
        case Gate::fix_ready: return "fix_ready";
        case Gate::cve_ready: return "cve_ready";
    }
    return "env_ready";
}

Gate gate_from_string(std::string_view s) {
    if (s == "env_ready") return Gate::env_ready;
    if (s == "fix_ready") return Gate::fix_ready;
    if (s == "cve_ready") return Gate::cve_ready;
    throw ConfigError(fmt::format("unknown gate `{}` (expected env_ready, fix_ready or cve_ready)", s));
}

// ---------------------------------------------------------------------------
// summary parsing

namespace {

struct Trailer {
    int passed = 0;
    int failed = 0;
    double seconds = 0;
};

bool parse_int(std::string_view s, int& out) {
    if (s.empty() || s.size() > 9) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

// "<items> in <T>s[ ...]" with optional '=' framing.
std::optional<Trailer> parse_trailer_line(std::string_view line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '=')) line.remove_suffix(1);
    while (!line.empty() && (line.front() == ' ' || line.front() == '=')) line.remove_prefix(1);
    const auto in_pos = line.rfind(" in ");
    if (in_pos == std::string_view::npos) return std::nullopt;
    auto dur = line.substr(in_pos + 4);
    std::size_t i = 0;
    while (i < dur.size() && (std::isdigit(static_cast<unsigned char>(dur[i])) || dur[i] == '.')) ++i;
    if (i == 0 || i >= dur.size() || dur[i] != 's') return std::nullopt;
    if (i + 1 < dur.size() && dur[i + 1] != ' ') return std::nullopt;
    Trailer t;
    {
        const std::string num(dur.substr(0, i));
        char* end = nullptr;
        t.seconds = std::strtod(num.c_str(), &end);
        if (end != num.c_str() + num.size()) return std::nullopt;
    }
    bool counted = false;
    for (const auto& raw : text::split(line.substr(0, in_pos), ',')) {
        const auto item = text::trim(raw);
        const auto sp = item.find(' ');
        if (sp == std::string_view::npos) return std::nullopt;
        int n = 0;
        if (!parse_int(item.substr(0, sp), n)) return std::nullopt;
        const auto word = item.substr(sp + 1);
        if (word == "passed") {
            t.passed += n;
            counted = true;
        } else if (word == "failed" || word == "error" || word == "errors") {
            t.failed += n;
            counted = true;
        } else if (word != "skipped" && word != "xfailed" && word != "xpassed" && word != "warning" &&
                   word != "warnings" && word != "deselected" && word != "rerun" && word != "reruns") {
            return std::nullopt;
        }
    }
    if (!counted) return std::nullopt;
    return t;
}

}  // namespace

SuiteResult parse_test_summary(std::string_view output) {
    SuiteResult r;
    r.raw_tail = text::tail(output, 4096);
    std::optional<Trailer> last;
    std::size_t start = 0;
    while (start <= output.size()) {
        auto end = output.find('\n', start);
        if (end == std::string_view::npos) end = output.size();
        const auto line = output.substr(start, end - start);
        if (auto t = parse_trailer_line(line)) last = t;
        for (std::string_view tag : {"FAILED ", "ERROR "}) {
            if (line.substr(0, tag.size()) == tag) {
                auto name = line.substr(tag.size());
                if (const auto dash = name.find(" - "); dash != std::string_view::npos) name = name.substr(0, dash);
                name = text::trim(name);
                if (!name.empty()) r.failing_tests.emplace_back(name);
            }
        }
        start = end + 1;
    }
    if (last) {
        r.passed = last->passed;
        r.failed = last->failed;
        r.duration_s = last->seconds;
    } else {
        r.error = true;
    }
    return r;
}

// ---------------------------------------------------------------------------
// verdicts

bool env_ready_holds(const SuiteResult& func, const SuiteResult& vuln) {
    return !vuln.error && vuln.failed >= 1 && !func.error && func.failed == 0 && func.passed >= 1;
}

bool fix_ready_holds(const SuiteResult& func, const SuiteResult& vuln) {
    return !vuln.error && !func.error && vuln.failed == 0 && func.failed == 0 && vuln.passed + func.passed >= 1;
}

namespace {

std::string names(const SuiteResult& s) {
    if (s.failing_tests.empty()) return {};
    std::string out = " (";
    for (std::size_t i = 0; i < s.failing_tests.size(); ++i) out += (i ? ", " : "") + s.failing_tests[i];
    return out + ")";
}

std::string counts(const SuiteResult& s) {
    if (s.error) return fmt::format("{}: no test summary", to_string(s.suite));
    return fmt::format("{}: {} failed, {} passed", to_string(s.suite), s.failed, s.passed);
}

}  // namespace

GateVerdict env_ready_verdict(const SuiteResult& func, const SuiteResult& vuln) {
    GateVerdict v{Gate::env_ready, env_ready_holds(func, vuln), func, vuln, {}, {}, {}};
    std::vector<std::string> why;
    if (vuln.error || vuln.failed == 0) why.push_back("vulnerability not present");
    if (func.error || func.failed > 0 || func.passed == 0) why.push_back("environment unstable" + names(func));
    v.detail = fmt::format("{}; {}", counts(func), counts(vuln));
    if (!why.empty()) v.detail = fmt::format("{}: {}", fmt::join(why, "; "), v.detail);
    else v.detail = "vulnerability present, functionality stable" + names(vuln) + ": " + v.detail;
    return v;
}

GateVerdict fix_ready_verdict(const SuiteResult& func, const SuiteResult& vuln) {
    GateVerdict v{Gate::fix_ready, fix_ready_holds(func, vuln), func, vuln, {}, {}, {}};
    std::vector<std::string> why;
    if (vuln.error || vuln.failed > 0) why.push_back("vulnerability not fixed" + names(vuln));
    if (func.error || func.failed > 0) why.push_back("fix breaks functionality" + names(func));
    if (why.empty() && vuln.passed + func.passed == 0) why.push_back("no tests ran");
    v.detail = fmt::format("{}; {}", counts(func), counts(vuln));
    v.detail = why.empty() ? "fix verified: " + v.detail : fmt::format("{}: {}", fmt::join(why, "; "), v.detail);
    return v;
}

// ---------------------------------------------------------------------------
// running suites inside an environment

EnvironmentGuard::~EnvironmentGuard() {
    if (!env_) return;
    try {
        env_->teardown();
    } catch (...) {
    }
}

namespace {

std::atomic<unsigned> g_stage_counter{0};

std::string staging_path(std::string_view what) {
    return fmt::format("/tmp/forge-{}-{}-{}", what, ::getpid(), g_stage_counter.fetch_add(1));
}

std::chrono::milliseconds ms(std::chrono::seconds s) { return std::chrono::duration_cast<std::chrono::milliseconds>(s); }

std::string quote(std::string_view s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

}  // namespace

std::pair<SuiteResult, SuiteResult> run_suites(Environment& env, const fs::path& pkg_root, const Timeouts& timeouts) {
    const auto tests_dir = pkg_root / "tests";
    if (!fs::is_regular_file(pkg_root / taskpkg::files::run_tests))
        throw TestScriptMissing(fmt::format("{} has no {}", pkg_root.string(), taskpkg::files::run_tests));
    const auto stage = env.copy_in(tests_dir, staging_path("tests"));

    auto run_one = [&](Suite suite, std::string_view file) {
        const auto script = fmt::format("bash {} {}", quote(stage + "/run-tests.sh"),
                                        quote(stage + "/" + fs::path(file).filename().string()));
        const auto res = env.exec(script, ms(timeouts.tests));
        if (res.timed_out)
            throw TestRunnerCrash(fmt::format("{} suite timed out after {} s\n{}", to_string(suite),
                                              timeouts.tests.count(), text::tail(res.output, 2048)));
        auto sr = parse_test_summary(res.output);
        sr.suite = suite;
        if (sr.error)
            throw TestRunnerCrash(fmt::format("{} suite ended without a test summary (exit {})\n{}", to_string(suite),
                                              res.exit_code, text::tail(res.output, 2048)));
        return sr;
    };
    std::pair<SuiteResult, SuiteResult> out;
    try {
        out.first = run_one(Suite::func, taskpkg::files::test_func);
        out.second = run_one(Suite::vuln, taskpkg::files::test_vuln);
    } catch (...) {
        env.exec("rm -rf " + quote(stage), std::chrono::seconds(30));
        throw;
    }
    env.exec("rm -rf " + quote(stage), std::chrono::seconds(30));
    return out;
}

ApplyReport apply_solution(Environment& env, const fs::path& pkg_root, const Timeouts& timeouts) {
    const auto sol = pkg_root / taskpkg::files::solution;
    if (!fs::is_regular_file(sol)) throw SolutionScriptMissing(fmt::format("{} has no solution.sh", pkg_root.string()));
    const auto dest = env.copy_in(sol, staging_path("solution") + ".sh");
    const auto res = env.exec("bash " + quote(dest), ms(timeouts.tests));
    env.exec("rm -f " + quote(dest), std::chrono::seconds(30));
    return {res.timed_out ? -1 : res.exit_code, res.timed_out, text::tail(res.output, 4096)};
}

namespace {

GateVerdict failed_verdict(Gate g, std::string detail, std::string env_id = {}) {
    GateVerdict v;
    v.gate = g;
    v.pass = false;
    v.func.error = v.vuln.error = true;
    v.vuln.suite = Suite::vuln;
    v.detail = std::move(detail);
    v.environment_id = std::move(env_id);
    return v;
}

template <typename F>
GateVerdict guarded(Gate g, const std::string& env_id, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        return failed_verdict(g, fmt::format("{}: {}", e.kind(), e.what()), env_id);
    } catch (const std::exception& e) {
        return failed_verdict(g, fmt::format("harness error: {}", e.what()), env_id);
    }
}

}  // namespace

GateVerdict check_env_ready(Environment& env, const fs::path& pkg_root, const Timeouts& timeouts) {
    return guarded(Gate::env_ready, env.id(), [&] {
        const auto [func, vuln] = run_suites(env, pkg_root, timeouts);
        auto v = env_ready_verdict(func, vuln);
        v.environment_id = env.id();
        return v;
    });
}

GateVerdict check_fix_ready(Environment& env, const fs::path& pkg_root, const Timeouts& timeouts) {
    return guarded(Gate::fix_ready, env.id(), [&] {
        const auto report = apply_solution(env, pkg_root, timeouts);
        const auto [func, vuln] = run_suites(env, pkg_root, timeouts);
        auto v = fix_ready_verdict(func, vuln);
        v.environment_id = env.id();
        if (!report.ok()) {
            v.pass = false;
            v.detail = fmt::format("solution.sh {}: {}\n{}",
                                   report.timed_out ? "timed out" : fmt::format("exited {}", report.exit_code),
                                   v.detail, report.output_tail);
        }
        return v;
    });
}

namespace {

template <typename F>
GateVerdict with_fresh(Gate g, Executor& ex, const fs::path& pkg_root, const std::string& instance_id, F&& f) {
    return guarded(g, {}, [&] {
        EnvironmentGuard env(ex.bring_up(pkg_root, instance_id));
        auto v = f(*env);
        env->teardown();
        return v;
    });
}

}  // namespace

GateVerdict check_env_ready(Executor& ex, const fs::path& pkg_root, const std::string& instance_id,
                            const Timeouts& timeouts) {
    return with_fresh(Gate::env_ready, ex, pkg_root, instance_id,
                      [&](Environment& env) { return check_env_ready(env, pkg_root, timeouts); });
}

GateVerdict check_fix_ready(Executor& ex, const fs::path& pkg_root, const std::string& instance_id,
                            const Timeouts& timeouts) {
    return with_fresh(Gate::fix_ready, ex, pkg_root, instance_id,
                      [&](Environment& env) { return check_fix_ready(env, pkg_root, timeouts); });
}

GateVerdict check_cve_ready(Executor& ex, const fs::path& pkg_root, const std::string& instance_id,
                            const Timeouts& timeouts) {
    return with_fresh(Gate::cve_ready, ex, pkg_root, instance_id, [&](Environment& env) {
        GateVerdict v;
        v.gate = Gate::cve_ready;
        v.environment_id = env.id();
        auto env_v = check_env_ready(env, pkg_root, timeouts);
        v.func = env_v.func;
        v.vuln = env_v.vuln;
        v.components.push_back(env_v);
        if (!env_v.pass) {
            v.detail = "env_ready failed: " + env_v.detail;
            return v;
        }
        auto fix_v = check_fix_ready(env, pkg_root, timeouts);
        v.func = fix_v.func;
        v.vuln = fix_v.vuln;
        v.components.push_back(fix_v);
        v.pass = fix_v.pass && fix_v.environment_id == env_v.environment_id;
        v.detail = v.pass ? "env_ready and fix_ready passed on one fresh environment" : "fix_ready failed: " + fix_v.detail;
        return v;
    });
}

// ---------------------------------------------------------------------------
// Dockerfile and compose inspection

std::vector<DockerfileStep> parse_dockerfile(std::string_view text) {
    std::vector<DockerfileStep> steps;
    std::string logical;
    int logical_line = 0;
    int line_no = 0;
    auto flush = [&] {
        const auto t = std::string(text::trim(logical));
        logical.clear();
        if (t.empty()) return;
        DockerfileStep s;
        s.line = logical_line;
        const auto sp = t.find_first_of(" \t");
        s.instruction = t.substr(0, sp);
        for (auto& c : s.instruction) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        const std::string rest = sp == std::string::npos ? "" : std::string(text::trim(std::string_view(t).substr(sp)));
        if (!rest.empty() && rest.front() == '[') {
            // exec form
            try {
                auto node = YAML::Load(rest);
                for (const auto& n : node) s.args.push_back(n.as<std::string>());
            } catch (const YAML::Exception&) {
                s.args.push_back(rest);
            }
        } else {
            std::string cur;
            char q = 0;
            for (char c : rest) {
                if (q) {
                    if (c == q) q = 0;
                    else cur += c;
                } else if (c == '"' || c == '\'') {
                    q = c;
                } else if (c == ' ' || c == '\t') {
                    if (!cur.empty()) s.args.push_back(std::move(cur)), cur.clear();
                } else {
                    cur += c;
                }
            }
            if (!cur.empty()) s.args.push_back(std::move(cur));
        }
        steps.push_back(std::move(s));
    };
    for (const auto& raw : text::split(text, '\n')) {
        ++line_no;
        auto line = std::string(raw);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto tl = text::trim(line);
        if (logical.empty() && (tl.empty() || tl.front() == '#')) continue;
        if (!logical.empty() && !tl.empty() && tl.front() == '#') continue;
        if (logical.empty()) logical_line = line_no;
        if (!tl.empty() && tl.back() == '\\') {
            logical += std::string(tl.substr(0, tl.size() - 1)) + " ";
            continue;
        }
        logical += std::string(tl);
        flush();
    }
    flush();
    return steps;
}

ComposeService primary_service(const fs::path& compose_file) {
    YAML::Node doc;
    try {
        doc = YAML::LoadFile(compose_file.string());
    } catch (const YAML::Exception& e) {
        throw BuildFailure(fmt::format("{}: {}", compose_file.string(), e.what()));
    }
    const auto services = doc["services"];
    if (!services || !services.IsMap() || services.size() == 0)
        throw BuildFailure(fmt::format("{}: no services defined", compose_file.string()));
    YAML::Node chosen;
    std::string name;
    for (const auto& kv : services) {
        if (kv.second.IsMap() && kv.second["build"]) {
            chosen = kv.second;
            name = kv.first.as<std::string>();
            break;
        }
    }
    if (!chosen) {
        name = services.begin()->first.as<std::string>();
        chosen = services.begin()->second;
    }
    ComposeService svc;
    svc.name = name;
    svc.build_context = ".";
    if (chosen.IsMap()) {
        if (const auto b = chosen["build"]) {
            if (b.IsScalar()) svc.build_context = b.as<std::string>();
            else if (b["context"]) svc.build_context = b["context"].as<std::string>();
        }
        if (const auto hc = chosen["healthcheck"]; hc && hc["test"] && !(hc["disable"] && hc["disable"].as<bool>())) {
            const auto t = hc["test"];
            if (t.IsScalar()) {
                svc.healthcheck = t.as<std::string>();
            } else if (t.IsSequence() && t.size() >= 1) {
                const auto kind = t[0].as<std::string>();
                std::vector<std::string> rest;
                for (std::size_t i = 1; i < t.size(); ++i) rest.push_back(t[i].as<std::string>());
                if (kind == "CMD-SHELL") {
                    svc.healthcheck = fmt::format("{}", fmt::join(rest, " "));
                } else if (kind == "CMD") {
                    std::string cmd;
                    for (const auto& a : rest) cmd += (cmd.empty() ? "" : " ") + quote(a);
                    svc.healthcheck = cmd;
                }
            }
        }
    }
    if (svc.healthcheck) {
        // compose escapes a literal `$` as `$$`
        std::string h;
        for (std::size_t i = 0; i < svc.healthcheck->size(); ++i) {
            h += (*svc.healthcheck)[i];
            if ((*svc.healthcheck)[i] == '$' && i + 1 < svc.healthcheck->size() && (*svc.healthcheck)[i + 1] == '$') ++i;
        }
        svc.healthcheck = h;
    }
    return svc;
}

}  // namespace forge::harness
