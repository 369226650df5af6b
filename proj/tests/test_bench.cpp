#include <doctest.h>

#include <cstdio>

#include <fmt/format.h>

#include "forge/bench.hpp"
#include "forge/error.hpp"
#include "support/oracles.hpp"
#include "support/support.hpp"

using namespace forge;
using namespace forge::bench;
namespace fs = std::filesystem;
using forge::testing::Gen;
using forge::testing::TempDir;

namespace {

std::string random_date(Gen& g) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", g.between(2018, 2026), g.between(1, 12), g.between(1, 28));
    return buf;
}

int ymd(const std::string& d) {
    int y = 0, m = 0, day = 0;
    std::sscanf(d.c_str(), "%d-%d-%d", &y, &m, &day);
    return y * 10000 + m * 100 + day;
}

TaskResult result(std::string id, bool solved, std::int64_t turns, std::int64_t tokens, std::string date = "2025-01-01",
                  std::string lang = "python", std::string cwe = "xss") {
    TaskResult r;
    r.cve_id = std::move(id);
    r.solved = solved;
    r.turns = turns;
    r.tokens = tokens;
    r.metered = true;
    r.publish_date = std::move(date);
    r.language = std::move(lang);
    r.cwe_category = std::move(cwe);
    return r;
}

// Toy and sqli packages, each copied `copies` times with distinct metadata.
std::vector<BenchTask> verified_packages(const fs::path& dir, int copies) {
    int n = 0;
    for (const char* base : {"toy_pkg", "toy_sqli"})
        for (int i = 0; i < copies; ++i) {
            const auto dst = dir / fmt::format("{}-{}", base, i);
            fs::create_directories(dst);
            fs::copy(forge::testing::fixture(base), dst, fs::copy_options::recursive);
            text::write_file(dst / "task-meta.json",
                             fmt::format(R"({{"cve_id":"CVE-2099-2{:04d}","publish_date":"2099-0{}-01",)"
                                         R"("language":"python","cwe_category":"{}"}})",
                                         n++, 1 + i % 9, base == std::string("toy_pkg") ? "path_traversal" : "sqli"));
        }
    return load_tasks(dir);
}

BenchOptions quick() {
    BenchOptions o;
    o.workers = 4;
    o.timeouts.tests = std::chrono::seconds(60);
    o.agent_timeout = std::chrono::seconds(30);
    return o;
}

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("pass rate examples") {
    CHECK(pass_rate(205, 215) == 95.35);
    CHECK(pass_rate(0, 7) == 0.0);
    CHECK(pass_rate(7, 7) == 100.0);
    CHECK(pass_rate(7, 13) == 53.85);
    CHECK(pass_rate(1, 3) == 33.33);
    CHECK(pass_rate(2, 3) == 66.67);
    CHECK(pass_rate(1, 8) == 12.5);
    CHECK_THROWS_AS(pass_rate(0, 0), EmptyResults);
    CHECK_THROWS_AS(pass_rate(std::vector<TaskResult>{}), EmptyResults);
}

TEST_CASE("pass rate against integer oracle") {
    for (int t = 1; t <= 400; ++t)
        for (int s = 0; s <= t; s += 1 + t / 50) {
            CAPTURE(s);
            CAPTURE(t);
            CHECK(pass_rate(s, t) == forge::oracle::pass_rate_hundredths(s, t) / 100.0);
        }
}

TEST_CASE("release partition matches brute force") {
    Gen g(10);
    std::vector<TaskResult> rs;
    for (int i = 0; i < 300; ++i) rs.push_back(result("CVE-" + std::to_string(i), g.coin(), 1, 1, random_date(g)));
    for (int k = 0; k < 50; ++k) {
        const auto release = random_date(g);
        const auto [pre, post] = partition_by_release(rs, release);
        std::vector<TaskResult> bpre, bpost;
        for (const auto& r : rs) (ymd(r.publish_date) <= ymd(release) ? bpre : bpost).push_back(r);
        CHECK(pre == bpre);
        CHECK(post == bpost);
    }
    CHECK(partition_by_release({result("a", true, 1, 1, "2025-03-01")}, "2025-03-01").first.size() == 1);
    CHECK(partition_by_release({result("a", true, 1, 1, "2025-03-01T10:00:00Z")}, "2025-02-28").second.size() == 1);
    CHECK_THROWS_AS(partition_by_release(rs, "March 2025"), ConfigError);
    CHECK_THROWS_AS(partition_by_release({result("a", true, 1, 1, "")}, "2025-01-01"), ConfigError);
}

TEST_CASE("summaries") {
    const std::vector<TaskResult> rs{result("a", true, 10, 1000, "2025-01-01"), result("b", true, 20, 3000, "2025-06-01"),
                                     result("c", false, 40, 9000, "2025-06-01"), result("d", false, 0, 0, "2024-12-31")};
    const auto b = summarize(rs);
    CHECK(b.total == 4);
    CHECK(b.solved == 2);
    CHECK(b.pass_rate_pct == 50.0);
    CHECK(b.mean_turns_success == 15.0);
    CHECK(b.mean_tokens_success == 2000.0);
    CHECK(b.mean_turns_failed == 20.0);
    CHECK(b.mean_tokens_failed == 4500.0);
    CHECK_FALSE(b.pre);

    const auto p = summarize(rs, "2025-03-01");
    REQUIRE(p.pre);
    CHECK(p.pre->total == 2);
    CHECK(p.pre->solved == 1);
    CHECK(p.post->total == 2);
    CHECK(p.post->pass_rate_pct == 50.0);

    const auto e = summarize({});
    CHECK(e.total == 0);
    CHECK(e.pass_rate_pct == 0.0);
}

TEST_CASE("grouped report round trips") {
    Gen g(4);
    std::vector<TaskResult> rs;
    for (int i = 0; i < 60; ++i)
        rs.push_back(result(forge::testing::cve_id(2025, i), g.coin(0.6), g.between(1, 80), g.between(100, 90000),
                            random_date(g), g.pick(std::vector<std::string>{"python", "php", "go", "javascript"}),
                            g.pick(std::vector<std::string>{"xss", "sqli", "path_traversal"})));
    rs[3].detail = "env_ready guard failed: \"quoted\"\nline";
    rs[5].metered = false;
    const auto rep = build_report(rs, {"language", "cwe_category", "partition"}, std::string("2022-06-30"));
    CHECK(rep.groups.at("partition").at("pre").total + rep.groups.at("partition").at("post").total == 60);
    int lang_total = 0;
    for (const auto& [k, v] : rep.groups.at("language")) lang_total += v.total;
    CHECK(lang_total == 60);
    CHECK(rep.overall.pre->total == rep.groups.at("partition").at("pre").total);
    const auto back = report_from_json(report_to_json(rep));
    CHECK(back == rep);
    const auto text = report_to_text(rep);
    CHECK(text.find("[cwe_category]") != std::string::npos);
    CHECK(text.find("pre-release") != std::string::npos);

    CHECK_THROWS_AS(build_report(rs, {"partition"}), ConfigError);
    CHECK_THROWS_AS(build_report(rs, {"vendor"}), ConfigError);
    CHECK_THROWS_AS(report_from_json("{\"overall\": 3}"), ConfigError);
}

TEST_CASE("task loading") {
    const auto t = load_task(forge::testing::fixture("toy_pkg"));
    CHECK(t.cve_id == "CVE-2099-10001");
    CHECK(t.publish_date == "2099-03-14");
    CHECK(t.language == "python");
    CHECK(t.cwe_category == "path_traversal");
    CHECK(t.instruction.rfind("I run a small notes service.", 0) == 0);

    TempDir d("load");
    const auto pkg = forge::testing::toy_package(d / "nested/pkg");
    fs::remove(pkg / "task-meta.json");
    fs::copy_file(forge::testing::fixture("corpus/CVE-2025-10686.json"), d / "unrelated.json");
    text::write_file(pkg / "CVE-2025-10686.md",
                     corpus::render_digest(corpus::parse_cve_json(text::read_file(d / "unrelated.json")), 68).markdown);
    const auto tasks = load_tasks(d.path());
    REQUIRE(tasks.size() == 1);
    CHECK(tasks[0].cve_id == "CVE-2025-10686");
    CHECK(tasks[0].language == "unknown");
    CHECK(tasks[0].cwe_category == "unclassified");
    CHECK(tasks[0].publish_date.rfind("2025-", 0) == 0);
    CHECK_THROWS_AS(load_task(d / "missing"), NotADirectory);
}

TEST_CASE("golden replay solves every verified package") {
    TempDir d("golden");
    const auto tasks = verified_packages(d / "pkgs", 3);
    REQUIRE(tasks.size() == 6);
    auto ex = forge::testing::local_executor(d / "scratch");
    GoldenReplayAgent golden;
    const auto rs = run_benchmark(tasks, golden, ex, quick());
    REQUIRE(rs.size() == tasks.size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
        CAPTURE(rs[i].detail);
        CHECK(rs[i].solved);
        CHECK(rs[i].cve_id == tasks[i].cve_id);
        CHECK_FALSE(rs[i].metered);
    }
    CHECK(pass_rate(rs) == 100.0);
    // the packages on disk stay unpatched
    CHECK(text::read_file(tasks[0].root / "task-deps/app/notes.py") ==
          text::read_file(forge::testing::fixture("toy_pkg/task-deps/app/notes.py")));
}

TEST_CASE("agents that do nothing or break things fail") {
    TempDir d("nulls");
    const auto tasks = verified_packages(d / "pkgs", 1);
    auto ex = forge::testing::local_executor(d / "scratch");
    NullAgent null_agent;
    for (const auto& r : run_benchmark(tasks, null_agent, ex, quick())) {
        CHECK_FALSE(r.solved);
        CHECK(r.detail.find("vulnerability not fixed") != std::string::npos);
    }
    ScriptedShellAgent wrecker({"rm -f \"$APP_ROOT\"/*.py", "echo done"});
    const auto rs = run_benchmark(tasks, wrecker, ex, quick());
    for (const auto& r : rs) {
        CHECK_FALSE(r.solved);
        CHECK(r.turns == 2);
        CHECK(r.metered);
    }
    ScriptedShellAgent peeker({"test -e \"$APP_ROOT\"/../tests || test -e /tmp/forge-tests-* || echo hidden"});
    CHECK_FALSE(run_benchmark({tasks[0]}, peeker, ex, quick())[0].solved);
}

TEST_CASE("broken environments are reported, not thrown") {
    TempDir d("broken");
    auto leak = forge::testing::toy_package(d / "leak", {"fix_leak"});
    auto unhealthy = forge::testing::toy_package(d / "unhealthy", {"unhealthy"});
    std::vector<BenchTask> tasks{load_task(leak), load_task(unhealthy)};
    auto ex = forge::testing::local_executor(d / "scratch", 1);
    GoldenReplayAgent golden;
    const auto rs = run_benchmark(tasks, golden, ex, quick());
    CHECK_FALSE(rs[0].solved);
    CHECK(rs[0].detail.rfind("env_ready guard failed", 0) == 0);
    CHECK_FALSE(rs[1].solved);
    CHECK(rs[1].detail.rfind("StartupTimeout", 0) == 0);
}

TEST_CASE("http agent needs an http endpoint") {
    agent::HttpBackendConfig c;
    c.endpoint = "https://example.com/agent";
    CHECK_THROWS_AS(HttpBenchAgent{c}, ConfigError);
}

}  // TEST_SUITE
