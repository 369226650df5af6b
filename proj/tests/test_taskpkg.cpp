#include <doctest.h>

#include <set>

#include "forge/error.hpp"
#include "forge/taskpkg.hpp"
#include "forge/workspace.hpp"
#include "support/support.hpp"

using namespace forge;
namespace fs = std::filesystem;
using namespace forge::taskpkg;
using forge::testing::TempDir;

namespace {

const char* kCretaYaml = R"(instruction: |-
  I'm using the "Creta Testimonial Showcase" WordPress plugin to display
  customer testimonials on my site.

  Could you please fix this so the plugin only allows loading templates
  from within its designated templates folder?

difficulty: medium
category: security
tags:
  - wordpress
  - plugin
  - php
  - path-handling
parser_name: pytest
run_tests_in_same_shell: false
)";

void touch(const fs::path& p, std::string_view content = "x\n") { text::write_file(p, content); }

}  // namespace

TEST_SUITE("taskpkg") {

TEST_CASE("task.yaml example") {
    const auto s = parse_task_spec(kCretaYaml);
    CHECK(s.difficulty == Difficulty::medium);
    CHECK(s.category == "security");
    CHECK(s.run_tests_in_same_shell == false);
    CHECK(s.parser_name == "pytest");
    CHECK(s.tags == std::vector<std::string>{"wordpress", "plugin", "php", "path-handling"});
    CHECK(s.instruction.rfind("I'm using the \"Creta", 0) == 0);
    CHECK(s.instruction.back() == '?');
}

TEST_CASE("task.yaml round trips") {
    forge::testing::Gen g(3);
    for (int i = 0; i < 100; ++i) {
        TaskSpec s;
        s.instruction = g.from_alphabet("abc xyz:#-'\"\n{}[]|>", 80);
        if (text::trim(s.instruction).empty()) s.instruction = "fix it";
        s.difficulty = static_cast<Difficulty>(g.between(0, 2));
        s.category = g.coin() ? "security" : "web: misc";
        const int nt = g.between(0, 3);
        for (int t = 0; t < nt; ++t) s.tags.push_back(g.from_alphabet("abz-: ", 8) + "t");
        s.parser_name = g.coin() ? "pytest" : "unittest";
        s.run_tests_in_same_shell = g.coin();
        if (g.coin()) s.extra.emplace_back("timeout_sec", std::to_string(g.between(1, 999)));
        CAPTURE(emit_task_spec(s));
        CHECK(parse_task_spec(emit_task_spec(s)) == s);
    }
}

TEST_CASE("empty tags round trip as an empty list") {
    TaskSpec s;
    s.instruction = "x";
    const auto yaml = emit_task_spec(s);
    CHECK(yaml.find("tags: []") != std::string::npos);
    CHECK(parse_task_spec(yaml).tags.empty());
}

TEST_CASE("unknown keys survive a file round trip") {
    TempDir d("spec");
    auto s = parse_task_spec(std::string(kCretaYaml) + "max_agent_timeout_sec: 1800\nauthor_notes:\n  - a\n  - b\n");
    REQUIRE(s.extra.size() == 2);
    write_task_spec(s, d / "task.yaml");
    const auto back = read_task_spec(d / "task.yaml");
    CHECK(back == s);
    CHECK(text::read_file(d / "task.yaml").find("max_agent_timeout_sec: 1800") != std::string::npos);
}

TEST_CASE("malformed task.yaml carries a position") {
    try {
        parse_task_spec("instruction: x\ndifficulty: [unterminated\n");
        FAIL("expected MalformedSpec");
    } catch (const MalformedSpec& e) {
        CHECK(e.line() >= 2);
    }
    CHECK_THROWS_AS(parse_task_spec("instruction: x\ndifficulty: impossible\nparser_name: pytest\n"), MalformedSpec);
    CHECK_THROWS_AS(parse_task_spec("- just\n- a list\n"), MalformedSpec);
}

TEST_CASE("schema errors name the missing key") {
    std::string yaml = kCretaYaml;
    yaml.erase(yaml.find("parser_name: pytest\n"), std::string("parser_name: pytest\n").size());
    const auto errs = task_spec_schema_errors(yaml);
    REQUIRE_FALSE(errs.empty());
    bool named = false;
    for (const auto& e : errs) named = named || e.find("parser_name") != std::string::npos;
    CHECK(named);
    CHECK(task_spec_schema_errors(kCretaYaml).empty());
}

TEST_CASE("stage gates") {
    TempDir d("pkg");
    const auto root = forge::testing::toy_package(d / "pkg");
    for (int s = 1; s <= 3; ++s) {
        const auto r = validate_stage_outputs(root, s);
        CAPTURE(s);
        CHECK(r.passed);
        CHECK(r.stage == s);
    }
    fs::remove(root / "solution.sh");
    auto r2 = validate_stage_outputs(root, 2);
    CHECK_FALSE(r2.passed);
    CHECK(r2.missing_files == std::vector<std::string>{"solution.sh"});

    std::string yaml = text::read_file(root / "task.yaml");
    yaml.erase(yaml.find("parser_name: pytest\n"), std::string("parser_name: pytest\n").size());
    text::write_file(root / "task.yaml", yaml);
    touch(root / "tests/test_func.py", "");
    r2 = validate_stage_outputs(root, 2);
    CHECK(r2.missing_files == std::vector<std::string>{"tests/test_func.py", "solution.sh"});
    REQUIRE_FALSE(r2.schema_errors.empty());
    CHECK(r2.schema_errors[0].first == "task.yaml");
    CHECK(r2.schema_errors[0].second.find("parser_name") != std::string::npos);

    touch(root / "docker-compose.yaml", "services: []\n");
    const auto r3 = validate_stage_outputs(root, 3);
    CHECK_FALSE(r3.passed);
    REQUIRE(r3.schema_errors.size() == 1);
    CHECK(r3.schema_errors[0].first == "docker-compose.yaml");

    fs::remove(root / "public.md");
    fs::remove(root / "solver.md");
    const auto r1 = validate_stage_outputs(root, 1);
    CHECK(r1.missing_files == std::vector<std::string>{"public.md", "solver.md"});

    CHECK_THROWS_AS(validate_stage_outputs(root / "nope", 1), NotADirectory);
    CHECK_THROWS_AS(validate_stage_outputs(root, 4), std::invalid_argument);
}

TEST_CASE("passing gate implies the files exist") {
    forge::testing::Gen g(11);
    TempDir d("gate");
    for (int trial = 0; trial < 40; ++trial) {
        const auto root = d / std::to_string(trial);
        fs::create_directories(root);
        const int stage = g.between(1, 3);
        for (const auto& f : required_files(stage))
            if (g.coin(0.85)) touch(root / f, f == "task.yaml" ? text::read_file(forge::testing::fixture("toy_pkg/task.yaml"))
                                             : (f == "docker-compose.yaml" ? "services:\n  app:\n    image: x\n" : "x\n"));
        const auto r = validate_stage_outputs(root, stage);
        if (r.passed)
            for (const auto& f : required_files(stage)) CHECK(fs::file_size(root / f) > 0);
        CHECK(r.passed == (r.missing_files.empty() && r.schema_errors.empty()));
    }
}

TEST_CASE("ownership table") {
    CHECK(owner_of("public.md") == Role::analyzer);
    for (auto d : files::role_docs) CHECK(owner_of(d) == Role::analyzer);
    CHECK(owner_of("task.yaml") == Role::generator);
    CHECK(owner_of("tests/test_func.py") == Role::generator);
    CHECK(owner_of("tests/helpers/data.json") == Role::generator);
    CHECK(owner_of("solution.sh") == Role::generator);
    CHECK(owner_of("docker-reqs.md") == Role::generator);
    CHECK(owner_of("Dockerfile") == Role::builder);
    CHECK(owner_of("./Dockerfile") == Role::builder);
    CHECK(owner_of("docker-compose.yaml") == Role::builder);
    CHECK(owner_of("task-deps/app/notes.py") == Role::builder);
    CHECK_FALSE(owner_of("../etc/passwd"));
    CHECK_FALSE(owner_of("/etc/passwd"));
    CHECK_FALSE(owner_of("README.md"));
    CHECK_FALSE(owner_of("tests"));
}

TEST_CASE("owner map covers every tracked file once") {
    TempDir d("own");
    const auto root = forge::testing::toy_package(d / "pkg");
    const auto pkg = load_package(root);
    REQUIRE(pkg.instruction);
    std::set<std::string> tracked;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) {
            const auto rel = fs::relative(e.path(), root).generic_string();
            if (owner_of(rel)) tracked.insert(rel);
        }
    CHECK(pkg.owner_map.size() == tracked.size());
    CHECK(pkg.owner_map.at("Dockerfile") == Role::builder);
    CHECK(pkg.owner_map.at("tests/run-tests.sh") == Role::generator);
    CHECK(pkg.owner_map.at("public.md") == Role::analyzer);
    CHECK(pkg.owner_map.count("task-meta.json") == 0);
    CHECK_THROWS_AS(load_package(root / "missing"), NotADirectory);
}

TEST_CASE("builder view is blind to tests and solution") {
    TempDir d("view");
    const auto root = forge::testing::toy_package(d / "pkg");
    const auto b = scoped_view(root, Role::builder);
    for (const auto& f : b.readable) {
        CHECK(f.rfind("tests/", 0) != 0);
        CHECK(f != "solution.sh");
    }
    CHECK(std::count(b.readable.begin(), b.readable.end(), "Dockerfile") == 1);
    CHECK_FALSE(b.can_read("tests/test_vuln.py"));
    CHECK_FALSE(b.can_read("./tests/../solution.sh"));
    CHECK_FALSE(b.can_write("task.yaml"));
    CHECK(b.can_write("task-deps/app/notes.py"));

    const auto c = scoped_view(root, Role::checker);
    std::vector<std::string> all;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) all.push_back(fs::relative(e.path(), root).generic_string());
    std::sort(all.begin(), all.end());
    CHECK(c.readable == all);
    CHECK(c.can_write("tests/test_vuln.py"));

    const auto a = scoped_view(root, Role::analyzer);
    CHECK(a.can_write("public.md"));
    CHECK_FALSE(a.can_write("Dockerfile"));
    CHECK_FALSE(a.can_write("../outside.md"));
    CHECK_THROWS_AS(role_from_string("janitor"), UnknownRole);
}

TEST_CASE("workspace mediates and logs access") {
    TempDir d("ws");
    const auto root = forge::testing::toy_package(d / "pkg");
    AccessLog log;
    Workspace b(scoped_view(root, Role::builder), log);
    CHECK(b.read("Dockerfile").find("WORKDIR /app") != std::string::npos);
    CHECK_THROWS_AS(b.read("tests/test_vuln.py"), AccessDenied);
    CHECK_THROWS_AS(b.read("solution.sh"), AccessDenied);
    CHECK_THROWS_AS(b.write("../escape.txt", "x"), AccessDenied);
    CHECK_THROWS_AS(b.write("/tmp/abs.txt", "x"), AccessDenied);
    CHECK_FALSE(b.exists("solution.sh"));
    b.write("task-deps/extra/setup.txt", "y");
    CHECK(fs::exists(root / "task-deps/extra/setup.txt"));
    for (const auto& f : b.list()) {
        CHECK(f.rfind("tests/", 0) != 0);
        CHECK(f != "solution.sh");
    }
    CHECK_FALSE(fs::exists(d / "escape.txt"));

    const auto entries = log.entries();
    for (const auto& e : entries) {
        CHECK(e.path.rfind("tests/", 0) != 0);
        CHECK(e.path != "solution.sh");
    }
    CHECK(log.denials().size() == 4);
    CHECK(entries.front() == AccessEntry{Role::builder, "read", "Dockerfile"});
}

TEST_CASE("audit flags static tests and version bumps") {
    TempDir d("audit");
    const auto clean = forge::testing::toy_package(d / "clean");
    CHECK(audit_package(clean).empty());
    const auto grep = forge::testing::toy_package(d / "grep", {"static_grep"});
    const auto f = audit_package(grep);
    REQUIRE(f.size() == 1);
    CHECK(f[0].flag == "static_test");
    touch(grep / "solution.sh", "#!/bin/sh\npip install --upgrade notes==2.0\n");
    CHECK(audit_package(grep).size() == 2);
}

}  // TEST_SUITE
