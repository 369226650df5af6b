#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace forge {

enum class Role { analyzer, generator, builder, validator, solver, checker };

std::string_view to_string(Role r);
Role role_from_string(std::string_view s);  // throws UnknownRole
inline constexpr std::array kAllRoles{Role::analyzer, Role::generator, Role::builder,
                                      Role::validator, Role::solver,   Role::checker};

}  // namespace forge

namespace forge::taskpkg {

// Package-relative file names.
namespace files {
inline constexpr std::string_view task_yaml = "task.yaml";
inline constexpr std::string_view test_func = "tests/test_func.py";
inline constexpr std::string_view test_vuln = "tests/test_vuln.py";
inline constexpr std::string_view run_tests = "tests/run-tests.sh";
inline constexpr std::string_view solution = "solution.sh";
inline constexpr std::string_view deps_dir = "task-deps";
inline constexpr std::string_view dockerfile = "Dockerfile";
inline constexpr std::string_view compose = "docker-compose.yaml";
inline constexpr std::string_view docker_reqs = "docker-reqs.md";
inline constexpr std::string_view public_doc = "public.md";
inline constexpr std::string_view agent_res = "agent-res.xml";
inline constexpr std::array<std::string_view, 4> role_docs{"generator.md", "builder.md", "validator.md", "solver.md"};
}  // namespace files

enum class Difficulty { easy, medium, hard };
std::string_view to_string(Difficulty d);

struct TaskSpec {
    std::string instruction;
    Difficulty difficulty = Difficulty::medium;
    std::string category = "security";
    std::vector<std::string> tags;
    std::string parser_name = "pytest";
    bool run_tests_in_same_shell = false;
    // Keys outside the schema, kept verbatim (key, YAML text) in file order.
    std::vector<std::pair<std::string, std::string>> extra;

    friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

// Throws MalformedSpec carrying the offending line/column.
TaskSpec parse_task_spec(std::string_view yaml);
std::string emit_task_spec(const TaskSpec& spec);
TaskSpec read_task_spec(const std::filesystem::path& path);
void write_task_spec(const TaskSpec& spec, const std::filesystem::path& path);

// Every schema violation of a task.yaml document, one message per problem.
std::vector<std::string> task_spec_schema_errors(std::string_view yaml);

// Problems with a docker-compose document (must be a non-empty service map).
std::vector<std::string> compose_schema_errors(std::string_view yaml);

struct StageGateReport {
    int stage = 0;
    std::vector<std::string> missing_files;
    std::vector<std::pair<std::string, std::string>> schema_errors;  // (file, message)
    bool passed = false;
};

std::vector<std::string> required_files(int stage);

// Static output check for the generation stages 1..3. Reports every
// violation. Throws NotADirectory for a bad root, std::invalid_argument
// for another stage number.
StageGateReport validate_stage_outputs(const std::filesystem::path& pkg_root, int stage);

// Creator of a package path under the fixed ownership table, nullopt for
// untracked or out-of-root paths.
std::optional<Role> owner_of(std::string_view relative_path);

using OwnerMap = std::map<std::string, Role>;

struct TaskPackage {
    std::filesystem::path root;
    std::optional<TaskSpec> instruction;
    OwnerMap owner_map;  // every tracked file present on disk
};

TaskPackage load_package(const std::filesystem::path& root);

// Machine-checkable approximations of the manual verification criteria.
struct AuditFinding {
    std::string flag;  // static_test | version_bump_solution
    std::string file;
    std::string message;
};
std::vector<AuditFinding> audit_package(const std::filesystem::path& pkg_root);

}  // namespace forge::taskpkg
