#include "forge/taskpkg.hpp"

#include <algorithm>
#include <regex>
#include <stdexcept>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge {

std::string_view to_string(Role r) {
    switch (r) {
        case Role::analyzer: return "analyzer";
        case Role::generator: return "generator";
        case Role::builder: return "builder";
        case Role::validator: return "validator";
        case Role::solver: return "solver";
        case Role::checker: return "checker";
    }
    return "analyzer";
}

Role role_from_string(std::string_view s) {
    const auto l = text::to_lower(s);
    for (auto r : kAllRoles)
        if (to_string(r) == l) return r;
    throw UnknownRole(fmt::format("unknown agent role `{}`", s));
}

}  // namespace forge

namespace forge::taskpkg {

namespace fs = std::filesystem;

std::string_view to_string(Difficulty d) {
    switch (d) {
        case Difficulty::easy: return "easy";
        case Difficulty::medium: return "medium";
        case Difficulty::hard: return "hard";
    }
    return "medium";
}

namespace {

constexpr std::array<std::string_view, 6> kSchemaKeys{"instruction", "difficulty", "category",
                                                      "tags",        "parser_name", "run_tests_in_same_shell"};

[[noreturn]] void malformed(const std::string& what, const YAML::Mark& mark) {
    const bool known = !mark.is_null();
    throw MalformedSpec(what, known ? mark.line + 1 : 0, known ? mark.column + 1 : 0);
}

YAML::Node load_yaml(std::string_view text) {
    try {
        return YAML::Load(std::string(text));
    } catch (const YAML::ParserException& e) {
        malformed(e.msg, e.mark);
    }
}

std::string scalar(const YAML::Node& n, std::string_view key) {
    if (!n.IsScalar()) malformed(fmt::format("`{}` must be a scalar", key), n.Mark());
    return n.Scalar();
}

bool instruction_is_literal_safe(std::string_view s) {
    if (s.find('\n') == std::string_view::npos) return false;
    if (s.front() == ' ' || s.front() == '\t' || s.front() == '\n') return false;
    if (s.back() == '\n') return false;
    for (const auto& line : text::split(s, '\n')) {
        if (!line.empty() && (line.back() == ' ' || line.back() == '\t')) return false;
        for (unsigned char c : line)
            if ((c < 0x20 && c != '\t') || c == 0x7f) return false;
    }
    return true;
}

}  // namespace

TaskSpec parse_task_spec(std::string_view yaml) {
    const YAML::Node root = load_yaml(yaml);
    if (!root.IsMap()) malformed("task.yaml must be a mapping", root.Mark());

    TaskSpec spec;
    std::vector<std::string_view> missing;
    for (auto key : kSchemaKeys)
        if (!root[std::string(key)]) missing.push_back(key);
    if (!missing.empty()) {
        std::string list;
        for (auto k : missing) list += (list.empty() ? "" : ", ") + std::string(k);
        malformed(fmt::format("task.yaml is missing required key(s): {}", list), root.Mark());
    }

    spec.instruction = scalar(root["instruction"], "instruction");
    if (text::trim(spec.instruction).empty()) malformed("`instruction` is empty", root["instruction"].Mark());

    const auto diff = scalar(root["difficulty"], "difficulty");
    if (diff == "easy") spec.difficulty = Difficulty::easy;
    else if (diff == "medium") spec.difficulty = Difficulty::medium;
    else if (diff == "hard") spec.difficulty = Difficulty::hard;
    else malformed(fmt::format("`difficulty` must be easy, medium or hard, not `{}`", diff), root["difficulty"].Mark());

    spec.category = scalar(root["category"], "category");

    const YAML::Node tags = root["tags"];
    if (tags.IsNull()) {
        // `tags:` with no value reads as an empty list
    } else if (!tags.IsSequence()) {
        malformed("`tags` must be a list", tags.Mark());
    } else {
        for (const auto& t : tags) spec.tags.push_back(scalar(t, "tags[]"));
    }

    spec.parser_name = scalar(root["parser_name"], "parser_name");
    if (text::trim(spec.parser_name).empty()) malformed("`parser_name` is empty", root["parser_name"].Mark());

    const YAML::Node same_shell = root["run_tests_in_same_shell"];
    try {
        spec.run_tests_in_same_shell = same_shell.as<bool>();
    } catch (const YAML::Exception&) {
        malformed("`run_tests_in_same_shell` must be a boolean", same_shell.Mark());
    }

    for (const auto& kv : root) {
        const auto key = kv.first.as<std::string>();
        if (std::find(kSchemaKeys.begin(), kSchemaKeys.end(), key) != kSchemaKeys.end()) continue;
        spec.extra.emplace_back(key, YAML::Dump(kv.second));
    }
    return spec;
}

std::string emit_task_spec(const TaskSpec& spec) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "instruction" << YAML::Value;
    if (instruction_is_literal_safe(spec.instruction)) out << YAML::Literal << spec.instruction;
    else out << YAML::DoubleQuoted << spec.instruction;
    out << YAML::Key << "difficulty" << YAML::Value << std::string(to_string(spec.difficulty));
    out << YAML::Key << "category" << YAML::Value << YAML::DoubleQuoted << spec.category;
    out << YAML::Key << "tags" << YAML::Value;
    if (spec.tags.empty()) out << YAML::Flow;
    out << YAML::BeginSeq;
    for (const auto& t : spec.tags) out << YAML::DoubleQuoted << t;
    out << YAML::EndSeq;
    out << YAML::Key << "parser_name" << YAML::Value << YAML::DoubleQuoted << spec.parser_name;
    out << YAML::Key << "run_tests_in_same_shell" << YAML::Value << spec.run_tests_in_same_shell;
    for (const auto& [k, v] : spec.extra) out << YAML::Key << k << YAML::Value << YAML::Load(v);
    out << YAML::EndMap;
    std::string s = out.c_str();
    // yaml-cpp only emits the clip indicator, which would add a newline on reload
    constexpr std::string_view clip = "instruction: |\n";
    if (s.rfind(clip, 0) == 0) s.replace(0, clip.size(), "instruction: |-\n");
    s += '\n';
    return s;
}

TaskSpec read_task_spec(const fs::path& path) {
    std::string content;
    try {
        content = text::read_file(path);
    } catch (const std::exception& e) {
        throw MalformedSpec(e.what(), 0, 0);
    }
    return parse_task_spec(content);
}

void write_task_spec(const TaskSpec& spec, const fs::path& path) {
    if (path.has_parent_path() && !fs::is_directory(path.parent_path()))
        throw NotADirectory(path.parent_path().string() + " is not a directory");
    text::write_file(path, emit_task_spec(spec));
}

std::vector<std::string> task_spec_schema_errors(std::string_view yaml) {
    std::vector<std::string> errors;
    YAML::Node root;
    try {
        root = YAML::Load(std::string(yaml));
    } catch (const YAML::ParserException& e) {
        errors.push_back(fmt::format("line {}: {}", e.mark.line + 1, e.msg));
        return errors;
    }
    if (!root.IsMap()) {
        errors.emplace_back("document is not a mapping");
        return errors;
    }
    for (auto key : kSchemaKeys)
        if (!root[std::string(key)]) errors.push_back(fmt::format("missing key `{}`", key));
    if (!errors.empty()) return errors;
    try {
        parse_task_spec(yaml);
    } catch (const MalformedSpec& e) {
        errors.push_back(fmt::format("line {}: {}", e.line(), e.what()));
    }
    return errors;
}

std::vector<std::string> compose_schema_errors(std::string_view yaml) {
    std::vector<std::string> errors;
    YAML::Node root;
    try {
        root = YAML::Load(std::string(yaml));
    } catch (const YAML::ParserException& e) {
        errors.push_back(fmt::format("line {}: {}", e.mark.line + 1, e.msg));
        return errors;
    }
    if (!root.IsMap()) {
        errors.emplace_back("document is not a mapping");
        return errors;
    }
    const YAML::Node services = root["services"];
    if (!services || !services.IsMap() || services.size() == 0) {
        errors.emplace_back("`services` must be a non-empty mapping");
        return errors;
    }
    for (const auto& kv : services)
        if (!kv.second.IsMap())
            errors.push_back(fmt::format("service `{}` is not a mapping", kv.first.as<std::string>()));
    return errors;
}

std::vector<std::string> required_files(int stage) {
    switch (stage) {
        case 1: {
            std::vector<std::string> v{std::string(files::public_doc)};
            for (auto d : files::role_docs) v.emplace_back(d);
            return v;
        }
        case 2:
            return {std::string(files::task_yaml), std::string(files::test_func), std::string(files::test_vuln),
                    std::string(files::run_tests), std::string(files::solution), std::string(files::docker_reqs)};
        case 3: return {std::string(files::dockerfile), std::string(files::compose)};
        default: throw std::invalid_argument(fmt::format("stage {} has no static output gate", stage));
    }
}

StageGateReport validate_stage_outputs(const fs::path& root, int stage) {
    if (!fs::is_directory(root)) throw NotADirectory(root.string() + " is not a directory");
    StageGateReport report;
    report.stage = stage;
    for (const auto& rel : required_files(stage)) {
        const auto p = root / rel;
        std::error_code ec;
        if (!fs::is_regular_file(p, ec) || fs::file_size(p, ec) == 0) {
            report.missing_files.push_back(rel);
            continue;
        }
        if (rel == files::task_yaml) {
            for (auto& m : task_spec_schema_errors(text::read_file(p))) report.schema_errors.emplace_back(rel, m);
        } else if (rel == files::compose) {
            for (auto& m : compose_schema_errors(text::read_file(p))) report.schema_errors.emplace_back(rel, m);
        }
    }
    report.passed = report.missing_files.empty() && report.schema_errors.empty();
    return report;
}

std::optional<Role> owner_of(std::string_view relative_path) {
    const auto p = text::normalize_relative(relative_path);
    if (p.empty()) return std::nullopt;
    if (p == files::public_doc) return Role::analyzer;
    for (auto d : files::role_docs)
        if (p == d) return Role::analyzer;
    if (p == files::task_yaml || p == files::solution || p == files::docker_reqs) return Role::generator;
    if (text::path_matches("tests/**", p) && p != "tests") return Role::generator;
    if (p == files::dockerfile || p == files::compose) return Role::builder;
    if (text::path_matches("task-deps/**", p) && p != "task-deps") return Role::builder;
    return std::nullopt;
}

TaskPackage load_package(const fs::path& root) {
    if (!fs::is_directory(root)) throw NotADirectory(root.string() + " is not a directory");
    TaskPackage pkg;
    pkg.root = root;
    if (fs::is_regular_file(root / files::task_yaml)) pkg.instruction = read_task_spec(root / files::task_yaml);
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), root).generic_string();
        if (auto owner = owner_of(rel)) pkg.owner_map.emplace(rel, *owner);
    }
    return pkg;
}

std::vector<AuditFinding> audit_package(const fs::path& root) {
    std::vector<AuditFinding> out;
    const auto vuln = root / files::test_vuln;
    if (fs::is_regular_file(vuln)) {
        const auto src = text::read_file(vuln);
        static const std::regex executes(
            R"(subprocess|requests\.|urllib|http\.client|socket|os\.system|popen|importlib|(^|\n)\s*(from|import)\s+(app|src)\b)",
            std::regex::icase);
        static const std::regex reads_source(R"(\bgrep\b|read_text\(|open\([^)]*\.(py|php|js|ts|go|java|c|rb)['"])",
                                             std::regex::icase);
        if (std::regex_search(src, reads_source) && !std::regex_search(src, executes))
            out.push_back({"static_test", std::string(files::test_vuln),
                           "vulnerability test inspects source text without executing the target"});
    }
    const auto sol = root / files::solution;
    if (fs::is_regular_file(sol)) {
        const auto src = text::read_file(sol);
        static const std::regex bump(
            R"((pip3?|npm|yarn|composer|go)\s+(install|get|update|require)\b[^\n]*(--upgrade|@latest|==|@\d))",
            std::regex::icase);
        if (std::regex_search(src, bump))
            out.push_back({"version_bump_solution", std::string(files::solution),
                           "solution upgrades a dependency instead of patching the vulnerable code"});
    }
    return out;
}

}  // namespace forge::taskpkg
