#include "forge/workspace.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge::taskpkg {

namespace fs = std::filesystem;

namespace {

bool any_match(const std::vector<std::string>& patterns, std::string_view path) {
    return std::any_of(patterns.begin(), patterns.end(),
                       [&](const std::string& p) { return p == "**" || text::path_matches(p, path); });
}

std::vector<std::string> writable_for(Role role) {
    const std::string agent_res(files::agent_res);
    switch (role) {
        case Role::analyzer: {
            std::vector<std::string> v{std::string(files::public_doc), agent_res};
            for (auto d : files::role_docs) v.emplace_back(d);
            return v;
        }
        case Role::generator:
            return {std::string(files::task_yaml), "tests/**",     std::string(files::solution),
                    std::string(files::docker_reqs), agent_res};
        case Role::builder:
            return {std::string(files::dockerfile), std::string(files::compose), "task-deps/**", agent_res};
        case Role::validator:
        case Role::solver:
        case Role::checker: return {"**"};
    }
    return {};
}

}  // namespace

bool WorkspaceManifest::can_read(std::string_view relative_path) const {
    const auto p = text::normalize_relative(relative_path);
    return !p.empty() && !any_match(hidden_patterns, p);
}

bool WorkspaceManifest::can_write(std::string_view relative_path) const {
    const auto p = text::normalize_relative(relative_path);
    return !p.empty() && !any_match(hidden_patterns, p) && any_match(writable_patterns, p);
}

WorkspaceManifest scoped_view(const fs::path& root, Role role) {
    WorkspaceManifest m;
    m.root = root;
    m.role = role;
    if (role == Role::builder) m.hidden_patterns = {"tests/**", std::string(files::solution)};
    m.writable_patterns = writable_for(role);
    if (fs::is_directory(root)) {
        for (const auto& e : fs::recursive_directory_iterator(root)) {
            if (!e.is_regular_file()) continue;
            auto rel = fs::relative(e.path(), root).generic_string();
            if (m.can_read(rel)) m.readable.push_back(std::move(rel));
        }
        std::sort(m.readable.begin(), m.readable.end());
    }
    return m;
}

std::vector<std::string> briefing_for(Role role, std::string_view cve_id) {
    const std::string pub(files::public_doc);
    switch (role) {
        case Role::analyzer: return {fmt::format("{}.md", cve_id)};
        case Role::generator: return {pub, "generator.md"};
        case Role::builder: return {pub, "builder.md", std::string(files::docker_reqs)};
        case Role::validator: return {pub, "validator.md"};
        case Role::solver: return {pub, "solver.md"};
        case Role::checker: return {pub};
    }
    return {};
}

void AccessLog::record(AccessEntry e) {
    std::lock_guard lk(mu_);
    entries_.push_back(std::move(e));
}

void AccessLog::record_denial(AccessEntry e) {
    std::lock_guard lk(mu_);
    denials_.push_back(std::move(e));
}

std::vector<AccessEntry> AccessLog::entries() const {
    std::lock_guard lk(mu_);
    return entries_;
}

std::vector<AccessEntry> AccessLog::denials() const {
    std::lock_guard lk(mu_);
    return denials_;
}

Workspace::Workspace(WorkspaceManifest manifest, AccessLog& log) : manifest_(std::move(manifest)), log_(log) {}

std::string Workspace::checked(std::string_view op, std::string_view relative_path, bool for_write) {
    const auto p = text::normalize_relative(relative_path);
    const bool ok = for_write ? manifest_.can_write(relative_path) : manifest_.can_read(relative_path);
    if (!ok) {
        log_.record_denial({manifest_.role, std::string(op), std::string(relative_path)});
        throw AccessDenied(fmt::format("{} may not {} `{}`", to_string(manifest_.role), op, relative_path));
    }
    log_.record({manifest_.role, std::string(op), p});
    return p;
}

std::string Workspace::read(std::string_view relative_path) {
    const auto p = checked("read", relative_path, false);
    return text::read_file(manifest_.root / p);
}

void Workspace::write(std::string_view relative_path, std::string_view content) {
    const auto p = checked("write", relative_path, true);
    text::write_file(manifest_.root / p, content);
}

void Workspace::remove(std::string_view relative_path) {
    const auto p = checked("remove", relative_path, true);
    std::filesystem::remove(manifest_.root / p);
}

bool Workspace::exists(std::string_view relative_path) const {
    if (!manifest_.can_read(relative_path)) return false;
    return fs::exists(manifest_.root / text::normalize_relative(relative_path));
}

std::vector<std::string> Workspace::list() {
    log_.record({manifest_.role, "list", "."});
    std::vector<std::string> out;
    if (!fs::is_directory(manifest_.root)) return out;
    for (const auto& e : fs::recursive_directory_iterator(manifest_.root)) {
        if (!e.is_regular_file()) continue;
        auto rel = fs::relative(e.path(), manifest_.root).generic_string();
        if (manifest_.can_read(rel)) out.push_back(std::move(rel));
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace forge::taskpkg
