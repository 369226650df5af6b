#pragma once

#include <filesystem>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "forge/taskpkg.hpp"

namespace forge::taskpkg {

// What one agent role may see and touch inside a package root.
struct WorkspaceManifest {
    std::filesystem::path root;
    Role role = Role::analyzer;
    std::vector<std::string> readable;           // files visible when the view was taken
    std::vector<std::string> writable_patterns;  // see text::path_matches; "**" is everything
    std::vector<std::string> hidden_patterns;

    bool can_read(std::string_view relative_path) const;
    bool can_write(std::string_view relative_path) const;
};

// Builder is blind to tests/ and solution.sh; every other role reads the
// whole package. Write scopes follow the ownership table, with the
// verification roles allowed to edit anything.
WorkspaceManifest scoped_view(const std::filesystem::path& pkg_root, Role role);

// Documents handed to a role at activation (package-relative).
std::vector<std::string> briefing_for(Role role, std::string_view cve_id);

struct AccessEntry {
    Role role;
    std::string op;  // read | write | remove | list
    std::string path;
    friend bool operator==(const AccessEntry&, const AccessEntry&) = default;
};

// Append-only, shared by every agent of one pipeline.
class AccessLog {
public:
    void record(AccessEntry e);
    void record_denial(AccessEntry e);
    std::vector<AccessEntry> entries() const;
    std::vector<AccessEntry> denials() const;

private:
    mutable std::mutex mu_;
    std::vector<AccessEntry> entries_;
    std::vector<AccessEntry> denials_;
};

// The only file API agents get. Paths are package-relative; anything
// outside the manifest raises AccessDenied and is logged as a denial.
class Workspace {
public:
    Workspace(WorkspaceManifest manifest, AccessLog& log);

    std::string read(std::string_view relative_path);
    void write(std::string_view relative_path, std::string_view content);
    void remove(std::string_view relative_path);
    bool exists(std::string_view relative_path) const;
    std::vector<std::string> list();

    const WorkspaceManifest& manifest() const { return manifest_; }

private:
    std::string checked(std::string_view op, std::string_view relative_path, bool for_write);

    WorkspaceManifest manifest_;
    AccessLog& log_;
};

}  // namespace forge::taskpkg
