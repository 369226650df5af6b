#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace forge::process {

struct RunOptions {
    std::filesystem::path cwd;                               // empty: inherit
    std::optional<std::map<std::string, std::string>> env;  // replaces the environment when set
    std::chrono::milliseconds timeout{600'000};
    std::size_t max_output = 4 << 20;                        // keeps the last bytes beyond this
};

struct Result {
    int exit_code = -1;  // 128+signal when killed by a signal
    bool timed_out = false;
    std::string output;  // stdout and stderr interleaved
    double duration_s = 0;

    bool ok() const { return exit_code == 0 && !timed_out; }
};

// fork/exec with the child in its own process group; on timeout the whole
// group is killed. Throws std::system_error when the program cannot start.
Result run(const std::vector<std::string>& argv, const RunOptions& options = {});

// `bash -c script`
Result run_shell(const std::string& script, const RunOptions& options = {});

// SIGKILLs the process group of every child still running. Safe to call
// from a cleanup thread while runs are in flight.
void kill_all();

// Whether `program` resolves on PATH.
bool on_path(const std::string& program);

}  // namespace forge::process
