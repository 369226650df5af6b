#pragma once

#include <stdexcept>
#include <string>

namespace forge {

// Base for every error the library raises. `kind()` is a stable identifier
// suitable for logs and JSON output.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define FORGE_DEFINE_ERROR(Name)                                              \
    class Name : public ::forge::Error {                                      \
    public:                                                                   \
        explicit Name(const std::string& what) : ::forge::Error(#Name, what) {} \
    }

// corpus
FORGE_DEFINE_ERROR(MalformedJson);
FORGE_DEFINE_ERROR(MissingCveId);
FORGE_DEFINE_ERROR(UnsupportedSchema);

// taxonomy / triage configuration
FORGE_DEFINE_ERROR(InvalidCweId);
FORGE_DEFINE_ERROR(ConfigError);
FORGE_DEFINE_ERROR(JudgeUnavailable);

// taskpkg
FORGE_DEFINE_ERROR(NotADirectory);
FORGE_DEFINE_ERROR(UnknownRole);
FORGE_DEFINE_ERROR(AccessDenied);

// agentlink
FORGE_DEFINE_ERROR(MalformedResponse);
FORGE_DEFINE_ERROR(InvalidSignal);
FORGE_DEFINE_ERROR(BackendTimeout);
FORGE_DEFINE_ERROR(BackendCrash);
FORGE_DEFINE_ERROR(UnknownSession);

// orchestrator
FORGE_DEFINE_ERROR(UnownedFile);

// harness
FORGE_DEFINE_ERROR(BuildFailure);
FORGE_DEFINE_ERROR(StartupTimeout);
FORGE_DEFINE_ERROR(TestScriptMissing);
FORGE_DEFINE_ERROR(TestRunnerCrash);
FORGE_DEFINE_ERROR(SolutionScriptMissing);

// bench
FORGE_DEFINE_ERROR(EmptyResults);

#undef FORGE_DEFINE_ERROR

// Malformed task.yaml. Line and column are 1-based; 0 means unknown.
class MalformedSpec : public Error {
public:
    MalformedSpec(const std::string& what, int line, int column)
        : Error("MalformedSpec", what), line_(line), column_(column) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

}  // namespace forge
