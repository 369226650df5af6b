#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <random>
#include <string>
#include <string_view>
#include <unistd.h>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/harness.hpp"
#include "forge/orchestrator.hpp"
#include "forge/text.hpp"

namespace forge::testing {

namespace fs = std::filesystem;

inline fs::path fixture(std::string_view rel) { return fs::path(FORGE_FIXTURE_DIR) / rel; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(std::string_view tag = "t") {
        static std::atomic<unsigned> n{0};
        path_ = fs::temp_directory_path() /
                ("forge-test-" + std::string(tag) + "-" + std::to_string(::getpid()) + "-" + std::to_string(n++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(std::string_view rel) const { return path_ / rel; }

private:
    fs::path path_;
};

// Copies the toy package to `dst`, then each overlay directory on top.
inline fs::path toy_package(const fs::path& dst, std::initializer_list<std::string_view> overlays = {}) {
    fs::create_directories(dst);
    fs::copy(fixture("toy_pkg"), dst, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    for (auto o : overlays)
        fs::copy(fixture("overlays") / o, dst, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    return dst;
}

inline harness::LocalExecutor local_executor(const fs::path& scratch, int startup_s = 5) {
    harness::LocalExecutorOptions o;
    o.scratch_root = scratch;
    o.timeouts.startup = std::chrono::seconds(startup_s);
    o.timeouts.tests = std::chrono::seconds(60);
    o.health_interval = std::chrono::milliseconds(50);
    return harness::LocalExecutor(o);
}

template <typename F>
double seconds_of(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// hand-rolled generators over a seeded engine

class Gen {
public:
    explicit Gen(std::uint64_t seed) : eng_(seed) {}
    int between(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
    bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(eng_); }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
    template <typename T>
    const T& pick(const std::vector<T>& v) { return v[static_cast<std::size_t>(between(0, static_cast<int>(v.size()) - 1))]; }
    std::string bytes(std::size_t max_len) {
        std::string s(static_cast<std::size_t>(between(0, static_cast<int>(max_len))), '\0');
        for (auto& c : s) c = static_cast<char>(between(0, 255));
        return s;
    }
    std::string from_alphabet(std::string_view alphabet, std::size_t max_len) {
        std::string s(static_cast<std::size_t>(between(0, static_cast<int>(max_len))), '\0');
        for (auto& c : s) c = alphabet[static_cast<std::size_t>(between(0, static_cast<int>(alphabet.size()) - 1))];
        return s;
    }
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

inline std::string cve_id(int year, int n) { return "CVE-" + std::to_string(year) + "-" + std::to_string(10000 + n); }

// Random but valid CveRecord over a small vocabulary so that rules, CWE
// categories and repositories collide often.
inline corpus::CveRecord random_record(Gen& g, int n) {
    static const std::vector<std::string> cwes{"CWE-79",  "CWE-89",  "CWE-22",  "CWE-787", "CWE-416", "CWE-94",
                                               "CWE-287", "CWE-862", "CWE-434", "CWE-352", "CWE-200", "CWE-400",
                                               "CWE-190", "CWE-798", "CWE-9999", "CWE-1321"};
    static const std::vector<std::string> products{"flask app", "wordpress plugin", "spring service", "libpng",
                                                   "router firmware", "node.js module", "php cms", "tool"};
    static const std::vector<std::string> vendors{"acme", "Unknown", "tenda", "globex", "initech", "microsoft windows"};
    static const std::vector<std::string> urls{"https://github.com/o/r/commit/1", "https://exploit-db.com/exploits/9",
                                               "https://example.com/advisory", "https://example.com/x",
                                               "https://github.com/o/r/pull/2"};
    static const std::vector<std::string> descs{"payload sent to the endpoint", "memory corruption", "sql injection",
                                                "written in c", "golang service", ""};
    corpus::CveRecord r;
    r.cve_id = cve_id(2025, n);
    r.description = g.pick(descs);
    if (g.coin(0.8)) r.cvss = g.between(0, 100) / 10.0;
    const int nc = g.between(0, 2);
    for (int i = 0; i < nc; ++i) {
        const auto& c = g.pick(cwes);
        if (std::find(r.cwes.begin(), r.cwes.end(), c) == r.cwes.end()) r.cwes.push_back(c);
    }
    r.vendor = g.pick(vendors);
    r.product = g.pick(products);
    const int nr = g.between(0, 3);
    for (int i = 0; i < nr; ++i) {
        const auto& u = g.pick(urls);
        r.references.push_back({u, corpus::classify_reference(u, "")});
    }
    if (g.coin(0.2)) r.cisa_ssvc = corpus::CisaSsvc{"poc", "no", "total"};
    if (g.coin(0.6)) r.repository_url = "https://github.com/org/repo" + std::to_string(g.between(0, 12));
    r.published = "2025-0" + std::to_string(g.between(1, 9)) + "-1" + std::to_string(g.between(0, 9)) + "T00:00:00Z";
    return r;
}

// ---------------------------------------------------------------------------
// gate stub for state-machine tests

class StubGates : public orchestrator::GateRunner {
public:
    // Each predicate returns the next scripted value, then repeats the last.
    std::vector<bool> env{true}, fix{true}, cve{true};
    int env_calls = 0, fix_calls = 0, cve_calls = 0;

    harness::GateVerdict env_ready(const fs::path&, const std::string&) override {
        return next(harness::Gate::env_ready, env, env_calls);
    }
    harness::GateVerdict fix_ready(const fs::path&, const std::string&) override {
        return next(harness::Gate::fix_ready, fix, fix_calls);
    }
    harness::GateVerdict cve_ready(const fs::path&, const std::string&) override {
        return next(harness::Gate::cve_ready, cve, cve_calls);
    }

private:
    static harness::GateVerdict next(harness::Gate g, const std::vector<bool>& seq, int& calls) {
        const auto i = std::min<std::size_t>(static_cast<std::size_t>(calls), seq.size() - 1);
        ++calls;
        harness::GateVerdict v;
        v.gate = g;
        v.pass = seq[i];
        v.detail = v.pass ? "stub pass" : "stub fail";
        return v;
    }
};

inline corpus::CveRecord plain_record(const std::string& id) {
    corpus::CveRecord r;
    r.cve_id = id;
    r.description = "synthetic";
    r.published = "2025-01-01T00:00:00Z";
    return r;
}

// Roles named in "invoke" events, in order.
inline std::vector<std::pair<std::string, std::string>> agent_trace(const orchestrator::PipelineState& st) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : st.event_log)
        if (e.role && (e.kind == "invoke" || e.kind == "resume" || e.kind == "response"))
            out.emplace_back(e.kind, std::string(forge::to_string(*e.role)));
    return out;
}

}  // namespace forge::testing
