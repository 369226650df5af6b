#include <atomic>
#include <cctype>
#include <map>
#include <mutex>

#include <fmt/format.h>

#include "forge/error.hpp"
#include "forge/harness.hpp"
#include "forge/taskpkg.hpp"
#include "forge/text.hpp"

namespace forge::harness {

namespace fs = std::filesystem;

struct ComposeExecutor::Live {
    std::mutex mu;
    std::map<std::string, std::vector<std::string>> projects;  // project -> compose base argv
};

namespace {

std::chrono::milliseconds ms(std::chrono::seconds s) { return std::chrono::duration_cast<std::chrono::milliseconds>(s); }

class ComposeEnvironment : public Environment {
public:
    ComposeEnvironment(std::vector<std::string> base, std::string service, std::string project,
                       std::shared_ptr<ComposeExecutor::Live> live)
        : base_(std::move(base)), service_(std::move(service)), project_(std::move(project)), live_(std::move(live)) {
        std::lock_guard lk(live_->mu);
        live_->projects[project_] = base_;
    }
    ~ComposeEnvironment() override { teardown(); }

    process::Result exec(const std::string& script, std::chrono::milliseconds timeout) override {
        return compose({"exec", "-T", service_, "bash", "-lc", script}, timeout);
    }

    std::string copy_in(const fs::path& host_src, const std::string& env_dest) override {
        const auto parent = fs::path(env_dest).parent_path().string();
        if (!parent.empty()) exec("mkdir -p '" + parent + "'", std::chrono::seconds(60));
        const auto r = compose({"cp", host_src.string(), service_ + ":" + env_dest}, std::chrono::seconds(300));
        if (!r.ok()) throw BuildFailure(fmt::format("compose cp failed\n{}", text::tail(r.output, 2048)));
        return env_dest;
    }

    void teardown() override {
        if (down_) return;
        down_ = true;
        compose({"down", "-v", "--remove-orphans", "--timeout", "10"}, std::chrono::seconds(300));
        std::lock_guard lk(live_->mu);
        live_->projects.erase(project_);
    }

    std::string id() const override { return project_; }

    process::Result compose(std::vector<std::string> args, std::chrono::milliseconds timeout) const {
        auto argv = base_;
        argv.insert(argv.end(), args.begin(), args.end());
        process::RunOptions o;
        o.timeout = timeout;
        return process::run(argv, o);
    }

private:
    std::vector<std::string> base_;
    std::string service_;
    std::string project_;
    std::shared_ptr<ComposeExecutor::Live> live_;
    bool down_ = false;
};

std::atomic<unsigned> g_project_counter{0};

}  // namespace

ComposeExecutor::ComposeExecutor(ComposeExecutorOptions options)
    : options_(std::move(options)), live_(std::make_shared<Live>()) {}

void ComposeExecutor::shutdown() {
    std::map<std::string, std::vector<std::string>> projects;
    {
        std::lock_guard lk(live_->mu);
        projects = live_->projects;
    }
    process::kill_all();
    for (auto [project, argv] : projects) {
        argv.insert(argv.end(), {"down", "-v", "--remove-orphans", "--timeout", "5"});
        process::RunOptions o;
        o.timeout = std::chrono::seconds(120);
        try {
            process::run(argv, o);
        } catch (const std::exception&) {
        }
    }
}

bool ComposeExecutor::available(const std::string& runtime) {
    if (!process::on_path(runtime)) return false;
    try {
        process::RunOptions o;
        o.timeout = std::chrono::seconds(20);
        return process::run({runtime, "compose", "version"}, o).ok() && process::run({runtime, "info"}, o).ok();
    } catch (const std::exception&) {
        return false;
    }
}

std::string ComposeExecutor::project_name(const std::string& instance_id) const {
    // compose project names: lowercase alphanumerics, '-' and '_'
    std::string out = options_.project_prefix + "-";
    for (char c : instance_id) {
        const auto u = static_cast<unsigned char>(c);
        out += std::isalnum(u) ? static_cast<char>(std::tolower(u)) : (c == '_' ? '_' : '-');
    }
    return out;
}

std::vector<std::string> ComposeExecutor::project_containers(const std::string& project) const {
    process::RunOptions o;
    o.timeout = std::chrono::seconds(60);
    const auto r = process::run({options_.runtime, "ps", "-a", "-q", "--filter",
                                 "label=com.docker.compose.project=" + project},
                                o);
    std::vector<std::string> ids;
    for (const auto& l : text::split(r.output, '\n'))
        if (!text::trim(l).empty()) ids.emplace_back(text::trim(l));
    return ids;
}

std::unique_ptr<Environment> ComposeExecutor::bring_up(const fs::path& pkg_root, const std::string& instance_id) {
    const auto compose_file = fs::absolute(pkg_root / taskpkg::files::compose);
    if (!fs::is_regular_file(compose_file)) throw BuildFailure(fmt::format("{} not found", compose_file.string()));
    const auto svc = primary_service(compose_file);
    if (!fs::is_directory(pkg_root / svc.build_context))
        throw BuildFailure(fmt::format("build context {} for service `{}` does not exist", svc.build_context.string(),
                                       svc.name));
    const auto project = fmt::format("{}-{}", project_name(instance_id), g_project_counter.fetch_add(1));
    auto env = std::make_unique<ComposeEnvironment>(
        std::vector<std::string>{options_.runtime, "compose", "-p", project, "-f", compose_file.string()}, svc.name,
        project, live_);

    auto r = env->compose({"build"}, ms(options_.timeouts.build));
    if (!r.ok())
        throw BuildFailure(fmt::format("compose build {}\n{}",
                                       r.timed_out ? "timed out" : fmt::format("exited {}", r.exit_code),
                                       text::tail(r.output, 4096)));
    r = env->compose({"up", "-d", "--wait", "--wait-timeout", std::to_string(options_.timeouts.startup.count())},
                     ms(options_.timeouts.startup + std::chrono::seconds(30)));
    if (!r.ok())
        throw StartupTimeout(fmt::format("compose up did not become healthy within {} s\n{}",
                                         options_.timeouts.startup.count(), text::tail(r.output, 4096)));
    return env;
}

}  // namespace forge::harness
