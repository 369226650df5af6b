#include <unistd.h>

#include <atomic>
#include <cctype>
#include <map>
#include <thread>
#include <cstdlib>

#include <fmt/format.h>

#include "forge/error.hpp"
#include "forge/harness.hpp"
#include "forge/taskpkg.hpp"
#include "forge/text.hpp"

namespace forge::harness {

namespace fs = std::filesystem;

namespace {

std::atomic<unsigned> g_instance_counter{0};

std::string sanitize(std::string_view s) {
    std::string out;
    for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
    return out.empty() ? "env" : out;
}

// Lexically joins an in-environment path onto the scratch rootfs, never
// leaving it.
fs::path map_into(const fs::path& rootfs, const std::string& cwd, const std::string& env_path) {
    fs::path p = env_path.empty() || env_path.front() != '/' ? fs::path(cwd) / env_path : fs::path(env_path);
    fs::path clean;
    for (const auto& part : p.lexically_normal()) {
        const auto s = part.string();
        if (s == "/" || s.empty() || s == ".") continue;
        if (s == "..") {
            if (clean.has_filename()) clean = clean.parent_path();
            continue;
        }
        clean /= part;
    }
    return rootfs / clean;
}

void copy_tree(const fs::path& src, const fs::path& dst) {
    if (fs::is_directory(src)) {
        fs::create_directories(dst);
        fs::copy(src, dst, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    } else {
        fs::create_directories(dst.parent_path());
        fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
    }
}

class LocalEnvironment : public Environment {
public:
    LocalEnvironment(fs::path scratch, std::string id) : scratch_(std::move(scratch)), id_(std::move(id)) {
        fs::create_directories(rootfs());
        fs::create_directories(scratch_ / "home");
        fs::create_directories(scratch_ / "tmp");
        const char* path = std::getenv("PATH");
        env_["PATH"] = path ? path : "/usr/local/bin:/usr/bin:/bin";
        env_["HOME"] = (scratch_ / "home").string();
        env_["TMPDIR"] = (scratch_ / "tmp").string();
        env_["LANG"] = "C.UTF-8";
        env_["PYTHONDONTWRITEBYTECODE"] = "1";
        set_workdir("/");
    }
    ~LocalEnvironment() override { teardown(); }

    fs::path rootfs() const { return scratch_ / "rootfs"; }
    fs::path map(const std::string& env_path) const { return map_into(rootfs(), workdir_, env_path); }
    const std::string& workdir() const { return workdir_; }

    void set_workdir(const std::string& wd) {
        workdir_ = (wd.empty() || wd.front() != '/') ? (fs::path(workdir_) / wd).lexically_normal().string() : wd;
        fs::create_directories(map(workdir_));
        env_["APP_ROOT"] = map(workdir_).string();
    }
    void set_env(const std::string& k, const std::string& v) {
        if (k == "PATH" || k == "HOME" || k == "TMPDIR" || k == "APP_ROOT") return;
        env_[k] = v;
    }

    process::Result exec(const std::string& script, std::chrono::milliseconds timeout) override {
        process::RunOptions o;
        o.cwd = map(workdir_);
        o.env = env_;
        o.timeout = timeout;
        return process::run_shell(script, o);
    }

    std::string copy_in(const fs::path& host_src, const std::string& env_dest) override {
        const auto dst = map(env_dest);
        copy_tree(host_src, dst);
        return dst.string();
    }

    void teardown() override {
        std::error_code ec;
        if (!scratch_.empty()) fs::remove_all(scratch_, ec);
    }

    std::string id() const override { return id_; }

private:
    fs::path scratch_;
    std::string id_;
    std::string workdir_ = "/";
    std::map<std::string, std::string> env_;
};

void apply_copy(LocalEnvironment& env, const DockerfileStep& step, const fs::path& context) {
    std::vector<std::string> args;
    for (const auto& a : step.args)
        if (a.rfind("--", 0) != 0) args.push_back(a);
    if (args.size() < 2)
        throw BuildFailure(fmt::format("Dockerfile line {}: {} needs a source and a destination", step.line,
                                       step.instruction));
    const std::string dest = args.back();
    args.pop_back();
    std::vector<fs::path> sources;
    for (const auto& a : args) {
        if (a.find("://") != std::string::npos)
            throw BuildFailure(fmt::format("Dockerfile line {}: remote sources are not supported by the local driver",
                                           step.line));
        const auto rel = text::normalize_relative(a == "." ? "" : a);
        if (rel.empty() && a != "." && a != "./")
            throw BuildFailure(fmt::format("Dockerfile line {}: source `{}` is outside the build context", step.line, a));
        if (rel.find('*') != std::string::npos) {
            const auto parent = fs::path(rel).parent_path();
            bool any = false;
            if (fs::is_directory(context / parent)) {
                for (const auto& e : fs::directory_iterator(context / parent)) {
                    const auto erel = fs::relative(e.path(), context).generic_string();
                    if (text::path_matches(rel, erel)) sources.push_back(e.path()), any = true;
                }
            }
            if (!any) throw BuildFailure(fmt::format("Dockerfile line {}: no files match `{}`", step.line, a));
            continue;
        }
        const auto src = rel.empty() ? context : context / rel;
        if (!fs::exists(src))
            throw BuildFailure(fmt::format("Dockerfile line {}: COPY source `{}` not found in build context", step.line, a));
        sources.push_back(src);
    }
    const bool dest_is_dir = dest.back() == '/' || sources.size() > 1 || fs::is_directory(env.map(dest));
    for (const auto& src : sources) {
        if (fs::is_directory(src)) copy_tree(src, env.map(dest));
        else copy_tree(src, dest_is_dir ? env.map(dest) / src.filename() : env.map(dest));
    }
}

void apply_env(LocalEnvironment& env, const DockerfileStep& step) {
    if (step.args.empty()) return;
    if (step.args[0].find('=') == std::string::npos) {
        std::string v;
        for (std::size_t i = 1; i < step.args.size(); ++i) v += (i > 1 ? " " : "") + step.args[i];
        env.set_env(step.args[0], v);
        return;
    }
    for (const auto& a : step.args) {
        const auto eq = a.find('=');
        if (eq == std::string::npos) continue;
        env.set_env(a.substr(0, eq), a.substr(eq + 1));
    }
}

}  // namespace

LocalExecutor::LocalExecutor(LocalExecutorOptions options) : options_(std::move(options)) {
    if (options_.scratch_root.empty())
        options_.scratch_root = fs::temp_directory_path() / fmt::format("forge-local-{}", ::getpid());
}

void LocalExecutor::shutdown() {
    process::kill_all();
    std::error_code ec;
    fs::remove_all(options_.scratch_root, ec);
}

std::unique_ptr<Environment> LocalExecutor::bring_up(const fs::path& pkg_root, const std::string& instance_id) {
    fs::path context = pkg_root;
    std::optional<ComposeService> svc;
    const auto compose = pkg_root / taskpkg::files::compose;
    if (fs::is_regular_file(compose)) {
        svc = primary_service(compose);
        context = (pkg_root / svc->build_context).lexically_normal();
        if (!fs::is_directory(context))
            throw BuildFailure(fmt::format("build context {} for service `{}` does not exist",
                                           svc->build_context.string(), svc->name));
    }
    const auto dockerfile = context / taskpkg::files::dockerfile;
    if (!fs::is_regular_file(dockerfile))
        throw BuildFailure(fmt::format("no Dockerfile in build context {}", context.string()));

    const auto n = g_instance_counter.fetch_add(1);
    const auto id = fmt::format("{}-{}", sanitize(instance_id), n);
    auto env = std::make_unique<LocalEnvironment>(options_.scratch_root / id, id);

    for (const auto& step : parse_dockerfile(text::read_file(dockerfile))) {
        if (step.instruction == "WORKDIR" && !step.args.empty()) env->set_workdir(step.args[0]);
        else if (step.instruction == "ENV") apply_env(*env, step);
        else if (step.instruction == "COPY" || step.instruction == "ADD") apply_copy(*env, step, context);
    }

    const auto setup = pkg_root / taskpkg::files::deps_dir / "local-setup.sh";
    const auto ms = [](std::chrono::seconds s) { return std::chrono::duration_cast<std::chrono::milliseconds>(s); };
    if (fs::is_regular_file(setup)) {
        const auto r = env->exec("bash '" + setup.string() + "'", ms(options_.timeouts.build));
        if (!r.ok())
            throw BuildFailure(fmt::format("local-setup.sh {}\n{}",
                                           r.timed_out ? "timed out" : fmt::format("exited {}", r.exit_code),
                                           text::tail(r.output, 4096)));
    }

    if (svc && svc->healthcheck) {
        const auto deadline = std::chrono::steady_clock::now() + options_.timeouts.startup;
        std::string last;
        while (true) {
            const auto r = env->exec(*svc->healthcheck, std::max(options_.health_interval * 10,
                                                                   std::chrono::milliseconds(1000)));
            if (r.ok()) break;
            last = r.output;
            if (std::chrono::steady_clock::now() + options_.health_interval >= deadline)
                throw StartupTimeout(fmt::format("service `{}` not healthy after {} s\n{}", svc->name,
                                                 options_.timeouts.startup.count(), text::tail(last, 2048)));
            std::this_thread::sleep_for(options_.health_interval);
        }
    }
    return env;
}

}  // namespace forge::harness
