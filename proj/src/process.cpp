#include "forge/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <set>
#include <system_error>

#include "forge/text.hpp"

extern char** environ;

namespace forge::process {

namespace {

std::mutex g_live_mu;
std::set<pid_t> g_live;

struct Fd {
    int fd = -1;
    ~Fd() {
        if (fd >= 0) ::close(fd);
    }
    void reset() {
        if (fd >= 0) ::close(fd);
        fd = -1;
    }
};

void append_capped(std::string& out, const char* data, std::size_t n, std::size_t cap) {
    out.append(data, n);
    if (out.size() > cap + cap / 4) out.erase(0, out.size() - cap);
}

int decode_status(int status) {
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
    return -1;
}

}  // namespace

Result run(const std::vector<std::string>& argv, const RunOptions& opt) {
    if (argv.empty()) throw std::system_error(std::make_error_code(std::errc::invalid_argument), "empty argv");

    // everything the child touches is prepared before fork
    std::vector<char*> cargv;
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    std::vector<std::string> env_store;
    std::vector<char*> cenv;
    if (opt.env) {
        for (const auto& [k, v] : *opt.env) env_store.push_back(k + "=" + v);
        for (auto& s : env_store) cenv.push_back(s.data());
        cenv.push_back(nullptr);
    }
    const std::string cwd = opt.cwd.string();
    std::string path_var = "/usr/local/bin:/usr/bin:/bin";
    if (opt.env) {
        if (auto it = opt.env->find("PATH"); it != opt.env->end()) path_var = it->second;
    } else if (const char* p = std::getenv("PATH")) {
        path_var = p;
    }
    // resolve the program here so the child can use execve with a custom env
    std::string program = argv[0];
    if (program.find('/') == std::string::npos) {
        for (const auto& dir : text::split(path_var, ':')) {
            const auto cand = (dir.empty() ? std::string(".") : dir) + "/" + program;
            if (::access(cand.c_str(), X_OK) == 0) {
                program = cand;
                break;
            }
        }
    }

    int pipefd[2];
    if (::pipe2(pipefd, O_CLOEXEC) != 0) throw std::system_error(errno, std::generic_category(), "pipe");
    Fd rd{pipefd[0]}, wr{pipefd[1]};
    int errpipe[2];
    if (::pipe2(errpipe, O_CLOEXEC) != 0) throw std::system_error(errno, std::generic_category(), "pipe");
    Fd erd{errpipe[0]}, ewr{errpipe[1]};

    const auto start = std::chrono::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) throw std::system_error(errno, std::generic_category(), "fork");
    if (pid == 0) {
        ::setpgid(0, 0);
        sigset_t none;
        sigemptyset(&none);
        ::sigprocmask(SIG_SETMASK, &none, nullptr);
        ::signal(SIGPIPE, SIG_DFL);
        const int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0) ::dup2(devnull, 0);
        ::dup2(wr.fd, 1);
        ::dup2(wr.fd, 2);
        int err = 0;
        if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) err = errno;
        if (err == 0) {
            ::execve(program.c_str(), cargv.data(), opt.env ? cenv.data() : environ);
            err = errno;
        }
        [[maybe_unused]] auto n = ::write(ewr.fd, &err, sizeof err);
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    {
        std::lock_guard lk(g_live_mu);
        g_live.insert(pid);
    }
    struct Untrack {
        pid_t pid;
        ~Untrack() {
            std::lock_guard lk(g_live_mu);
            g_live.erase(pid);
        }
    } untrack{pid};
    wr.reset();
    ewr.reset();

    int child_err = 0;
    if (::read(erd.fd, &child_err, sizeof child_err) == static_cast<ssize_t>(sizeof child_err)) {
        int st;
        ::waitpid(pid, &st, 0);
        throw std::system_error(child_err, std::generic_category(),
                                cwd.empty() ? "exec " + argv[0] : "exec " + argv[0] + " in " + cwd);
    }

    Result r;
    const auto deadline = start + opt.timeout;
    bool exited = false;
    int status = 0;
    char buf[8192];
    std::optional<std::chrono::steady_clock::time_point> drain_until;
    while (true) {
        const auto now = std::chrono::steady_clock::now();
        if (!exited && now >= deadline) {
            ::kill(-pid, SIGKILL);
            r.timed_out = true;
        }
        if (!exited) {
            const pid_t w = ::waitpid(pid, &status, r.timed_out ? 0 : WNOHANG);
            if (w == pid) {
                exited = true;
                // a detached grandchild may still hold the pipe open
                drain_until = std::chrono::steady_clock::now() + std::chrono::milliseconds(200);
            }
        }
        if (rd.fd < 0) {
            if (exited) break;
            pollfd none{};
            ::poll(&none, 0, 20);
            continue;
        }
        pollfd p{rd.fd, POLLIN, 0};
        const int pr = ::poll(&p, 1, exited ? 20 : 50);
        if (pr < 0 && errno != EINTR) break;
        if (pr == 0 && drain_until && std::chrono::steady_clock::now() >= *drain_until) break;
        if (pr > 0) {
            const ssize_t n = ::read(rd.fd, buf, sizeof buf);
            if (n > 0) append_capped(r.output, buf, static_cast<std::size_t>(n), opt.max_output);
            else if (n == 0 || (errno != EINTR && errno != EAGAIN)) rd.reset();
        }
    }
    ::kill(-pid, SIGKILL);  // leftovers from the group, if any
    if (r.output.size() > opt.max_output) r.output.erase(0, r.output.size() - opt.max_output);
    r.exit_code = r.timed_out ? 128 + SIGKILL : decode_status(status);
    r.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

void kill_all() {
    std::lock_guard lk(g_live_mu);
    for (const auto pid : g_live) ::kill(-pid, SIGKILL);
}

Result run_shell(const std::string& script, const RunOptions& options) {
    return run({"bash", "-c", script}, options);
}

bool on_path(const std::string& program) {
    const char* p = std::getenv("PATH");
    if (!p) return false;
    for (const auto& dir : text::split(p, ':')) {
        if (dir.empty()) continue;
        if (::access((dir + "/" + program).c_str(), X_OK) == 0) return true;
    }
    return false;
}

}  // namespace forge::process
