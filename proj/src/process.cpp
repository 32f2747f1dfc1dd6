#include "dcosim/process.hpp"

#include "dcosim/error.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <filesystem>
#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace dcosim {

ChildProcess ChildProcess::spawn(const std::vector<std::string>& argv, bool capture_stdout)
{
    if (argv.empty()) throw Error("spawn: empty argument vector");
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    int pipe_fds[2] = {-1, -1};
    if (capture_stdout) {
        if (::pipe2(pipe_fds, O_CLOEXEC) != 0) throw Error(std::string("pipe: ") + std::strerror(errno));
        posix_spawn_file_actions_adddup2(&actions, pipe_fds[1], STDOUT_FILENO);
    }

    ChildProcess child;
    const int rc = ::posix_spawn(&child.pid_, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (capture_stdout) ::close(pipe_fds[1]);
    if (rc != 0) {
        if (capture_stdout) ::close(pipe_fds[0]);
        child.pid_ = -1;
        throw Error("spawn " + argv[0] + ": " + std::strerror(rc));
    }
    child.stdout_fd_ = capture_stdout ? pipe_fds[0] : -1;
    return child;
}

ChildProcess::ChildProcess(ChildProcess&& other) noexcept
    : pid_(std::exchange(other.pid_, -1)), stdout_fd_(std::exchange(other.stdout_fd_, -1)),
      exit_code_(std::exchange(other.exit_code_, std::nullopt)), output_(std::move(other.output_))
{
}

ChildProcess& ChildProcess::operator=(ChildProcess&& other) noexcept
{
    if (this != &other) {
        kill();
        pid_ = std::exchange(other.pid_, -1);
        stdout_fd_ = std::exchange(other.stdout_fd_, -1);
        exit_code_ = std::exchange(other.exit_code_, std::nullopt);
        output_ = std::move(other.output_);
    }
    return *this;
}

ChildProcess::~ChildProcess()
{
    kill();
}

int ChildProcess::wait()
{
    if (exit_code_) return *exit_code_;
    if (pid_ <= 0) throw Error("wait: no child process");
    if (stdout_fd_ >= 0) {
        char buf[4096];
        for (;;) {
            const auto n = ::read(stdout_fd_, buf, sizeof(buf));
            if (n < 0 && errno == EINTR) continue;
            if (n <= 0) break;
            output_.append(buf, static_cast<std::size_t>(n));
        }
        ::close(stdout_fd_);
        stdout_fd_ = -1;
    }
    int status = 0;
    while (::waitpid(pid_, &status, 0) < 0) {
        if (errno != EINTR) throw Error(std::string("waitpid: ") + std::strerror(errno));
    }
    exit_code_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    return *exit_code_;
}

void ChildProcess::kill() noexcept
{
    if (pid_ > 0 && !exit_code_) {
        ::kill(pid_, SIGKILL);
        int status = 0;
        while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
        }
        exit_code_ = 128 + SIGKILL;
    }
    if (stdout_fd_ >= 0) {
        ::close(stdout_fd_);
        stdout_fd_ = -1;
    }
}

std::string self_executable()
{
    return std::filesystem::read_symlink("/proc/self/exe").string();
}

} // namespace dcosim
