#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <sys/types.h>
#include <vector>

namespace dcosim {

/// A supervised child process. Killed and reaped on destruction if still
/// running.
class ChildProcess {
public:
    /// argv[0] is the executable path. With `capture_stdout`, the child's
    /// standard output is collected and available after wait().
    static ChildProcess spawn(const std::vector<std::string>& argv, bool capture_stdout = false);

    ChildProcess() = default;
    ChildProcess(ChildProcess&& other) noexcept;
    ChildProcess& operator=(ChildProcess&& other) noexcept;
    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;
    ~ChildProcess();

    /// Blocks until exit. Returns the exit code, or 128 + signal number.
    int wait();
    void kill() noexcept;
    bool running() const noexcept { return pid_ > 0 && !exit_code_; }
    pid_t pid() const noexcept { return pid_; }
    const std::string& output() const noexcept { return output_; }

private:
    pid_t pid_ = -1;
    int stdout_fd_ = -1;
    std::optional<int> exit_code_;
    std::string output_;
};

/// Path of the running executable.
std::string self_executable();

} // namespace dcosim
