#include "subprocess.hpp"

#include "meshcompose/errors.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <csignal>
#include <cstring>

namespace meshcompose {

int run_subprocess(const std::string& command, const std::string& input, std::string& output) {
    int in_pipe[2];
    int out_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) {
        throw Error("pipe() failed: " + std::string(std::strerror(errno)));
    }

    const pid_t pid = fork();
    if (pid < 0) {
        throw Error("fork() failed: " + std::string(std::strerror(errno)));
    }
    if (pid == 0) {
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }

    close(in_pipe[0]);
    close(out_pipe[1]);

    // Writing everything before reading is safe for the small payloads we
    // exchange as long as the child consumes stdin before flooding stdout;
    // guard against SIGPIPE if it exits early.
    signal(SIGPIPE, SIG_IGN);
    size_t written = 0;
    while (written < input.size()) {
        const ssize_t n = write(in_pipe[1], input.data() + written, input.size() - written);
        if (n <= 0) break;
        written += static_cast<size_t>(n);
    }
    close(in_pipe[1]);

    output.clear();
    std::array<char, 4096> buf;
    for (;;) {
        const ssize_t n = read(out_pipe[0], buf.data(), buf.size());
        if (n <= 0) break;
        output.append(buf.data(), static_cast<size_t>(n));
    }
    close(out_pipe[0]);

    int status = 0;
    waitpid(pid, &status, 0);
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return -1;
}

} // namespace meshcompose
