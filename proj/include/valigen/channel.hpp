#pragma once

#include <chrono>
#include <functional>
#include <future>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <sys/types.h>
#include <vector>

namespace valigen {

using Clock = std::chrono::steady_clock;

/// Newline-delimited frames over a pair of file descriptors (may be the same
/// descriptor for sockets). Owns and closes its descriptors.
class LineChannel {
public:
    enum class ReadStatus { line, timeout, eof };

    static constexpr std::size_t kMaxLine = 64u << 20;

    LineChannel(int read_fd, int write_fd) noexcept;
    ~LineChannel();
    LineChannel(const LineChannel&) = delete;
    LineChannel& operator=(const LineChannel&) = delete;

    /// Writes `line` followed by LF. Returns false if the peer is gone.
    bool write_line(std::string_view line);

    /// Reads one frame (without its LF). With no deadline, blocks until a line
    /// or end of stream. A frame exceeding kMaxLine is returned truncated.
    ReadStatus read_line(std::string& out, std::optional<Clock::time_point> deadline = std::nullopt);

    void close() noexcept;
    bool is_open() const noexcept { return read_fd_ >= 0; }

private:
    int read_fd_;
    int write_fd_;
    std::string buffer_;
    bool eof_ = false;
};

/// Serving function for an in-process worker; runs on its own thread and
/// returns the worker's exit code.
using InprocServer = std::function<int(LineChannel&)>;

/// A live transport to a worker: subprocess pipes, TCP socket, or an
/// in-process thread on a socketpair.
class Connection {
public:
    struct CloseResult {
        bool forced = false;
        std::optional<int> exit_code;
    };

    static std::unique_ptr<Connection> spawn_subprocess(const std::vector<std::string>& argv);
    static std::unique_ptr<Connection> connect_tcp(const std::string& host, int port, double timeout_s);
    static std::unique_ptr<Connection> start_inproc(InprocServer server);

    ~Connection();
    Connection(const Connection&) = delete;
    Connection& operator=(const Connection&) = delete;

    LineChannel& channel() noexcept { return *channel_; }

    /// Closes the engine side and waits up to `grace_s` for the worker to
    /// exit, then kills it. Idempotent; later calls return the first result.
    CloseResult close(double grace_s);

private:
    Connection() = default;

    std::unique_ptr<LineChannel> channel_;
    pid_t pid_ = -1;
    std::shared_ptr<std::promise<int>> thread_done_;
    std::future<int> thread_result_;
    std::optional<CloseResult> closed_;
};

/// Path of the running executable (used to resolve "$self" in worker commands).
std::string self_executable();

/// Listens on 127.0.0.1:port (0 picks a free port). Returns the listening fd and bound port.
std::pair<int, int> listen_tcp(int port);
/// Accepts one connection; returns its fd.
int accept_one(int listen_fd);

}  // namespace valigen
