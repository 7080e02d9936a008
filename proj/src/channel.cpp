#include "valigen/channel.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <climits>
#include <cstring>
#include <thread>

#include "valigen/error.hpp"

namespace valigen {

namespace {

void ignore_sigpipe_once() {
    static const bool done = [] {
        ::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)done;
}

int remaining_ms(std::optional<Clock::time_point> deadline) {
    if (!deadline) return -1;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now()).count();
    if (left <= 0) return 0;
    return left > INT_MAX ? INT_MAX : static_cast<int>(left);
}

}  // namespace

LineChannel::LineChannel(int read_fd, int write_fd) noexcept : read_fd_(read_fd), write_fd_(write_fd) {
    ignore_sigpipe_once();
}

LineChannel::~LineChannel() { close(); }

void LineChannel::close() noexcept {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    read_fd_ = write_fd_ = -1;
}

bool LineChannel::write_line(std::string_view line) {
    if (write_fd_ < 0) return false;
    std::string frame(line);
    frame.push_back('\n');
    std::size_t off = 0;
    while (off < frame.size()) {
        const ssize_t n = ::write(write_fd_, frame.data() + off, frame.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        off += static_cast<std::size_t>(n);
    }
    return true;
}

LineChannel::ReadStatus LineChannel::read_line(std::string& out, std::optional<Clock::time_point> deadline) {
    for (;;) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            out.assign(buffer_, 0, nl);
            buffer_.erase(0, nl + 1);
            return ReadStatus::line;
        }
        if (buffer_.size() > kMaxLine) {
            out = std::move(buffer_);
            buffer_.clear();
            return ReadStatus::line;
        }
        if (eof_ || read_fd_ < 0) {
            if (!buffer_.empty()) {
                out = std::move(buffer_);
                buffer_.clear();
                return ReadStatus::line;
            }
            return ReadStatus::eof;
        }
        pollfd pfd{read_fd_, POLLIN, 0};
        const int rc = ::poll(&pfd, 1, remaining_ms(deadline));
        if (rc < 0) {
            if (errno == EINTR) continue;
            eof_ = true;
            continue;
        }
        if (rc == 0) return ReadStatus::timeout;
        char chunk[65536];
        const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            eof_ = true;
        } else if (n == 0) {
            eof_ = true;
        } else {
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }
}

std::unique_ptr<Connection> Connection::spawn_subprocess(const std::vector<std::string>& argv) {
    if (argv.empty()) throw HandshakeError("empty worker command line");
    ignore_sigpipe_once();
    int to_child[2], from_child[2], exec_err[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw HandshakeError("pipe failed");
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
        ::close(to_child[0]);
        ::close(to_child[1]);
        throw HandshakeError("pipe failed");
    }
    if (::pipe2(exec_err, O_CLOEXEC) != 0) {
        for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
        throw HandshakeError("pipe failed");
    }
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) {
        for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1], exec_err[0], exec_err[1]}) ::close(fd);
        throw HandshakeError("fork failed");
    }
    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(to_child[0], STDIN_FILENO);
        ::dup2(from_child[1], STDOUT_FILENO);
        ::execvp(args[0], args.data());
        const int e = errno;
        (void)!::write(exec_err[1], &e, sizeof e);
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::close(exec_err[1]);
    int child_errno = 0;
    ssize_t n;
    do {
        n = ::read(exec_err[0], &child_errno, sizeof child_errno);
    } while (n < 0 && errno == EINTR);
    ::close(exec_err[0]);
    if (n == static_cast<ssize_t>(sizeof child_errno)) {
        ::close(to_child[1]);
        ::close(from_child[0]);
        ::waitpid(pid, nullptr, 0);
        throw HandshakeError("cannot execute worker '" + argv[0] + "': " + std::strerror(child_errno));
    }
    std::unique_ptr<Connection> conn(new Connection());
    conn->channel_ = std::make_unique<LineChannel>(from_child[0], to_child[1]);
    conn->pid_ = pid;
    return conn;
}

std::unique_ptr<Connection> Connection::connect_tcp(const std::string& host, int port, double timeout_s) {
    ignore_sigpipe_once();
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port_s = std::to_string(port);
    if (const int rc = ::getaddrinfo(host.c_str(), port_s.c_str(), &hints, &res); rc != 0) {
        throw HandshakeError("cannot resolve " + host + ": " + ::gai_strerror(rc));
    }
    int fd = -1;
    std::string last_error = "no addresses";
    for (addrinfo* ai = res; ai && fd < 0; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC | SOCK_NONBLOCK, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) != 0) {
            if (errno == EINPROGRESS) {
                pollfd pfd{fd, POLLOUT, 0};
                const int rc = ::poll(&pfd, 1, static_cast<int>(timeout_s * 1000));
                int err = 0;
                socklen_t len = sizeof err;
                ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
                if (rc == 1 && err == 0) break;
                last_error = rc == 0 ? "connect timeout" : std::strerror(err);
            } else {
                last_error = std::strerror(errno);
            }
            ::close(fd);
            fd = -1;
        }
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw HandshakeError("cannot connect to " + host + ":" + port_s + ": " + last_error);
    ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) & ~O_NONBLOCK);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::unique_ptr<Connection> conn(new Connection());
    conn->channel_ = std::make_unique<LineChannel>(fd, fd);
    return conn;
}

std::unique_ptr<Connection> Connection::start_inproc(InprocServer server) {
    ignore_sigpipe_once();
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
        throw HandshakeError("socketpair failed");
    }
    std::unique_ptr<Connection> conn(new Connection());
    conn->channel_ = std::make_unique<LineChannel>(sv[0], sv[0]);
    conn->thread_done_ = std::make_shared<std::promise<int>>();
    conn->thread_result_ = conn->thread_done_->get_future();
    // The worker thread owns its end and its promise, so it may outlive a
    // connection that gave up waiting for it.
    std::thread([server = std::move(server), fd = sv[1], done = conn->thread_done_]() mutable {
        int code = 1;
        {
            LineChannel ch(fd, fd);
            try {
                code = server(ch);
            } catch (...) {
                code = 1;
            }
        }
        done->set_value(code);
    }).detach();
    return conn;
}

Connection::~Connection() { close(5.0); }

Connection::CloseResult Connection::close(double grace_s) {
    if (closed_) return *closed_;
    CloseResult result;
    const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(grace_s));
    if (channel_) channel_->close();
    if (pid_ > 0) {
        int status = 0;
        bool reaped = false;
        while (Clock::now() < deadline) {
            const pid_t r = ::waitpid(pid_, &status, WNOHANG);
            if (r == pid_) {
                reaped = true;
                break;
            }
            if (r < 0 && errno != EINTR) break;
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        if (!reaped) {
            ::kill(-pid_, SIGKILL);
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, &status, 0);
            result.forced = true;
        }
        if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
        pid_ = -1;
    } else if (thread_result_.valid()) {
        if (thread_result_.wait_until(deadline) == std::future_status::ready) {
            result.exit_code = thread_result_.get();
        } else {
            result.forced = true;  // the detached thread is abandoned
        }
    }
    closed_ = result;
    return result;
}

std::string self_executable() {
    char buf[4096];
    const ssize_t n = ::readlink("/proc/self/exe", buf, sizeof buf - 1);
    if (n <= 0) throw Error("cannot resolve own executable path");
    return std::string(buf, static_cast<std::size_t>(n));
}

std::pair<int, int> listen_tcp(int port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw Error("socket failed");
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 4) != 0) {
        const std::string err = std::strerror(errno);
        ::close(fd);
        throw Error("cannot listen on port " + std::to_string(port) + ": " + err);
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    return {fd, ntohs(addr.sin_port)};
}

int accept_one(int listen_fd) {
    for (;;) {
        const int fd = ::accept4(listen_fd, nullptr, nullptr, SOCK_CLOEXEC);
        if (fd >= 0) {
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            return fd;
        }
        if (errno != EINTR) throw Error(std::string("accept failed: ") + std::strerror(errno));
    }
}

}  // namespace valigen
