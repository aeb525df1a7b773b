#include "apex/transport/tcp.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <optional>

namespace apex::transport {

namespace {

constexpr int kPollMs = 100;

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

// Waits until `fd` is readable, checking `stop` between short polls. False on stop.
bool wait_readable(int fd, const std::atomic<bool>* stop, int timeout_ms) {
    int waited = 0;
    while (true) {
        if (stop && stop->load()) return false;
        pollfd p{fd, POLLIN, 0};
        const int slice = timeout_ms < 0 ? kPollMs : std::min(kPollMs, timeout_ms - waited);
        const int rc = ::poll(&p, 1, slice);
        if (rc > 0) return true;
        if (rc < 0 && errno != EINTR) throw TransportError(errno_text("poll"));
        waited += slice;
        if (timeout_ms >= 0 && waited >= timeout_ms) throw TransportError("timed out waiting for peer");
    }
}

// Reads exactly `n` bytes. Returns false if the peer closed cleanly before the first byte.
bool read_exact(int fd, std::uint8_t* buf, std::size_t n, const std::atomic<bool>* stop, int timeout_ms) {
    std::size_t got = 0;
    while (got < n) {
        if (!wait_readable(fd, stop, timeout_ms)) return false;
        const ssize_t rc = ::recv(fd, buf + got, n - got, 0);
        if (rc == 0) {
            if (got == 0) return false;
            throw TransportError("connection closed mid-frame");
        }
        if (rc < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw TransportError(errno_text("recv"));
        }
        got += static_cast<std::size_t>(rc);
    }
    return true;
}

void write_all(int fd, const std::vector<std::uint8_t>& bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t rc = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw TransportError(errno_text("send"));
        }
        sent += static_cast<std::size_t>(rc);
    }
}

// One whole frame including its length prefix, or nullopt on clean close/stop.
std::optional<std::vector<std::uint8_t>> read_frame(int fd, const std::atomic<bool>* stop, int timeout_ms) {
    std::vector<std::uint8_t> frame(kFrameHeaderBytes);
    if (!read_exact(fd, frame.data(), kFrameHeaderBytes, stop, timeout_ms)) return std::nullopt;
    const auto length = frame_length(std::span<const std::uint8_t, kFrameHeaderBytes>(frame.data(), kFrameHeaderBytes));
    frame.resize(kFrameHeaderBytes + length);
    if (!read_exact(fd, frame.data() + kFrameHeaderBytes, length, stop, timeout_ms)) {
        throw TransportError("connection closed mid-frame");
    }
    return frame;
}

sockaddr_in resolve(const Endpoint& e) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(e.port);
    if (::inet_pton(AF_INET, e.host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(e.host.c_str(), nullptr, &hints, &res) != 0 || !res) {
        throw TransportError("cannot resolve host " + e.host);
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
    return addr;
}

}  // namespace

Endpoint Endpoint::parse(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
        throw std::invalid_argument("endpoint must be host:port, got '" + text + "'");
    }
    const auto port_text = text.substr(colon + 1);
    std::size_t used = 0;
    const int port = std::stoi(port_text, &used);
    if (used != port_text.size() || port < 0 || port > 65535) {
        throw std::invalid_argument("bad port in endpoint '" + text + "'");
    }
    return {text.substr(0, colon), static_cast<std::uint16_t>(port)};
}

std::string Endpoint::to_string() const { return host + ":" + std::to_string(port); }

TcpServer::TcpServer(Endpoint bind_to, Handler handler, Codec codec)
    : bind_(std::move(bind_to)), handler_(std::move(handler)), codec_(codec) {}

TcpServer::~TcpServer() { stop(); }

void TcpServer::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw TransportError(errno_text("socket"));
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    const auto addr = resolve(bind_);
    if (::bind(listen_fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        const auto msg = errno_text(("bind " + bind_.to_string()).c_str());
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw TransportError(msg);
    }
    if (::listen(listen_fd_, 64) != 0) throw TransportError(errno_text("listen"));
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
    stopping_ = false;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void TcpServer::accept_loop() {
    while (!stopping_) {
        pollfd p{listen_fd_, POLLIN, 0};
        const int rc = ::poll(&p, 1, kPollMs);
        if (rc <= 0) {
            reap(false);
            continue;
        }
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        ++accepted_;
        std::lock_guard lock(conn_mu_);
        auto& c = connections_.emplace_back();
        c.fd = fd;
        c.thread = std::thread([this, &c] { serve(c); });
    }
}

void TcpServer::serve(Connection& c) {
    try {
        while (!stopping_) {
            auto frame = read_frame(c.fd, &stopping_, -1);
            if (!frame) break;
            write_all(c.fd, serve_frame(handler_, *frame, codec_));
        }
    } catch (const ProtocolError& e) {
        // An unparseable length prefix leaves the stream unsynchronised: report and drop.
        try {
            write_all(c.fd, encode(Error{ErrorCode::kBadFrame, e.what()}, codec_));
        } catch (...) {
        }
    } catch (const std::exception&) {
    }
    ::shutdown(c.fd, SHUT_RDWR);
    c.done = true;
}

void TcpServer::reap(bool all) {
    std::lock_guard lock(conn_mu_);
    for (auto it = connections_.begin(); it != connections_.end();) {
        if (all || it->done) {
            if (all) ::shutdown(it->fd, SHUT_RDWR);
            if (it->thread.joinable()) it->thread.join();
            ::close(it->fd);
            it = connections_.erase(it);
        } else {
            ++it;
        }
    }
}

void TcpServer::stop() {
    if (listen_fd_ < 0) return;
    stopping_ = true;
    if (acceptor_.joinable()) acceptor_.join();
    ::close(listen_fd_);
    listen_fd_ = -1;
    reap(true);
}

TcpChannel::TcpChannel(Endpoint peer, Codec codec, std::chrono::milliseconds io_timeout)
    : peer_(std::move(peer)), codec_(codec), timeout_(io_timeout) {}

TcpChannel::~TcpChannel() { close(); }

void TcpChannel::close() {
    std::lock_guard lock(mu_);
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

void TcpChannel::connect_locked() {
    const auto addr = resolve(peer_);
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError(errno_text("socket"));
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
    if (rc != 0 && errno == EINPROGRESS) {
        pollfd p{fd, POLLOUT, 0};
        rc = ::poll(&p, 1, static_cast<int>(timeout_.count()));
        int err = 0;
        socklen_t len = sizeof(err);
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = rc > 0 && err == 0 ? 0 : -1;
        if (err) errno = err;
    }
    if (rc != 0) {
        const auto msg = errno_text(("connect " + peer_.to_string()).c_str());
        ::close(fd);
        throw TransportError(msg);
    }
    ::fcntl(fd, F_SETFL, flags);
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    fd_ = fd;
}

WireMessage TcpChannel::call(const WireMessage& request) {
    const auto bytes = encode(request, codec_);
    std::lock_guard lock(mu_);
    try {
        if (fd_ < 0) connect_locked();
        write_all(fd_, bytes);
        auto frame = read_frame(fd_, nullptr, static_cast<int>(timeout_.count()));
        if (!frame) throw TransportError("peer closed the connection");
        return decode(*frame);
    } catch (...) {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
        throw;
    }
}

}  // namespace apex::transport
