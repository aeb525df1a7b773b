#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "apex/transport/channel.hpp"

namespace apex::transport {

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    /// "host:port"; throws std::invalid_argument otherwise.
    static Endpoint parse(const std::string& text);
    std::string to_string() const;
    bool operator==(const Endpoint&) const = default;
};

/// One thread per connection; requests on a connection are answered in order.
class TcpServer {
public:
    TcpServer(Endpoint bind_to, Handler handler, Codec codec = Codec::kDeflate);
    ~TcpServer();
    TcpServer(const TcpServer&) = delete;
    TcpServer& operator=(const TcpServer&) = delete;

    /// Binds and starts accepting. Port 0 picks a free port; see port().
    void start();
    /// Closes the listener and every connection, then joins all threads.
    void stop();

    std::uint16_t port() const { return port_; }
    Endpoint endpoint() const { return {bind_.host, port_}; }
    std::uint64_t connections_accepted() const { return accepted_.load(); }

private:
    struct Connection {
        int fd;
        std::thread thread;
        std::atomic<bool> done{false};
    };

    void accept_loop();
    void serve(Connection& c);
    void reap(bool all);

    Endpoint bind_;
    Handler handler_;
    Codec codec_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::atomic<std::uint64_t> accepted_{0};
    std::thread acceptor_;
    std::mutex conn_mu_;
    std::list<Connection> connections_;
};

/// Connects lazily and reconnects on the next call after any failure.
class TcpChannel final : public Channel {
public:
    explicit TcpChannel(Endpoint peer, Codec codec = Codec::kDeflate,
                        std::chrono::milliseconds io_timeout = std::chrono::seconds(30));
    ~TcpChannel() override;

    WireMessage call(const WireMessage& request) override;
    void close();

private:
    void connect_locked();

    Endpoint peer_;
    Codec codec_;
    std::chrono::milliseconds timeout_;
    std::mutex mu_;
    int fd_ = -1;
};

}  // namespace apex::transport
