#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <vector>

#include "apex/transport/messages.hpp"

namespace apex::transport {

/// The peer could not be reached or the connection broke mid-call.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The peer answered with an Error frame.
class RemoteError : public std::runtime_error {
public:
    RemoteError(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

using Handler = std::function<WireMessage(const WireMessage&)>;

/// Decodes one request frame, runs `handler` and encodes its reply. Malformed frames and
/// handler exceptions come back as Error frames.
std::vector<std::uint8_t> serve_frame(const Handler& handler, std::span<const std::uint8_t> frame,
                                      Codec codec);

/// One request, one response. Implementations serialize concurrent callers.
class Channel {
public:
    virtual ~Channel() = default;
    virtual WireMessage call(const WireMessage& request) = 0;
};

using ChannelPtr = std::shared_ptr<Channel>;

/// Server side of an in-process link. Requests travel as encoded frames, exactly as on TCP.
/// The handler can be unbound to emulate the service going away.
class InProcEndpoint {
public:
    explicit InProcEndpoint(Codec codec = Codec::kDeflate) : codec_(codec) {}

    void bind(Handler handler);
    void unbind();
    bool bound() const;

    /// Throws TransportError while unbound.
    std::vector<std::uint8_t> dispatch(std::span<const std::uint8_t> frame) const;

private:
    Codec codec_;
    mutable std::shared_mutex mu_;
    std::shared_ptr<const Handler> handler_;
};

class InProcChannel final : public Channel {
public:
    InProcChannel(std::shared_ptr<InProcEndpoint> endpoint, Codec codec = Codec::kDeflate)
        : endpoint_(std::move(endpoint)), codec_(codec) {}
    WireMessage call(const WireMessage& request) override;

private:
    std::shared_ptr<InProcEndpoint> endpoint_;
    Codec codec_;
};

/// Adds a fixed one-way latency in each direction.
class DelayedChannel final : public Channel {
public:
    DelayedChannel(ChannelPtr inner, std::chrono::milliseconds one_way)
        : inner_(std::move(inner)), delay_(one_way) {}
    WireMessage call(const WireMessage& request) override;

private:
    ChannelPtr inner_;
    std::chrono::milliseconds delay_;
};

/// Throws RemoteError if `reply` is an Error, ProtocolError if it is not a T.
template <typename T>
T expect(WireMessage reply) {
    if (auto* e = std::get_if<Error>(&reply)) throw RemoteError(e->code, e->message);
    if (auto* m = std::get_if<T>(&reply)) return std::move(*m);
    throw ProtocolError(std::string("unexpected reply ") + tag_name(tag_of(reply)));
}

}  // namespace apex::transport
