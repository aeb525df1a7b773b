#include "apex/transport/channel.hpp"

#include <thread>

namespace apex::transport {

std::vector<std::uint8_t> serve_frame(const Handler& handler, std::span<const std::uint8_t> frame,
                                      Codec codec) {
    WireMessage reply;
    try {
        reply = handler(decode(frame));
    } catch (const ProtocolError& e) {
        reply = Error{ErrorCode::kBadFrame, e.what()};
    } catch (const std::exception& e) {
        reply = Error{ErrorCode::kInternal, e.what()};
    }
    try {
        return encode(reply, codec);
    } catch (const std::exception& e) {
        return encode(Error{ErrorCode::kInternal, std::string("reply encoding failed: ") + e.what()}, codec);
    }
}

void InProcEndpoint::bind(Handler handler) {
    std::unique_lock lock(mu_);
    handler_ = std::make_shared<const Handler>(std::move(handler));
}

void InProcEndpoint::unbind() {
    std::unique_lock lock(mu_);
    handler_.reset();
}

bool InProcEndpoint::bound() const {
    std::shared_lock lock(mu_);
    return handler_ != nullptr;
}

std::vector<std::uint8_t> InProcEndpoint::dispatch(std::span<const std::uint8_t> frame) const {
    std::shared_ptr<const Handler> h;
    {
        std::shared_lock lock(mu_);
        h = handler_;
    }
    if (!h) throw TransportError("in-process endpoint is not bound");
    return serve_frame(*h, frame, codec_);
}

WireMessage InProcChannel::call(const WireMessage& request) {
    const auto reply = endpoint_->dispatch(encode(request, codec_));
    return decode(reply);
}

WireMessage DelayedChannel::call(const WireMessage& request) {
    std::this_thread::sleep_for(delay_);
    auto reply = inner_->call(request);
    std::this_thread::sleep_for(delay_);
    return reply;
}

}  // namespace apex::transport
