#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>

#include "apex/nn/parameter_snapshot.hpp"
#include "apex/replay/replay_memory.hpp"
#include "apex/transport/channel.hpp"

namespace apex::transport {

/// Maps replay requests onto a ReplayMemory. `instance_id` identifies this incarnation of
/// the memory so clients can tell a restarted server from the old one.
class ReplayService {
public:
    ReplayService(std::shared_ptr<replay::ReplayMemory> memory, std::uint64_t instance_id);

    WireMessage handle(const WireMessage& request);

    replay::ReplayMemory& memory() { return *memory_; }
    const std::shared_ptr<replay::ReplayMemory>& memory_ptr() const { return memory_; }
    std::uint64_t instance_id() const { return instance_id_; }

private:
    StatsResponse stats_reply(std::uint64_t affected, std::uint64_t removed, std::uint64_t skipped) const;

    std::shared_ptr<replay::ReplayMemory> memory_;
    std::uint64_t instance_id_;
};

/// Serves the most recently published parameter snapshot.
class ParamService {
public:
    void publish(nn::SnapshotPtr snapshot);
    nn::SnapshotPtr latest() const;
    std::uint64_t requests_served() const { return served_.load(); }

    WireMessage handle(const WireMessage& request);

private:
    mutable std::mutex mu_;
    nn::SnapshotPtr latest_;
    std::atomic<std::uint64_t> served_{0};
};

Handler make_handler(std::shared_ptr<ReplayService> service);
Handler make_handler(std::shared_ptr<ParamService> service);

/// Typed replay calls over any channel. Error replies surface as RemoteError, broken links
/// as TransportError.
class ReplayClient {
public:
    explicit ReplayClient(ChannelPtr channel) : channel_(std::move(channel)) {}

    StatsResponse add_batch(std::vector<Transition> transitions, std::vector<double> priorities);
    SampleResponse sample(std::uint32_t batch_size, double beta);
    StatsResponse set_priorities(std::vector<std::uint64_t> keys, std::vector<double> priorities,
                                 bool remove_to_fit = false);
    StatsResponse stats();

private:
    ChannelPtr channel_;
};

class ParamsClient {
public:
    explicit ParamsClient(ChannelPtr channel) : channel_(std::move(channel)) {}

    /// Latest snapshot, or nullopt if the learner has not published yet.
    std::optional<nn::ParameterSnapshot> fetch();

private:
    ChannelPtr channel_;
};

}  // namespace apex::transport
