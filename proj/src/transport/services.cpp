#include "apex/transport/services.hpp"

namespace apex::transport {

namespace {

template <class... F>
struct overloaded : F... {
    using F::operator()...;
};
template <class... F>
overloaded(F...) -> overloaded<F...>;

Error unsupported(const WireMessage& m, const char* service) {
    return Error{ErrorCode::kUnsupported,
                 std::string(tag_name(tag_of(m))) + " is not a " + service + " request"};
}

}  // namespace

ReplayService::ReplayService(std::shared_ptr<replay::ReplayMemory> memory, std::uint64_t instance_id)
    : memory_(std::move(memory)), instance_id_(instance_id) {}

StatsResponse ReplayService::stats_reply(std::uint64_t affected, std::uint64_t removed,
                                         std::uint64_t skipped) const {
    return StatsResponse{instance_id_, memory_->stats(), affected, removed, skipped};
}

WireMessage ReplayService::handle(const WireMessage& request) {
    try {
        return std::visit(
            overloaded{
                [&](const AddBatch& m) -> WireMessage {
                    const auto added = memory_->add_batch(m.transitions, m.priorities);
                    return stats_reply(added, 0, 0);
                },
                [&](const SampleRequest& m) -> WireMessage {
                    auto result = memory_->sample(m.batch_size, m.beta);
                    return SampleResponse{instance_id_, result.replay_size, std::move(result.items)};
                },
                [&](const SetPriorities& m) -> WireMessage {
                    const auto r = memory_->set_priorities(m.keys, m.priorities);
                    const std::size_t removed = m.remove_to_fit ? memory_->remove_to_fit() : 0;
                    return stats_reply(r.updated, removed, r.skipped);
                },
                [&](const StatsRequest&) -> WireMessage { return stats_reply(0, 0, 0); },
                [&](const auto&) -> WireMessage { return unsupported(request, "replay"); },
            },
            request);
    } catch (const replay::DuplicateKeyError& e) {
        return Error{ErrorCode::kDuplicateKey, e.what()};
    } catch (const replay::EmptyMemoryError& e) {
        return Error{ErrorCode::kEmptyMemory, e.what()};
    } catch (const std::invalid_argument& e) {
        return Error{ErrorCode::kInvalidArgument, e.what()};
    } catch (const std::exception& e) {
        return Error{ErrorCode::kInternal, e.what()};
    }
}

void ParamService::publish(nn::SnapshotPtr snapshot) {
    std::lock_guard lock(mu_);
    latest_ = std::move(snapshot);
}

nn::SnapshotPtr ParamService::latest() const {
    std::lock_guard lock(mu_);
    return latest_;
}

WireMessage ParamService::handle(const WireMessage& request) {
    if (!std::holds_alternative<ParamsRequest>(request)) return unsupported(request, "parameter");
    const auto snap = latest();
    if (!snap) return Error{ErrorCode::kNoParameters, "no parameters yet"};
    ++served_;
    return ParamsResponse{*snap};
}

Handler make_handler(std::shared_ptr<ReplayService> service) {
    return [service](const WireMessage& m) { return service->handle(m); };
}

Handler make_handler(std::shared_ptr<ParamService> service) {
    return [service](const WireMessage& m) { return service->handle(m); };
}

StatsResponse ReplayClient::add_batch(std::vector<Transition> transitions, std::vector<double> priorities) {
    return expect<StatsResponse>(channel_->call(AddBatch{std::move(transitions), std::move(priorities)}));
}

SampleResponse ReplayClient::sample(std::uint32_t batch_size, double beta) {
    return expect<SampleResponse>(channel_->call(SampleRequest{batch_size, beta}));
}

StatsResponse ReplayClient::set_priorities(std::vector<std::uint64_t> keys, std::vector<double> priorities,
                                           bool remove_to_fit) {
    return expect<StatsResponse>(
        channel_->call(SetPriorities{std::move(keys), std::move(priorities), remove_to_fit}));
}

StatsResponse ReplayClient::stats() { return expect<StatsResponse>(channel_->call(StatsRequest{})); }

std::optional<nn::ParameterSnapshot> ParamsClient::fetch() {
    auto reply = channel_->call(ParamsRequest{});
    if (auto* e = std::get_if<Error>(&reply); e && e->code == ErrorCode::kNoParameters) return std::nullopt;
    return expect<ParamsResponse>(std::move(reply)).snapshot;
}

}  // namespace apex::transport
