#include "apex/transport/messages.hpp"

#include <cstring>

namespace apex::transport {

bool StatsResponse::operator==(const StatsResponse& o) const {
    const auto& a = stats;
    const auto& b = o.stats;
    return instance_id == o.instance_id && a.size == b.size && a.total_mass == b.total_mass &&
           a.max_priority == b.max_priority && a.adds_per_sec == b.adds_per_sec &&
           a.samples_per_sec == b.samples_per_sec && a.total_added == b.total_added &&
           a.total_removed == b.total_removed && a.stale_priority_updates == b.stale_priority_updates &&
           affected == o.affected && removed == o.removed && skipped == o.skipped;
}

Tag tag_of(const WireMessage& m) { return static_cast<Tag>(m.index() + 1); }

const char* tag_name(Tag t) {
    switch (t) {
        case Tag::kAddBatch: return "AddBatch";
        case Tag::kSampleRequest: return "SampleRequest";
        case Tag::kSampleResponse: return "SampleResponse";
        case Tag::kSetPriorities: return "SetPriorities";
        case Tag::kParamsRequest: return "ParamsRequest";
        case Tag::kParamsResponse: return "ParamsResponse";
        case Tag::kStatsRequest: return "StatsRequest";
        case Tag::kStatsResponse: return "StatsResponse";
        case Tag::kError: return "Error";
    }
    return "unknown";
}

namespace {

// Each encoded element occupies at least this many bytes, so a declared count can be
// checked against what is left before anything is allocated.
void check_count(ByteReader& in, std::uint64_t count, std::size_t min_bytes_each) {
    if (count > in.remaining() / min_bytes_each) throw ProtocolError("element count exceeds frame");
}

constexpr std::size_t kMinTransitionBytes = 8 + 1 + 2 + 4 + 4 + 5 + 5 + 2 + 2;

void put_body(ByteWriter& out, const AddBatch& m, Codec codec) {
    if (m.transitions.size() != m.priorities.size()) {
        throw ProtocolError("AddBatch priorities and transitions differ in length");
    }
    out.put<std::uint32_t>(static_cast<std::uint32_t>(m.transitions.size()));
    for (std::size_t i = 0; i < m.transitions.size(); ++i) {
        out.put(m.priorities[i]);
        write_transition(out, m.transitions[i], codec);
    }
}

void put_body(ByteWriter& out, const SampleRequest& m, Codec) {
    out.put(m.batch_size);
    out.put(m.beta);
}

void put_body(ByteWriter& out, const SampleResponse& m, Codec codec) {
    out.put(m.instance_id);
    out.put(m.replay_size);
    out.put<std::uint32_t>(static_cast<std::uint32_t>(m.items.size()));
    for (const auto& item : m.items) {
        if (item.key != item.transition.key) throw ProtocolError("sampled key differs from transition key");
        out.put(item.probability);
        out.put(item.is_weight);
        write_transition(out, item.transition, codec);
    }
}

void put_body(ByteWriter& out, const SetPriorities& m, Codec) {
    if (m.keys.size() != m.priorities.size()) throw ProtocolError("SetPriorities lengths differ");
    out.put<std::uint32_t>(static_cast<std::uint32_t>(m.keys.size()));
    for (auto k : m.keys) out.put(k);
    for (auto p : m.priorities) out.put(p);
    out.put<std::uint8_t>(m.remove_to_fit ? 1 : 0);
}

void put_body(ByteWriter&, const ParamsRequest&, Codec) {}
void put_body(ByteWriter&, const StatsRequest&, Codec) {}

void put_body(ByteWriter& out, const ParamsResponse& m, Codec) { nn::write_snapshot_f32(out, m.snapshot); }

void put_body(ByteWriter& out, const StatsResponse& m, Codec) {
    out.put(m.instance_id);
    out.put(m.stats.size);
    out.put(m.stats.total_mass);
    out.put(m.stats.max_priority);
    out.put(m.stats.adds_per_sec);
    out.put(m.stats.samples_per_sec);
    out.put(m.stats.total_added);
    out.put(m.stats.total_removed);
    out.put(m.stats.stale_priority_updates);
    out.put(m.affected);
    out.put(m.removed);
    out.put(m.skipped);
}

void put_body(ByteWriter& out, const Error& m, Codec) {
    out.put(static_cast<std::uint16_t>(m.code));
    out.put_string(m.message);
}

AddBatch get_add_batch(ByteReader& in) {
    AddBatch m;
    const auto n = in.get<std::uint32_t>();
    check_count(in, n, 8 + kMinTransitionBytes);
    m.transitions.reserve(n);
    m.priorities.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        m.priorities.push_back(in.get<double>());
        m.transitions.push_back(read_transition(in));
    }
    return m;
}

SampleRequest get_sample_request(ByteReader& in) {
    SampleRequest m;
    m.batch_size = in.get<std::uint32_t>();
    m.beta = in.get<double>();
    return m;
}

SampleResponse get_sample_response(ByteReader& in) {
    SampleResponse m;
    m.instance_id = in.get<std::uint64_t>();
    m.replay_size = in.get<std::uint64_t>();
    const auto n = in.get<std::uint32_t>();
    check_count(in, n, 16 + kMinTransitionBytes);
    m.items.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        replay::SampledTransition item;
        item.probability = in.get<double>();
        item.is_weight = in.get<double>();
        item.transition = read_transition(in);
        item.key = item.transition.key;
        m.items.push_back(std::move(item));
    }
    return m;
}

SetPriorities get_set_priorities(ByteReader& in) {
    SetPriorities m;
    const auto n = in.get<std::uint32_t>();
    check_count(in, n, 16);
    m.keys.resize(n);
    m.priorities.resize(n);
    for (auto& k : m.keys) k = in.get<std::uint64_t>();
    for (auto& p : m.priorities) p = in.get<double>();
    const auto flags = in.get<std::uint8_t>();
    if (flags & ~1u) throw ProtocolError("unknown SetPriorities flags");
    m.remove_to_fit = flags & 1u;
    return m;
}

StatsResponse get_stats_response(ByteReader& in) {
    StatsResponse m;
    m.instance_id = in.get<std::uint64_t>();
    m.stats.size = in.get<std::uint64_t>();
    m.stats.total_mass = in.get<double>();
    m.stats.max_priority = in.get<double>();
    m.stats.adds_per_sec = in.get<double>();
    m.stats.samples_per_sec = in.get<double>();
    m.stats.total_added = in.get<std::uint64_t>();
    m.stats.total_removed = in.get<std::uint64_t>();
    m.stats.stale_priority_updates = in.get<std::uint64_t>();
    m.affected = in.get<std::uint64_t>();
    m.removed = in.get<std::uint64_t>();
    m.skipped = in.get<std::uint64_t>();
    return m;
}

Error get_error(ByteReader& in) {
    Error m;
    const auto code = in.get<std::uint16_t>();
    if (code < 1 || code > static_cast<std::uint16_t>(ErrorCode::kUnsupported)) {
        throw ProtocolError("unknown error code");
    }
    m.code = static_cast<ErrorCode>(code);
    m.message = in.get_string();
    return m;
}

}  // namespace

std::vector<std::uint8_t> encode(const WireMessage& m, Codec codec) {
    ByteWriter out;
    out.put<std::uint32_t>(0);
    out.put(static_cast<std::uint8_t>(tag_of(m)));
    std::visit([&](const auto& body) { put_body(out, body, codec); }, m);
    const auto length = out.size() - kFrameHeaderBytes;
    if (length > kMaxFrameBytes) throw ProtocolError("frame exceeds the 64 MiB cap");
    out.patch_u32(0, static_cast<std::uint32_t>(length));
    return out.take();
}

WireMessage decode_body(Tag tag, std::span<const std::uint8_t> body) {
    ByteReader in(body);
    try {
        WireMessage m;
        switch (tag) {
            case Tag::kAddBatch: m = get_add_batch(in); break;
            case Tag::kSampleRequest: m = get_sample_request(in); break;
            case Tag::kSampleResponse: m = get_sample_response(in); break;
            case Tag::kSetPriorities: m = get_set_priorities(in); break;
            case Tag::kParamsRequest: m = ParamsRequest{}; break;
            case Tag::kParamsResponse: m = ParamsResponse{nn::read_snapshot_f32(in)}; break;
            case Tag::kStatsRequest: m = StatsRequest{}; break;
            case Tag::kStatsResponse: m = get_stats_response(in); break;
            case Tag::kError: m = get_error(in); break;
            default: throw ProtocolError("unknown tag " + std::to_string(static_cast<int>(tag)));
        }
        if (!in.done()) throw ProtocolError("trailing bytes after message body");
        return m;
    } catch (const TruncatedInput& e) {
        throw ProtocolError(std::string("truncated ") + tag_name(tag) + ": " + e.what());
    } catch (const CodecError& e) {
        throw ProtocolError(std::string("bad payload in ") + tag_name(tag) + ": " + e.what());
    } catch (const ProtocolError&) {
        throw;
    } catch (const std::exception& e) {
        throw ProtocolError(std::string("malformed ") + tag_name(tag) + ": " + e.what());
    }
}

std::uint32_t frame_length(std::span<const std::uint8_t, kFrameHeaderBytes> header) {
    std::uint32_t length;
    std::memcpy(&length, header.data(), sizeof(length));
    length = detail::to_little(length);
    if (length == 0) throw ProtocolError("frame without a tag");
    if (length > kMaxFrameBytes) throw ProtocolError("frame length exceeds the 64 MiB cap");
    return length;
}

WireMessage decode(std::span<const std::uint8_t> frame) {
    if (frame.size() < kFrameHeaderBytes + 1) throw ProtocolError("frame shorter than its header");
    const auto length = frame_length(frame.first<kFrameHeaderBytes>());
    if (frame.size() - kFrameHeaderBytes != length) {
        throw ProtocolError("frame declares " + std::to_string(length) + " bytes but carries " +
                            std::to_string(frame.size() - kFrameHeaderBytes));
    }
    const auto tag = static_cast<Tag>(frame[kFrameHeaderBytes]);
    return decode_body(tag, frame.subspan(kFrameHeaderBytes + 1));
}

}  // namespace apex::transport
