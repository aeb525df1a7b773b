#include "apex/transport/codec.hpp"

#include <zlib.h>

#include <limits>
#include <string>

namespace apex::transport {

namespace {

void write_floats(ByteWriter& out, const std::vector<float>& v) {
    if (v.size() > std::numeric_limits<std::uint16_t>::max()) {
        throw CodecError("vector too long for u16 length prefix");
    }
    out.put<std::uint16_t>(static_cast<std::uint16_t>(v.size()));
    for (float x : v) out.put(x);
}

std::vector<float> read_floats(ByteReader& in) {
    const auto n = in.get<std::uint16_t>();
    std::vector<float> v(n);
    for (auto& x : v) x = in.get<float>();
    return v;
}

}  // namespace

std::vector<std::uint8_t> compress(std::span<const std::uint8_t> raw) {
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> out(bound);
    const int rc = compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                             Z_BEST_SPEED);
    if (rc != Z_OK) throw CodecError("deflate failed with code " + std::to_string(rc));
    out.resize(bound);
    return out;
}

std::vector<std::uint8_t> decompress(std::span<const std::uint8_t> packed, std::size_t raw_length) {
    if (raw_length > kMaxPayloadBytes) throw CodecError("declared raw length exceeds limit");
    // Deflate cannot expand by more than about 1032:1.
    if (raw_length > packed.size() * 1032 + 64) throw CodecError("declared raw length is implausible");
    std::vector<std::uint8_t> out(raw_length);
    uLongf got = static_cast<uLongf>(raw_length);
    const int rc = uncompress(out.data(), &got, packed.data(), static_cast<uLong>(packed.size()));
    if (rc != Z_OK) throw CodecError("corrupt deflate payload (zlib code " + std::to_string(rc) + ")");
    if (got != raw_length) throw CodecError("deflate payload inflated to the wrong length");
    return out;
}

void write_blob(ByteWriter& out, std::span<const std::uint8_t> raw, Codec codec) {
    if (raw.size() > kMaxPayloadBytes) throw CodecError("blob exceeds payload limit");
    out.put(static_cast<std::uint8_t>(codec));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(raw.size()));
    switch (codec) {
        case Codec::kRaw:
            out.put_bytes(raw);
            break;
        case Codec::kDeflate: {
            const auto packed = compress(raw);
            out.put<std::uint32_t>(static_cast<std::uint32_t>(packed.size()));
            out.put_bytes(packed);
            break;
        }
        default:
            throw CodecError("unknown codec");
    }
}

std::vector<std::uint8_t> read_blob(ByteReader& in) {
    const auto codec = in.get<std::uint8_t>();
    const auto raw_length = in.get<std::uint32_t>();
    if (raw_length > kMaxPayloadBytes) throw CodecError("blob raw length exceeds limit");
    switch (static_cast<Codec>(codec)) {
        case Codec::kRaw: {
            auto bytes = in.get_bytes(raw_length);
            return {bytes.begin(), bytes.end()};
        }
        case Codec::kDeflate: {
            const auto packed_length = in.get<std::uint32_t>();
            return decompress(in.get_bytes(packed_length), raw_length);
        }
    }
    throw CodecError("unknown blob codec " + std::to_string(codec));
}

void write_observation(ByteWriter& out, const Observation& obs, Codec codec) {
    ByteWriter raw;
    raw.buf().reserve(obs.size() * sizeof(float));
    for (float x : obs) raw.put(x);
    write_blob(out, raw.buf(), codec);
}

Observation read_observation(ByteReader& in) {
    const auto bytes = read_blob(in);
    if (bytes.size() % sizeof(float) != 0) throw CodecError("observation blob is not f32-aligned");
    ByteReader r(bytes);
    Observation obs(bytes.size() / sizeof(float));
    for (auto& x : obs) x = r.get<float>();
    return obs;
}

void write_transition(ByteWriter& out, const Transition& t, Codec codec) {
    out.put(t.key);
    if (is_discrete(t.action)) {
        const int a = action_index(t.action);
        if (a < 0 || a > std::numeric_limits<std::uint16_t>::max()) {
            throw CodecError("discrete action out of u16 range");
        }
        out.put<std::uint8_t>(0);
        out.put<std::uint16_t>(static_cast<std::uint16_t>(a));
    } else {
        out.put<std::uint8_t>(1);
        write_floats(out, action_vector(t.action));
    }
    out.put(static_cast<float>(t.reward_sum));
    out.put(static_cast<float>(t.discount_prod));
    write_observation(out, t.s_start, codec);
    write_observation(out, t.s_end, codec);
    write_floats(out, t.q_start);
    write_floats(out, t.q_end);
}

Transition read_transition(ByteReader& in) {
    Transition t;
    t.key = in.get<std::uint64_t>();
    const auto kind = in.get<std::uint8_t>();
    if (kind == 0) {
        t.action = static_cast<int>(in.get<std::uint16_t>());
    } else if (kind == 1) {
        t.action = read_floats(in);
    } else {
        throw CodecError("unknown action kind " + std::to_string(kind));
    }
    t.reward_sum = in.get<float>();
    t.discount_prod = in.get<float>();
    t.s_start = read_observation(in);
    t.s_end = read_observation(in);
    t.q_start = read_floats(in);
    t.q_end = read_floats(in);
    return t;
}

std::vector<std::uint8_t> encode_transition(const Transition& t, Codec codec) {
    ByteWriter w;
    write_transition(w, t, codec);
    return w.take();
}

Transition decode_transition(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    auto t = read_transition(r);
    if (!r.done()) throw CodecError("trailing bytes after transition");
    return t;
}

Transition quantize_for_wire(Transition t) {
    t.reward_sum = static_cast<float>(t.reward_sum);
    t.discount_prod = static_cast<float>(t.discount_prod);
    return t;
}

}  // namespace apex::transport
