#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "apex/common/bytes.hpp"
#include "apex/replay/transition.hpp"

namespace apex::transport {

/// Observation blob codec byte.
enum class Codec : std::uint8_t { kRaw = 0, kDeflate = 1 };

class CodecError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Upper bound on any single blob or frame body.
inline constexpr std::size_t kMaxPayloadBytes = 64u << 20;

std::vector<std::uint8_t> compress(std::span<const std::uint8_t> raw);

/// Inverse of compress(). Throws CodecError unless the payload inflates to exactly
/// `raw_length` bytes.
std::vector<std::uint8_t> decompress(std::span<const std::uint8_t> packed, std::size_t raw_length);

/// Blob layout: [u8 codec][u32 raw length][payload]. A deflate payload starts with its own
/// u32 compressed length followed by the zlib stream.
void write_blob(ByteWriter& out, std::span<const std::uint8_t> raw, Codec codec);
std::vector<std::uint8_t> read_blob(ByteReader& in);

void write_observation(ByteWriter& out, const Observation& obs, Codec codec);
Observation read_observation(ByteReader& in);

/// EncodedTransition: key u64, action (u8 kind, then u16 index or u16 dim + f32 values),
/// reward_sum f32, discount_prod f32, s_start blob, s_end blob, then the cached q-values
/// as u16 count + f32 values each.
void write_transition(ByteWriter& out, const Transition& t, Codec codec);
Transition read_transition(ByteReader& in);

std::vector<std::uint8_t> encode_transition(const Transition& t, Codec codec);
Transition decode_transition(std::span<const std::uint8_t> bytes);

/// Rounds every real field to the precision it has on the wire.
Transition quantize_for_wire(Transition t);

}  // namespace apex::transport
