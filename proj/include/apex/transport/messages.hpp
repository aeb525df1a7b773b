#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "apex/nn/parameter_snapshot.hpp"
#include "apex/replay/replay_memory.hpp"
#include "apex/transport/codec.hpp"

namespace apex::transport {

enum class Tag : std::uint8_t {
    kAddBatch = 0x01,
    kSampleRequest = 0x02,
    kSampleResponse = 0x03,
    kSetPriorities = 0x04,
    kParamsRequest = 0x05,
    kParamsResponse = 0x06,
    kStatsRequest = 0x07,
    kStatsResponse = 0x08,
    kError = 0x09,
};

/// Body: u32 count, then per item f64 priority and an EncodedTransition.
struct AddBatch {
    std::vector<Transition> transitions;
    std::vector<double> priorities;
    bool operator==(const AddBatch&) const = default;
};

/// Body: u32 batch_size, f64 beta.
struct SampleRequest {
    std::uint32_t batch_size = 0;
    double beta = 0.4;
    bool operator==(const SampleRequest&) const = default;
};

/// Body: u64 instance_id, u64 replay_size, u32 count, then per item f64 probability,
/// f64 is_weight and an EncodedTransition. The item key is the transition key.
struct SampleResponse {
    std::uint64_t instance_id = 0;
    std::uint64_t replay_size = 0;
    std::vector<replay::SampledTransition> items;
    bool operator==(const SampleResponse&) const = default;
};

/// Body: u32 count, count x u64 key, count x f64 priority, u8 flags (bit 0: trim to
/// capacity after applying).
struct SetPriorities {
    std::vector<std::uint64_t> keys;
    std::vector<double> priorities;
    bool remove_to_fit = false;
    bool operator==(const SetPriorities&) const = default;
};

struct ParamsRequest {
    bool operator==(const ParamsRequest&) const = default;
};

/// Body: a parameter snapshot with f32 weights.
struct ParamsResponse {
    nn::ParameterSnapshot snapshot;
    bool operator==(const ParamsResponse&) const = default;
};

struct StatsRequest {
    bool operator==(const StatsRequest&) const = default;
};

/// Body: u64 instance_id, u64 size, f64 total_mass, f64 max_priority, f64 adds/s,
/// f64 samples/s, u64 total_added, u64 total_removed, u64 stale updates, then the outcome
/// of the request it acknowledges: u64 affected, u64 removed, u64 skipped.
struct StatsResponse {
    std::uint64_t instance_id = 0;
    replay::ReplayStats stats;
    std::uint64_t affected = 0;  ///< transitions added or priorities updated
    std::uint64_t removed = 0;   ///< evicted by a piggybacked remove_to_fit
    std::uint64_t skipped = 0;   ///< stale keys in a SetPriorities
    bool operator==(const StatsResponse& o) const;
};

enum class ErrorCode : std::uint16_t {
    kBadFrame = 1,
    kDuplicateKey = 2,
    kEmptyMemory = 3,
    kNoParameters = 4,
    kInvalidArgument = 5,
    kInternal = 6,
    kUnsupported = 7,
};

/// Body: u16 code, u32 length + UTF-8 message.
struct Error {
    ErrorCode code = ErrorCode::kInternal;
    std::string message;
    bool operator==(const Error&) const = default;
};

using WireMessage = std::variant<AddBatch, SampleRequest, SampleResponse, SetPriorities, ParamsRequest,
                                 ParamsResponse, StatsRequest, StatsResponse, Error>;

Tag tag_of(const WireMessage& m);
const char* tag_name(Tag t);

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Frame: [u32 LE length of tag + body][u8 tag][body]. `codec` applies to observation blobs.
std::vector<std::uint8_t> encode(const WireMessage& m, Codec codec = Codec::kDeflate);

/// Decodes exactly one frame occupying all of `frame`. Throws ProtocolError on any malformed
/// input, never reading past the declared length.
WireMessage decode(std::span<const std::uint8_t> frame);

/// Decodes a tag and body without the length prefix.
WireMessage decode_body(Tag tag, std::span<const std::uint8_t> body);

inline constexpr std::size_t kFrameHeaderBytes = 4;
inline constexpr std::size_t kMaxFrameBytes = kMaxPayloadBytes;

/// Reads the length prefix; throws ProtocolError if it is zero or above the frame cap.
std::uint32_t frame_length(std::span<const std::uint8_t, kFrameHeaderBytes> header);

}  // namespace apex::transport
