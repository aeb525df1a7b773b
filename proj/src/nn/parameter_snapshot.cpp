#include "apex/nn/parameter_snapshot.hpp"

#include <cstring>
#include <stdexcept>

namespace apex::nn {

std::uint64_t fingerprint(const ParameterSnapshot& s) {
    std::uint64_t h = fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(&s.version),
                                        sizeof(s.version)));
    return fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(s.weights.data()),
                             s.weights.size() * sizeof(double)),
                   h);
}

void write_snapshot_f32(ByteWriter& out, const ParameterSnapshot& s) {
    out.put(s.version);
    out.put<std::uint64_t>(s.weights.size());
    for (double w : s.weights) out.put(static_cast<float>(w));
}

void write_snapshot_f64(ByteWriter& out, const ParameterSnapshot& s) {
    out.put(s.version);
    out.put<std::uint64_t>(s.weights.size());
    for (double w : s.weights) out.put(w);
}

namespace {
template <typename T>
ParameterSnapshot read_snapshot(ByteReader& in) {
    ParameterSnapshot s;
    s.version = in.get<std::uint64_t>();
    const auto n = in.get<std::uint64_t>();
    if (n > in.remaining() / sizeof(T)) throw TruncatedInput("snapshot weight count exceeds payload");
    s.weights.resize(n);
    for (auto& w : s.weights) w = in.get<T>();
    return s;
}
}  // namespace

ParameterSnapshot read_snapshot_f32(ByteReader& in) { return read_snapshot<float>(in); }
ParameterSnapshot read_snapshot_f64(ByteReader& in) { return read_snapshot<double>(in); }

}  // namespace apex::nn
