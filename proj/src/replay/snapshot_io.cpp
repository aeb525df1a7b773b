#include "apex/replay/snapshot_io.hpp"

#include <array>
#include <fstream>
#include <iterator>

#include "apex/common/bytes.hpp"
#include "apex/transport/codec.hpp"

namespace apex::replay {

namespace {
constexpr std::array<std::uint8_t, 4> kMagic{'A', 'P', 'X', 'R'};
}

std::vector<std::uint8_t> save_snapshot(const ReplayMemory& memory) {
    const auto records = memory.export_records();
    ByteWriter w;
    w.put_bytes(kMagic);
    w.put(kReplaySnapshotVersion);
    w.put<std::uint64_t>(records.size());
    w.put<std::uint64_t>(memory.config().soft_capacity);
    w.put(memory.config().alpha);
    for (const auto& r : records) {
        w.put(r.key);
        w.put(r.priority);
        const auto payload = transport::encode_transition(r.transition, transport::Codec::kDeflate);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(payload.size()));
        w.put_bytes(payload);
    }
    return w.take();
}

std::unique_ptr<ReplayMemory> load_snapshot(std::span<const std::uint8_t> bytes,
                                            ReplayConfig config) {
    try {
        ByteReader r(bytes);
        const auto magic = r.get_bytes(4);
        if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
            throw SnapshotError("not a replay snapshot (bad magic)");
        }
        const auto version = r.get<std::uint32_t>();
        if (version != kReplaySnapshotVersion) {
            throw SnapshotError("unsupported replay snapshot version " + std::to_string(version));
        }
        const auto count = r.get<std::uint64_t>();
        config.soft_capacity = r.get<std::uint64_t>();
        config.alpha = r.get<double>();

        std::vector<ReplayMemory::Record> records;
        for (std::uint64_t i = 0; i < count; ++i) {
            ReplayMemory::Record rec;
            rec.key = r.get<std::uint64_t>();
            rec.priority = r.get<double>();
            const auto len = r.get<std::uint32_t>();
            rec.transition = transport::decode_transition(r.get_bytes(len));
            if (rec.transition.key != rec.key) throw SnapshotError("record key mismatch");
            records.push_back(std::move(rec));
        }
        if (!r.done()) throw SnapshotError("trailing bytes after replay snapshot");
        auto memory = std::make_unique<ReplayMemory>(config);
        memory->import_records(std::move(records));
        return memory;
    } catch (const SnapshotError&) {
        throw;
    } catch (const std::exception& e) {
        throw SnapshotError(std::string("corrupt replay snapshot: ") + e.what());
    }
}

void save_snapshot_file(const ReplayMemory& memory, const std::filesystem::path& path) {
    const auto bytes = save_snapshot(memory);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw SnapshotError("cannot write " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw SnapshotError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::unique_ptr<ReplayMemory> load_snapshot_file(const std::filesystem::path& path,
                                                 ReplayConfig config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SnapshotError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return load_snapshot(bytes, config);
}

}  // namespace apex::replay
