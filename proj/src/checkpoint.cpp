#include "simda/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "simda/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace simda {

namespace {

constexpr char kMagic[8] = {'S', 'I', 'M', 'D', 'A', '0', '0', '1'};

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (in.gcount() != sizeof(T)) throw CorruptFileError("checkpoint truncated: " + path);
    return v;
}

} // namespace

void save_checkpoint(const ParamSet& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_checkpoint: cannot open " + path);
    out.write(kMagic, sizeof(kMagic));
    write_raw(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, entry] : params) { // std::map iterates name-sorted
        write_raw(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_raw(out, static_cast<std::uint8_t>(entry.trainable ? 1 : 0));
        const auto& shape = entry.tensor.shape();
        write_raw(out, static_cast<std::uint32_t>(shape.size()));
        for (int d : shape) write_raw(out, static_cast<std::uint64_t>(d));
        out.write(reinterpret_cast<const char*>(entry.tensor.data()),
                  static_cast<std::streamsize>(sizeof(float) * entry.tensor.numel()));
    }
    if (!out) throw IoError("save_checkpoint: short write to " + path);
}

std::vector<CheckpointEntry> load_checkpoint_entries(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (in.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CorruptFileError("load_checkpoint: bad magic in " + path);
    const auto count = read_raw<std::uint32_t>(in, path);
    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        const auto name_len = read_raw<std::uint32_t>(in, path);
        if (name_len == 0 || name_len > 4096)
            throw CorruptFileError("load_checkpoint: implausible name length in " + path);
        e.name.resize(name_len);
        in.read(e.name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len))
            throw CorruptFileError("checkpoint truncated: " + path);
        const auto flag = read_raw<std::uint8_t>(in, path);
        if (flag > 1) throw CorruptFileError("load_checkpoint: bad flag byte in " + path);
        e.trainable = flag == 1;
        const auto rank = read_raw<std::uint32_t>(in, path);
        if (rank > 8) throw CorruptFileError("load_checkpoint: implausible rank in " + path);
        std::uint64_t numel = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const auto d = read_raw<std::uint64_t>(in, path);
            if (d == 0 || d > (1ull << 32))
                throw CorruptFileError("load_checkpoint: implausible dim in " + path);
            e.shape.push_back(static_cast<int>(d));
            numel *= d;
        }
        e.data.resize(numel);
        in.read(reinterpret_cast<char*>(e.data.data()),
                static_cast<std::streamsize>(sizeof(float) * numel));
        if (in.gcount() != static_cast<std::streamsize>(sizeof(float) * numel))
            throw CorruptFileError("checkpoint truncated: " + path);
        entries.push_back(std::move(e));
    }
    return entries;
}

void load_checkpoint_into(ParamSet& params, const std::string& path) {
    auto entries = load_checkpoint_entries(path);
    if (entries.size() != params.size())
        throw CorruptFileError("load_checkpoint: entry count mismatch (" +
                               std::to_string(entries.size()) + " in file, " +
                               std::to_string(params.size()) + " in model)");
    for (auto& e : entries) {
        if (!params.has(e.name))
            throw CorruptFileError("load_checkpoint: unexpected entry '" + e.name + "'");
        auto& tensor = params.at(e.name);
        if (tensor.shape() != e.shape)
            throw CorruptFileError("load_checkpoint: shape mismatch for '" + e.name + "'");
        std::memcpy(tensor.data(), e.data.data(), sizeof(float) * e.data.size());
    }
}

} // namespace simda
