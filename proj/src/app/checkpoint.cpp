#include "cage/app/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "cage/data/io.hpp"

namespace cage::app {

using nlohmann::json;

namespace {

template <typename T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t at) {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<T>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
    }
    return value;
}

constexpr std::size_t kHeaderSize = 8 + 4 + 8;

}  // namespace

std::string encode_checkpoint(json metadata, std::span<const Parameter* const> tensors) {
    json directory = json::array();
    std::uint64_t offset = 0;
    std::set<std::string> names;
    for (const Parameter* p : tensors) {
        if (!names.insert(p->name).second) throw CheckpointError("duplicate tensor name '" + p->name + "'");
        directory.push_back({{"name", p->name},
                             {"shape", {p->value.rows(), p->value.cols()}},
                             {"offset", offset}});
        offset += 4 * static_cast<std::uint64_t>(p->value.size());
    }
    metadata["tensors"] = std::move(directory);
    const std::string meta = metadata.dump();

    std::string out(kCheckpointMagic);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, meta.size());
    out += meta;
    out.reserve(out.size() + offset);
    for (const Parameter* p : tensors) {
        for (float v : p->value.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    if (bytes.size() < kCheckpointMagic.size() || bytes.substr(0, 8) != kCheckpointMagic) {
        throw BadMagicError("not a checkpoint: bad magic bytes");
    }
    if (bytes.size() < kHeaderSize) throw CorruptCheckpointError("checkpoint truncated inside header");
    const auto version = get_le<std::uint32_t>(bytes, 8);
    if (version != kCheckpointVersion) {
        throw UnsupportedVersionError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto meta_len = get_le<std::uint64_t>(bytes, 12);
    if (meta_len > bytes.size() - kHeaderSize) {
        throw CorruptCheckpointError("checkpoint truncated inside metadata");
    }
    Checkpoint ck;
    try {
        ck.metadata = json::parse(bytes.substr(kHeaderSize, meta_len));
    } catch (const json::exception& e) {
        throw CorruptCheckpointError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
    }
    const std::string_view payload = bytes.substr(kHeaderSize + meta_len);

    struct Entry {
        std::string name;
        std::uint64_t rows, cols, offset, length;
    };
    std::vector<Entry> entries;
    try {
        for (const auto& t : ck.metadata.at("tensors")) {
            Entry e{t.at("name").get<std::string>(), t.at("shape").at(0).get<std::uint64_t>(),
                    t.at("shape").at(1).get<std::uint64_t>(), t.at("offset").get<std::uint64_t>(), 0};
            if (t.at("shape").size() != 2) throw CorruptCheckpointError("tensor '" + e.name + "' is not 2-D");
            if (e.cols != 0 && e.rows > (UINT64_MAX / 4) / e.cols) {
                throw CorruptCheckpointError("tensor '" + e.name + "' size overflows");
            }
            e.length = 4 * e.rows * e.cols;
            entries.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw CorruptCheckpointError(std::string("bad tensor directory: ") + e.what());
    }

    // The directory may list tensors in any order, but sorted by offset they
    // must cover the payload exactly.
    std::vector<const Entry*> by_offset;
    for (const auto& e : entries) by_offset.push_back(&e);
    std::sort(by_offset.begin(), by_offset.end(),
              [](const Entry* a, const Entry* b) { return a->offset < b->offset; });
    std::uint64_t cursor = 0;
    for (const Entry* e : by_offset) {
        if (e->offset != cursor) {
            throw CorruptCheckpointError("tensor '" + e->name + "' offset " + std::to_string(e->offset) +
                                         " leaves a gap or overlap at byte " + std::to_string(cursor));
        }
        if (e->length > payload.size() || e->offset > payload.size() - e->length) {
            throw CorruptCheckpointError("tensor '" + e->name + "' runs past the end of the payload");
        }
        cursor += e->length;
    }
    if (cursor != payload.size()) {
        throw CorruptCheckpointError("payload has " + std::to_string(payload.size() - cursor) +
                                     " trailing bytes");
    }

    for (const auto& e : entries) {
        Matrix m(e.rows, e.cols);
        auto values = m.values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            values[i] = std::bit_cast<float>(get_le<std::uint32_t>(payload, e.offset + 4 * i));
        }
        if (!ck.tensors.emplace(e.name, std::move(m)).second) {
            throw CorruptCheckpointError("duplicate tensor '" + e.name + "'");
        }
    }
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const json& metadata,
                     std::span<const Parameter* const> tensors) {
    const std::string bytes = encode_checkpoint(metadata, tensors);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(data::read_file(path));
}

void restore_parameters(const Checkpoint& checkpoint, std::span<Parameter* const> params) {
    std::set<std::string> claimed;
    for (Parameter* p : params) {
        const auto it = checkpoint.tensors.find(p->name);
        if (it == checkpoint.tensors.end()) {
            throw TensorMismatchError("checkpoint has no tensor '" + p->name + "'");
        }
        if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
            throw TensorMismatchError("tensor '" + p->name + "' has shape " + it->second.shape_string() +
                                      " in the checkpoint but the model expects " +
                                      p->value.shape_string());
        }
        claimed.insert(p->name);
    }
    for (const auto& [name, m] : checkpoint.tensors) {
        if (!claimed.count(name)) throw TensorMismatchError("checkpoint tensor '" + name + "' is not used by the model");
    }
    // Only copy once everything checks out, so a failed restore leaves the
    // model untouched.
    for (Parameter* p : params) {
        p->value = checkpoint.tensors.at(p->name);
        p->zero_grad();
    }
}

}  // namespace cage::app
