#pragma once

// Checkpoint container: magic "BGCK1", one version byte, a length-prefixed
// UTF-8 JSON meta document (config echo, normalization statistics, best
// validation metric, epoch), then per-record name (length-prefixed UTF-8),
// rank, extents (u32le), and values (f32le). Values are stored as 32-bit
// floats; load(save(x)) reproduces them bit-identically.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace bgslf {

struct CheckpointRecord {
    std::string name;
    std::vector<int64_t> shape;
    std::vector<float> values;
};

struct Checkpoint {
    uint8_t version = 1;
    nlohmann::json meta;  // {"config": {...}, "normalization": {...}, "best_valid_mae": x, "epoch": e}
    std::vector<CheckpointRecord> records;

    const CheckpointRecord& record(const std::string& name) const {
        for (const auto& r : records)
            if (r.name == name) return r;
        throw std::runtime_error("checkpoint: missing record '" + name + "'");
    }
    bool has_record(const std::string& name) const {
        for (const auto& r : records)
            if (r.name == name) return true;
        return false;
    }
};

namespace detail {
inline void write_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
inline uint32_t read_u32(std::istream& in) {
    uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 4)) throw std::runtime_error("checkpoint: truncated file");
    return v;
}
}  // namespace detail

// Atomic write: temp file in place, then rename.
inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp);
        out.write("BGCK1", 5);
        out.put(static_cast<char>(ck.version));
        const std::string meta = ck.meta.dump();
        detail::write_u32(out, static_cast<uint32_t>(meta.size()));
        out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
        detail::write_u32(out, static_cast<uint32_t>(ck.records.size()));
        for (const auto& r : ck.records) {
            detail::write_u32(out, static_cast<uint32_t>(r.name.size()));
            out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
            detail::write_u32(out, static_cast<uint32_t>(r.shape.size()));
            for (int64_t e : r.shape) detail::write_u32(out, static_cast<uint32_t>(e));
            out.write(reinterpret_cast<const char*>(r.values.data()),
                      static_cast<std::streamsize>(r.values.size() * sizeof(float)));
        }
        if (!out) throw std::runtime_error("checkpoint: write failure on " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("checkpoint: cannot rename " + tmp + " to " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[5];
    if (!in.read(magic, 5) || std::memcmp(magic, "BGCK1", 5) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    Checkpoint ck;
    ck.version = static_cast<uint8_t>(in.get());
    if (ck.version != 1) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(ck.version));
    const uint32_t meta_len = detail::read_u32(in);
    std::string meta(meta_len, '\0');
    if (!in.read(meta.data(), meta_len)) throw std::runtime_error("checkpoint: truncated meta in " + path);
    ck.meta = nlohmann::json::parse(meta);
    const uint32_t n_records = detail::read_u32(in);
    for (uint32_t i = 0; i < n_records; ++i) {
        CheckpointRecord r;
        const uint32_t name_len = detail::read_u32(in);
        r.name.resize(name_len);
        if (!in.read(r.name.data(), name_len)) throw std::runtime_error("checkpoint: truncated record name");
        const uint32_t rank = detail::read_u32(in);
        int64_t numel = 1;
        for (uint32_t k = 0; k < rank; ++k) {
            r.shape.push_back(static_cast<int64_t>(detail::read_u32(in)));
            numel *= r.shape.back();
        }
        r.values.resize(static_cast<size_t>(numel));
        if (!in.read(reinterpret_cast<char*>(r.values.data()),
                     static_cast<std::streamsize>(r.values.size() * sizeof(float))))
            throw std::runtime_error("checkpoint: truncated values for record '" + r.name + "'");
        ck.records.push_back(std::move(r));
    }
    return ck;
}

}  // namespace bgslf
