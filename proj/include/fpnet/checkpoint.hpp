#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "fpnet/error.hpp"
#include "fpnet/tensor.hpp"

namespace fpnet::ckpt {

// Container layout (all integers little-endian):
//   magic "FPNETCKP" | u32 version | u64 meta_len | meta (UTF-8 JSON)
//   u64 tensor_count
//   per tensor: u32 name_len | name | u8 dtype | u32 rank | u64 dims[rank]
//               u64 payload_offset | u64 payload_bytes
//   u64 payload_len | payload | u32 crc32(payload)
// save(load(f)) reproduces f byte for byte.

inline constexpr char kMagic[8] = {'F', 'P', 'N', 'E', 'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written by memcpy and require a little-endian host");

template <typename T>
constexpr std::uint8_t dtype_code() {
    if constexpr (std::is_same_v<T, float>) return 1;
    else return 2;
}

inline std::string dtype_name(std::uint8_t code) { return code == 1 ? "f32" : "f64"; }

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> value;
};

template <typename T>
struct Checkpoint {
    std::string meta_json;
    std::vector<NamedTensor<T>> tensors;

    const Tensor<T>* find(const std::string& name) const {
        for (const auto& t : tensors) {
            if (t.name == name) return &t.value;
        }
        return nullptr;
    }
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

// Bounds-checked reader over the in-memory file image.
struct Cursor {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos = 0;
    std::string path;

    void need(std::size_t n) const {
        if (pos + n > size) throw FormatError(path + ": truncated checkpoint");
    }
    std::uint8_t u8() {
        need(1);
        return data[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[pos++]) << (8 * i);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(data + pos), n);
        pos += n;
        return s;
    }
};

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t len) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    while (len > 0) {
        const uInt chunk = static_cast<uInt>(std::min<std::size_t>(len, 1u << 30));
        crc = ::crc32(crc, data, chunk);
        data += chunk;
        len -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const std::string& meta_json,
                     const std::vector<NamedTensor<T>>& tensors) {
    std::vector<std::uint8_t> payload;
    std::vector<std::uint8_t> head;
    head.insert(head.end(), kMagic, kMagic + 8);
    detail::put_u32(head, kVersion);
    detail::put_u64(head, meta_json.size());
    head.insert(head.end(), meta_json.begin(), meta_json.end());
    detail::put_u64(head, tensors.size());
    for (const auto& nt : tensors) {
        if (!nt.value.defined()) throw ContractError("save_checkpoint: undefined tensor " + nt.name);
        detail::put_u32(head, static_cast<std::uint32_t>(nt.name.size()));
        head.insert(head.end(), nt.name.begin(), nt.name.end());
        head.push_back(dtype_code<T>());
        const Shape& shape = nt.value.shape();
        detail::put_u32(head, static_cast<std::uint32_t>(shape.rank()));
        for (index_t d : shape.dims()) detail::put_u64(head, static_cast<std::uint64_t>(d));
        const std::size_t nbytes = nt.value.data().size() * sizeof(T);
        detail::put_u64(head, payload.size());
        detail::put_u64(head, nbytes);
        const std::size_t at = payload.size();
        payload.resize(at + nbytes);
        std::memcpy(payload.data() + at, nt.value.data().data(), nbytes);
    }
    detail::put_u64(head, payload.size());

    const std::string tmp = path + ".tmp";
    {
        std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(tmp.c_str(), "wb"),
                                                          &std::fclose);
        if (!f) throw IoError("cannot write " + tmp);
        auto write_all = [&](const std::uint8_t* p, std::size_t n) {
            if (n > 0 && std::fwrite(p, 1, n, f.get()) != n) {
                throw IoError("short write to " + tmp);
            }
        };
        write_all(head.data(), head.size());
        write_all(payload.data(), payload.size());
        std::vector<std::uint8_t> tail;
        detail::put_u32(tail, detail::crc32_of(payload.data(), payload.size()));
        write_all(tail.data(), tail.size());
        if (std::fflush(f.get()) != 0) throw IoError("cannot flush " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
    std::vector<std::uint8_t> bytes;
    {
        std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.c_str(), "rb"),
                                                          &std::fclose);
        if (!f) throw IoError("cannot open " + path);
        std::error_code ec;
        const auto size = std::filesystem::file_size(path, ec);
        if (ec) throw IoError("cannot stat " + path + ": " + ec.message());
        bytes.resize(static_cast<std::size_t>(size));
        if (std::fread(bytes.data(), 1, bytes.size(), f.get()) != bytes.size()) {
            throw IoError("short read from " + path);
        }
    }
    detail::Cursor cur{bytes.data(), bytes.size(), 0, path};
    if (cur.str(8) != std::string(kMagic, 8)) {
        throw FormatError(path + ": not a checkpoint file (bad magic)");
    }
    const std::uint32_t version = cur.u32();
    if (version != kVersion) {
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version) +
                          " (this build reads version " + std::to_string(kVersion) + ")");
    }
    Checkpoint<T> out;
    out.meta_json = cur.str(cur.u64());

    struct Entry {
        std::string name;
        Shape shape;
        std::uint64_t offset, nbytes;
    };
    std::vector<Entry> entries;
    const std::uint64_t count = cur.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        Entry e;
        e.name = cur.str(cur.u32());
        const std::uint8_t dtype = cur.u8();
        if (dtype != dtype_code<T>()) {
            throw FormatError(path + ": tensor " + e.name + " is " + dtype_name(dtype) +
                              " but " + dtype_name(dtype_code<T>()) + " was requested");
        }
        const std::uint32_t rank = cur.u32();
        std::vector<index_t> dims;
        for (std::uint32_t d = 0; d < rank; ++d) dims.push_back(static_cast<index_t>(cur.u64()));
        e.shape = Shape(std::move(dims));
        e.offset = cur.u64();
        e.nbytes = cur.u64();
        if (e.nbytes != static_cast<std::uint64_t>(e.shape.numel()) * sizeof(T)) {
            throw FormatError(path + ": tensor " + e.name + " byte length does not match shape " +
                              e.shape.str());
        }
        entries.push_back(std::move(e));
    }
    const std::uint64_t payload_len = cur.u64();
    cur.need(payload_len);
    const std::uint8_t* payload = bytes.data() + cur.pos;
    cur.pos += payload_len;
    const std::uint32_t stored_crc = cur.u32();
    const std::uint32_t actual_crc = detail::crc32_of(payload, payload_len);
    if (stored_crc != actual_crc) {
        throw FormatError(path + ": payload checksum mismatch (file is corrupt)");
    }
    for (const auto& e : entries) {
        if (e.offset + e.nbytes > payload_len) {
            throw FormatError(path + ": tensor " + e.name + " extends past the payload");
        }
        std::vector<T> values(static_cast<std::size_t>(e.shape.numel()));
        std::memcpy(values.data(), payload + e.offset, e.nbytes);
        out.tensors.push_back({e.name, Tensor<T>::from_data(e.shape, std::move(values))});
    }
    return out;
}

// Reads only the meta JSON (to pick precision/model before typed loading).
inline std::string peek_meta(const std::string& path) {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.c_str(), "rb"),
                                                      &std::fclose);
    if (!f) throw IoError("cannot open " + path);
    std::uint8_t head[20];
    if (std::fread(head, 1, sizeof(head), f.get()) != sizeof(head)) {
        throw FormatError(path + ": truncated checkpoint");
    }
    if (std::memcmp(head, kMagic, 8) != 0) {
        throw FormatError(path + ": not a checkpoint file (bad magic)");
    }
    std::uint64_t meta_len = 0;
    for (int i = 0; i < 8; ++i) meta_len |= static_cast<std::uint64_t>(head[12 + i]) << (8 * i);
    std::string meta(meta_len, '\0');
    if (std::fread(meta.data(), 1, meta_len, f.get()) != meta_len) {
        throw FormatError(path + ": truncated checkpoint meta");
    }
    return meta;
}

}  // namespace fpnet::ckpt
