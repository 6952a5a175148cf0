#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "ganpr/tensor.hpp"

namespace ganpr {

// Single-file archive: magic + version header, JSON metadata block, named
// float64 arrays with explicit shapes, CRC-32 trailer over the payload.
// Loads verify the checksum before handing anything back, so a corrupted or
// truncated file never yields partial state.
namespace archive {

constexpr char kMagic[8] = {'G', 'A', 'N', 'P', 'R', 'A', 'R', '1'};
constexpr uint32_t kVersion = 1;

namespace detail {

inline uint32_t crc32_update(uint32_t crc, const void* buf, size_t len) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int bit = 0; bit < 8; ++bit) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    const auto* p = static_cast<const unsigned char*>(buf);
    crc = ~crc;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
    return ~crc;
}

template <typename T>
void put(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const char* p = reinterpret_cast<const char*>(&v);
    out.append(p, sizeof(T));
}

class Cursor {
public:
    Cursor(const std::string& bytes, size_t offset) : bytes_(bytes), pos_(offset) {}

    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        check(pos_ + sizeof(T) <= bytes_.size(), "checkpoint: truncated file");
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_bytes(size_t n) {
        check(pos_ + n <= bytes_.size(), "checkpoint: truncated file");
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    size_t pos() const { return pos_; }

private:
    const std::string& bytes_;
    size_t pos_;
};

}  // namespace detail

class Writer {
public:
    void set_meta(const nlohmann::json& meta) { meta_ = meta; }

    void add_array(const std::string& name, const Tensor& t) {
        check(!names_.count(name), "checkpoint: duplicate array name '", name, "'");
        names_.insert({name, arrays_.size()});
        arrays_.push_back({name, t.shape(), t.values()});
    }

    // writes to a temp file first; the target only appears complete
    void write(const std::string& path) const {
        std::string payload;
        const std::string meta = meta_.dump();
        detail::put<uint64_t>(payload, meta.size());
        payload += meta;
        detail::put<uint32_t>(payload, static_cast<uint32_t>(arrays_.size()));
        for (const auto& a : arrays_) {
            detail::put<uint32_t>(payload, static_cast<uint32_t>(a.name.size()));
            payload += a.name;
            detail::put<uint8_t>(payload, 0);  // dtype: float64
            detail::put<uint32_t>(payload, static_cast<uint32_t>(a.shape.size()));
            for (int d : a.shape) detail::put<int32_t>(payload, d);
            const char* p = reinterpret_cast<const char*>(a.data.data());
            payload.append(p, a.data.size() * sizeof(double));
        }
        const uint32_t crc = detail::crc32_update(0, payload.data(), payload.size());

        const std::string tmp = path + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            check(out.good(), "checkpoint: cannot open '", tmp, "' for writing");
            out.write(kMagic, sizeof(kMagic));
            uint32_t ver = kVersion, reserved = 0;
            out.write(reinterpret_cast<const char*>(&ver), 4);
            out.write(reinterpret_cast<const char*>(&reserved), 4);
            out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
            out.write(reinterpret_cast<const char*>(&crc), 4);
            check(out.good(), "checkpoint: write to '", tmp, "' failed");
        }
        std::filesystem::rename(tmp, path);
    }

private:
    struct Entry {
        std::string name;
        std::vector<int> shape;
        std::vector<double> data;
    };
    std::vector<Entry> arrays_;
    std::map<std::string, size_t> names_;
    nlohmann::json meta_;
};

struct Contents {
    nlohmann::json meta;
    std::map<std::string, Tensor> arrays;

    const Tensor& array(const std::string& name) const {
        auto it = arrays.find(name);
        check(it != arrays.end(), "checkpoint: missing array '", name, "'");
        return it->second;
    }
};

inline Contents load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "checkpoint: cannot open '", path, "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    check(bytes.size() >= sizeof(kMagic) + 8 + 4, "checkpoint: truncated file '", path, "'");
    check(std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0,
          "checkpoint: '", path, "' is not a checkpoint archive (bad magic)");
    detail::Cursor cur(bytes, sizeof(kMagic));
    const auto version = cur.get<uint32_t>();
    check(version == kVersion, "checkpoint: version ", version, " unsupported (expected ",
          kVersion, ")");
    cur.get<uint32_t>();  // reserved

    const size_t payload_begin = cur.pos();
    check(bytes.size() >= payload_begin + 4, "checkpoint: truncated file");
    const size_t payload_len = bytes.size() - payload_begin - 4;
    uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    const uint32_t crc =
        detail::crc32_update(0, bytes.data() + payload_begin, payload_len);
    check(crc == stored_crc, "checkpoint: checksum mismatch in '", path,
          "' (file corrupted or truncated)");

    Contents c;
    const auto meta_len = cur.get<uint64_t>();
    const std::string meta_str = cur.get_bytes(meta_len);
    c.meta = nlohmann::json::parse(meta_str, nullptr, false);
    check(!c.meta.is_discarded(), "checkpoint: metadata block is not valid JSON");
    const auto count = cur.get<uint32_t>();
    for (uint32_t i = 0; i < count; ++i) {
        const auto name_len = cur.get<uint32_t>();
        const std::string name = cur.get_bytes(name_len);
        const auto dtype = cur.get<uint8_t>();
        check(dtype == 0, "checkpoint: array '", name, "' has unsupported dtype tag ",
              static_cast<int>(dtype));
        const auto ndim = cur.get<uint32_t>();
        std::vector<int> shape;
        for (uint32_t d = 0; d < ndim; ++d) shape.push_back(cur.get<int32_t>());
        const size_t numel = Tensor::numel_of(shape);
        std::vector<double> data(numel);
        const std::string raw = cur.get_bytes(numel * sizeof(double));
        std::memcpy(data.data(), raw.data(), raw.size());
        c.arrays.emplace(name, Tensor::from_values(shape, std::move(data)));
    }
    return c;
}

}  // namespace archive
}  // namespace ganpr
