#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "bootleg/errors.hpp"

namespace bootleg {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open file: " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size)
{
    auto crc = ::crc32(0L, Z_NULL, 0);
    crc = ::crc32(crc, data, static_cast<uInt>(size));
    return static_cast<std::uint32_t>(crc);
}

/// Little-endian append-only byte buffer used by the persistence formats.
class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }

    void u16(std::uint16_t v)
    {
        for (int i = 0; i < 2; ++i) {
            bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }

    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i) {
            bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }

    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i) {
            bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }

    void raw(const void* data, std::size_t size)
    {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes_.insert(bytes_.end(), p, p + size);
    }

    void str(const std::string& s)
    {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader; throws LoadError on truncation.
class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size)
        : data_(data)
        , size_(size)
    {
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return size_ - pos_; }

    std::uint8_t u8() { return take(1)[0]; }

    std::uint16_t u16()
    {
        const auto* p = take(2);
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }

    std::uint32_t u32()
    {
        const auto* p = take(4);
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8)
            | (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }

    std::uint64_t u64()
    {
        std::uint64_t v = 0;
        const auto* p = take(8);
        for (int i = 7; i >= 0; --i) {
            v = (v << 8) | p[i];
        }
        return v;
    }

    std::string str()
    {
        const auto n = u32();
        const auto* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }

    const std::uint8_t* take(std::size_t n)
    {
        if (n > remaining()) {
            throw LoadError("truncated file: need " + std::to_string(n) + " bytes at offset "
                            + std::to_string(pos_) + ", have " + std::to_string(remaining()));
        }
        const auto* p = data_ + pos_;
        pos_ += n;
        return p;
    }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

/// Writes bytes to `path` atomically (temp file in the same directory,
/// then rename). A failure never leaves a partial artifact at the target
/// path.
inline void atomic_write(const std::filesystem::path& path, const void* data, std::size_t size)
{
    namespace fs = std::filesystem;
    fs::path dir = path.parent_path();
    if (dir.empty()) {
        dir = ".";
    }
    fs::path tmp = dir / (path.filename().string() + ".tmp." + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot open for writing: " + tmp.string());
        }
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw Error("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error("rename to " + path.string() + " failed: " + ec.message());
    }
}

inline void atomic_write_text(const std::filesystem::path& path, const std::string& text)
{
    atomic_write(path, text.data(), text.size());
}

/// atomic_write with a CRC32 trailer appended; pairs with
/// read_file_with_crc.
inline void atomic_write_with_crc(const std::filesystem::path& path,
                                  const std::vector<std::uint8_t>& payload)
{
    std::vector<std::uint8_t> bytes = payload;
    const std::uint32_t crc = crc32_of(payload.data(), payload.size());
    for (int i = 0; i < 4; ++i) {
        bytes.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
    }
    atomic_write(path, bytes.data(), bytes.size());
}

/// Reads a file written by atomic_write_with_crc, verifies the trailer and
/// returns the payload bytes.
inline std::vector<std::uint8_t> read_file_with_crc(const std::filesystem::path& path)
{
    auto bytes = read_file_bytes(path);
    if (bytes.size() < 4) {
        throw LoadError("file too short for checksum trailer: " + path.string());
    }
    const std::size_t payload_size = bytes.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 3; i >= 0; --i) {
        stored = (stored << 8) | bytes[payload_size + static_cast<std::size_t>(i)];
    }
    const std::uint32_t actual = crc32_of(bytes.data(), payload_size);
    if (stored != actual) {
        throw LoadError("checksum failure in " + path.string());
    }
    bytes.resize(payload_size);
    return bytes;
}

} // namespace bootleg
