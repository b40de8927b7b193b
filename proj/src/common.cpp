#include "dislab/common.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>

namespace dislab {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::uint64_t parse_hex64(const std::string& s) {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        fail(ErrorCode::corrupt, "bad hex64 digest: '" + s + "'");
    return v;
}

void append_f64le(std::vector<unsigned char>& buf, const double* v, std::size_t n) {
    buf.reserve(buf.size() + 8 * n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(v[i]);
        for (int b = 0; b < 8; ++b)
            buf.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xff));
    }
}

static std::vector<unsigned char> read_all_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io, "cannot open for reading: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

static void write_all_bytes(const std::filesystem::path& path,
                            const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::io, "short write: " + path.string());
}

void write_f64le(const std::filesystem::path& path, const std::vector<double>& v) {
    std::vector<unsigned char> bytes;
    append_f64le(bytes, v.data(), v.size());
    write_all_bytes(path, bytes);
}

std::vector<double> read_f64le(const std::filesystem::path& path) {
    auto bytes = read_all_bytes(path);
    if (bytes.size() % 8 != 0)
        fail(ErrorCode::corrupt, "f64le file size not a multiple of 8: " + path.string());
    std::vector<double> v(bytes.size() / 8);
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(bytes[8 * i + b]) << (8 * b);
        v[i] = std::bit_cast<double>(bits);
    }
    return v;
}

void write_u32le(const std::filesystem::path& path, const std::vector<std::uint32_t>& v) {
    std::vector<unsigned char> bytes;
    bytes.reserve(4 * v.size());
    for (std::uint32_t x : v)
        for (int b = 0; b < 4; ++b)
            bytes.push_back(static_cast<unsigned char>((x >> (8 * b)) & 0xff));
    write_all_bytes(path, bytes);
}

std::vector<std::uint32_t> read_u32le(const std::filesystem::path& path) {
    auto bytes = read_all_bytes(path);
    if (bytes.size() % 4 != 0)
        fail(ErrorCode::corrupt, "u32le file size not a multiple of 4: " + path.string());
    std::vector<std::uint32_t> v(bytes.size() / 4);
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint32_t x = 0;
        for (int b = 0; b < 4; ++b)
            x |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
        v[i] = x;
    }
    return v;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io, "cannot open for reading: " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot open for writing: " + path.string());
    out << text;
    if (!out) fail(ErrorCode::io, "short write: " + path.string());
}

std::string format_double(double v) {
    // Shortest representation that round-trips exactly.
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace dislab
