#ifndef DISLAB_COMMON_HPP
#define DISLAB_COMMON_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace dislab {

enum class ErrorCode {
    invalid_argument,
    shape_mismatch,
    io,
    corrupt,
    numeric,
    unsupported,
    internal,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
    throw Error(code, msg);
}

// 64-bit FNV-1a. Used for content digests of datasets and checkpoints;
// an integrity check, not a cryptographic hash.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v);
std::uint64_t parse_hex64(const std::string& s);

// Little-endian binary file helpers (explicit byte order, independent of host).
void write_f64le(const std::filesystem::path& path, const std::vector<double>& v);
std::vector<double> read_f64le(const std::filesystem::path& path);
void write_u32le(const std::filesystem::path& path, const std::vector<std::uint32_t>& v);
std::vector<std::uint32_t> read_u32le(const std::filesystem::path& path);

void append_f64le(std::vector<unsigned char>& buf, const double* v, std::size_t n);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

std::string format_double(double v);  // shortest round-trip decimal form

} // namespace dislab

#endif
