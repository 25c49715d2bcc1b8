#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace hedgebench::io {

/// Shortest decimal that parses back to the same double (at most 17
/// significant digits).
std::string format_double(double value);

/// Strict parse of a whole token; throws Error(Parse) with `context`.
double parse_double(std::string_view token, const std::string& context);
long long parse_int(std::string_view token, const std::string& context);
std::uint64_t parse_u64(std::string_view token, const std::string& context);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

/// FNV-1a, 64 bit.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xCBF29CE484222325ULL);
std::string hex64(std::uint64_t value);

std::string read_file(const std::filesystem::path& path);

/// Writes `path.partial` through `writer`, then renames it onto `path`. A
/// failure inside the writer leaves the `.partial` file behind.
void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer);

/// Worker cap from HEDGEBENCH_THREADS, else hardware concurrency (>= 1).
unsigned worker_count();

}  // namespace hedgebench::io
