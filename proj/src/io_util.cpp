#include "hedgebench/io_util.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "hedgebench/error.hpp"

namespace hedgebench::io {

std::string format_double(double value) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

double parse_double(std::string_view token, const std::string& context) {
  token = trim(token);
  double value = 0.0;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, value);
  if (token.empty() || res.ec != std::errc() || res.ptr != last) {
    fail(ErrorKind::Parse, context + ": expected a number, got '" + std::string(token) + "'");
  }
  return value;
}

long long parse_int(std::string_view token, const std::string& context) {
  token = trim(token);
  long long value = 0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (token.empty() || res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    fail(ErrorKind::Parse, context + ": expected an integer, got '" + std::string(token) + "'");
  }
  return value;
}

std::uint64_t parse_u64(std::string_view token, const std::string& context) {
  token = trim(token);
  std::uint64_t value = 0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (token.empty() || res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    fail(ErrorKind::Parse,
         context + ": expected a non-negative integer, got '" + std::string(token) + "'");
  }
  return value;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state) {
  for (const unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001B3ULL;
  }
  return state;
}

std::string hex64(std::uint64_t value) {
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(value));
  return std::string(buf.data(), 16);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer) {
  auto partial = path;
  partial += ".partial";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open '" + partial.string() + "' for writing");
    writer(out);
    out.flush();
    if (!out) fail(ErrorKind::Io, "write failed for '" + partial.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(partial, path, ec);
  if (ec) fail(ErrorKind::Io, "cannot rename '" + partial.string() + "': " + ec.message());
}

unsigned worker_count() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("HEDGEBENCH_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) return std::min(hw, static_cast<unsigned>(cap));
  }
  return hw;
}

}  // namespace hedgebench::io
