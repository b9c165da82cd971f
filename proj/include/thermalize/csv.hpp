#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>

#include "thermalize/errors.hpp"

namespace thermalize {

/// Shortest decimal form that round-trips to the same IEEE-754 double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {
inline void append_cell(std::string& out, double v) { out += format_double(v); }
inline void append_cell(std::string& out, int v) { out += std::to_string(v); }
inline void append_cell(std::string& out, long v) { out += std::to_string(v); }
inline void append_cell(std::string& out, long long v) { out += std::to_string(v); }
inline void append_cell(std::string& out, unsigned v) { out += std::to_string(v); }
inline void append_cell(std::string& out, unsigned long v) { out += std::to_string(v); }
inline void append_cell(std::string& out, unsigned long long v) { out += std::to_string(v); }
inline void append_cell(std::string& out, const std::string& v) { out += v; }
inline void append_cell(std::string& out, const char* v) { out += v; }
}  // namespace detail

/// In-memory CSV builder. Content is assembled first and written in one go,
/// so a failed run leaves no partial file behind.
class Csv {
 public:
  explicit Csv(const std::string& header) { buf_ = header + "\n"; }

  template <class T, class... Ts>
  void row(const T& first, const Ts&... rest) {
    detail::append_cell(buf_, first);
    ((buf_ += ',', detail::append_cell(buf_, rest)), ...);
    buf_ += '\n';
  }

  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw error("cannot open for writing: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw error("write failed: " + path.string());
}

}  // namespace thermalize
