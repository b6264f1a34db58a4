#pragma once

// Binary encoding helpers and the checksummed section container used for
// model bundles. Integers and doubles are stored in host (little-endian)
// byte order; doubles are stored bit-exactly.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "leap/matrix.hpp"

namespace leap {

class BinaryWriter {
 public:
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void boolean(bool v) { u32(v ? 1 : 0); }
  void str(std::string_view s);
  void f64s(const std::vector<double>& v);
  void strs(const std::vector<std::string>& v);
  // Shape header (rows, cols) followed by row-major values.
  void matrix(const Matrix& m);

  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::string_view data) : data_(data) {}

  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  bool boolean() { return u32() != 0; }
  std::string str();
  std::vector<double> f64s();
  std::vector<std::string> strs();
  Matrix matrix();

  bool done() const { return pos_ == data_.size(); }
  void expect_done(const char* what) const;

 private:
  void raw(void* p, std::size_t n);
  std::string_view data_;
  std::size_t pos_ = 0;
};

/// Hex-encoded SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// Ordered named sections with a trailing SHA-256 over everything before it.
class Bundle {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(std::string name, std::string payload);
  bool has(const std::string& name) const;
  const std::string& get(const std::string& name) const;
  const std::vector<std::pair<std::string, std::string>>& sections() const { return sections_; }

  std::string encode() const;
  // Throws ValidationError on a bad magic, version or checksum.
  static Bundle decode(std::string_view bytes);

  void save(const std::filesystem::path& path) const;
  static Bundle load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> sections_;
};

}  // namespace leap
