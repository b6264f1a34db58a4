#include "leap/serialize.hpp"

#include <openssl/evp.h>

#include <cstring>

#include "leap/error.hpp"
#include "leap/io.hpp"

namespace leap {

namespace {
constexpr char kMagic[8] = {'L', 'E', 'A', 'P', 'B', 'N', 'D', 'L'};
constexpr std::size_t kDigestSize = 32;

std::string sha256_raw(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1 || len != kDigestSize)
    throw std::runtime_error("SHA-256 computation failed");
  return std::string(reinterpret_cast<const char*>(digest), len);
}
}  // namespace

void BinaryWriter::str(std::string_view s) {
  u64(s.size());
  raw(s.data(), s.size());
}

void BinaryWriter::f64s(const std::vector<double>& v) {
  u64(v.size());
  raw(v.data(), v.size() * sizeof(double));
}

void BinaryWriter::strs(const std::vector<std::string>& v) {
  u64(v.size());
  for (const auto& s : v) str(s);
}

void BinaryWriter::matrix(const Matrix& m) {
  u64(m.rows());
  u64(m.cols());
  raw(m.data(), m.size() * sizeof(double));
}

void BinaryReader::raw(void* p, std::size_t n) {
  if (n > data_.size() - pos_) throw ParseError("truncated binary payload");
  std::memcpy(p, data_.data() + pos_, n);
  pos_ += n;
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  raw(&v, sizeof v);
  return v;
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  raw(&v, sizeof v);
  return v;
}

double BinaryReader::f64() {
  double v;
  raw(&v, sizeof v);
  return v;
}

std::string BinaryReader::str() {
  const auto n = u64();
  if (n > data_.size() - pos_) throw ParseError("truncated string in binary payload");
  std::string s(data_.substr(pos_, n));
  pos_ += n;
  return s;
}

std::vector<double> BinaryReader::f64s() {
  const auto n = u64();
  if (n > (data_.size() - pos_) / sizeof(double)) throw ParseError("truncated vector in binary payload");
  std::vector<double> v(n);
  raw(v.data(), n * sizeof(double));
  return v;
}

std::vector<std::string> BinaryReader::strs() {
  const auto n = u64();
  std::vector<std::string> v;
  for (std::uint64_t i = 0; i < n; ++i) v.push_back(str());
  return v;
}

Matrix BinaryReader::matrix() {
  const auto rows = u64();
  const auto cols = u64();
  if (cols != 0 && rows > (data_.size() - pos_) / sizeof(double) / cols) throw ParseError("truncated matrix");
  std::vector<double> v(rows * cols);
  raw(v.data(), v.size() * sizeof(double));
  return Matrix(rows, cols, std::move(v));
}

void BinaryReader::expect_done(const char* what) const {
  if (!done()) throw ParseError(std::string("trailing bytes in ") + what);
}

std::string sha256_hex(std::string_view data) {
  static constexpr char hex[] = "0123456789abcdef";
  const auto raw = sha256_raw(data);
  std::string out;
  out.reserve(raw.size() * 2);
  for (unsigned char c : raw) {
    out += hex[c >> 4];
    out += hex[c & 0xf];
  }
  return out;
}

void Bundle::put(std::string name, std::string payload) {
  if (has(name)) throw ValidationError("duplicate bundle section: " + name);
  sections_.emplace_back(std::move(name), std::move(payload));
}

bool Bundle::has(const std::string& name) const {
  for (const auto& [n, p] : sections_)
    if (n == name) return true;
  return false;
}

const std::string& Bundle::get(const std::string& name) const {
  for (const auto& [n, p] : sections_)
    if (n == name) return p;
  throw ValidationError("bundle has no section: " + name);
}

std::string Bundle::encode() const {
  BinaryWriter w;
  std::string out(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.u64(sections_.size());
  for (const auto& [name, payload] : sections_) {
    w.str(name);
    w.str(payload);
  }
  out += w.bytes();
  out += sha256_raw(out);
  return out;
}

Bundle Bundle::decode(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic + kDigestSize || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw ValidationError("not a LEAP bundle");
  const auto body = bytes.substr(0, bytes.size() - kDigestSize);
  if (sha256_raw(body) != bytes.substr(bytes.size() - kDigestSize))
    throw ValidationError("bundle checksum mismatch; refusing to load");
  BinaryReader r(body.substr(sizeof kMagic));
  const auto version = r.u32();
  if (version != kVersion) throw ValidationError("unsupported bundle version " + std::to_string(version));
  Bundle b;
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    auto name = r.str();
    b.put(std::move(name), r.str());
  }
  r.expect_done("bundle");
  return b;
}

void Bundle::save(const std::filesystem::path& path) const { io::write_file(path, encode()); }

Bundle Bundle::load(const std::filesystem::path& path) { return decode(io::read_file(path)); }

}  // namespace leap
