#pragma once

// Little-endian binary readers/writers plus a running FNV-1a checksum.
// All on-disk formats in this project append the 64-bit digest of every
// preceding byte, so truncation and bit rot are both detectable.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spindiff {

class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                             std::uint64_t seed = kFnvOffset) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64_str(const std::string& s,
                                 std::uint64_t seed = kFnvOffset) {
  return fnv1a64({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}, seed);
}

namespace detail {

template <class T>
inline T byteswap_if_be(T v) {
  static_assert(std::is_integral_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    return std::bit_cast<T>(bytes);
  }
  return v;
}

}  // namespace detail

// Writer that mirrors every byte into the checksum as it goes out.
class BinWriter {
public:
  explicit BinWriter(const std::string& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open for write: " + path);
  }

  void bytes(std::span<const std::uint8_t> b) {
    out_.write(reinterpret_cast<const char*>(b.data()),
               static_cast<std::streamsize>(b.size()));
    hash_ = fnv1a64(b, hash_);
  }

  template <class T>
  void u(T v) {
    static_assert(std::is_integral_v<T>);
    T le = detail::byteswap_if_be(v);
    std::array<std::uint8_t, sizeof(T)> raw = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(le);
    bytes(raw);
  }

  void f64(double v) { u(std::bit_cast<std::uint64_t>(v)); }

  void f64_span(std::span<const double> v) {
    for (double x : v) f64(x);
  }

  std::uint64_t digest() const { return hash_; }

  // Appends the running digest and closes; call exactly once.
  void finish() {
    std::uint64_t d = hash_;
    u(d);
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_);
    out_.close();
  }

private:
  std::string path_;
  std::ofstream out_;
  std::uint64_t hash_ = kFnvOffset;
};

class BinReader {
public:
  explicit BinReader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for read: " + path);
    in.seekg(0, std::ios::end);
    auto n = in.tellg();
    in.seekg(0, std::ios::beg);
    buf_.resize(static_cast<std::size_t>(n));
    in.read(reinterpret_cast<char*>(buf_.data()), n);
    if (!in) throw IoError("read failed: " + path);
  }

  void bytes(std::span<std::uint8_t> out) {
    if (pos_ + out.size() > buf_.size())
      throw IoError("truncated file: " + path_);
    std::memcpy(out.data(), buf_.data() + pos_, out.size());
    pos_ += out.size();
  }

  template <class T>
  T u() {
    static_assert(std::is_integral_v<T>);
    std::array<std::uint8_t, sizeof(T)> raw{};
    bytes(raw);
    return detail::byteswap_if_be(std::bit_cast<T>(raw));
  }

  double f64() { return std::bit_cast<double>(u<std::uint64_t>()); }

  void f64_span(std::span<double> out) {
    for (double& x : out) x = f64();
  }

  std::size_t pos() const { return pos_; }
  std::size_t size() const { return buf_.size(); }

  // Verifies the trailing digest covers exactly the bytes read so far.
  void finish() {
    std::uint64_t expect = fnv1a64({buf_.data(), pos_});
    std::uint64_t stored = u<std::uint64_t>();
    if (stored != expect) throw IoError("checksum mismatch: " + path_);
    if (pos_ != buf_.size()) throw IoError("trailing bytes: " + path_);
  }

private:
  std::string path_;
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace spindiff
