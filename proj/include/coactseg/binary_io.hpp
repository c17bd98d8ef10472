#pragma once

// Little-endian primitive encoding shared by the volume and checkpoint files.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace coact {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void text(std::string_view s);
  void f64s(std::span<const double> values);

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  /// Writes the buffer to `path`, replacing any existing file.
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> data, std::string origin = {})
      : data_(std::move(data)), origin_(std::move(origin)) {}
  static ByteReader open(const std::filesystem::path& path);

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string text(std::size_t n);
  void f64s(std::span<double> out);
  std::span<const std::uint8_t> bytes(std::size_t n);

  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& origin() const { return origin_; }
  [[noreturn]] void fail(const std::string& what) const;

 private:
  void need(std::size_t n);
  std::vector<std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string origin_;
};

}  // namespace coact
