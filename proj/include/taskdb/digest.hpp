#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace taskdb {

/// Streaming SHA-256. The catalog and the embedding cache both key content
/// by this digest.
class Sha256 {
 public:
  Sha256();

  void update(std::span<const std::uint8_t> bytes);
  void update(std::string_view text);

  /// Finalizes and returns the 32-byte digest; the object is then reset.
  std::array<std::uint8_t, 32> finish();

  static std::array<std::uint8_t, 32> of(std::span<const std::uint8_t> bytes);
  static std::string hex(std::span<const std::uint8_t> bytes);
  static std::string hex(std::string_view text);

 private:
  void process_block(const std::uint8_t* block);
  void reset();

  std::array<std::uint32_t, 8> state_;
  std::array<std::uint8_t, 64> buffer_;
  std::size_t buffered_ = 0;
  std::uint64_t total_ = 0;
};

std::string to_hex(std::span<const std::uint8_t> bytes);

}  // namespace taskdb
