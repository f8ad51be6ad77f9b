#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "taskdb/error.hpp"

namespace taskdb {

/// Shape-annotated flat tensor. All parameters and embeddings in the engine
/// travel as Mvec values: a dimension list plus a row-major 64-bit float
/// payload. Values are immutable after construction and safe to share
/// across threads.
class Mvec {
 public:
  Mvec() = default;
  Mvec(std::vector<std::uint64_t> shape, std::vector<double> data);

  static Mvec scalar(double value) { return Mvec({1}, {value}); }
  static Mvec zeros(std::vector<std::uint64_t> shape);

  const std::vector<std::uint64_t>& shape() const noexcept { return shape_; }
  const std::vector<double>& data() const noexcept { return data_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  /// Value at multi-dimensional coords via row-major strides.
  double at(std::span<const std::uint64_t> coords) const;
  double at(std::initializer_list<std::uint64_t> coords) const {
    return at(std::span<const std::uint64_t>(coords.begin(), coords.size()));
  }

  /// Same flat data under a new shape; element count must match.
  Mvec reshape(std::vector<std::uint64_t> new_shape) const;

  /// Bit-exact equality (NaN payloads included).
  bool bit_equal(const Mvec& other) const noexcept;

  std::vector<std::uint8_t> serialize() const;
  void serialize_into(std::vector<std::uint8_t>& out) const;

  /// Parses exactly one frame occupying the whole buffer.
  static Mvec deserialize(std::span<const std::uint8_t> bytes);
  /// Parses one frame starting at *offset, advancing it past the frame.
  static Mvec read_frame(std::span<const std::uint8_t> bytes, std::size_t* offset);

  std::size_t frame_size() const noexcept;

  std::string shape_string() const;

 private:
  std::vector<std::uint64_t> shape_;
  std::vector<double> data_;
};

/// Row-major strides: strides[i] = product of shape[i+1..]; last stride is 1.
std::vector<std::uint64_t> strides(std::span<const std::uint64_t> shape);

/// Checked element count; EmptyShape for rank 0, ShapeMismatch on zero dims
/// or overflow.
std::uint64_t shape_element_count(std::span<const std::uint64_t> shape);

}  // namespace taskdb
