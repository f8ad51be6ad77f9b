#include "taskdb/mvec.hpp"

#include <cstring>
#include <limits>
#include <sstream>

namespace taskdb {

namespace {

constexpr char kMagic[4] = {'M', 'V', 'E', 'C'};
constexpr std::uint8_t kFormatVersion = 1;
// Frames larger than this are rejected before allocation.
constexpr std::uint64_t kMaxElements = std::uint64_t(1) << 40;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[off + i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[off + i]) << (8 * i);
  return v;
}

}  // namespace

std::uint64_t shape_element_count(std::span<const std::uint64_t> shape) {
  if (shape.empty()) raise(ErrorCode::EmptyShape, "shape has zero dimensions");
  std::uint64_t count = 1;
  for (std::uint64_t dim : shape) {
    if (dim == 0) raise(ErrorCode::ShapeMismatch, "dimension of size zero");
    if (count > kMaxElements / dim)
      raise(ErrorCode::ShapeMismatch, "element count overflow");
    count *= dim;
  }
  return count;
}

std::vector<std::uint64_t> strides(std::span<const std::uint64_t> shape) {
  shape_element_count(shape);  // validates
  std::vector<std::uint64_t> s(shape.size());
  std::uint64_t acc = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    s[i] = acc;
    acc *= shape[i];
  }
  return s;
}

Mvec::Mvec(std::vector<std::uint64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  std::uint64_t expected = shape_element_count(shape_);
  if (expected != data_.size()) {
    std::ostringstream msg;
    msg << "shape wants " << expected << " elements, data has " << data_.size();
    raise(ErrorCode::ShapeMismatch, msg.str());
  }
}

Mvec Mvec::zeros(std::vector<std::uint64_t> shape) {
  std::uint64_t n = shape_element_count(shape);
  return Mvec(std::move(shape), std::vector<double>(n, 0.0));
}

double Mvec::at(std::span<const std::uint64_t> coords) const {
  if (coords.size() != shape_.size())
    raise(ErrorCode::RankMismatch, "expected " + std::to_string(shape_.size()) +
                                       " coords, got " + std::to_string(coords.size()));
  std::uint64_t flat = 0;
  std::uint64_t stride = 1;
  for (std::size_t i = shape_.size(); i-- > 0;) {
    if (coords[i] >= shape_[i])
      raise(ErrorCode::OutOfBounds, "coord " + std::to_string(coords[i]) +
                                        " exceeds dim " + std::to_string(shape_[i]) +
                                        " at axis " + std::to_string(i));
    flat += coords[i] * stride;
    stride *= shape_[i];
  }
  return data_[flat];
}

Mvec Mvec::reshape(std::vector<std::uint64_t> new_shape) const {
  std::uint64_t expected = shape_element_count(new_shape);
  if (expected != data_.size())
    raise(ErrorCode::ShapeMismatch,
          "reshape to " + std::to_string(expected) + " elements from " +
              std::to_string(data_.size()));
  return Mvec(std::move(new_shape), data_);
}

bool Mvec::bit_equal(const Mvec& other) const noexcept {
  if (shape_ != other.shape_) return false;
  if (data_.size() != other.data_.size()) return false;
  return data_.empty() ||
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

std::size_t Mvec::frame_size() const noexcept {
  return 4 + 1 + 4 + 8 * shape_.size() + 8 * data_.size();
}

void Mvec::serialize_into(std::vector<std::uint8_t>& out) const {
  out.reserve(out.size() + frame_size());
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kFormatVersion);
  put_u32(out, std::uint32_t(shape_.size()));
  for (std::uint64_t dim : shape_) put_u64(out, dim);
  for (double v : data_) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
  }
}

std::vector<std::uint8_t> Mvec::serialize() const {
  std::vector<std::uint8_t> out;
  serialize_into(out);
  return out;
}

Mvec Mvec::read_frame(std::span<const std::uint8_t> bytes, std::size_t* offset) {
  std::size_t off = *offset;
  auto need = [&](std::size_t n) {
    if (bytes.size() - off < n) raise(ErrorCode::CorruptFrame, "truncated frame");
  };
  need(4 + 1 + 4);
  if (std::memcmp(bytes.data() + off, kMagic, 4) != 0)
    raise(ErrorCode::CorruptFrame, "bad magic");
  off += 4;
  std::uint8_t version = bytes[off++];
  if (version != kFormatVersion)
    raise(ErrorCode::CorruptFrame, "unsupported format version " + std::to_string(version));
  std::uint32_t rank = get_u32(bytes, off);
  off += 4;
  if (rank == 0) raise(ErrorCode::CorruptFrame, "frame declares rank 0");
  need(std::size_t(rank) * 8);
  std::vector<std::uint64_t> shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = get_u64(bytes, off);
    off += 8;
  }
  std::uint64_t count = 1;
  for (std::uint64_t dim : shape) {
    if (dim == 0 || count > kMaxElements / dim)
      raise(ErrorCode::CorruptFrame, "invalid dimensions");
    count *= dim;
  }
  need(count * 8);
  std::vector<double> data(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t bits = get_u64(bytes, off);
    off += 8;
    std::memcpy(&data[i], &bits, 8);
  }
  *offset = off;
  return Mvec(std::move(shape), std::move(data));
}

Mvec Mvec::deserialize(std::span<const std::uint8_t> bytes) {
  std::size_t offset = 0;
  Mvec t = read_frame(bytes, &offset);
  if (offset != bytes.size())
    raise(ErrorCode::CorruptFrame, std::to_string(bytes.size() - offset) +
                                       " trailing bytes after frame");
  return t;
}

std::string Mvec::shape_string() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) out << 'x';
    out << shape_[i];
  }
  out << ']';
  return out.str();
}

}  // namespace taskdb
