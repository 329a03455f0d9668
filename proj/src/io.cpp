/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#include "sasp/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "sasp/errors.hpp"

namespace sasp::io {

namespace {

constexpr std::uint64_t kMaxElements = 1ull << 28;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

class Reader {
 public:
  Reader(std::vector<std::uint8_t> bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }

  std::uint16_t u16() {
    need(2);
    const std::uint16_t v = static_cast<std::uint16_t>(
        bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4);
    const std::uint32_t v = static_cast<std::uint32_t>(bytes_[pos_]) |
                            (static_cast<std::uint32_t>(bytes_[pos_ + 1]) << 8) |
                            (static_cast<std::uint32_t>(bytes_[pos_ + 2]) << 16) |
                            (static_cast<std::uint32_t>(bytes_[pos_ + 3]) << 24);
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  const std::uint8_t* raw(std::uint64_t n) {
    need(n);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint64_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path_ + ": " + what);
  }

 private:
  void need(std::uint64_t n) {
    if (bytes_.size() - pos_ < n) fail("truncated file");
  }

  std::vector<std::uint8_t> bytes_;
  std::string path_;
  std::uint64_t pos_ = 0;
};

Reader open_reader(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open for reading");
  std::vector<std::uint8_t> bytes(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw FormatError(path + ": read failed");
  return Reader(std::move(bytes), path);
}

void write_bytes(const std::string& path,
                 const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(path + ": write failed");
}

void check_dims_for_store(std::size_t rows, std::size_t cols) {
  if (rows > 0xFFFFFFFFull || cols > 0xFFFFFFFFull ||
      static_cast<std::uint64_t>(rows) * cols > kMaxElements) {
    throw FormatError("matrix too large for the file format");
  }
}

std::vector<std::uint8_t> matrix_header(Dtype dtype, std::size_t rows,
                                        std::size_t cols) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMatrixMagic, kMatrixMagic + 4);
  out.push_back(kFormatVersion);
  out.push_back(static_cast<std::uint8_t>(dtype));
  put_u32(out, static_cast<std::uint32_t>(rows));
  put_u32(out, static_cast<std::uint32_t>(cols));
  return out;
}

}  // namespace

void write_matrix(const std::string& path, const Matrix<float>& m) {
  check_dims_for_store(m.rows(), m.cols());
  std::vector<std::uint8_t> out = matrix_header(Dtype::kFp32, m.rows(),
                                                m.cols());
  out.reserve(out.size() + m.rows() * m.cols() * 4);
  for (const float v : m) put_u32(out, std::bit_cast<std::uint32_t>(v));
  write_bytes(path, out);
}

void write_matrix(const std::string& path,
                  const fparith::QuantizedTensor& t) {
  check_dims_for_store(t.values.rows(), t.values.cols());
  std::vector<std::uint8_t> out = matrix_header(Dtype::kInt8, t.values.rows(),
                                                t.values.cols());
  put_u32(out, std::bit_cast<std::uint32_t>(t.scale.scale));
  out.reserve(out.size() + t.values.rows() * t.values.cols());
  for (const fparith::Int8SM v : t.values) out.push_back(v.to_byte());
  write_bytes(path, out);
}

LoadedMatrix read_matrix(const std::string& path) {
  Reader r = open_reader(path);
  if (std::memcmp(r.raw(4), kMatrixMagic, 4) != 0) r.fail("bad magic");
  if (r.u8() != kFormatVersion) r.fail("unsupported version");
  const std::uint8_t dtype = r.u8();
  if (dtype != static_cast<std::uint8_t>(Dtype::kFp32) &&
      dtype != static_cast<std::uint8_t>(Dtype::kInt8)) {
    r.fail("unknown dtype");
  }
  const std::uint64_t rows = r.u32();
  const std::uint64_t cols = r.u32();
  if (rows * cols > kMaxElements) r.fail("element count exceeds limit");
  const std::uint64_t count = rows * cols;

  LoadedMatrix out;
  if (dtype == static_cast<std::uint8_t>(Dtype::kFp32)) {
    out.dtype = Dtype::kFp32;
    if (r.remaining() != count * 4) r.fail("payload length mismatch");
    std::vector<float> data(count);
    const std::uint8_t* p = r.raw(count * 4);
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint32_t bits =
          static_cast<std::uint32_t>(p[i * 4]) |
          (static_cast<std::uint32_t>(p[i * 4 + 1]) << 8) |
          (static_cast<std::uint32_t>(p[i * 4 + 2]) << 16) |
          (static_cast<std::uint32_t>(p[i * 4 + 3]) << 24);
      data[i] = std::bit_cast<float>(bits);
    }
    out.fp32 = Matrix<float>(rows, cols, std::move(data));
  } else {
    out.dtype = Dtype::kInt8;
    const float scale = r.f32();
    if (!std::isfinite(scale) || scale <= 0.0f) r.fail("invalid scale");
    if (r.remaining() != count) r.fail("payload length mismatch");
    std::vector<fparith::Int8SM> data(count);
    const std::uint8_t* p = r.raw(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      data[i] = fparith::Int8SM::from_byte(p[i]);
    }
    out.int8.values = Matrix<fparith::Int8SM>(rows, cols, std::move(data));
    out.int8.scale.scale = scale;
  }
  return out;
}

void write_mask(const std::string& path, const pruner::TileMask& mask) {
  const pruner::TileGrid& g = mask.grid;
  if (g.tile_size == 0 || g.tile_size > 0xFFFF) {
    throw FormatError("tile size out of range for the mask format");
  }
  check_dims_for_store(g.grid_rows, g.grid_cols);
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMaskMagic, kMaskMagic + 4);
  out.push_back(kFormatVersion);
  put_u16(out, static_cast<std::uint16_t>(g.tile_size));
  put_u32(out, static_cast<std::uint32_t>(g.grid_rows));
  put_u32(out, static_cast<std::uint32_t>(g.grid_cols));
  const std::size_t bits = g.grid_rows * g.grid_cols;
  std::vector<std::uint8_t> bitmap((bits + 7) / 8, 0);
  for (std::size_t b = 0; b < bits; ++b) {
    if (mask.keep[b] != 0) bitmap[b / 8] |= static_cast<std::uint8_t>(1u << (b % 8));
  }
  out.insert(out.end(), bitmap.begin(), bitmap.end());
  write_bytes(path, out);
}

pruner::TileMask read_mask(const std::string& path) {
  Reader r = open_reader(path);
  if (std::memcmp(r.raw(4), kMaskMagic, 4) != 0) r.fail("bad magic");
  if (r.u8() != kFormatVersion) r.fail("unsupported version");
  const std::uint16_t tile = r.u16();
  if (tile == 0) r.fail("zero tile size");
  const std::uint64_t grid_rows = r.u32();
  const std::uint64_t grid_cols = r.u32();
  if (grid_rows * grid_cols > kMaxElements) r.fail("grid exceeds limit");
  const std::uint64_t bits = grid_rows * grid_cols;
  const std::uint64_t bytes = (bits + 7) / 8;
  if (r.remaining() != bytes) r.fail("bitmap length mismatch");
  const std::uint8_t* p = r.raw(bytes);
  pruner::TileMask mask;
  mask.grid.tile_size = tile;
  mask.grid.grid_rows = grid_rows;
  mask.grid.grid_cols = grid_cols;
  mask.keep.resize(bits);
  for (std::uint64_t b = 0; b < bits; ++b) {
    mask.keep[b] = (p[b / 8] >> (b % 8)) & 1u;
  }
  for (std::uint64_t b = bits; b < bytes * 8; ++b) {
    if ((p[b / 8] >> (b % 8)) & 1u) r.fail("nonzero bitmap pad bits");
  }
  return mask;
}

pruner::TileMask bind_mask(const pruner::TileMask& mask, std::size_t rows,
                           std::size_t cols) {
  const pruner::TileGrid grid =
      pruner::TileGrid::for_shape(rows, cols, mask.grid.tile_size);
  if (grid.grid_rows != mask.grid.grid_rows ||
      grid.grid_cols != mask.grid.grid_cols) {
    throw IntegrityError("mask tiling does not fit the matrix shape");
  }
  pruner::TileMask bound = mask;
  bound.grid = grid;
  return bound;
}

}  // namespace sasp::io
