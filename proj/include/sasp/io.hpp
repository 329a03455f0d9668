/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#ifndef SASP_IO_HPP_
#define SASP_IO_HPP_

#include <cstdint>
#include <string>

#include "sasp/fparith.hpp"
#include "sasp/matrix.hpp"
#include "sasp/pruner.hpp"

namespace sasp::io {

// Matrix container: "SASP" magic, version 0x01, dtype byte, u32 LE
// rows/cols, an f32 LE scale for INT8 payloads, then the row-major
// payload. FP32 elements are 4-byte LE bit patterns; INT8 elements are one
// byte with bit 7 = sign and bits 0-6 = magnitude.
inline constexpr char kMatrixMagic[4] = {'S', 'A', 'S', 'P'};
inline constexpr std::uint8_t kFormatVersion = 0x01;

enum class Dtype : std::uint8_t { kFp32 = 0x00, kInt8 = 0x01 };

struct LoadedMatrix {
  Dtype dtype = Dtype::kFp32;
  Matrix<float> fp32;             // filled when dtype == kFp32
  fparith::QuantizedTensor int8;  // filled when dtype == kInt8
};

void write_matrix(const std::string& path, const Matrix<float>& m);
void write_matrix(const std::string& path, const fparith::QuantizedTensor& t);

// Validates magic, version, dtype, scale and exact payload length;
// malformed files throw FormatError naming the path.
LoadedMatrix read_matrix(const std::string& path);

// Tile mask container: "SAMK" magic, version, u16 LE tile size, u32 LE
// grid dims, then an LSB-first row-major bitmap (bit 1 = keep) with zero
// pad bits.
inline constexpr char kMaskMagic[4] = {'S', 'A', 'M', 'K'};

void write_mask(const std::string& path, const pruner::TileMask& mask);

// The stored grid carries no matrix-shape padding; bind the result to a
// concrete shape before applying it.
pruner::TileMask read_mask(const std::string& path);

// Recomputes grid padding for a matrix shape; throws IntegrityError when
// the stored tiling does not fit that shape.
pruner::TileMask bind_mask(const pruner::TileMask& mask, std::size_t rows,
                           std::size_t cols);

}  // namespace sasp::io

#endif  // SASP_IO_HPP_
