/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#ifndef SASP_FPARITH_HPP_
#define SASP_FPARITH_HPP_

#include <cstdint>
#include <utility>

#include "sasp/matrix.hpp"

namespace sasp::fparith {

// IEEE-754 binary32 fields. Only normals and signed zeros are admissible as
// array operands; NaNs, infinities and subnormals are rejected at module
// boundaries.
struct Fp32Parts {
  bool negative = false;
  std::uint32_t exponent = 0;  // biased, 8 bits
  std::uint32_t mantissa = 0;  // fraction, 23 bits

  friend bool operator==(const Fp32Parts&, const Fp32Parts&) = default;
};

// Splits a finite normal or signed-zero float into its bit fields.
// Throws ValueError for NaN, infinity and subnormal inputs.
Fp32Parts decompose(float x);

// Inverse of decompose; reproduces the exact bit pattern.
float recompose(const Fp32Parts& parts);

// Sign-magnitude 8-bit weight: 1 sign bit, 7 magnitude bits. Zero is
// canonical (sign bit cleared whenever the magnitude is zero).
class Int8SM {
 public:
  Int8SM() = default;

  // Builds from separate fields. Throws ValueError if magnitude > 127.
  static Int8SM from_parts(bool negative, unsigned magnitude);

  // Builds from a raw storage byte (bit 7 = sign, bits 0-6 = magnitude),
  // normalizing negative zero to the canonical encoding.
  static Int8SM from_byte(std::uint8_t raw);

  bool negative() const { return (bits_ & 0x80u) != 0; }
  std::uint8_t magnitude() const { return bits_ & 0x7Fu; }
  std::uint8_t to_byte() const { return bits_; }
  int to_int() const {
    return negative() ? -static_cast<int>(magnitude())
                      : static_cast<int>(magnitude());
  }

  friend bool operator==(Int8SM, Int8SM) = default;

 private:
  std::uint8_t bits_ = 0;
};

// Per-tensor dequantization step size (weight value per integer step).
struct QuantScale {
  float scale = 1.0f;

  friend bool operator==(QuantScale, QuantScale) = default;
};

// Multiplies an FP32 activation by a sign-magnitude INT8 weight the way the
// hardware datapath does: XOR the signs, extend the mantissa with the
// implicit leading one, multiply by the weight magnitude, right-shift to
// re-align the leading one, truncate to 23 bits and bump the exponent by the
// shift count. Zero operands bypass the datapath and return +0.0.
// Activation must be normal or +-0; NaN/infinity/subnormal throw ValueError.
// Exponent overflow past 254 clamps to the largest normal and bumps
// exponent_overflow_count() (the case is excluded from the model's domain).
float hybrid_mul(float activation, Int8SM weight);

// Number of hybrid_mul calls that clamped an overflowing exponent since
// start or the last reset. Range-limited workloads keep this at zero.
std::uint64_t exponent_overflow_count();
void reset_exponent_overflow_count();

struct QuantizedTensor {
  Matrix<Int8SM> values;
  QuantScale scale;
};

// Per-tensor symmetric quantization: scale = max|w| / 127, magnitudes
// rounded half away from zero and clamped to [0, 127]. An all-zero tensor
// gets scale 1.0. Non-finite elements throw ValueError naming the index.
QuantizedTensor quantize_weights(const Matrix<float>& weights);

// Element-wise (-1)^sign * magnitude * scale. Host-side only: reports and
// oracles, never the simulated datapath.
Matrix<float> dequantize(const Matrix<Int8SM>& values, QuantScale scale);

}  // namespace sasp::fparith

#endif  // SASP_FPARITH_HPP_
