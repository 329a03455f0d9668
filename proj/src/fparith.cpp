/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#include "sasp/fparith.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <string>

#include "sasp/errors.hpp"

namespace sasp::fparith {

namespace {

constexpr std::uint32_t kSignMask = 0x80000000u;
constexpr std::uint32_t kExpMask = 0x7F800000u;
constexpr std::uint32_t kFracMask = 0x007FFFFFu;

std::atomic<std::uint64_t> g_overflow_count{0};

void check_operand(std::uint32_t bits, const char* what) {
  const std::uint32_t exp = (bits & kExpMask) >> 23;
  const std::uint32_t frac = bits & kFracMask;
  if (exp == 0xFF) {
    throw ValueError(std::string(what) +
                     (frac ? " is NaN" : " is infinite"));
  }
  if (exp == 0 && frac != 0) {
    throw ValueError(std::string(what) + " is subnormal");
  }
}

}  // namespace

Fp32Parts decompose(float x) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
  check_operand(bits, "decompose operand");
  return Fp32Parts{(bits & kSignMask) != 0, (bits & kExpMask) >> 23,
                   bits & kFracMask};
}

float recompose(const Fp32Parts& parts) {
  const std::uint32_t bits = (parts.negative ? kSignMask : 0u) |
                             ((parts.exponent & 0xFFu) << 23) |
                             (parts.mantissa & kFracMask);
  return std::bit_cast<float>(bits);
}

Int8SM Int8SM::from_parts(bool negative, unsigned magnitude) {
  if (magnitude > 127) {
    throw ValueError("int8 magnitude " + std::to_string(magnitude) +
                     " exceeds 127");
  }
  Int8SM v;
  if (magnitude != 0) {
    v.bits_ = static_cast<std::uint8_t>((negative ? 0x80u : 0u) | magnitude);
  }
  return v;
}

Int8SM Int8SM::from_byte(std::uint8_t raw) {
  Int8SM v;
  v.bits_ = (raw & 0x7Fu) == 0 ? 0 : raw;
  return v;
}

float hybrid_mul(float activation, Int8SM weight) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(activation);
  check_operand(bits, "hybrid_mul activation");

  // Zero bypass: the datapath is skipped via a dedicated mux and the
  // output is forced to +0.0.
  if ((bits & ~kSignMask) == 0 || weight.magnitude() == 0) {
    return 0.0f;
  }

  const std::uint32_t sign =
      ((bits >> 31) ^ (weight.negative() ? 1u : 0u)) & 1u;
  const std::uint32_t exponent = (bits & kExpMask) >> 23;

  // 24-bit mantissa with the implicit leading one made explicit, times a
  // 7-bit magnitude: at most 31 significant bits.
  const std::uint32_t product =
      ((1u << 23) | (bits & kFracMask)) * weight.magnitude();

  // Re-align the leading one to bit 23; low bits fall off (truncation,
  // never rounding). magnitude >= 1 guarantees shift in [0, 7].
  const int shift = std::bit_width(product) - 24;
  std::uint32_t out_mantissa = product >> shift;
  std::uint32_t out_exponent = exponent + static_cast<std::uint32_t>(shift);

  if (out_exponent > 254) {
    // Outside the modeled domain; clamp to the largest normal and flag.
    out_exponent = 254;
    out_mantissa = 0x00FFFFFFu;
    g_overflow_count.fetch_add(1, std::memory_order_relaxed);
  }

  return std::bit_cast<float>((sign << 31) | (out_exponent << 23) |
                              (out_mantissa & kFracMask));
}

std::uint64_t exponent_overflow_count() {
  return g_overflow_count.load(std::memory_order_relaxed);
}

void reset_exponent_overflow_count() {
  g_overflow_count.store(0, std::memory_order_relaxed);
}

QuantizedTensor quantize_weights(const Matrix<float>& weights) {
  float max_abs = 0.0f;
  for (std::size_t r = 0; r < weights.rows(); ++r) {
    for (std::size_t c = 0; c < weights.cols(); ++c) {
      const float v = weights(r, c);
      if (!std::isfinite(v)) {
        throw ValueError("non-finite weight at (" + std::to_string(r) + "," +
                         std::to_string(c) + ")");
      }
      max_abs = std::max(max_abs, std::fabs(v));
    }
  }

  const float scale = max_abs == 0.0f ? 1.0f : max_abs / 127.0f;
  Matrix<Int8SM> out(weights.rows(), weights.cols());
  for (std::size_t r = 0; r < weights.rows(); ++r) {
    for (std::size_t c = 0; c < weights.cols(); ++c) {
      const float v = weights(r, c);
      const float steps = std::round(std::fabs(v) / scale);
      const unsigned magnitude =
          steps >= 127.0f ? 127u : static_cast<unsigned>(steps);
      out(r, c) = Int8SM::from_parts(std::signbit(v), magnitude);
    }
  }
  return QuantizedTensor{std::move(out), QuantScale{scale}};
}

Matrix<float> dequantize(const Matrix<Int8SM>& values, QuantScale scale) {
  Matrix<float> out(values.rows(), values.cols());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.data()[i] = static_cast<float>(values.data()[i].to_int()) * scale.scale;
  }
  return out;
}

}  // namespace sasp::fparith
