/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "sasp/errors.hpp"
#include "sasp/fparith.hpp"

using sasp::Matrix;
using sasp::ValueError;
using namespace sasp::fparith;

namespace {

std::uint32_t bits_of(float x) { return std::bit_cast<std::uint32_t>(x); }
float float_of(std::uint32_t b) { return std::bit_cast<float>(b); }

}  // namespace

TEST_CASE("decompose and recompose round-trip normals and zeros") {
  const std::vector<float> samples = {
      0.0f,
      -0.0f,
      1.0f,
      -1.0f,
      0.15625f,
      3.0f,
      std::numeric_limits<float>::min(),
      -std::numeric_limits<float>::min(),
      std::numeric_limits<float>::max(),
      -std::numeric_limits<float>::max(),
      1.9999998f,
      -123456.78f,
  };
  for (float x : samples) {
    const Fp32Parts p = decompose(x);
    CHECK(bits_of(recompose(p)) == bits_of(x));
  }

  const Fp32Parts one = decompose(1.0f);
  CHECK(!one.negative);
  CHECK(one.exponent == 127);
  CHECK(one.mantissa == 0);

  const Fp32Parts neg_zero = decompose(-0.0f);
  CHECK(neg_zero.negative);
  CHECK(neg_zero.exponent == 0);
  CHECK(neg_zero.mantissa == 0);
}

TEST_CASE("decompose round-trips random normal bit patterns") {
  oracle::Rand rng(42);
  int done = 0;
  while (done < 20000) {
    const std::uint32_t raw = static_cast<std::uint32_t>(
        rng.index(std::numeric_limits<std::uint32_t>::max()));
    const float x = float_of(raw);
    if (!std::isnormal(x)) continue;
    const Fp32Parts p = decompose(x);
    CHECK(bits_of(recompose(p)) == raw);
    ++done;
  }
}

TEST_CASE("decompose rejects non-normal non-zero inputs") {
  CHECK_THROWS_AS(decompose(std::numeric_limits<float>::quiet_NaN()),
                  ValueError);
  CHECK_THROWS_AS(decompose(std::numeric_limits<float>::infinity()),
                  ValueError);
  CHECK_THROWS_AS(decompose(-std::numeric_limits<float>::infinity()),
                  ValueError);
  CHECK_THROWS_AS(decompose(std::numeric_limits<float>::denorm_min()),
                  ValueError);
  CHECK_THROWS_AS(decompose(float_of(0x007FFFFFu)), ValueError);
}

TEST_CASE("sign-magnitude byte encoding is canonical") {
  const Int8SM zero;
  CHECK(zero.to_byte() == 0x00);
  CHECK(zero.to_int() == 0);

  const Int8SM plus5 = Int8SM::from_parts(false, 5);
  CHECK(plus5.to_byte() == 0x05);
  CHECK(plus5.to_int() == 5);

  const Int8SM minus5 = Int8SM::from_parts(true, 5);
  CHECK(minus5.to_byte() == 0x85);
  CHECK(minus5.to_int() == -5);

  const Int8SM max_neg = Int8SM::from_parts(true, 127);
  CHECK(max_neg.to_byte() == 0xFF);
  CHECK(max_neg.to_int() == -127);

  // negative zero normalizes to the canonical zero byte
  CHECK(Int8SM::from_parts(true, 0).to_byte() == 0x00);
  CHECK(Int8SM::from_byte(0x80).to_byte() == 0x00);
  CHECK(Int8SM::from_byte(0x80) == Int8SM{});

  CHECK(Int8SM::from_byte(0x7F).to_int() == 127);
  CHECK(Int8SM::from_byte(0xFF).to_int() == -127);

  CHECK_THROWS_AS(Int8SM::from_parts(false, 128), ValueError);
  CHECK_THROWS_AS(Int8SM::from_parts(true, 200), ValueError);
}

TEST_CASE("quantization scale and rounding follow the symmetric scheme") {
  // max |w| = 127 makes scale exactly 1, exposing the rounding rule
  Matrix<float> w(1, 4, std::vector<float>{127.0f, 63.5f, -63.5f, 0.4999f});
  const QuantizedTensor q = quantize_weights(w);
  CHECK(q.scale.scale == 1.0f);
  CHECK(q.values(0, 0).to_int() == 127);
  CHECK(q.values(0, 1).to_int() == 64);   // half rounds away from zero
  CHECK(q.values(0, 2).to_int() == -64);
  CHECK(q.values(0, 3).to_int() == 0);

  Matrix<float> halves(1, 2, std::vector<float>{127.0f, 0.5f});
  const QuantizedTensor qh = quantize_weights(halves);
  CHECK(qh.values(0, 1).to_int() == 1);
}

TEST_CASE("quantizing an all-zero tensor keeps scale 1") {
  Matrix<float> w(3, 3, 0.0f);
  const QuantizedTensor q = quantize_weights(w);
  CHECK(q.scale.scale == 1.0f);
  for (const Int8SM v : q.values) CHECK(v.to_int() == 0);
}

TEST_CASE("quantized magnitudes never exceed 127") {
  oracle::Rand rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix<float> w(6, 6);
    for (float& v : w) v = rng.uniform_float(std::pow(10.0, trial % 8));
    const QuantizedTensor q = quantize_weights(w);
    double max_abs = 0.0;
    for (float v : w) max_abs = std::max(max_abs, std::fabs(double(v)));
    CHECK(doctest::Approx(q.scale.scale).epsilon(1e-6) == max_abs / 127.0);
    for (const Int8SM v : q.values) CHECK(v.magnitude() <= 127);
  }
}

TEST_CASE("quantize rejects non-finite weights") {
  Matrix<float> w(2, 2, 1.0f);
  w(1, 1) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(quantize_weights(w), ValueError);
  w(1, 1) = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(quantize_weights(w), ValueError);
}

TEST_CASE("dequantize applies sign and scale elementwise") {
  Matrix<Int8SM> v(1, 3);
  v(0, 0) = Int8SM::from_parts(false, 10);
  v(0, 1) = Int8SM::from_parts(true, 3);
  v(0, 2) = Int8SM{};
  const Matrix<float> d = dequantize(v, QuantScale{0.5f});
  CHECK(d(0, 0) == 5.0f);
  CHECK(d(0, 1) == -1.5f);
  CHECK(d(0, 2) == 0.0f);
}

TEST_CASE("hybrid multiply bypasses zero operands to +0") {
  const Int8SM w7 = Int8SM::from_parts(false, 7);
  const Int8SM zero;

  const float a = hybrid_mul(0.0f, w7);
  CHECK(a == 0.0f);
  CHECK(!std::signbit(a));

  const float b = hybrid_mul(-0.0f, w7);
  CHECK(b == 0.0f);
  CHECK(!std::signbit(b));

  const float c = hybrid_mul(-3.25f, zero);
  CHECK(c == 0.0f);
  CHECK(!std::signbit(c));
}

TEST_CASE("hybrid multiply matches exact powers of two") {
  // weight magnitude 1 keeps the mantissa untouched
  const Int8SM one = Int8SM::from_parts(false, 1);
  CHECK(bits_of(hybrid_mul(1.5f, one)) == bits_of(1.5f));
  CHECK(bits_of(hybrid_mul(-2.75f, one)) == bits_of(-2.75f));

  // power-of-two magnitudes shift the exponent only
  const Int8SM four = Int8SM::from_parts(false, 4);
  CHECK(hybrid_mul(1.5f, four) == 6.0f);
  const Int8SM minus64 = Int8SM::from_parts(true, 64);
  CHECK(hybrid_mul(0.5f, minus64) == -32.0f);
  CHECK(hybrid_mul(-0.5f, minus64) == 32.0f);
}

TEST_CASE("hybrid multiply truncates toward zero") {
  // 1.0000001_2 style mantissas times non-power weights drop low bits
  // instead of rounding them
  const float a = float_of(0x3F800001u);  // 1 + 2^-23
  const Int8SM w3 = Int8SM::from_parts(false, 3);
  // exact: 3 * (1 + 2^-23) = 1.1000000...011 * 2^1; the shifted-out low bit
  // truncates, so the result is 3 + floor(3/2)*2^-22 = 3 + 2^-22
  const oracle::TruncMul expect = oracle::trunc_mul(a, 3);
  CHECK(!expect.overflow);
  CHECK(bits_of(hybrid_mul(a, w3)) == bits_of(expect.value));
  CHECK(hybrid_mul(a, w3) < 3.0f * a);  // rounding would land above
}

TEST_CASE("hybrid multiply agrees with the double-precision oracle") {
  oracle::Rand rng(2024);
  reset_exponent_overflow_count();
  std::uint64_t overflows = 0;
  for (int trial = 0; trial < 200000; ++trial) {
    // spread magnitudes across the full normal range so shifts of every
    // size occur; the top decades also exercise the overflow clamp
    const float a = rng.normal_float(1e-30, 3e38);
    const int mag = static_cast<int>(rng.index(128));
    const bool neg = rng.index(2) != 0;
    const Int8SM w = Int8SM::from_parts(neg, static_cast<unsigned>(mag));
    const oracle::TruncMul expect = oracle::trunc_mul(a, w.to_int());
    const float got = hybrid_mul(a, w);
    if (expect.overflow) {
      ++overflows;
      CHECK(bits_of(got) == bits_of(expect.value));
    } else {
      CHECK(bits_of(got) == bits_of(expect.value));
      if (expect.value == 0.0f) CHECK(!std::signbit(got));
    }
  }
  CHECK(exponent_overflow_count() == overflows);
  CHECK(overflows > 0);  // the magnitude spread must reach the clamp
  reset_exponent_overflow_count();
  CHECK(exponent_overflow_count() == 0);
}

TEST_CASE("hybrid multiply rejects non-normal activations") {
  const Int8SM w = Int8SM::from_parts(false, 3);
  CHECK_THROWS_AS(hybrid_mul(std::numeric_limits<float>::quiet_NaN(), w),
                  ValueError);
  CHECK_THROWS_AS(hybrid_mul(std::numeric_limits<float>::infinity(), w),
                  ValueError);
  CHECK_THROWS_AS(hybrid_mul(std::numeric_limits<float>::denorm_min(), w),
                  ValueError);
}

TEST_CASE("hybrid multiply clamps exponent overflow and counts it") {
  reset_exponent_overflow_count();
  const float big = std::ldexp(1.0f, 126);  // 2^126, normal
  const Int8SM w127 = Int8SM::from_parts(false, 127);
  const float r = hybrid_mul(big, w127);  // exact result near 2^133
  CHECK(r == std::numeric_limits<float>::max());
  CHECK(exponent_overflow_count() == 1);

  const Int8SM neg127 = Int8SM::from_parts(true, 127);
  const float rn = hybrid_mul(big, neg127);
  CHECK(rn == -std::numeric_limits<float>::max());
  CHECK(exponent_overflow_count() == 2);

  reset_exponent_overflow_count();
  CHECK(exponent_overflow_count() == 0);
}
