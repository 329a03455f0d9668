/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#include <bit>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "sasp/errors.hpp"
#include "sasp/gemm.hpp"

using sasp::DimensionError;
using sasp::IntegrityError;
using sasp::Matrix;
using sasp::ValueError;
using sasp::fparith::Int8SM;
using sasp::fparith::QuantizedTensor;
using namespace sasp::gemm;

namespace {

Matrix<float> random_matrix(oracle::Rand& rng, std::size_t r, std::size_t c,
                            double amp) {
  Matrix<float> m(r, c);
  for (float& v : m) v = rng.uniform_float(amp);
  return m;
}

void check_bit_equal(const Matrix<float>& got, const Matrix<float>& want) {
  REQUIRE(got.rows() == want.rows());
  REQUIRE(got.cols() == want.cols());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(std::bit_cast<std::uint32_t>(got.data()[i]) ==
          std::bit_cast<std::uint32_t>(want.data()[i]));
  }
}

GemmOptions options_for(std::size_t t) {
  GemmOptions opts;
  opts.array.size = t;
  return opts;
}

}  // namespace

TEST_CASE("tiled GEMM is bit-exact against the structural reference") {
  oracle::Rand rng(31);
  const struct {
    std::size_t m, k, n, t;
  } shapes[] = {
      {1, 1, 1, 1},  {3, 5, 7, 2},   {8, 8, 8, 4},   {10, 10, 10, 4},
      {6, 12, 9, 8}, {17, 23, 5, 4}, {32, 16, 24, 8}, {5, 64, 3, 16},
  };
  for (const auto& s : shapes) {
    const Matrix<float> input = random_matrix(rng, s.m, s.k, 2.0);
    const Matrix<float> weights = random_matrix(rng, s.k, s.n, 2.0);
    const GemmResult res = tiled_gemm(input, weights, options_for(s.t));
    check_bit_equal(res.output, oracle::fp32_gemm_ref(input, weights, s.t));
  }
}

TEST_CASE("dense GEMM cycle stats follow the per-tile closed form") {
  oracle::Rand rng(37);
  const Matrix<float> input = random_matrix(rng, 10, 20, 1.0);
  const Matrix<float> weights = random_matrix(rng, 20, 12, 1.0);
  const GemmOptions opts = options_for(4);  // grid 5 x 3 = 15 tiles

  const GemmResult res = tiled_gemm(input, weights, opts);
  const std::uint64_t per_tile_load = sasp::accel::cycles_weight_load(opts.array);
  const std::uint64_t per_tile_stream =
      sasp::accel::cycles_stream(opts.array, 10);
  CHECK(res.stats.weight_load_cycles == 15 * per_tile_load);
  CHECK(res.stats.stream_cycles == 15 * per_tile_stream);
  CHECK(res.stats.skipped_cycles == 0);
  CHECK(res.stats.total_cycles() ==
        dense_equivalent_cycles(10, 20, 12, opts.array));
}

TEST_CASE("dense equivalent cycles for the canonical workload shape") {
  sasp::accel::ArrayConfig cfg;
  cfg.size = 8;
  // 32 x 32 tiles, each 128 load + 4115 stream cycles
  CHECK(dense_equivalent_cycles(256, 256, 256, cfg) == 1024u * 4243u);
}

TEST_CASE("skipping pruned tiles leaves the result bit-identical") {
  oracle::Rand rng(41);
  for (double rate : {0.25, 0.5, 0.75}) {
    const std::size_t m = 12, k = 24, n = 20, t = 4;
    const Matrix<float> input = random_matrix(rng, m, k, 1.5);
    Matrix<float> raw = random_matrix(rng, k, n, 1.5);
    const auto pruned = sasp::pruner::global_prune({{"w", &raw}}, t, rate);
    const sasp::pruner::TileMask& mask = pruned.masks.at("w");
    const Matrix<float> weights = sasp::pruner::apply_mask(raw, mask);

    GemmOptions dense_opts = options_for(t);
    const GemmResult dense = tiled_gemm(input, weights, dense_opts);

    GemmOptions masked_opts = options_for(t);
    masked_opts.mask = &mask;
    const GemmResult masked = tiled_gemm(input, weights, masked_opts);

    check_bit_equal(masked.output, dense.output);
    check_bit_equal(dense.output, oracle::fp32_gemm_ref(input, weights, t));

    // cycle bookkeeping: skipped + spent = dense-equivalent
    const std::uint64_t dense_cycles =
        dense_equivalent_cycles(m, k, n, masked_opts.array);
    CHECK(masked.stats.total_cycles() + masked.stats.skipped_cycles ==
          dense_cycles);
    CHECK(masked.stats.skipped_tile_count == mask.pruned_count());
    CHECK(dense.stats.total_cycles() == dense_cycles);
  }
}

TEST_CASE("a nonzero pruned tile raises an integrity error") {
  oracle::Rand rng(43);
  const Matrix<float> input = random_matrix(rng, 4, 8, 1.0);
  const Matrix<float> weights = random_matrix(rng, 8, 8, 1.0);  // nowhere zero

  sasp::pruner::TileMask mask =
      sasp::pruner::TileMask::all_keep(sasp::pruner::TileGrid::for_shape(8, 8, 4));
  mask.keep[2] = 0;  // tile (1, 0)

  GemmOptions opts = options_for(4);
  opts.mask = &mask;
  CHECK_THROWS_WITH_AS(
      tiled_gemm(input, weights, opts),
      "pruned tile (1, 0) has nonzero weights; mask does not match the "
      "weight matrix",
      IntegrityError);

  // disabling the check trades safety for speed: the tile is dropped
  opts.check_mask_integrity = false;
  const GemmResult forced = tiled_gemm(input, weights, opts);
  const GemmResult full = tiled_gemm(input, weights, options_for(4));
  CHECK(forced.stats.skipped_tile_count == 1);
  bool differs = false;
  for (std::size_t i = 0; i < forced.output.size(); ++i) {
    differs = differs || forced.output.data()[i] != full.output.data()[i];
  }
  CHECK(differs);
}

TEST_CASE("INT8 GEMM applies the tensor scale once at the end") {
  oracle::Rand rng(47);
  const std::size_t m = 6, k = 8, n = 8, t = 4;
  const Matrix<float> input = random_matrix(rng, m, k, 1.0);
  const Matrix<float> raw = random_matrix(rng, k, n, 1.0);
  const QuantizedTensor q = sasp::fparith::quantize_weights(raw);

  GemmOptions opts = options_for(t);
  opts.array.format = sasp::accel::WeightFormat::kInt8;
  const GemmResult res = tiled_gemm(input, q, opts);

  Matrix<float> want = oracle::gemm_ref(
      input, k, n, t, [&](float a, std::size_t wr, std::size_t wc) {
        if (wr >= k || wc >= n) return 0.0f;
        return oracle::trunc_mul(a, q.values(wr, wc).to_int()).value;
      });
  for (float& v : want) v *= q.scale.scale;
  check_bit_equal(res.output, want);

  CHECK(res.stats.weight_load_cycles ==
        4 * sasp::accel::cycles_weight_load(opts.array));
  CHECK(res.stats.stream_cycles ==
        4 * sasp::accel::cycles_stream(opts.array, m));
}

TEST_CASE("INT8 GEMM skips exactly-zero quantized tiles") {
  const std::size_t t = 2;
  Matrix<Int8SM> values(4, 2);
  for (std::size_t c = 0; c < 2; ++c) {
    values(0, c) = Int8SM::from_parts(false, 10 + static_cast<unsigned>(c));
    values(1, c) = Int8SM::from_parts(true, 5);
  }
  // rows 2..3 stay zero: tile (1, 0) is prunable
  const QuantizedTensor q{values, sasp::fparith::QuantScale{0.25f}};
  Matrix<float> input(3, 4);
  oracle::Rand rng(53);
  for (float& v : input) v = rng.uniform_float(1.0);

  sasp::pruner::TileMask mask =
      sasp::pruner::TileMask::all_keep(sasp::pruner::TileGrid::for_shape(4, 2, t));
  mask.keep[1] = 0;

  GemmOptions opts = options_for(t);
  opts.array.format = sasp::accel::WeightFormat::kInt8;
  const GemmResult dense = tiled_gemm(input, q, opts);
  opts.mask = &mask;
  const GemmResult masked = tiled_gemm(input, q, opts);
  check_bit_equal(masked.output, dense.output);
  CHECK(masked.stats.skipped_tile_count == 1);

  // flipping a bit inside the pruned tile must trip the integrity check
  Matrix<Int8SM> dirty = values;
  dirty(2, 1) = Int8SM::from_parts(false, 1);
  const QuantizedTensor bad{dirty, sasp::fparith::QuantScale{0.25f}};
  CHECK_THROWS_AS(tiled_gemm(input, bad, opts), IntegrityError);
}

TEST_CASE("GEMM validates shapes, formats and masks") {
  oracle::Rand rng(59);
  const Matrix<float> input = random_matrix(rng, 4, 6, 1.0);
  const Matrix<float> weights = random_matrix(rng, 8, 8, 1.0);
  CHECK_THROWS_AS(tiled_gemm(input, weights, options_for(4)), DimensionError);

  const Matrix<float> ok_weights = random_matrix(rng, 6, 8, 1.0);
  GemmOptions wrong_format = options_for(4);
  wrong_format.array.format = sasp::accel::WeightFormat::kInt8;
  CHECK_THROWS_AS(tiled_gemm(input, ok_weights, wrong_format), ValueError);

  const QuantizedTensor q = sasp::fparith::quantize_weights(ok_weights);
  CHECK_THROWS_AS(tiled_gemm(input, q, options_for(4)), ValueError);

  // mask tiled at a different array size does not bind
  const sasp::pruner::TileMask mask =
      sasp::pruner::TileMask::all_keep(sasp::pruner::TileGrid::for_shape(6, 8, 2));
  GemmOptions bad_mask = options_for(4);
  bad_mask.mask = &mask;
  CHECK_THROWS_AS(tiled_gemm(input, ok_weights, bad_mask), IntegrityError);
}

TEST_CASE("empty input slabs cost the full tile schedule") {
  const Matrix<float> input(0, 8, 0.0f);
  Matrix<float> weights(8, 8, 1.0f);
  const GemmOptions opts = options_for(4);
  const GemmResult res = tiled_gemm(input, weights, opts);
  CHECK(res.output.rows() == 0);
  CHECK(res.output.cols() == 8);
  CHECK(res.stats.total_cycles() == dense_equivalent_cycles(0, 8, 8, opts.array));
  CHECK(res.stats.total_cycles() > 0);  // loads and drains still happen
}
