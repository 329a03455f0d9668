/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#ifndef SASP_GEMM_HPP_
#define SASP_GEMM_HPP_

#include <cstdint>

#include "sasp/accel.hpp"
#include "sasp/fparith.hpp"
#include "sasp/matrix.hpp"
#include "sasp/pruner.hpp"

namespace sasp::gemm {

struct GemmOptions {
  accel::ArrayConfig array;
  // Optional tile skip mask over the weight matrix. Must match the weight
  // shape tiled at array.size.
  const pruner::TileMask* mask = nullptr;
  // When set, every pruned tile is checked to be exactly zero before it is
  // skipped; a nonzero pruned tile raises IntegrityError.
  bool check_mask_integrity = true;
};

struct GemmResult {
  Matrix<float> output;
  accel::CycleStats stats;
};

// output = input (m x k) times weights (k x n), computed on the simulated
// array one weight tile at a time. The weight matrix is zero-padded to the
// tile grid; column slabs of the input stream through each programmed tile
// and per-tile partial outputs accumulate into the FP32 output buffer in
// ascending tile-row order. Pruned tiles are skipped; their would-have-been
// cycles land in stats.skipped_cycles.
GemmResult tiled_gemm(const Matrix<float>& input, const Matrix<float>& weights,
                      const GemmOptions& opts);

// INT8 weight path: the per-tensor scale is applied to the accumulated
// output once, host-side.
GemmResult tiled_gemm(const Matrix<float>& input,
                      const fparith::QuantizedTensor& weights,
                      const GemmOptions& opts);

// Cycles the same GEMM costs with no tiles skipped.
std::uint64_t dense_equivalent_cycles(std::size_t m, std::size_t k,
                                      std::size_t n,
                                      const accel::ArrayConfig& cfg);

}  // namespace sasp::gemm

#endif  // SASP_GEMM_HPP_
