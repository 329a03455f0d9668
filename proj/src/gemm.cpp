/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#include "sasp/gemm.hpp"

#include <string>

#include "sasp/errors.hpp"

namespace sasp::gemm {

namespace {

void check_shapes(std::size_t input_cols, std::size_t weight_rows) {
  if (input_cols != weight_rows) {
    throw DimensionError("input columns (" + std::to_string(input_cols) +
                         ") do not match weight rows (" +
                         std::to_string(weight_rows) + ")");
  }
}

pruner::TileGrid check_mask(const pruner::TileMask* mask, std::size_t k,
                            std::size_t n, std::size_t tile) {
  const pruner::TileGrid grid = pruner::TileGrid::for_shape(k, n, tile);
  if (mask != nullptr && !(mask->grid == grid)) {
    throw IntegrityError("tile mask does not match the weight shape at this "
                         "array size");
  }
  return grid;
}

// Element accessor treating the weight matrix as zero-padded to the grid.
template <typename W, typename Get>
void fill_tile(Matrix<W>& tile, std::size_t ti, std::size_t tj,
               std::size_t k, std::size_t n, std::size_t t, Get get) {
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t c = 0; c < t; ++c) {
      const std::size_t wr = ti * t + r;
      const std::size_t wc = tj * t + c;
      tile(r, c) = (wr < k && wc < n) ? get(wr, wc) : W{};
    }
  }
}

template <typename IsZero>
void check_pruned_tile_zero(std::size_t ti, std::size_t tj, std::size_t k,
                            std::size_t n, std::size_t t, IsZero is_zero) {
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t c = 0; c < t; ++c) {
      const std::size_t wr = ti * t + r;
      const std::size_t wc = tj * t + c;
      if (wr < k && wc < n && !is_zero(wr, wc)) {
        throw IntegrityError("pruned tile (" + std::to_string(ti) + ", " +
                             std::to_string(tj) +
                             ") has nonzero weights; mask does not match "
                             "the weight matrix");
      }
    }
  }
}

// Shared driver: GetTile builds the t x t weight tile for (ti, tj), IsZero
// tests one in-bounds weight element.
template <typename W, typename GetElem, typename IsZero>
GemmResult run_tiled(const Matrix<float>& input, std::size_t k, std::size_t n,
                     const GemmOptions& opts, GetElem get_elem,
                     IsZero is_zero) {
  check_shapes(input.cols(), k);
  const std::size_t t = opts.array.size;
  const pruner::TileGrid grid = check_mask(opts.mask, k, n, t);
  const std::size_t m = input.rows();

  accel::ArrayState array(opts.array);
  Matrix<float> output(m, n, 0.0f);
  Matrix<W> tile(t, t, W{});
  Matrix<float> slab(m, t, 0.0f);
  const std::uint64_t tile_cost =
      accel::cycles_weight_load(opts.array) +
      accel::cycles_stream(opts.array, m);

  for (std::size_t ti = 0; ti < grid.grid_rows; ++ti) {
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < t; ++c) {
        const std::size_t wc = ti * t + c;
        slab(r, c) = wc < k ? input(r, wc) : 0.0f;
      }
    }
    for (std::size_t tj = 0; tj < grid.grid_cols; ++tj) {
      if (opts.mask != nullptr && !opts.mask->kept(ti, tj)) {
        if (opts.check_mask_integrity) {
          check_pruned_tile_zero(ti, tj, k, n, t, is_zero);
        }
        array.add_skipped_tile(tile_cost);
        continue;
      }
      fill_tile(tile, ti, tj, k, n, t, get_elem);
      accel::TileResult part = accel::run_tile(array, tile, slab);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < t; ++c) {
          const std::size_t oc = tj * t + c;
          if (oc < n) output(r, oc) += part.output(r, c);
        }
      }
    }
  }
  return GemmResult{std::move(output), array.stats()};
}

}  // namespace

GemmResult tiled_gemm(const Matrix<float>& input, const Matrix<float>& weights,
                      const GemmOptions& opts) {
  if (opts.array.format != accel::WeightFormat::kFp32) {
    throw ValueError("FP32 weights need an FP32 array configuration");
  }
  return run_tiled<float>(
      input, weights.rows(), weights.cols(), opts,
      [&](std::size_t r, std::size_t c) { return weights(r, c); },
      [&](std::size_t r, std::size_t c) { return weights(r, c) == 0.0f; });
}

GemmResult tiled_gemm(const Matrix<float>& input,
                      const fparith::QuantizedTensor& weights,
                      const GemmOptions& opts) {
  if (opts.array.format != accel::WeightFormat::kInt8) {
    throw ValueError("INT8 weights need an INT8 array configuration");
  }
  const Matrix<fparith::Int8SM>& values = weights.values;
  GemmResult result = run_tiled<fparith::Int8SM>(
      input, values.rows(), values.cols(), opts,
      [&](std::size_t r, std::size_t c) { return values(r, c); },
      [&](std::size_t r, std::size_t c) {
        return values(r, c).magnitude() == 0;
      });
  for (float& v : result.output) v *= weights.scale.scale;
  return result;
}

std::uint64_t dense_equivalent_cycles(std::size_t m, std::size_t k,
                                      std::size_t n,
                                      const accel::ArrayConfig& cfg) {
  const pruner::TileGrid grid = pruner::TileGrid::for_shape(k, n, cfg.size);
  return static_cast<std::uint64_t>(grid.tile_count()) *
         (accel::cycles_weight_load(cfg) + accel::cycles_stream(cfg, m));
}

}  // namespace sasp::gemm
