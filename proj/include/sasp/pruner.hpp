/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#ifndef SASP_PRUNER_HPP_
#define SASP_PRUNER_HPP_

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sasp/matrix.hpp"

namespace sasp::pruner {

// Tiling of a rows x cols matrix into tile_size x tile_size blocks, with
// zero padding up to the next tile boundary.
struct TileGrid {
  std::size_t tile_size = 0;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::size_t pad_rows = 0;
  std::size_t pad_cols = 0;

  static TileGrid for_shape(std::size_t rows, std::size_t cols,
                            std::size_t tile_size);

  std::size_t tile_count() const { return grid_rows * grid_cols; }

  friend bool operator==(const TileGrid&, const TileGrid&) = default;
};

// Per-tile keep/prune bitmap for one weight matrix. keep[i*grid_cols+j]
// true means the tile is retained.
struct TileMask {
  TileGrid grid;
  std::vector<std::uint8_t> keep;

  static TileMask all_keep(const TileGrid& grid);

  bool kept(std::size_t tile_row, std::size_t tile_col) const {
    return keep[tile_row * grid.grid_cols + tile_col] != 0;
  }
  std::size_t pruned_count() const;

  friend bool operator==(const TileMask&, const TileMask&) = default;
};

struct MatrixPruneStats {
  std::string id;
  std::size_t tiles = 0;
  std::size_t pruned = 0;
  double sparsity = 0.0;
};

struct PruneReport {
  std::size_t tile_size = 0;
  double requested_rate = 0.0;
  std::size_t total_tiles = 0;
  std::size_t pruned_tiles = 0;
  double global_sparsity = 0.0;
  // L1 norm of the largest tile that was pruned; 0 when nothing was.
  double l1_threshold = 0.0;
  std::vector<MatrixPruneStats> per_matrix;
};

// Non-owning reference to one matrix participating in a global prune.
struct PruneInput {
  std::string id;
  const Matrix<float>* matrix = nullptr;
};

// L1 norm (sum of absolute values) of every tile; padding contributes 0.
// Accumulated in double, fixed row-major order. Throws on tile_size == 0 or
// non-finite elements.
Matrix<double> tile_l1_norms(const Matrix<float>& w, std::size_t tile_size);

struct PruneResult {
  std::map<std::string, TileMask> masks;
  PruneReport report;
};

// Marks the floor(rate * total) tiles with the smallest L1 norm across all
// listed matrices as pruned. Ties break deterministically: smaller matrix
// id first, then row-major tile order. Matrices not listed are untouched.
PruneResult global_prune(const std::vector<PruneInput>& inputs,
                         std::size_t tile_size, double rate);

// Zeroes every element inside pruned tiles; kept elements are copied
// bit-identically.
Matrix<float> apply_mask(const Matrix<float>& w, const TileMask& mask);

}  // namespace sasp::pruner

#endif  // SASP_PRUNER_HPP_
