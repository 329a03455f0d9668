/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#include "sasp/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sasp/errors.hpp"

namespace sasp::pruner {

TileGrid TileGrid::for_shape(std::size_t rows, std::size_t cols,
                             std::size_t tile_size) {
  if (tile_size == 0) {
    throw ValueError("tile size must be >= 1");
  }
  TileGrid g;
  g.tile_size = tile_size;
  g.grid_rows = (rows + tile_size - 1) / tile_size;
  g.grid_cols = (cols + tile_size - 1) / tile_size;
  g.pad_rows = g.grid_rows * tile_size - rows;
  g.pad_cols = g.grid_cols * tile_size - cols;
  return g;
}

TileMask TileMask::all_keep(const TileGrid& grid) {
  return TileMask{grid, std::vector<std::uint8_t>(grid.tile_count(), 1)};
}

std::size_t TileMask::pruned_count() const {
  return static_cast<std::size_t>(
      std::count(keep.begin(), keep.end(), std::uint8_t{0}));
}

Matrix<double> tile_l1_norms(const Matrix<float>& w, std::size_t tile_size) {
  const TileGrid grid = TileGrid::for_shape(w.rows(), w.cols(), tile_size);
  Matrix<double> norms(grid.grid_rows, grid.grid_cols, 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const std::size_t tr = r / tile_size;
    for (std::size_t c = 0; c < w.cols(); ++c) {
      const float v = w(r, c);
      if (!std::isfinite(v)) {
        throw ValueError("non-finite element at (" + std::to_string(r) + "," +
                         std::to_string(c) + ")");
      }
      norms(tr, c / tile_size) += std::fabs(static_cast<double>(v));
    }
  }
  return norms;
}

namespace {

struct TileEntry {
  double norm;
  std::size_t input_index;  // index into the id-sorted input order
  std::size_t tile_row;
  std::size_t tile_col;
};

}  // namespace

PruneResult global_prune(const std::vector<PruneInput>& inputs,
                         std::size_t tile_size, double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw ValueError("pruning rate must lie in [0, 1]");
  }
  if (inputs.empty() && rate > 0.0) {
    throw ValueError("cannot prune an empty matrix list at rate > 0");
  }
  {
    std::set<std::string> ids;
    for (const auto& in : inputs) {
      if (in.matrix == nullptr) {
        throw ValueError("null matrix for id '" + in.id + "'");
      }
      if (!ids.insert(in.id).second) {
        throw ValueError("duplicate matrix id '" + in.id + "'");
      }
    }
  }

  // Tie-break ranks matrices by id, so walk them in sorted-id order.
  std::vector<std::size_t> order(inputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return inputs[a].id < inputs[b].id;
  });

  std::vector<TileEntry> entries;
  std::vector<Matrix<double>> norms(inputs.size());
  std::size_t total_tiles = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const PruneInput& in = inputs[order[rank]];
    norms[rank] = tile_l1_norms(*in.matrix, tile_size);
    const auto& n = norms[rank];
    total_tiles += n.size();
    for (std::size_t tr = 0; tr < n.rows(); ++tr) {
      for (std::size_t tc = 0; tc < n.cols(); ++tc) {
        entries.push_back(TileEntry{n(tr, tc), rank, tr, tc});
      }
    }
  }

  const std::size_t prune_count = static_cast<std::size_t>(
      std::floor(rate * static_cast<double>(total_tiles)));

  std::sort(entries.begin(), entries.end(),
            [](const TileEntry& a, const TileEntry& b) {
              if (a.norm != b.norm) return a.norm < b.norm;
              if (a.input_index != b.input_index)
                return a.input_index < b.input_index;
              if (a.tile_row != b.tile_row) return a.tile_row < b.tile_row;
              return a.tile_col < b.tile_col;
            });

  PruneResult result;
  result.report.tile_size = tile_size;
  result.report.requested_rate = rate;
  result.report.total_tiles = total_tiles;
  result.report.pruned_tiles = prune_count;
  result.report.global_sparsity =
      total_tiles == 0 ? 0.0
                       : static_cast<double>(prune_count) /
                             static_cast<double>(total_tiles);
  result.report.l1_threshold =
      prune_count == 0 ? 0.0 : entries[prune_count - 1].norm;

  std::vector<std::size_t> pruned_per_input(inputs.size(), 0);
  std::vector<TileMask> masks(inputs.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const PruneInput& in = inputs[order[rank]];
    masks[rank] = TileMask::all_keep(
        TileGrid::for_shape(in.matrix->rows(), in.matrix->cols(), tile_size));
  }
  for (std::size_t i = 0; i < prune_count; ++i) {
    const TileEntry& e = entries[i];
    masks[e.input_index]
        .keep[e.tile_row * masks[e.input_index].grid.grid_cols + e.tile_col] =
        0;
    ++pruned_per_input[e.input_index];
  }

  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const PruneInput& in = inputs[order[rank]];
    MatrixPruneStats stats;
    stats.id = in.id;
    stats.tiles = masks[rank].grid.tile_count();
    stats.pruned = pruned_per_input[rank];
    stats.sparsity = stats.tiles == 0 ? 0.0
                                      : static_cast<double>(stats.pruned) /
                                            static_cast<double>(stats.tiles);
    result.report.per_matrix.push_back(std::move(stats));
    result.masks.emplace(in.id, std::move(masks[rank]));
  }
  return result;
}

Matrix<float> apply_mask(const Matrix<float>& w, const TileMask& mask) {
  const TileGrid expected =
      TileGrid::for_shape(w.rows(), w.cols(), mask.grid.tile_size);
  if (expected != mask.grid) {
    throw DimensionError("mask grid does not match matrix shape");
  }
  Matrix<float> out = w;
  const std::size_t t = mask.grid.tile_size;
  for (std::size_t tr = 0; tr < mask.grid.grid_rows; ++tr) {
    for (std::size_t tc = 0; tc < mask.grid.grid_cols; ++tc) {
      if (mask.kept(tr, tc)) continue;
      const std::size_t r_end = std::min(w.rows(), (tr + 1) * t);
      const std::size_t c_end = std::min(w.cols(), (tc + 1) * t);
      for (std::size_t r = tr * t; r < r_end; ++r) {
        for (std::size_t c = tc * t; c < c_end; ++c) {
          out(r, c) = 0.0f;
        }
      }
    }
  }
  return out;
}

}  // namespace sasp::pruner
