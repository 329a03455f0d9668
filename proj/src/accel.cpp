/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#include "sasp/accel.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <utility>

#include "sasp/errors.hpp"

namespace sasp::accel {

namespace {

template <class... Ts>
struct Overload : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overload(Ts...) -> Overload<Ts...>;

}  // namespace

const char* format_name(WeightFormat format) {
  return format == WeightFormat::kFp32 ? "fp32" : "int8";
}

void ArrayConfig::validate() const {
  if (size == 0) throw ValueError("array size must be at least 1");
  if (size > 256) throw ValueError("array size above 256 is not supported");
}

std::uint64_t cycles_weight_load(const ArrayConfig& cfg) {
  cfg.validate();
  const std::uint64_t slots =
      static_cast<std::uint64_t>(cfg.size) * cfg.size;
  const std::uint64_t words =
      cfg.format == WeightFormat::kInt8 ? (slots + 3) / 4 : slots;
  return words * (1 + cfg.instr_overhead);
}

std::uint64_t cycles_stream(const ArrayConfig& cfg, std::uint64_t rows) {
  cfg.validate();
  const std::uint64_t t = cfg.size;
  return rows * t * (1 + cfg.instr_overhead) + (2 * t - 1) + cfg.pipe_depth;
}

float ArrayState::DelayLine::shift(float v) {
  if (buf.empty()) return v;
  float out = buf[head];
  buf[head] = v;
  head = (head + 1) % buf.size();
  return out;
}

ArrayState::ArrayState(const ArrayConfig& cfg) : cfg_(cfg), size_(cfg.size) {
  cfg_.validate();
  const std::size_t n = size_ * size_;
  weights_f_.assign(n, 0.0f);
  weights_q_.assign(n, fparith::Int8SM{});
  act_.assign(n, 0.0f);
  act_next_.assign(n, 0.0f);
  psum_.assign(n, 0.0f);
  psum_next_.assign(n, 0.0f);
  in_skew_.resize(size_);
  out_skew_.resize(size_);
  for (std::size_t i = 0; i < size_; ++i) {
    in_skew_[i].buf.assign(i, 0.0f);
    out_skew_[i].buf.assign(size_ - 1 - i, 0.0f);
  }
  row_buffer_.reserve(size_);
}

void ArrayState::program_word(std::size_t row, std::size_t col,
                              std::uint32_t word) {
  if (streaming_) {
    throw ProgramError("cannot program weights while a stream is open");
  }
  if (row >= size_ || col >= size_) {
    throw DimensionError("weight slot out of range");
  }
  stats_.weight_load_cycles += 1 + cfg_.instr_overhead;
  const std::size_t idx = row * size_ + col;
  if (cfg_.format == WeightFormat::kFp32) {
    const float w = std::bit_cast<float>(word);
    if (std::isnan(w) || std::isinf(w)) {
      throw ValueError("FP32 weight must be finite");
    }
    weights_f_[idx] = w;
  } else {
    if (idx % 4 != 0) {
      throw ProgramError("packed INT8 weight words must start 4-aligned");
    }
    const std::size_t n = std::min<std::size_t>(4, size_ * size_ - idx);
    for (std::size_t b = 0; b < n; ++b) {
      weights_q_[idx + b] =
          fparith::Int8SM::from_byte(static_cast<std::uint8_t>(word >> (8 * b)));
    }
  }
  programmed_ = true;
}

float ArrayState::multiply(float activation, std::size_t row,
                           std::size_t col) const {
  const std::size_t idx = row * size_ + col;
  if (cfg_.format == WeightFormat::kFp32) {
    return activation * weights_f_[idx];
  }
  return fparith::hybrid_mul(activation, weights_q_[idx]);
}

void ArrayState::step(const float* input_row) {
  const std::uint64_t t = steps_done_;
  for (std::size_t i = 0; i < size_; ++i) {
    const float fed = input_row != nullptr ? input_row[i] : 0.0f;
    const float a_head = in_skew_[i].shift(fed);
    for (std::size_t j = 0; j < size_; ++j) {
      const float a_in = j == 0 ? a_head : act_[i * size_ + j - 1];
      const float p_in = i == 0 ? 0.0f : psum_[(i - 1) * size_ + j];
      act_next_[i * size_ + j] = a_in;
      psum_next_[i * size_ + j] = p_in + multiply(a_in, i, j);
    }
  }
  act_.swap(act_next_);
  psum_.swap(psum_next_);
  const bool collect =
      t >= 2 * static_cast<std::uint64_t>(size_) - 2 &&
      rows_emitted_ < rows_streamed_;
  for (std::size_t j = 0; j < size_; ++j) {
    const float v = out_skew_[j].shift(psum_[(size_ - 1) * size_ + j]);
    if (collect) outputs_.push_back(v);
  }
  if (collect) ++rows_emitted_;
  ++steps_done_;
}

void ArrayState::stream(float activation) {
  if (!programmed_) {
    throw ProgramError("cannot stream through an unprogrammed array");
  }
  if (cfg_.format == WeightFormat::kInt8 && activation != 0.0f &&
      !std::isnormal(activation)) {
    throw ValueError("hybrid multiplier activation must be zero or normal");
  }
  streaming_ = true;
  stats_.stream_cycles += 1 + cfg_.instr_overhead;
  row_buffer_.push_back(activation);
  if (row_buffer_.size() == size_) {
    ++rows_streamed_;
    step(row_buffer_.data());
    row_buffer_.clear();
  }
}

void ArrayState::flush() {
  if (!row_buffer_.empty()) {
    throw ProgramError("flush issued with a partially streamed row");
  }
  stats_.stream_cycles += (2 * static_cast<std::uint64_t>(size_) - 1) +
                          cfg_.pipe_depth;
  while (rows_emitted_ < rows_streamed_) step(nullptr);
  std::fill(act_.begin(), act_.end(), 0.0f);
  std::fill(act_next_.begin(), act_next_.end(), 0.0f);
  std::fill(psum_.begin(), psum_.end(), 0.0f);
  std::fill(psum_next_.begin(), psum_next_.end(), 0.0f);
  for (auto& line : in_skew_) {
    std::fill(line.buf.begin(), line.buf.end(), 0.0f);
    line.head = 0;
  }
  for (auto& line : out_skew_) {
    std::fill(line.buf.begin(), line.buf.end(), 0.0f);
    line.head = 0;
  }
  steps_done_ = 0;
  rows_streamed_ = 0;
  rows_emitted_ = 0;
  streaming_ = false;
}

std::vector<float> ArrayState::take_outputs() {
  std::vector<float> out = std::move(outputs_);
  outputs_.clear();
  return out;
}

float ArrayState::weight_fp32(std::size_t row, std::size_t col) const {
  if (cfg_.format != WeightFormat::kFp32) {
    throw ProgramError("array holds INT8 weights");
  }
  if (row >= size_ || col >= size_) {
    throw DimensionError("weight slot out of range");
  }
  return weights_f_[row * size_ + col];
}

fparith::Int8SM ArrayState::weight_int8(std::size_t row,
                                        std::size_t col) const {
  if (cfg_.format != WeightFormat::kInt8) {
    throw ProgramError("array holds FP32 weights");
  }
  if (row >= size_ || col >= size_) {
    throw DimensionError("weight slot out of range");
  }
  return weights_q_[row * size_ + col];
}

void ArrayState::add_skipped_tile(std::uint64_t would_be_cycles) {
  stats_.skipped_cycles += would_be_cycles;
  ++stats_.skipped_tile_count;
}

namespace {

CycleStats stats_delta(const CycleStats& after, const CycleStats& before) {
  return CycleStats{
      after.weight_load_cycles - before.weight_load_cycles,
      after.stream_cycles - before.stream_cycles,
      after.skipped_cycles - before.skipped_cycles,
      after.skipped_tile_count - before.skipped_tile_count,
  };
}

TileResult stream_and_collect(ArrayState& array,
                              const Matrix<float>& input_slab,
                              const CycleStats& before) {
  const std::size_t t = array.config().size;
  for (std::size_t r = 0; r < input_slab.rows(); ++r) {
    for (std::size_t c = 0; c < t; ++c) array.stream(input_slab(r, c));
  }
  array.flush();
  std::vector<float> out = array.take_outputs();
  return TileResult{Matrix<float>(input_slab.rows(), t, std::move(out)),
                    stats_delta(array.stats(), before)};
}

void check_tile_shapes(const ArrayState& array, std::size_t tile_rows,
                       std::size_t tile_cols, const Matrix<float>& slab) {
  const std::size_t t = array.config().size;
  if (tile_rows != t || tile_cols != t) {
    throw DimensionError("weight tile must match the array size");
  }
  if (slab.cols() != t) {
    throw DimensionError("input slab width must match the array size");
  }
}

}  // namespace

TileResult run_tile(ArrayState& array, const Matrix<float>& weight_tile,
                    const Matrix<float>& input_slab) {
  if (array.config().format != WeightFormat::kFp32) {
    throw ValueError("array is configured for INT8 weights");
  }
  check_tile_shapes(array, weight_tile.rows(), weight_tile.cols(), input_slab);
  if (array.pending_outputs() != 0) {
    throw ProgramError("array has unconsumed outputs");
  }
  const CycleStats before = array.stats();
  const std::size_t t = array.config().size;
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t c = 0; c < t; ++c) {
      array.program_word(r, c, std::bit_cast<std::uint32_t>(weight_tile(r, c)));
    }
  }
  return stream_and_collect(array, input_slab, before);
}

TileResult run_tile(ArrayState& array,
                    const Matrix<fparith::Int8SM>& weight_tile,
                    const Matrix<float>& input_slab) {
  if (array.config().format != WeightFormat::kInt8) {
    throw ValueError("array is configured for FP32 weights");
  }
  check_tile_shapes(array, weight_tile.rows(), weight_tile.cols(), input_slab);
  if (array.pending_outputs() != 0) {
    throw ProgramError("array has unconsumed outputs");
  }
  const CycleStats before = array.stats();
  const std::size_t t = array.config().size;
  const std::size_t slots = t * t;
  const fparith::Int8SM* flat = weight_tile.data();
  for (std::size_t idx = 0; idx < slots; idx += 4) {
    std::uint32_t word = 0;
    const std::size_t n = std::min<std::size_t>(4, slots - idx);
    for (std::size_t b = 0; b < n; ++b) {
      word |= static_cast<std::uint32_t>(flat[idx + b].to_byte()) << (8 * b);
    }
    array.program_word(idx / t, idx % t, word);
  }
  return stream_and_collect(array, input_slab, before);
}

TileResult exec_tile(const ArrayConfig& cfg, const Matrix<float>& weight_tile,
                     const Matrix<float>& input_slab) {
  ArrayState array(cfg);
  return run_tile(array, weight_tile, input_slab);
}

TileResult exec_tile(const ArrayConfig& cfg,
                     const Matrix<fparith::Int8SM>& weight_tile,
                     const Matrix<float>& input_slab) {
  ArrayState array(cfg);
  return run_tile(array, weight_tile, input_slab);
}

ProgramResult run_program(const ArrayConfig& cfg,
                          std::span<const Instr> prog) {
  ArrayState array(cfg);
  for (const Instr& instr : prog) {
    std::visit(Overload{
                   [&](const ProgWeight& p) {
                     array.program_word(p.row, p.col, p.word);
                   },
                   [&](const Stream& s) { array.stream(s.input); },
                   [&](const Flush&) { array.flush(); },
               },
               instr);
  }
  ProgramResult result;
  result.outputs = array.take_outputs();
  result.stats = array.stats();
  result.cycles = result.stats.total_cycles();
  return result;
}

}  // namespace sasp::accel
