/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#ifndef SASP_ACCEL_HPP_
#define SASP_ACCEL_HPP_

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "sasp/fparith.hpp"
#include "sasp/matrix.hpp"

namespace sasp::accel {

enum class WeightFormat { kFp32, kInt8 };

const char* format_name(WeightFormat format);

// Shape and timing parameters of one array instance.
struct ArrayConfig {
  std::size_t size = 8;  // array is size x size
  WeightFormat format = WeightFormat::kFp32;
  unsigned pipe_depth = 4;      // MAC pipeline stages, charged once per drain
  unsigned instr_overhead = 1;  // host cycles added to each instruction

  void validate() const;

  friend bool operator==(const ArrayConfig&, const ArrayConfig&) = default;
};

// Decomposed cycle counts. skipped_cycles tracks what pruned tiles would
// have cost; it is reported separately and never folded into the total.
struct CycleStats {
  std::uint64_t weight_load_cycles = 0;
  std::uint64_t stream_cycles = 0;
  std::uint64_t skipped_cycles = 0;
  std::uint64_t skipped_tile_count = 0;

  std::uint64_t total_cycles() const {
    return weight_load_cycles + stream_cycles;
  }

  CycleStats& operator+=(const CycleStats& other) {
    weight_load_cycles += other.weight_load_cycles;
    stream_cycles += other.stream_cycles;
    skipped_cycles += other.skipped_cycles;
    skipped_tile_count += other.skipped_tile_count;
    return *this;
  }

  friend bool operator==(const CycleStats&, const CycleStats&) = default;
};

// Host cycles to program one full weight tile. A 32-bit bus word carries a
// single FP32 weight or four packed INT8 weights.
std::uint64_t cycles_weight_load(const ArrayConfig& cfg);

// Host cycles to stream `rows` activation rows through a programmed tile:
// one instruction per element (input and output share the 32-bit
// interface), plus the diagonal fill/drain (2T - 1) and the MAC pipeline
// drain, charged once.
std::uint64_t cycles_stream(const ArrayConfig& cfg, std::uint64_t rows);

// Custom-instruction model: program one weight word, stream one activation
// (carrying one output back), or drain the array after a tile.
struct ProgWeight {
  std::size_t row = 0;
  std::size_t col = 0;
  // FP32 mode: the weight's bit pattern. INT8 mode: four sign-magnitude
  // bytes, least significant byte first, filling consecutive row-major
  // slots starting at (row, col).
  std::uint32_t word = 0;
};

struct Stream {
  float input = 0.0f;
};

struct Flush {};

using Instr = std::variant<ProgWeight, Stream, Flush>;

// Mutable state of one simulated array: stationary weights, the PE mesh
// registers, and the peripheral skew registers that align data along the
// diagonal wavefront. Single-owner; independent instances may run in
// parallel.
class ArrayState {
 public:
  explicit ArrayState(const ArrayConfig& cfg);

  const ArrayConfig& config() const { return cfg_; }

  // Programs one 32-bit weight word. Rejected while a streaming phase is
  // open (weights are stationary until the next programming phase).
  void program_word(std::size_t row, std::size_t col, std::uint32_t word);

  // Streams one activation element. Rows assemble left to right; every
  // size-th element completes a row and advances the wavefront.
  void stream(float activation);

  // Drains in-flight rows, closes the streaming phase and re-opens
  // programming. Weights survive; mesh registers reset.
  void flush();

  // Output elements emitted so far, row-major in stream order. Moves the
  // buffer out.
  std::vector<float> take_outputs();

  // Emitted elements not yet taken.
  std::size_t pending_outputs() const { return outputs_.size(); }

  // Stationary weight read-back (stationarity checks, debugging).
  float weight_fp32(std::size_t row, std::size_t col) const;
  fparith::Int8SM weight_int8(std::size_t row, std::size_t col) const;

  const CycleStats& stats() const { return stats_; }

  void add_skipped_tile(std::uint64_t would_be_cycles);

 private:
  struct DelayLine {
    std::vector<float> buf;
    std::size_t head = 0;
    float shift(float v);
  };

  float multiply(float activation, std::size_t row, std::size_t col) const;
  void step(const float* input_row);  // nullptr streams zeros (drain)

  ArrayConfig cfg_;
  std::size_t size_;
  std::vector<float> weights_f_;
  std::vector<fparith::Int8SM> weights_q_;
  std::vector<float> act_, act_next_;
  std::vector<float> psum_, psum_next_;
  std::vector<DelayLine> in_skew_;
  std::vector<DelayLine> out_skew_;
  std::vector<float> row_buffer_;
  std::vector<float> outputs_;
  std::uint64_t steps_done_ = 0;
  std::uint64_t rows_streamed_ = 0;
  std::uint64_t rows_emitted_ = 0;
  bool programmed_ = false;
  bool streaming_ = false;
  CycleStats stats_;
};

struct TileResult {
  Matrix<float> output;  // rows x size
  CycleStats stats;
};

// Streams an input slab through one stationary weight tile on an existing
// array instance. Weight tile is size x size, slab is rows x size.
TileResult run_tile(ArrayState& array, const Matrix<float>& weight_tile,
                    const Matrix<float>& input_slab);
TileResult run_tile(ArrayState& array,
                    const Matrix<fparith::Int8SM>& weight_tile,
                    const Matrix<float>& input_slab);

// One-shot variants on a fresh array.
TileResult exec_tile(const ArrayConfig& cfg, const Matrix<float>& weight_tile,
                     const Matrix<float>& input_slab);
TileResult exec_tile(const ArrayConfig& cfg,
                     const Matrix<fparith::Int8SM>& weight_tile,
                     const Matrix<float>& input_slab);

struct ProgramResult {
  std::vector<float> outputs;
  std::uint64_t cycles = 0;
  CycleStats stats;
};

// Executes an instruction sequence on the event-driven array. The returned
// cycle count is accumulated per instruction and must agree with the
// closed-form cycles_weight_load/cycles_stream totals for the same
// schedule.
ProgramResult run_program(const ArrayConfig& cfg, std::span<const Instr> prog);

}  // namespace sasp::accel

#endif  // SASP_ACCEL_HPP_
