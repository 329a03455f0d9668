/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#ifndef SASP_EXPLORER_HPP_
#define SASP_EXPLORER_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sasp/accel.hpp"
#include "sasp/costmodel.hpp"
#include "sasp/encoder.hpp"

namespace sasp::explore {

// Standalone GEMM workload: output = A (m x k) times W (k x n) with a
// seeded weight matrix carrying near-zero 4x4 blocks to prune.
struct GemmWorkload {
  std::size_t m = 256;
  std::size_t k = 256;
  std::size_t n = 256;
  double zero_block_frac = 0.5;

  friend bool operator==(const GemmWorkload&, const GemmWorkload&) = default;
};

// The sweep grid. The seed overrides the workload's own seed, so one knob
// controls the whole sweep. Sizes, formats and rates are deduplicated and
// sorted before evaluation.
struct SweepSpec {
  std::vector<std::size_t> sizes = {4, 8, 16, 32};
  std::vector<accel::WeightFormat> formats = {accel::WeightFormat::kFp32,
                                              accel::WeightFormat::kInt8};
  std::vector<double> rates = {0.0, 0.25, 0.5};
  std::variant<enc::EncoderConfig, GemmWorkload> workload =
      enc::EncoderConfig{};
  std::uint64_t seed = 1;

  void validate() const;
};

// One evaluated (format, size, rate) configuration. speedup and qos are
// measured against the dense run at the same (size, format) and the dense
// FP32 output at the same size, respectively.
struct DesignPoint {
  accel::WeightFormat format = accel::WeightFormat::kFp32;
  std::size_t size = 0;
  double rate = 0.0;
  double speedup = 0.0;
  double qos = 0.0;
  cost::HwCost cost;
  accel::CycleStats stats;
};

// Evaluates every grid triple (independently re-pruned from the same
// seeded base weights) and returns points sorted by (format, size, rate).
// Evaluation parallelism is capped by the SASP_THREADS environment
// variable (unset or 0 = hardware concurrency); ordering and bytes do not
// depend on it. Errors carry the offending design point in the message.
std::vector<DesignPoint> run_sweep(const SweepSpec& spec);

// Points not dominated in (maximize speedup, minimize qos, minimize aep).
// Points equal on all three axes are all kept.
std::vector<DesignPoint> pareto_filter(const std::vector<DesignPoint>& points);

// Largest admissible pruning rate under a qos budget for one (format,
// size) slice of a sweep, found by bisection over the rate-sorted slice
// (treating qos as non-decreasing in rate). Adjacent rate pairs where qos
// actually decreased are reported instead of silently trusted.
struct QosRateSearch {
  bool found = false;      // false when even the smallest rate exceeds budget
  double max_rate = 0.0;   // valid when found
  std::vector<std::pair<double, double>> violations;  // (lower, higher) rate
};

QosRateSearch max_rate_within_qos(const std::vector<DesignPoint>& points,
                                  accel::WeightFormat format,
                                  std::size_t size, double qos_budget);

// Fixed column order:
// format,T,rate,speedup,qos_proxy,area_mm2,rel_power,energy,aep,
// weight_load_cycles,stream_cycles,skipped_cycles
std::string to_csv(const std::vector<DesignPoint>& points);

// Same rows with full cycle breakdowns, as a JSON document.
std::string to_json(const std::vector<DesignPoint>& points);

}  // namespace sasp::explore

#endif  // SASP_EXPLORER_HPP_
