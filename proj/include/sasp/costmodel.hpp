/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#ifndef SASP_COSTMODEL_HPP_
#define SASP_COSTMODEL_HPP_

#include <cstdint>

#include "sasp/accel.hpp"

namespace sasp::cost {

// Area, power and energy for one array configuration. rel_power is
// normalized to an FP32 4x4 array; energy is rel_power times simulated
// seconds at a 1 GHz clock (normalized units, not joules).
struct HwCost {
  double area_mm2 = 0.0;
  double rel_power = 0.0;
  double energy = 0.0;
  double aep = 0.0;

  friend bool operator==(const HwCost&, const HwCost&) = default;
};

// True when a synthesized-area table entry exists for this size.
bool area_is_calibrated(std::size_t size);

// Synthesized area in mm2 for calibrated sizes (4, 8, 16, 32); any other
// size routes to area_model.
double area_lookup(const accel::ArrayConfig& cfg);

// Quadratic area trend a2*T^2 + a1*T + a0, least-squares fitted per weight
// format to the calibrated points with relative-error weighting, clamped
// to a small positive floor for degenerate tiny sizes.
double area_model(const accel::ArrayConfig& cfg);

struct QuadraticFit {
  double a2 = 0.0;
  double a1 = 0.0;
  double a0 = 0.0;
};

// Fit coefficients behind area_model (residual checks, reporting).
QuadraticFit area_fit(accel::WeightFormat format);

// (T/4)^2, times 0.805 for INT8 datapaths.
double power_model(const accel::ArrayConfig& cfg);

struct CostSummary {
  HwCost cost;
  double speedup = 0.0;
};

// Derives energy, area-energy product and speedup for a finished run.
// baseline_cycles is the dense unpruned run of the same job at the same
// configuration. Throws ValueError on zero cycles in either input.
CostSummary energy_and_speedup(const accel::ArrayConfig& cfg,
                               const accel::CycleStats& stats,
                               std::uint64_t baseline_cycles);

}  // namespace sasp::cost

#endif  // SASP_COSTMODEL_HPP_
