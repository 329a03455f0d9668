/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#include "sasp/costmodel.hpp"

#include <array>
#include <cmath>
#include <cstddef>

#include "sasp/errors.hpp"

namespace sasp::cost {

namespace {

constexpr std::array<std::size_t, 4> kCalibratedSizes = {4, 8, 16, 32};
constexpr std::array<double, 4> kAreaFp32 = {0.05, 0.21, 0.83, 3.34};
constexpr std::array<double, 4> kAreaInt8 = {0.03, 0.14, 0.53, 2.13};
constexpr double kAreaFloorMm2 = 0.005;
constexpr double kInt8PowerFactor = 1.0 - 0.195;
constexpr double kClockHz = 1.0e9;

// Solves the 3x3 system m * x = rhs by Gaussian elimination with partial
// pivoting. The normal-equation matrices here are well conditioned.
std::array<double, 3> solve3(std::array<std::array<double, 3>, 3> m,
                             std::array<double, 3> rhs) {
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::fabs(m[r][col]) > std::fabs(m[pivot][col])) pivot = r;
    }
    std::swap(m[col], m[pivot]);
    std::swap(rhs[col], rhs[pivot]);
    for (int r = col + 1; r < 3; ++r) {
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < 3; ++c) m[r][c] -= f * m[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  std::array<double, 3> x{};
  for (int r = 2; r >= 0; --r) {
    double acc = rhs[r];
    for (int c = r + 1; c < 3; ++c) acc -= m[r][c] * x[c];
    x[r] = acc / m[r][r];
  }
  return x;
}

// Weighted least squares with weights 1/y^2, so the fit minimizes relative
// residuals at the calibration points.
QuadraticFit fit_points(const std::array<double, 4>& areas) {
  std::array<std::array<double, 3>, 3> m{};
  std::array<double, 3> rhs{};
  for (std::size_t i = 0; i < kCalibratedSizes.size(); ++i) {
    const double t = static_cast<double>(kCalibratedSizes[i]);
    const double y = areas[i];
    const double w = 1.0 / (y * y);
    const std::array<double, 3> basis = {t * t, t, 1.0};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[r][c] += w * basis[r] * basis[c];
      rhs[r] += w * basis[r] * y;
    }
  }
  const std::array<double, 3> beta = solve3(m, rhs);
  return QuadraticFit{beta[0], beta[1], beta[2]};
}

const std::array<double, 4>& table_for(accel::WeightFormat format) {
  return format == accel::WeightFormat::kInt8 ? kAreaInt8 : kAreaFp32;
}

}  // namespace

bool area_is_calibrated(std::size_t size) {
  for (std::size_t s : kCalibratedSizes) {
    if (s == size) return true;
  }
  return false;
}

QuadraticFit area_fit(accel::WeightFormat format) {
  static const QuadraticFit fp32 = fit_points(kAreaFp32);
  static const QuadraticFit int8 = fit_points(kAreaInt8);
  return format == accel::WeightFormat::kInt8 ? int8 : fp32;
}

double area_model(const accel::ArrayConfig& cfg) {
  cfg.validate();
  const QuadraticFit f = area_fit(cfg.format);
  const double t = static_cast<double>(cfg.size);
  const double fitted = f.a2 * t * t + f.a1 * t + f.a0;
  return std::max(fitted, kAreaFloorMm2);
}

double area_lookup(const accel::ArrayConfig& cfg) {
  cfg.validate();
  const std::array<double, 4>& table = table_for(cfg.format);
  for (std::size_t i = 0; i < kCalibratedSizes.size(); ++i) {
    if (kCalibratedSizes[i] == cfg.size) return table[i];
  }
  return area_model(cfg);
}

double power_model(const accel::ArrayConfig& cfg) {
  cfg.validate();
  const double t = static_cast<double>(cfg.size);
  const double base = (t / 4.0) * (t / 4.0);
  return cfg.format == accel::WeightFormat::kInt8 ? base * kInt8PowerFactor
                                                  : base;
}

CostSummary energy_and_speedup(const accel::ArrayConfig& cfg,
                               const accel::CycleStats& stats,
                               std::uint64_t baseline_cycles) {
  if (baseline_cycles == 0) {
    throw ValueError("baseline cycle count must be positive");
  }
  const std::uint64_t cycles = stats.total_cycles();
  if (cycles == 0) throw ValueError("run has zero total cycles");
  CostSummary out;
  out.cost.area_mm2 = area_lookup(cfg);
  out.cost.rel_power = power_model(cfg);
  out.cost.energy = out.cost.rel_power * (static_cast<double>(cycles) / kClockHz);
  out.cost.aep = out.cost.area_mm2 * out.cost.energy;
  out.speedup = static_cast<double>(baseline_cycles) /
                static_cast<double>(cycles);
  return out;
}

}  // namespace sasp::cost
