/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#ifndef SASP_ENCODER_HPP_
#define SASP_ENCODER_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sasp/accel.hpp"
#include "sasp/gemm.hpp"
#include "sasp/matrix.hpp"
#include "sasp/pruner.hpp"

namespace sasp::enc {

// Desk-scale encoder shape plus the synthetic-weight knobs. The planted
// near-zero 4x4 blocks give structured pruning something to find; their
// density decays per layer so later layers are less prunable.
struct EncoderConfig {
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t seq_len = 32;
  std::size_t layers = 2;
  double zero_block_frac = 0.5;
  double layer_decay = 0.8;
  std::uint64_t seed = 1;

  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// One encoder layer: four attention projections, two feed-forward
// matrices, and their bias vectors.
struct LayerWeights {
  Matrix<float> w_q, w_k, w_v, w_o;  // d_model x d_model
  Matrix<float> w1;                  // d_model x d_ff
  Matrix<float> w2;                  // d_ff x d_model
  std::vector<float> b_q, b_k, b_v, b_o;
  std::vector<float> b1, b2;
};

// Names of the six accelerated weight GEMMs, in execution order. Also the
// mask keys and the on-disk file stems.
inline constexpr const char* kGemmRoles[6] = {"w_q", "w_k", "w_v",
                                              "w_o", "w1", "w2"};

// Deterministic synthetic weights/input for a config (fixed draw order,
// fixed generator), so equal seeds give bit-identical tensors.
std::vector<LayerWeights> synthetic_weights(const EncoderConfig& cfg);
Matrix<float> synthetic_input(const EncoderConfig& cfg);

// Seeded standalone tensors: elements uniform in +-amplitude, and a
// variant where each 4x4 block is near-zero with the given probability
// (the pruning signal for standalone GEMM workloads).
Matrix<float> uniform_matrix(std::uint64_t seed, std::size_t rows,
                             std::size_t cols, double amplitude);
Matrix<float> planted_matrix(std::uint64_t seed, std::size_t rows,
                             std::size_t cols, double bound,
                             double near_zero_density);

// Per-layer tile masks keyed by GEMM role. Roles without a mask run dense.
// With feed_forward_only set (the default policy), masks on attention
// projections are rejected.
struct EncoderMasks {
  std::vector<std::map<std::string, pruner::TileMask>> per_layer;
  bool feed_forward_only = true;
};

struct GemmRunStats {
  std::string role;
  accel::CycleStats stats;
  std::uint64_t dense_cycles = 0;
};

struct LayerRunStats {
  std::vector<GemmRunStats> gemms;
  accel::CycleStats total;
  std::uint64_t dense_cycles = 0;
  // total.total_cycles() / dense_cycles; 1.0 when nothing is pruned.
  double normalized_runtime = 1.0;
};

struct EncoderRunStats {
  std::vector<LayerRunStats> layers;
  accel::CycleStats total;
  double accel_flops = 0.0;
  double host_flops = 0.0;

  double accel_flop_fraction() const {
    return accel_flops / (accel_flops + host_flops);
  }
};

struct EncoderResult {
  Matrix<float> output;
  EncoderRunStats stats;
};

// Runs x (seq_len x d_model) through the layers. Per layer: Q/K/V
// projections, scaled dot-product attention with row softmax (single head,
// head width = d_model), output projection, residual + layer norm, then
// ReLU feed-forward with residual + layer norm. The six weight GEMMs
// dispatch through the simulated array (quantized per tensor when cfg is
// INT8); softmax, layer norm, residuals, biases and the two
// activation-activation products stay on the host in FP32. Cycle stats
// cover the accelerated GEMMs only.
EncoderResult encoder_forward(const std::vector<LayerWeights>& layers,
                              const Matrix<float>& x,
                              const EncoderMasks* masks,
                              const accel::ArrayConfig& cfg);

// Relative output error: ||test - reference||_F / ||reference||_F.
// Zero iff bit-identical; throws ValueError on shape mismatch or a
// zero-norm reference.
double qos_proxy(const Matrix<float>& reference, const Matrix<float>& test);

}  // namespace sasp::enc

#endif  // SASP_ENCODER_HPP_
