/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#include "sasp/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "sasp/errors.hpp"
#include "sasp/fparith.hpp"

namespace sasp::enc {

namespace {

constexpr std::size_t kPlantBlock = 4;
constexpr double kNearZeroAmp = 1e-4;
constexpr double kBiasAmp = 0.01;
constexpr float kLayerNormEps = 1e-5f;

// Deterministic uniform draws: fixed generator, fixed 53-bit conversion,
// no distribution objects (their output is library-dependent).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  double uniform_pm(double amplitude) {
    return (2.0 * uniform() - 1.0) * amplitude;
  }

 private:
  std::mt19937_64 gen_;
};

Matrix<float> dense_random(Rng& rng, std::size_t rows, std::size_t cols,
                           double bound) {
  Matrix<float> m(rows, cols);
  for (float& v : m) v = static_cast<float>(rng.uniform_pm(bound));
  return m;
}

// Fills rows x cols where each 4x4 block is, with probability `density`,
// drawn at near-zero amplitude instead of the usual fan-in bound. Blocks
// are visited row-major; elements within a block row-major.
Matrix<float> planted_random(Rng& rng, std::size_t rows, std::size_t cols,
                             double bound, double density) {
  Matrix<float> m(rows, cols);
  const std::size_t brows = (rows + kPlantBlock - 1) / kPlantBlock;
  const std::size_t bcols = (cols + kPlantBlock - 1) / kPlantBlock;
  for (std::size_t bi = 0; bi < brows; ++bi) {
    for (std::size_t bj = 0; bj < bcols; ++bj) {
      const bool near_zero = rng.uniform() < density;
      const double amp = near_zero ? kNearZeroAmp : bound;
      for (std::size_t r = bi * kPlantBlock;
           r < std::min(rows, (bi + 1) * kPlantBlock); ++r) {
        for (std::size_t c = bj * kPlantBlock;
             c < std::min(cols, (bj + 1) * kPlantBlock); ++c) {
          m(r, c) = static_cast<float>(rng.uniform_pm(amp));
        }
      }
    }
  }
  return m;
}

std::vector<float> random_bias(Rng& rng, std::size_t n) {
  std::vector<float> b(n);
  for (float& v : b) v = static_cast<float>(rng.uniform_pm(kBiasAmp));
  return b;
}

void add_bias(Matrix<float>& m, const std::vector<float>& bias) {
  if (bias.size() != m.cols()) {
    throw DimensionError("bias length does not match matrix width");
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    float* row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += bias[c];
  }
}

Matrix<float> matmul(const Matrix<float>& a, const Matrix<float>& b) {
  if (a.cols() != b.rows()) throw DimensionError("host matmul shape mismatch");
  Matrix<float> out(a.rows(), b.cols(), 0.0f);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const float av = a(i, k);
      const float* brow = b.row(k);
      float* orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

// a (m x k) times b-transposed (n x k) -> m x n.
Matrix<float> matmul_nt(const Matrix<float>& a, const Matrix<float>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("host matmul-nt shape mismatch");
  }
  Matrix<float> out(a.rows(), b.rows(), 0.0f);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      float acc = 0.0f;
      const float* arow = a.row(i);
      const float* brow = b.row(j);
      for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
      out(i, j) = acc;
    }
  }
  return out;
}

void softmax_rows(Matrix<float>& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    float* row = m.row(r);
    float mx = row[0];
    for (std::size_t c = 1; c < m.cols(); ++c) mx = std::max(mx, row[c]);
    float sum = 0.0f;
    for (std::size_t c = 0; c < m.cols(); ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] /= sum;
  }
}

void layer_norm_rows(Matrix<float>& m) {
  const float n = static_cast<float>(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    float* row = m.row(r);
    float mean = 0.0f;
    for (std::size_t c = 0; c < m.cols(); ++c) mean += row[c];
    mean /= n;
    float var = 0.0f;
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const float d = row[c] - mean;
      var += d * d;
    }
    var /= n;
    const float inv = 1.0f / std::sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] = (row[c] - mean) * inv;
  }
}

void add_inplace(Matrix<float>& a, const Matrix<float>& b) {
  for (std::size_t i = 0; i < a.rows() * a.cols(); ++i) {
    a.data()[i] += b.data()[i];
  }
}

void check_layer_dims(const LayerWeights& lw, std::size_t d_model,
                      std::size_t layer_index) {
  const std::string where = "layer " + std::to_string(layer_index);
  auto square = [&](const Matrix<float>& w, const char* role) {
    if (w.rows() != d_model || w.cols() != d_model) {
      throw DimensionError(where + " " + role + " is not d_model x d_model");
    }
  };
  square(lw.w_q, "w_q");
  square(lw.w_k, "w_k");
  square(lw.w_v, "w_v");
  square(lw.w_o, "w_o");
  if (lw.w1.rows() != d_model) {
    throw DimensionError(where + " w1 rows do not match d_model");
  }
  if (lw.w2.rows() != lw.w1.cols() || lw.w2.cols() != d_model) {
    throw DimensionError(where + " w2 shape does not mirror w1");
  }
  auto bias = [&](const std::vector<float>& b, std::size_t n,
                  const char* role) {
    if (b.size() != n) {
      throw DimensionError(where + " " + role + " bias length mismatch");
    }
  };
  bias(lw.b_q, d_model, "w_q");
  bias(lw.b_k, d_model, "w_k");
  bias(lw.b_v, d_model, "w_v");
  bias(lw.b_o, d_model, "w_o");
  bias(lw.b1, lw.w1.cols(), "w1");
  bias(lw.b2, d_model, "w2");
}

bool is_role(const std::string& name) {
  for (const char* role : kGemmRoles) {
    if (name == role) return true;
  }
  return false;
}

const pruner::TileMask* find_mask(const EncoderMasks* masks,
                                  std::size_t layer, const char* role) {
  if (masks == nullptr || layer >= masks->per_layer.size()) return nullptr;
  const auto it = masks->per_layer[layer].find(role);
  return it == masks->per_layer[layer].end() ? nullptr : &it->second;
}

// Flop accounting for the configuration-level GEMM-dominance check. GEMMs
// count 2mnk; softmax 5/elem, layer norm 7/elem, bias/residual/ReLU 1/elem.
void count_flops(EncoderRunStats& stats, std::size_t seq, std::size_t d,
                 std::size_t dff, std::size_t layers) {
  const double L = static_cast<double>(seq);
  const double D = static_cast<double>(d);
  const double F = static_cast<double>(dff);
  const double accel = 8.0 * L * D * D + 4.0 * L * D * F;
  const double host = 2.0 * L * L * D   // scores = Q K^T
                      + L * L           // 1/sqrt(d_head) scaling
                      + 5.0 * L * L     // row softmax
                      + 2.0 * L * L * D // context = scores V
                      + 4.0 * L * D     // q/k/v/o biases
                      + 2.0 * L * D     // two residual adds
                      + 14.0 * L * D    // two layer norms
                      + 2.0 * L * F     // b1 + ReLU
                      + L * D;          // b2
  stats.accel_flops += accel * static_cast<double>(layers);
  stats.host_flops += host * static_cast<double>(layers);
}

}  // namespace

void EncoderConfig::validate() const {
  if (d_model == 0 || d_ff == 0 || seq_len == 0 || layers == 0) {
    throw ValueError("encoder dimensions must be positive");
  }
  if (!(zero_block_frac >= 0.0 && zero_block_frac <= 1.0)) {
    throw ValueError("zero_block_frac must be in [0, 1]");
  }
  if (!(layer_decay > 0.0 && layer_decay <= 1.0)) {
    throw ValueError("layer_decay must be in (0, 1]");
  }
}

std::vector<LayerWeights> synthetic_weights(const EncoderConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const double proj_bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  const double ff2_bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_ff));
  std::vector<LayerWeights> layers;
  layers.reserve(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const double density =
        cfg.zero_block_frac * std::pow(cfg.layer_decay, static_cast<double>(l));
    LayerWeights lw;
    lw.w_q = dense_random(rng, cfg.d_model, cfg.d_model, proj_bound);
    lw.w_k = dense_random(rng, cfg.d_model, cfg.d_model, proj_bound);
    lw.w_v = dense_random(rng, cfg.d_model, cfg.d_model, proj_bound);
    lw.w_o = dense_random(rng, cfg.d_model, cfg.d_model, proj_bound);
    lw.w1 = planted_random(rng, cfg.d_model, cfg.d_ff, proj_bound, density);
    lw.w2 = planted_random(rng, cfg.d_ff, cfg.d_model, ff2_bound, density);
    lw.b_q = random_bias(rng, cfg.d_model);
    lw.b_k = random_bias(rng, cfg.d_model);
    lw.b_v = random_bias(rng, cfg.d_model);
    lw.b_o = random_bias(rng, cfg.d_model);
    lw.b1 = random_bias(rng, cfg.d_ff);
    lw.b2 = random_bias(rng, cfg.d_model);
    layers.push_back(std::move(lw));
  }
  return layers;
}

Matrix<float> synthetic_input(const EncoderConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  return dense_random(rng, cfg.seq_len, cfg.d_model, 1.0);
}

Matrix<float> uniform_matrix(std::uint64_t seed, std::size_t rows,
                             std::size_t cols, double amplitude) {
  Rng rng(seed);
  return dense_random(rng, rows, cols, amplitude);
}

Matrix<float> planted_matrix(std::uint64_t seed, std::size_t rows,
                             std::size_t cols, double bound,
                             double near_zero_density) {
  Rng rng(seed);
  return planted_random(rng, rows, cols, bound, near_zero_density);
}

EncoderResult encoder_forward(const std::vector<LayerWeights>& layers,
                              const Matrix<float>& x,
                              const EncoderMasks* masks,
                              const accel::ArrayConfig& cfg) {
  cfg.validate();
  if (layers.empty()) throw ValueError("encoder needs at least one layer");
  const std::size_t d_model = x.cols();
  const std::size_t d_ff = layers.front().w1.cols();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    check_layer_dims(layers[l], d_model, l);
    if (layers[l].w1.cols() != d_ff) {
      throw DimensionError("layers disagree on the feed-forward width");
    }
  }
  if (masks != nullptr) {
    if (masks->per_layer.size() != layers.size()) {
      throw DimensionError("mask set does not cover every layer");
    }
    for (const auto& layer_masks : masks->per_layer) {
      for (const auto& [role, unused] : layer_masks) {
        if (!is_role(role)) throw ValueError("unknown GEMM role: " + role);
        if (masks->feed_forward_only && role != "w1" && role != "w2") {
          throw ValueError("mask on attention projection " + role +
                           " while the feed-forward-only policy is active");
        }
      }
    }
  }

  const bool int8 = cfg.format == accel::WeightFormat::kInt8;
  const float scale_qk =
      1.0f / std::sqrt(static_cast<float>(d_model));

  EncoderResult result;
  result.stats.layers.reserve(layers.size());
  Matrix<float> cur = x;

  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerWeights& lw = layers[l];
    LayerRunStats lstats;
    auto accel_gemm = [&](const char* role, const Matrix<float>& input,
                          const Matrix<float>& weights) {
      gemm::GemmOptions opts;
      opts.array = cfg;
      opts.mask = find_mask(masks, l, role);
      gemm::GemmResult res =
          int8 ? gemm::tiled_gemm(input, fparith::quantize_weights(weights),
                                  opts)
               : gemm::tiled_gemm(input, weights, opts);
      GemmRunStats gs;
      gs.role = role;
      gs.stats = res.stats;
      gs.dense_cycles = gemm::dense_equivalent_cycles(
          input.rows(), weights.rows(), weights.cols(), cfg);
      lstats.gemms.push_back(gs);
      lstats.total += res.stats;
      lstats.dense_cycles += gs.dense_cycles;
      return std::move(res.output);
    };

    Matrix<float> q = accel_gemm("w_q", cur, lw.w_q);
    add_bias(q, lw.b_q);
    Matrix<float> k = accel_gemm("w_k", cur, lw.w_k);
    add_bias(k, lw.b_k);
    Matrix<float> v = accel_gemm("w_v", cur, lw.w_v);
    add_bias(v, lw.b_v);

    Matrix<float> scores = matmul_nt(q, k);
    for (float& s : scores) s *= scale_qk;
    softmax_rows(scores);
    Matrix<float> context = matmul(scores, v);

    Matrix<float> att = accel_gemm("w_o", context, lw.w_o);
    add_bias(att, lw.b_o);
    add_inplace(att, cur);
    layer_norm_rows(att);

    Matrix<float> hidden = accel_gemm("w1", att, lw.w1);
    add_bias(hidden, lw.b1);
    for (float& h : hidden) h = std::max(h, 0.0f);
    Matrix<float> ff = accel_gemm("w2", hidden, lw.w2);
    add_bias(ff, lw.b2);
    add_inplace(ff, att);
    layer_norm_rows(ff);

    lstats.normalized_runtime =
        static_cast<double>(lstats.total.total_cycles()) /
        static_cast<double>(lstats.dense_cycles);
    result.stats.total += lstats.total;
    result.stats.layers.push_back(std::move(lstats));
    cur = std::move(ff);
  }

  count_flops(result.stats, x.rows(), d_model, d_ff, layers.size());
  result.output = std::move(cur);
  return result;
}

double qos_proxy(const Matrix<float>& reference, const Matrix<float>& test) {
  if (reference.rows() != test.rows() || reference.cols() != test.cols()) {
    throw DimensionError("outputs to compare have different shapes");
  }
  double ref_sq = 0.0;
  double diff_sq = 0.0;
  for (std::size_t i = 0; i < reference.rows() * reference.cols(); ++i) {
    const double r = reference.data()[i];
    const double d = static_cast<double>(test.data()[i]) - r;
    ref_sq += r * r;
    diff_sq += d * d;
  }
  if (ref_sq == 0.0) throw ValueError("reference output has zero norm");
  return std::sqrt(diff_sq) / std::sqrt(ref_sq);
}

}  // namespace sasp::enc
