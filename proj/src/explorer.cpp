/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#include "sasp/explorer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

#include <json.hpp>

#include "sasp/errors.hpp"
#include "sasp/gemm.hpp"
#include "sasp/pruner.hpp"

namespace sasp::explore {

namespace {

struct PointRun {
  Matrix<float> output;
  accel::CycleStats stats;
};

accel::ArrayConfig make_config(std::size_t size, accel::WeightFormat fmt) {
  accel::ArrayConfig cfg;
  cfg.size = size;
  cfg.format = fmt;
  return cfg;
}

// Holds the seeded base workload; run() is const and safe to call from
// several threads at once (each call owns its array instances).
class WorkloadRunner {
 public:
  explicit WorkloadRunner(const SweepSpec& spec) {
    if (const auto* ec = std::get_if<enc::EncoderConfig>(&spec.workload)) {
      enc::EncoderConfig cfg = *ec;
      cfg.seed = spec.seed;
      encoder_ = cfg;
      layers_ = enc::synthetic_weights(cfg);
      input_ = enc::synthetic_input(cfg);
    } else {
      const auto& wl = std::get<GemmWorkload>(spec.workload);
      gemm_ = wl;
      const double bound = 1.0 / std::sqrt(static_cast<double>(wl.k));
      weights_ = enc::planted_matrix(spec.seed, wl.k, wl.n, bound,
                                     wl.zero_block_frac);
      input_ = enc::uniform_matrix(spec.seed ^ 0x9E3779B97F4A7C15ull, wl.m,
                                   wl.k, 1.0);
    }
  }

  PointRun run(std::size_t size, accel::WeightFormat fmt, double rate) const {
    return encoder_.has_value() ? run_encoder(size, fmt, rate)
                                : run_gemm(size, fmt, rate);
  }

 private:
  PointRun run_encoder(std::size_t size, accel::WeightFormat fmt,
                       double rate) const {
    std::vector<pruner::PruneInput> inputs;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const std::string prefix = "layer" + std::to_string(l) + "/";
      inputs.push_back({prefix + "w1", &layers_[l].w1});
      inputs.push_back({prefix + "w2", &layers_[l].w2});
    }
    pruner::PruneResult pruned = pruner::global_prune(inputs, size, rate);

    std::vector<enc::LayerWeights> masked = layers_;
    enc::EncoderMasks masks;
    masks.per_layer.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const std::string prefix = "layer" + std::to_string(l) + "/";
      const pruner::TileMask& m1 = pruned.masks.at(prefix + "w1");
      const pruner::TileMask& m2 = pruned.masks.at(prefix + "w2");
      masked[l].w1 = pruner::apply_mask(layers_[l].w1, m1);
      masked[l].w2 = pruner::apply_mask(layers_[l].w2, m2);
      masks.per_layer[l].emplace("w1", m1);
      masks.per_layer[l].emplace("w2", m2);
    }
    enc::EncoderResult res = enc::encoder_forward(masked, input_, &masks,
                                                  make_config(size, fmt));
    return PointRun{std::move(res.output), res.stats.total};
  }

  PointRun run_gemm(std::size_t size, accel::WeightFormat fmt,
                    double rate) const {
    std::vector<pruner::PruneInput> inputs = {{"w", &weights_}};
    pruner::PruneResult pruned = pruner::global_prune(inputs, size, rate);
    const pruner::TileMask& mask = pruned.masks.at("w");
    const Matrix<float> masked = pruner::apply_mask(weights_, mask);

    gemm::GemmOptions opts;
    opts.array = make_config(size, fmt);
    opts.mask = &mask;
    gemm::GemmResult res =
        fmt == accel::WeightFormat::kInt8
            ? gemm::tiled_gemm(input_, fparith::quantize_weights(masked),
                               opts)
            : gemm::tiled_gemm(input_, masked, opts);
    return PointRun{std::move(res.output), res.stats};
  }

  std::optional<enc::EncoderConfig> encoder_;
  std::vector<enc::LayerWeights> layers_;
  GemmWorkload gemm_;
  Matrix<float> weights_;
  Matrix<float> input_;
};

unsigned thread_cap() {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const char* env = std::getenv("SASP_THREADS");
  if (env == nullptr || *env == '\0') return hw;
  char* end = nullptr;
  const unsigned long v = std::strtoul(env, &end, 10);
  if (end == nullptr || *end != '\0' || v == 0) return hw;
  return static_cast<unsigned>(std::min<unsigned long>(v, 256));
}

std::string point_label(accel::WeightFormat fmt, std::size_t size,
                        double rate) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "design point %s T=%zu rate=%.10g",
                accel::format_name(fmt), size, rate);
  return buf;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

template <typename T, typename Less>
std::vector<T> sorted_unique(std::vector<T> v, Less less) {
  std::sort(v.begin(), v.end(), less);
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

void SweepSpec::validate() const {
  if (sizes.empty()) throw ValueError("sweep needs at least one array size");
  if (formats.empty()) {
    throw ValueError("sweep needs at least one weight format");
  }
  if (rates.empty()) throw ValueError("sweep needs at least one pruning rate");
  for (std::size_t s : sizes) make_config(s, formats.front()).validate();
  for (double r : rates) {
    if (!(r >= 0.0 && r <= 1.0)) {
      throw ValueError("pruning rates must lie in [0, 1]");
    }
  }
  if (const auto* ec = std::get_if<enc::EncoderConfig>(&workload)) {
    ec->validate();
  } else {
    const auto& wl = std::get<GemmWorkload>(workload);
    if (wl.m == 0 || wl.k == 0 || wl.n == 0) {
      throw ValueError("GEMM workload dimensions must be positive");
    }
    if (!(wl.zero_block_frac >= 0.0 && wl.zero_block_frac <= 1.0)) {
      throw ValueError("zero_block_frac must be in [0, 1]");
    }
  }
}

std::vector<DesignPoint> run_sweep(const SweepSpec& spec) {
  spec.validate();
  const std::vector<std::size_t> sizes =
      sorted_unique(spec.sizes, std::less<std::size_t>{});
  const std::vector<accel::WeightFormat> formats = sorted_unique(
      spec.formats, [](accel::WeightFormat a, accel::WeightFormat b) {
        return static_cast<int>(a) < static_cast<int>(b);
      });
  const std::vector<double> rates =
      sorted_unique(spec.rates, std::less<double>{});

  const WorkloadRunner runner(spec);

  // Dense references: FP32 output per size (qos anchor) and dense cycles
  // per (size, format) (speedup baseline).
  std::map<std::size_t, Matrix<float>> reference;
  std::map<std::pair<std::size_t, int>, std::uint64_t> baseline;
  for (std::size_t size : sizes) {
    PointRun fp = runner.run(size, accel::WeightFormat::kFp32, 0.0);
    baseline[{size, static_cast<int>(accel::WeightFormat::kFp32)}] =
        fp.stats.total_cycles();
    reference.emplace(size, std::move(fp.output));
    for (accel::WeightFormat fmt : formats) {
      if (fmt == accel::WeightFormat::kFp32) continue;
      PointRun other = runner.run(size, fmt, 0.0);
      baseline[{size, static_cast<int>(fmt)}] = other.stats.total_cycles();
    }
  }

  struct GridEntry {
    accel::WeightFormat format;
    std::size_t size;
    double rate;
  };
  std::vector<GridEntry> grid;
  for (accel::WeightFormat fmt : formats) {
    for (std::size_t size : sizes) {
      for (double rate : rates) grid.push_back({fmt, size, rate});
    }
  }

  std::vector<DesignPoint> points(grid.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::string first_error;

  auto eval_one = [&](const GridEntry& g) {
    PointRun run = runner.run(g.size, g.format, g.rate);
    DesignPoint p;
    p.format = g.format;
    p.size = g.size;
    p.rate = g.rate;
    p.stats = run.stats;
    p.qos = enc::qos_proxy(reference.at(g.size), run.output);
    const std::uint64_t base =
        baseline.at({g.size, static_cast<int>(g.format)});
    const cost::CostSummary cs = cost::energy_and_speedup(
        make_config(g.size, g.format), run.stats, base);
    p.speedup = cs.speedup;
    p.cost = cs.cost;
    return p;
  };

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.size() || failed.load()) return;
      try {
        points[i] = eval_one(grid[i]);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) {
          first_error = point_label(grid[i].format, grid[i].size,
                                    grid[i].rate) +
                        ": " + e.what();
        }
      }
    }
  };

  const unsigned threads = static_cast<unsigned>(
      std::min<std::size_t>(thread_cap(), grid.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failed.load()) throw Error(first_error);
  return points;
}

std::vector<DesignPoint> pareto_filter(
    const std::vector<DesignPoint>& points) {
  if (points.empty()) throw ValueError("Pareto filter needs at least one point");
  auto dominates = [](const DesignPoint& a, const DesignPoint& b) {
    const bool no_worse = a.speedup >= b.speedup && a.qos <= b.qos &&
                          a.cost.aep <= b.cost.aep;
    const bool better = a.speedup > b.speedup || a.qos < b.qos ||
                        a.cost.aep < b.cost.aep;
    return no_worse && better;
  };
  std::vector<DesignPoint> front;
  for (const DesignPoint& p : points) {
    bool dominated = false;
    for (const DesignPoint& q : points) {
      if (dominates(q, p)) {
        dominated = true;
        break;
      }
    }
    if (!dominated) front.push_back(p);
  }
  return front;
}

QosRateSearch max_rate_within_qos(const std::vector<DesignPoint>& points,
                                  accel::WeightFormat format,
                                  std::size_t size, double qos_budget) {
  std::vector<std::pair<double, double>> slice;  // (rate, qos)
  for (const DesignPoint& p : points) {
    if (p.format == format && p.size == size) slice.push_back({p.rate, p.qos});
  }
  if (slice.empty()) {
    throw ValueError("no design points for the requested format and size");
  }
  std::sort(slice.begin(), slice.end());

  QosRateSearch out;
  for (std::size_t i = 0; i + 1 < slice.size(); ++i) {
    if (slice[i + 1].second < slice[i].second) {
      out.violations.push_back({slice[i].first, slice[i + 1].first});
    }
  }
  std::size_t lo = 0;
  std::size_t hi = slice.size();
  while (lo < hi) {  // first index with qos > budget, assuming monotone
    const std::size_t mid = lo + (hi - lo) / 2;
    if (slice[mid].second <= qos_budget) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  if (lo > 0) {
    out.found = true;
    out.max_rate = slice[lo - 1].first;
  }
  return out;
}

std::string to_csv(const std::vector<DesignPoint>& points) {
  std::string out =
      "format,T,rate,speedup,qos_proxy,area_mm2,rel_power,energy,aep,"
      "weight_load_cycles,stream_cycles,skipped_cycles\n";
  for (const DesignPoint& p : points) {
    out += accel::format_name(p.format);
    out += ',' + std::to_string(p.size);
    out += ',' + fmt_double(p.rate);
    out += ',' + fmt_double(p.speedup);
    out += ',' + fmt_double(p.qos);
    out += ',' + fmt_double(p.cost.area_mm2);
    out += ',' + fmt_double(p.cost.rel_power);
    out += ',' + fmt_double(p.cost.energy);
    out += ',' + fmt_double(p.cost.aep);
    out += ',' + std::to_string(p.stats.weight_load_cycles);
    out += ',' + std::to_string(p.stats.stream_cycles);
    out += ',' + std::to_string(p.stats.skipped_cycles);
    out += '\n';
  }
  return out;
}

std::string to_json(const std::vector<DesignPoint>& points) {
  nlohmann::json doc;
  doc["points"] = nlohmann::json::array();
  for (const DesignPoint& p : points) {
    nlohmann::json row;
    row["format"] = accel::format_name(p.format);
    row["T"] = p.size;
    row["rate"] = p.rate;
    row["speedup"] = p.speedup;
    row["qos_proxy"] = p.qos;
    row["area_mm2"] = p.cost.area_mm2;
    row["rel_power"] = p.cost.rel_power;
    row["energy"] = p.cost.energy;
    row["aep"] = p.cost.aep;
    row["cycles"] = {
        {"weight_load", p.stats.weight_load_cycles},
        {"stream", p.stats.stream_cycles},
        {"skipped", p.stats.skipped_cycles},
        {"skipped_tiles", p.stats.skipped_tile_count},
        {"total", p.stats.total_cycles()},
    };
    doc["points"].push_back(std::move(row));
  }
  return doc.dump(2) + "\n";
}

}  // namespace sasp::explore
