/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sasp/accel.hpp"
#include "sasp/costmodel.hpp"
#include "sasp/encoder.hpp"
#include "sasp/errors.hpp"
#include "sasp/explorer.hpp"
#include "sasp/gemm.hpp"
#include "sasp/io.hpp"
#include "sasp/pruner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

sasp::accel::WeightFormat parse_format(const std::string& name) {
  if (name == "fp32") return sasp::accel::WeightFormat::kFp32;
  if (name == "int8") return sasp::accel::WeightFormat::kInt8;
  throw sasp::ValueError("unknown weight format: " + name);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw sasp::FormatError(path + ": cannot open for writing");
  out << text;
  if (!out) throw sasp::FormatError(path + ": write failed");
}

json stats_json(const sasp::accel::CycleStats& s) {
  return json{{"weight_load_cycles", s.weight_load_cycles},
              {"stream_cycles", s.stream_cycles},
              {"skipped_cycles", s.skipped_cycles},
              {"skipped_tiles", s.skipped_tile_count},
              {"total_cycles", s.total_cycles()}};
}

struct PruneArgs {
  std::size_t tile = 8;
  double rate = 0.0;
  std::string in_dir;
  std::string out_dir;
  std::string scope = "ff";
  std::string report_path;
};

int run_prune(const PruneArgs& args) {
  std::vector<std::string> layer_names;
  for (const fs::directory_entry& entry : fs::directory_iterator(args.in_dir)) {
    if (entry.is_directory()) {
      layer_names.push_back(entry.path().filename().string());
    }
  }
  std::sort(layer_names.begin(), layer_names.end());
  if (layer_names.empty()) {
    throw sasp::FormatError(args.in_dir + ": no layer subdirectories");
  }

  std::map<std::string, sasp::Matrix<float>> matrices;  // "layer/role"
  for (const std::string& layer : layer_names) {
    for (const char* role : sasp::enc::kGemmRoles) {
      const std::string path =
          (fs::path(args.in_dir) / layer / (std::string(role) + ".mat"))
              .string();
      sasp::io::LoadedMatrix lm = sasp::io::read_matrix(path);
      if (lm.dtype != sasp::io::Dtype::kFp32) {
        throw sasp::FormatError(path + ": pruning expects fp32 matrices");
      }
      matrices.emplace(layer + "/" + role, std::move(lm.fp32));
    }
  }

  const bool ff_only = args.scope == "ff";
  std::vector<sasp::pruner::PruneInput> inputs;
  for (const auto& [id, mat] : matrices) {
    const std::string role = id.substr(id.find('/') + 1);
    if (!ff_only || role == "w1" || role == "w2") {
      inputs.push_back({id, &mat});
    }
  }
  sasp::pruner::PruneResult result =
      sasp::pruner::global_prune(inputs, args.tile, args.rate);

  for (const std::string& layer : layer_names) {
    fs::create_directories(fs::path(args.out_dir) / layer);
    for (const char* role : sasp::enc::kGemmRoles) {
      const std::string id = layer + "/" + role;
      const fs::path out_base = fs::path(args.out_dir) / layer / role;
      const auto mask_it = result.masks.find(id);
      if (mask_it != result.masks.end()) {
        sasp::io::write_matrix(
            out_base.string() + ".mat",
            sasp::pruner::apply_mask(matrices.at(id), mask_it->second));
        sasp::io::write_mask(out_base.string() + ".mask", mask_it->second);
      } else {
        sasp::io::write_matrix(out_base.string() + ".mat", matrices.at(id));
      }
    }
  }

  const sasp::pruner::PruneReport& rep = result.report;
  if (!args.report_path.empty()) {
    json j{{"tile_size", rep.tile_size},
           {"requested_rate", rep.requested_rate},
           {"total_tiles", rep.total_tiles},
           {"pruned_tiles", rep.pruned_tiles},
           {"global_sparsity", rep.global_sparsity},
           {"l1_threshold", rep.l1_threshold}};
    json per = json::object();
    for (const sasp::pruner::MatrixPruneStats& m : rep.per_matrix) {
      per[m.id] = json{{"tiles", m.tiles},
                       {"pruned", m.pruned},
                       {"sparsity", m.sparsity}};
    }
    j["per_matrix"] = std::move(per);
    write_text(args.report_path, j.dump(2) + "\n");
  }
  std::printf("pruned %zu of %zu tiles (global sparsity %.10g)\n",
              rep.pruned_tiles, rep.total_tiles, rep.global_sparsity);
  return 0;
}

struct GemmArgs {
  std::string weights_path;
  std::string inputs_path;
  std::string mask_path;
  std::string out_path;
  std::string stats_path;
  std::size_t size = 8;
  std::string format = "fp32";
};

int run_gemm(const GemmArgs& args) {
  sasp::io::LoadedMatrix weights = sasp::io::read_matrix(args.weights_path);
  sasp::io::LoadedMatrix inputs = sasp::io::read_matrix(args.inputs_path);
  if (inputs.dtype != sasp::io::Dtype::kFp32) {
    throw sasp::FormatError(args.inputs_path +
                            ": activations must be fp32");
  }

  sasp::gemm::GemmOptions opts;
  opts.array.size = args.size;
  opts.array.format = parse_format(args.format);

  const std::size_t wrows = weights.dtype == sasp::io::Dtype::kFp32
                                ? weights.fp32.rows()
                                : weights.int8.values.rows();
  const std::size_t wcols = weights.dtype == sasp::io::Dtype::kFp32
                                ? weights.fp32.cols()
                                : weights.int8.values.cols();
  std::optional<sasp::pruner::TileMask> mask;
  if (!args.mask_path.empty()) {
    mask = sasp::io::bind_mask(sasp::io::read_mask(args.mask_path), wrows,
                               wcols);
    opts.mask = &*mask;
  }

  sasp::gemm::GemmResult result = [&] {
    if (opts.array.format == sasp::accel::WeightFormat::kFp32) {
      if (weights.dtype != sasp::io::Dtype::kFp32) {
        throw sasp::FormatError(args.weights_path +
                                ": int8 weights cannot run on an fp32 array");
      }
      return sasp::gemm::tiled_gemm(inputs.fp32, weights.fp32, opts);
    }
    const sasp::fparith::QuantizedTensor quant =
        weights.dtype == sasp::io::Dtype::kInt8
            ? std::move(weights.int8)
            : sasp::fparith::quantize_weights(weights.fp32);
    return sasp::gemm::tiled_gemm(inputs.fp32, quant, opts);
  }();

  sasp::io::write_matrix(args.out_path, result.output);
  if (!args.stats_path.empty()) {
    write_text(args.stats_path, stats_json(result.stats).dump(2) + "\n");
  }
  std::printf("cycles total=%llu weight_load=%llu stream=%llu skipped=%llu\n",
              static_cast<unsigned long long>(result.stats.total_cycles()),
              static_cast<unsigned long long>(result.stats.weight_load_cycles),
              static_cast<unsigned long long>(result.stats.stream_cycles),
              static_cast<unsigned long long>(result.stats.skipped_cycles));
  return 0;
}

struct SweepArgs {
  std::vector<std::size_t> sizes = {4, 8, 16, 32};
  std::vector<std::string> formats = {"fp32", "int8"};
  std::vector<double> rates = {0.0, 0.25, 0.5};
  std::size_t layers = 2;
  std::size_t dmodel = 64;
  std::size_t dff = 256;
  std::size_t seqlen = 32;
  double zero_frac = 0.5;
  double decay = 0.8;
  std::uint64_t seed = 1;
  std::string csv_path;
  std::string json_path;
};

int run_sweep(const SweepArgs& args) {
  sasp::explore::SweepSpec spec;
  spec.sizes = args.sizes;
  spec.rates = args.rates;
  spec.formats.clear();
  for (const std::string& f : args.formats) {
    spec.formats.push_back(parse_format(f));
  }
  sasp::enc::EncoderConfig cfg;
  cfg.layers = args.layers;
  cfg.d_model = args.dmodel;
  cfg.d_ff = args.dff;
  cfg.seq_len = args.seqlen;
  cfg.zero_block_frac = args.zero_frac;
  cfg.layer_decay = args.decay;
  spec.workload = cfg;
  spec.seed = args.seed;

  const std::vector<sasp::explore::DesignPoint> points =
      sasp::explore::run_sweep(spec);
  const std::string csv = sasp::explore::to_csv(points);
  if (!args.csv_path.empty()) write_text(args.csv_path, csv);
  if (!args.json_path.empty()) {
    write_text(args.json_path, sasp::explore::to_json(points));
  }
  if (args.csv_path.empty() && args.json_path.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    std::printf("evaluated %zu design points\n", points.size());
  }
  return 0;
}

struct CostArgs {
  std::size_t size = 8;
  std::string format = "fp32";
};

int run_cost(const CostArgs& args) {
  sasp::accel::ArrayConfig cfg;
  cfg.size = args.size;
  cfg.format = parse_format(args.format);
  const bool calibrated = sasp::cost::area_is_calibrated(cfg.size);
  std::printf("T %zu\nformat %s\narea_mm2 %.10g (%s)\nrel_power %.10g\n",
              cfg.size, sasp::accel::format_name(cfg.format),
              sasp::cost::area_lookup(cfg), calibrated ? "lookup" : "fitted",
              sasp::cost::power_model(cfg));
  return 0;
}

int run_dump(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw sasp::FormatError(path + ": cannot open for reading");
  char magic[4] = {};
  probe.read(magic, 4);
  probe.close();

  if (std::equal(magic, magic + 4, sasp::io::kMatrixMagic)) {
    sasp::io::LoadedMatrix lm = sasp::io::read_matrix(path);
    const bool fp32 = lm.dtype == sasp::io::Dtype::kFp32;
    const std::size_t rows = fp32 ? lm.fp32.rows() : lm.int8.values.rows();
    const std::size_t cols = fp32 ? lm.fp32.cols() : lm.int8.values.cols();
    std::printf("matrix %zu x %zu dtype %s", rows, cols,
                fp32 ? "fp32" : "int8");
    if (!fp32) std::printf(" scale %.10g", lm.int8.scale.scale);
    std::printf("\n");
    const std::size_t show_r = std::min<std::size_t>(rows, 8);
    const std::size_t show_c = std::min<std::size_t>(cols, 8);
    for (std::size_t r = 0; r < show_r; ++r) {
      for (std::size_t c = 0; c < show_c; ++c) {
        if (fp32) {
          std::printf("% .6g", lm.fp32(r, c));
        } else {
          std::printf("%4d", lm.int8.values(r, c).to_int());
        }
        std::printf(c + 1 == show_c ? "" : " ");
      }
      std::printf(show_c < cols ? " ...\n" : "\n");
    }
    if (show_r < rows) std::printf("...\n");
    return 0;
  }
  if (std::equal(magic, magic + 4, sasp::io::kMaskMagic)) {
    const sasp::pruner::TileMask mask = sasp::io::read_mask(path);
    std::printf("mask tile %zu grid %zu x %zu (keep '#', prune '.')\n",
                mask.grid.tile_size, mask.grid.grid_rows,
                mask.grid.grid_cols);
    for (std::size_t r = 0; r < mask.grid.grid_rows; ++r) {
      for (std::size_t c = 0; c < mask.grid.grid_cols; ++c) {
        std::putchar(mask.kept(r, c) ? '#' : '.');
      }
      std::putchar('\n');
    }
    return 0;
  }
  throw sasp::FormatError(path + ": not a matrix or mask file");
}

struct GenEncoderArgs {
  std::string out_dir;
  std::size_t layers = 2;
  std::size_t dmodel = 64;
  std::size_t dff = 256;
  double zero_frac = 0.5;
  double decay = 0.8;
  std::uint64_t seed = 1;
};

int run_gen_encoder(const GenEncoderArgs& args) {
  sasp::enc::EncoderConfig cfg;
  cfg.layers = args.layers;
  cfg.d_model = args.dmodel;
  cfg.d_ff = args.dff;
  cfg.zero_block_frac = args.zero_frac;
  cfg.layer_decay = args.decay;
  cfg.seed = args.seed;
  const std::vector<sasp::enc::LayerWeights> layers =
      sasp::enc::synthetic_weights(cfg);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const fs::path dir = fs::path(args.out_dir) / ("layer" + std::to_string(l));
    fs::create_directories(dir);
    const sasp::enc::LayerWeights& lw = layers[l];
    const std::pair<const char*, const sasp::Matrix<float>*> files[] = {
        {"w_q", &lw.w_q}, {"w_k", &lw.w_k}, {"w_v", &lw.w_v},
        {"w_o", &lw.w_o}, {"w1", &lw.w1},   {"w2", &lw.w2},
    };
    for (const auto& [role, mat] : files) {
      sasp::io::write_matrix((dir / (std::string(role) + ".mat")).string(),
                             *mat);
    }
  }
  std::printf("wrote %zu layers to %s\n", layers.size(),
              args.out_dir.c_str());
  return 0;
}

struct GenMatrixArgs {
  std::string out_path;
  std::size_t rows = 64;
  std::size_t cols = 64;
  double amplitude = 1.0;
  double planted = -1.0;
  std::uint64_t seed = 1;
};

int run_gen_matrix(const GenMatrixArgs& args) {
  sasp::Matrix<float> m =
      args.planted >= 0.0
          ? sasp::enc::planted_matrix(
                args.seed, args.rows, args.cols,
                1.0 / std::sqrt(static_cast<double>(args.rows)),
                args.planted)
          : sasp::enc::uniform_matrix(args.seed, args.rows, args.cols,
                                      args.amplitude);
  sasp::io::write_matrix(args.out_path, m);
  std::printf("wrote %zu x %zu matrix to %s\n", args.rows, args.cols,
              args.out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"systolic array structured pruning toolkit"};
  app.require_subcommand(1);

  PruneArgs prune_args;
  CLI::App* prune = app.add_subcommand(
      "prune", "globally prune weight tiles by L1 norm");
  prune->add_option("--tile", prune_args.tile, "tile size")->required();
  prune->add_option("--rate", prune_args.rate, "fraction of tiles to prune")
      ->required();
  prune->add_option("--in", prune_args.in_dir, "input model directory")
      ->required();
  prune->add_option("--out", prune_args.out_dir, "output model directory")
      ->required();
  prune->add_option("--scope", prune_args.scope, "matrices to prune")
      ->check(CLI::IsMember({"ff", "all"}));
  prune->add_option("--report", prune_args.report_path, "JSON report path");

  GemmArgs gemm_args;
  CLI::App* gemm = app.add_subcommand(
      "gemm", "run one GEMM through the simulated array");
  gemm->add_option("--weights", gemm_args.weights_path)->required();
  gemm->add_option("--inputs", gemm_args.inputs_path)->required();
  gemm->add_option("--mask", gemm_args.mask_path, "tile skip mask");
  gemm->add_option("--out", gemm_args.out_path, "output matrix path")
      ->required();
  gemm->add_option("--stats", gemm_args.stats_path, "JSON cycle stats path");
  gemm->add_option("--size", gemm_args.size, "array size");
  gemm->add_option("--format", gemm_args.format)
      ->check(CLI::IsMember({"fp32", "int8"}));

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "design-space sweep over size, format and pruning rate");
  sweep->add_option("--sizes", sweep_args.sizes)->delimiter(',');
  sweep->add_option("--formats", sweep_args.formats)
      ->delimiter(',')
      ->check(CLI::IsMember({"fp32", "int8"}));
  sweep->add_option("--rates", sweep_args.rates)->delimiter(',');
  sweep->add_option("--layers", sweep_args.layers);
  sweep->add_option("--dmodel", sweep_args.dmodel);
  sweep->add_option("--dff", sweep_args.dff);
  sweep->add_option("--seqlen", sweep_args.seqlen);
  sweep->add_option("--zero-frac", sweep_args.zero_frac,
                    "near-zero 4x4 block density in layer 0");
  sweep->add_option("--decay", sweep_args.decay,
                    "per-layer decay of that density");
  sweep->add_option("--seed", sweep_args.seed);
  sweep->add_option("--csv", sweep_args.csv_path);
  sweep->add_option("--json", sweep_args.json_path);

  CostArgs cost_args;
  CLI::App* cost = app.add_subcommand("cost", "area and power for one config");
  cost->add_option("--size", cost_args.size);
  cost->add_option("--format", cost_args.format)
      ->check(CLI::IsMember({"fp32", "int8"}));

  std::string dump_path;
  CLI::App* dump = app.add_subcommand("dump", "render a matrix or mask file");
  dump->add_option("--in", dump_path)->required();

  CLI::App* gen = app.add_subcommand("gen", "generate synthetic inputs");
  gen->require_subcommand(1);
  GenEncoderArgs gen_enc_args;
  CLI::App* gen_enc = gen->add_subcommand(
      "encoder", "write a synthetic encoder model directory");
  gen_enc->add_option("--out", gen_enc_args.out_dir)->required();
  gen_enc->add_option("--layers", gen_enc_args.layers);
  gen_enc->add_option("--dmodel", gen_enc_args.dmodel);
  gen_enc->add_option("--dff", gen_enc_args.dff);
  gen_enc->add_option("--zero-frac", gen_enc_args.zero_frac);
  gen_enc->add_option("--decay", gen_enc_args.decay);
  gen_enc->add_option("--seed", gen_enc_args.seed);
  GenMatrixArgs gen_mat_args;
  CLI::App* gen_mat = gen->add_subcommand("matrix", "write one matrix file");
  gen_mat->add_option("--out", gen_mat_args.out_path)->required();
  gen_mat->add_option("--rows", gen_mat_args.rows);
  gen_mat->add_option("--cols", gen_mat_args.cols);
  gen_mat->add_option("--amplitude", gen_mat_args.amplitude);
  gen_mat->add_option("--planted", gen_mat_args.planted,
                      "near-zero 4x4 block density (off when negative)");
  gen_mat->add_option("--seed", gen_mat_args.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 3;
  }

  try {
    if (prune->parsed()) return run_prune(prune_args);
    if (gemm->parsed()) return run_gemm(gemm_args);
    if (sweep->parsed()) return run_sweep(sweep_args);
    if (cost->parsed()) return run_cost(cost_args);
    if (dump->parsed()) return run_dump(dump_path);
    if (gen->parsed()) {
      if (gen_enc->parsed()) return run_gen_encoder(gen_enc_args);
      if (gen_mat->parsed()) return run_gen_matrix(gen_mat_args);
    }
  } catch (const sasp::IntegrityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const sasp::ValueError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
