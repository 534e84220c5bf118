#pragma once

#include "mrxfer/cascade.hpp"
#include "mrxfer/cs.hpp"
#include "mrxfer/datasim.hpp"
#include "mrxfer/training.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mrxfer {

// Grid configuration (JSON). Every key except source and target is optional.
//
//   {
//     "source": DomainSpec, "target": DomainSpec,
//     "accel": [4], "n_train": [64], "n_tune": [0, 8], "seeds": [0],
//     "calib_size": 0, "mask_bank_size": 100, "mask_seed": 0,
//     "architecture": {"subnets": 5, "hidden_channels": 64, "hidden_layers": 3, "lambda_dc": "inf"},
//     "train": {"lr", "beta1", "beta2", "adam_eps", "weight_decay", "batch",
//               "epochs_per_subnet", "finetune_lr", "finetune_epochs"},
//     "kernel": {"calib_size": 24, "width": 7, "tikhonov": 0.01},
//     "reference": {"enabled": false, "n_train": 64},
//     "baselines": ["zf", "cs", "spirit"],
//     "cs": {"lambda_l1": 1e-3, "iters": 80},
//     "spirit": {"lambda_l1": 1e-3, "iters": 0},
//     "plots": false
//   }
//
// DomainSpec: {"kind", "size", "coils", "coil_map_variants", "map_seed",
// "splits": {"train": {"seed_begin", "count"}, "tune": {...}, "test": {...}}}.
// The cascade mode follows the coil count. "spirit.iters" 0 selects the
// per-acceleration default.

struct ReferenceConfig {
  bool enabled = false;
  std::size_t n_train = 0;
};

struct GridConfig {
  DomainSpec source;
  DomainSpec target;
  std::vector<double> accel{4.0};
  std::vector<std::size_t> n_train;
  std::vector<std::size_t> n_tune{0};
  std::vector<std::uint64_t> seeds{0};
  std::size_t calib_size = 0;
  std::size_t mask_bank_size = 100;
  std::uint64_t mask_seed = 0;
  ArchitectureConfig arch;
  TrainConfig train;
  KernelSettings kernel;
  ReferenceConfig reference;
  std::vector<std::string> baselines;
  CsParams cs;
  double spirit_lambda_l1 = 1e-3;
  int spirit_iters = 0;
  bool plots = false;

  /// Throws std::invalid_argument on an empty axis, mismatched domains or a
  /// baseline that does not apply to the coil count.
  void validate() const;
};

GridConfig parse_grid_config(const std::string &json_text);
GridConfig load_grid_config(const std::filesystem::path &path);
/// Fully resolved configuration, defaults included.
std::string to_json(const GridConfig &config);

std::string domain_spec_json(const DomainSpec &spec);
DomainSpec parse_domain_spec(const std::string &json_text);

/// One CSV row. Per-image rows have agg = false and n = 1. Aggregate rows
/// pool every image of every seed for one (method, R, n_train, n_tune).
struct MetricsRecord {
  bool agg = false;
  std::string method;
  double accel = 0.0;
  std::size_t n_train = 0;
  std::size_t n_tune = 0;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> image_id;
  double psnr = 0.0;
  double ssim = 0.0;
  double psnr_std = 0.0;
  double ssim_std = 0.0;
  std::size_t n = 0;
  /// "ok" or "error: <message>".
  std::string status = "ok";
};

struct ConvergenceRecord {
  double accel = 0.0;
  std::size_t n_train = 0;
  double ref_psnr = 0.0;
  /// "target" when a target-trained model supplied ref_psnr, else "max_n_tune".
  std::string ref_source;
  double n_converged = 0.0;
  bool converged = false;
};

struct ExperimentResult {
  std::vector<MetricsRecord> records;
  std::vector<ConvergenceRecord> convergence;
};

/// Runs the grid. Base models are trained once per (R, seed, n_train) and
/// fine-tuned for every n_tune; a failing cell yields error rows and the
/// run continues. Progress lines go to `progress` when given.
ExperimentResult run_experiment(const GridConfig &config, std::ostream *progress = nullptr);

/// Writes metrics.csv, convergence.csv, config.json and (if enabled) one
/// SVG per acceleration into dir.
void write_experiment(const std::filesystem::path &dir, const GridConfig &config, const ExperimentResult &result);

std::string metrics_csv(const std::vector<MetricsRecord> &records);
std::string convergence_csv(const std::vector<ConvergenceRecord> &records);
/// Inverse of metrics_csv for the columns it writes.
std::vector<MetricsRecord> parse_metrics_csv(const std::string &text);

/// Shortest round-trip decimal form; "+inf", "-inf" and "nan" for
/// non-finite values.
std::string format_number(double v);

} // namespace mrxfer
