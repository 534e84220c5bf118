#pragma once

#include "mrxfer/cascade.hpp"
#include "mrxfer/datasim.hpp"
#include "mrxfer/sampling.hpp"
#include "mrxfer/spirit.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mrxfer {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// gamma in the L2 penalty on connection weights (biases are not penalized).
  double weight_decay = 1e-6;
  std::size_t batch = 8;
  std::size_t epochs_per_subnet = 20;
  double finetune_lr = 1e-5;
  std::size_t finetune_epochs = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One fully sampled scan. For multi-coil data, maps points into the owning
/// Dataset, and kernel is calibrated from the scan's own central block.
struct TrainingSample {
  KSpaceGrid kspace;
  ComplexImage reference;
  const CoilSensitivities *maps = nullptr;
  std::optional<SpiritKernel> kernel;
  std::uint64_t id = 0;
};

struct KernelSettings {
  std::size_t calib_size = kDefaultCalibSize;
  std::size_t width = kDefaultKernelWidth;
  double tikhonov = kDefaultTikhonov;
};

/// First count items of the named split. The dataset must outlive the
/// samples. Throws ConstraintError if the split holds fewer than count.
std::vector<TrainingSample> make_samples(
    const Dataset &data, const std::string &split, std::size_t count, const KernelSettings &kernel = {});

struct BatchItem {
  const TrainingSample *sample = nullptr;
  const SamplingMask *mask = nullptr;
};

/// end_to_end: the loss is on the cascade output (magnitudes for
/// single-coil, complex for multi-coil). stage: the loss is on the estimate
/// of one subnetwork with its predecessors frozen.
enum class Objective { end_to_end, stage };

/// mean |pred - ref|^2 + mean |pred - ref| + gamma * sum(params^2), means
/// over every pixel of every image.
double recon_loss(
    std::span<const ComplexImage> pred, std::span<const ComplexImage> ref, std::span<const double> params, double gamma);
double recon_loss(const ComplexImage &pred, const ComplexImage &ref, std::span<const double> params, double gamma);

struct GradientTape {
  /// Mirrors CascadeModel::subnets; subnets outside the trained range hold zeros.
  std::vector<std::vector<LayerGradient>> subnets;
  double loss = 0.0;
};

/// Trained subnets: all for end_to_end, only `stage` otherwise.
double batch_loss(
    const CascadeModel &model, std::span<const BatchItem> batch, double gamma, Objective objective, std::size_t stage = 0);
GradientTape backward(
    const CascadeModel &model, std::span<const BatchItem> batch, double gamma, Objective objective, std::size_t stage = 0);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

/// Bias-corrected ADAM over matched parameter and gradient tensors. State
/// is sized on first use.
void adam_step(
    std::span<std::vector<double> *const> params,
    std::span<const std::vector<double> *const> grads,
    AdamState &state,
    double lr,
    const TrainConfig &config);

/// Updates subnets [first, last) of the model from the tape.
void adam_step(
    CascadeModel &model,
    const GradientTape &tape,
    AdamState &state,
    double lr,
    const TrainConfig &config,
    std::size_t first,
    std::size_t last);

struct EpochRecord {
  std::string phase;
  std::size_t stage = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  /// NaN when no validation set was given.
  double val_psnr = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;

  std::string to_json() const;
};

struct ValidationSet {
  const std::vector<TrainingSample> *samples = nullptr;
  const MaskBank *bank = nullptr;
};

/// Mask index for sample i in a given epoch: the bank is permuted with a
/// seed derived from (seed, phase_tag, epoch) and cycled.
std::vector<std::size_t> epoch_mask_assignment(
    std::size_t samples, std::size_t bank_size, std::uint64_t seed, std::uint64_t phase_tag, std::size_t epoch);

/// Trains subnet p = 0..P-1 in turn, each with a fresh ADAM state, on
/// inputs produced by the frozen predecessors. Throws std::invalid_argument
/// on an empty dataset.
CascadeModel train_sequential(
    CascadeModel model,
    const std::vector<TrainingSample> &data,
    const MaskBank &bank,
    const TrainConfig &config,
    TrainingLog *log = nullptr,
    const ValidationSet *val = nullptr);

/// End-to-end training of every subnet at finetune_lr for finetune_epochs.
/// An empty dataset returns the model unchanged.
CascadeModel fine_tune(
    CascadeModel model,
    const std::vector<TrainingSample> &data,
    const MaskBank &bank,
    const TrainConfig &config,
    TrainingLog *log = nullptr,
    const ValidationSet *val = nullptr);

struct ImageScore {
  std::uint64_t image_id = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

/// Sample i is reconstructed with bank[i].
CascadeOutput reconstruct_sample(const CascadeModel &model, const TrainingSample &sample, const SamplingMask &mask);
std::vector<ImageScore> evaluate(const CascadeModel &model, const std::vector<TrainingSample> &data, const MaskBank &bank);

struct TransferSetup {
  double accel = 4.0;
  std::size_t calib_size = 0;
  std::size_t mask_bank_size = 100;
  /// Banks are drawn from seeds mask_seed.. (train) and mask_seed + offset.. (test).
  std::uint64_t mask_seed = 0;
  ArchitectureConfig arch;
  TrainConfig train;
  KernelSettings kernel;
};

struct TransferResult {
  CascadeModel base;
  CascadeModel tuned;
  std::vector<ImageScore> raw_scores;
  std::vector<ImageScore> tuned_scores;
  TrainingLog log;
};

/// Trains on n_train items of source's "train" split, fine-tunes on n_tune
/// items of target's "tune" split, and scores both models on target's
/// "test" split. Throws ConstraintError if a split is too small.
TransferResult transfer_workflow(
    const Dataset &source, const Dataset &target, std::size_t n_train, std::size_t n_tune, const TransferSetup &setup);

} // namespace mrxfer
