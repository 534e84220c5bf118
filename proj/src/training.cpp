#include "mrxfer/training.hpp"

#include "engine.hpp"
#include "mrxfer/errors.hpp"
#include "mrxfer/metrics.hpp"
#include "mrxfer/numerics.hpp"
#include "mrxfer/rng.hpp"
#include "mrxfer/threads.hpp"

#include <json.hpp>

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mrxfer {

namespace {

constexpr std::uint64_t kTagShuffle = 0x53485546;
constexpr std::uint64_t kTagStageMasks = 0x53544147;
constexpr std::uint64_t kTagTuneMasks = 0x54554E45;

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Per-pixel loss and its gradient, scaled by 1 / n_total.
struct PixelLoss {
  double n_total;

  // Complex residual d: |d|^2 + |d|; gradient 2d + d/|d|.
  double complex_term(cplx pred, cplx ref, cplx &grad) const
  {
    const cplx d = pred - ref;
    const double a = std::abs(d);
    grad = (2.0 * d + (a > 0.0 ? d / a : cplx{})) / n_total;
    return a * a + a;
  }
  // Real residual d: d^2 + |d|; gradient 2d + sign(d).
  double real_term(double pred, double ref, double &grad) const
  {
    const double d = pred - ref;
    grad = (2.0 * d + sgn(d)) / n_total;
    return d * d + std::abs(d);
  }
};

struct ItemResult {
  double loss_sum = 0.0;
  std::vector<engine::NetGrad> grads;
};

const SpiritKernel *sample_kernel(const TrainingSample &s) { return s.kernel ? &*s.kernel : nullptr; }

ItemResult run_item(
    const CascadeModel &model,
    const BatchItem &item,
    const PixelLoss &pl,
    Objective objective,
    std::size_t stage,
    bool want_grad)
{
  const TrainingSample &s = *item.sample;
  const KSpaceGrid y_u = undersample(s.kspace, *item.mask);
  const engine::Runner run(model, y_u, *item.mask, s.maps, sample_kernel(s));
  const std::size_t n = s.reference.size();
  const bool single = model.mode == CascadeMode::single_coil;
  ItemResult r;

  if (objective == Objective::stage) {
    engine::State st = run.initial();
    for (std::size_t q = 0; q < stage; ++q) {
      st = run.step(q, st, nullptr);
    }
    engine::StageTrace trace;
    const ComplexImage est = run.stage_estimate(st, stage, trace);
    std::vector<cplx> g(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (single) {
        double gr = 0.0;
        r.loss_sum += pl.real_term(est[i].real(), std::abs(s.reference[i]), gr);
        g[i] = gr;
      } else {
        r.loss_sum += pl.complex_term(est[i], s.reference[i], g[i]);
      }
    }
    if (want_grad) {
      r.grads.resize(model.stages());
      r.grads[stage] = engine::zero_grad(model.subnets[stage]);
      run.backward_estimate(stage, trace, ComplexImage(s.reference.height(), s.reference.width(), std::move(g)), r.grads[stage]);
    }
    return r;
  }

  const std::size_t P = model.stages();
  std::vector<engine::StageTrace> traces(want_grad ? P : 0);
  engine::State st = run.initial();
  for (std::size_t p = 0; p < P; ++p) {
    st = run.step(p, st, want_grad ? &traces[p] : nullptr);
  }
  const ComplexImage out = run.output(st);
  std::vector<cplx> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (single) {
      const double mag = std::abs(out[i]);
      double gm = 0.0;
      r.loss_sum += pl.real_term(mag, std::abs(s.reference[i]), gm);
      g[i] = mag > 0.0 ? gm * out[i] / mag : cplx{};
    } else {
      r.loss_sum += pl.complex_term(out[i], s.reference[i], g[i]);
    }
  }
  if (!want_grad) {
    return r;
  }
  r.grads.resize(P);
  engine::State gs = run.output_adjoint(ComplexImage(out.height(), out.width(), std::move(g)));
  for (std::size_t p = P; p-- > 0;) {
    r.grads[p] = engine::zero_grad(model.subnets[p]);
    gs = run.backward_stage(p, traces[p], std::move(gs), r.grads[p], p > 0);
  }
  return r;
}

void check_batch(const CascadeModel &model, std::span<const BatchItem> batch, Objective objective, std::size_t stage)
{
  if (batch.empty()) {
    throw std::invalid_argument("empty batch");
  }
  if (objective == Objective::stage && stage >= model.stages()) {
    throw std::invalid_argument("stage index out of range");
  }
  const std::size_t n = batch.front().sample->reference.size();
  for (const auto &b : batch) {
    if (!b.sample || !b.mask || b.sample->reference.size() != n) {
      throw std::invalid_argument("batch items must reference samples of equal size and a mask");
    }
  }
}

std::pair<std::size_t, std::size_t> trained_range(const CascadeModel &model, Objective objective, std::size_t stage)
{
  return objective == Objective::stage ? std::pair{stage, stage + 1} : std::pair{std::size_t{0}, model.stages()};
}

double weight_penalty(const CascadeModel &model, std::size_t first, std::size_t last, double gamma)
{
  double s = 0.0;
  for (std::size_t p = first; p < last; ++p) {
    for (const auto &l : model.subnets[p].layers) {
      for (double w : l.weights) {
        s += w * w;
      }
    }
  }
  return gamma * s;
}

std::vector<ItemResult> run_batch(
    const CascadeModel &model,
    std::span<const BatchItem> batch,
    Objective objective,
    std::size_t stage,
    bool want_grad)
{
  check_batch(model, batch, objective, stage);
  const PixelLoss pl{static_cast<double>(batch.size() * batch.front().sample->reference.size())};
  std::vector<ItemResult> results(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) { results[i] = run_item(model, batch[i], pl, objective, stage, want_grad); });
  return results;
}

} // namespace

void TrainConfig::validate() const
{
  if (!(lr > 0.0) || !(finetune_lr >= 0.0)) {
    throw std::invalid_argument("TrainConfig: lr must be > 0 and finetune_lr >= 0");
  }
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("TrainConfig: beta1 and beta2 must lie in (0, 1)");
  }
  if (!(adam_eps > 0.0) || !(weight_decay >= 0.0) || batch == 0) {
    throw std::invalid_argument("TrainConfig: adam_eps > 0, weight_decay >= 0 and batch >= 1 are required");
  }
}

std::vector<TrainingSample> make_samples(
    const Dataset &data, const std::string &split, std::size_t count, const KernelSettings &kernel)
{
  const auto &items = data.split(split);
  if (count > items.size()) {
    throw ConstraintError(
        "split '" + split + "' has " + std::to_string(items.size()) + " items, " + std::to_string(count) +
        " requested");
  }
  std::vector<TrainingSample> out(count);
  parallel_for(count, [&](std::size_t i) {
    const DataItem &item = items[i];
    TrainingSample &s = out[i];
    s.reference = item.reference;
    s.id = item.seed;
    if (data.multicoil()) {
      s.maps = &data.coil_maps.at(static_cast<std::size_t>(item.coil_map_id));
      s.kspace = fft2c(apply_coils(item.reference, *s.maps));
      s.kernel = calibrate_kernel(extract_calibration(s.kspace, kernel.calib_size), kernel.width, kernel.tikhonov);
    } else {
      s.kspace = fft2c(item.reference);
    }
  });
  return out;
}

double recon_loss(
    std::span<const ComplexImage> pred, std::span<const ComplexImage> ref, std::span<const double> params, double gamma)
{
  if (pred.size() != ref.size() || pred.empty()) {
    throw std::invalid_argument("recon_loss: prediction and reference batches differ");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < pred.size(); ++b) {
    if (!pred[b].same_shape(ref[b])) {
      throw std::invalid_argument("recon_loss: shape mismatch in batch item " + std::to_string(b));
    }
    for (std::size_t i = 0; i < pred[b].size(); ++i) {
      const double a = std::abs(pred[b][i] - ref[b][i]);
      sum += a * a + a;
    }
    n += pred[b].size();
  }
  double reg = 0.0;
  for (double p : params) {
    reg += p * p;
  }
  return sum / static_cast<double>(n) + gamma * reg;
}

double recon_loss(const ComplexImage &pred, const ComplexImage &ref, std::span<const double> params, double gamma)
{
  return recon_loss(std::span<const ComplexImage>(&pred, 1), std::span<const ComplexImage>(&ref, 1), params, gamma);
}

double batch_loss(
    const CascadeModel &model, std::span<const BatchItem> batch, double gamma, Objective objective, std::size_t stage)
{
  const auto results = run_batch(model, batch, objective, stage, false);
  double loss = 0.0;
  for (const auto &r : results) {
    loss += r.loss_sum;
  }
  loss /= static_cast<double>(batch.size() * batch.front().sample->reference.size());
  const auto [first, last] = trained_range(model, objective, stage);
  return loss + weight_penalty(model, first, last, gamma);
}

GradientTape backward(
    const CascadeModel &model, std::span<const BatchItem> batch, double gamma, Objective objective, std::size_t stage)
{
  auto results = run_batch(model, batch, objective, stage, true);
  const auto [first, last] = trained_range(model, objective, stage);
  GradientTape tape;
  tape.subnets.resize(model.stages());
  for (std::size_t p = 0; p < model.stages(); ++p) {
    tape.subnets[p] = engine::zero_grad(model.subnets[p]);
  }
  double loss = 0.0;
  // Fixed reduction order keeps results independent of the thread count.
  for (auto &r : results) {
    loss += r.loss_sum;
    for (std::size_t p = first; p < last; ++p) {
      engine::accumulate(tape.subnets[p], r.grads[p]);
    }
  }
  tape.loss = loss / static_cast<double>(batch.size() * batch.front().sample->reference.size()) +
              weight_penalty(model, first, last, gamma);
  for (std::size_t p = first; p < last; ++p) {
    const auto &layers = model.subnets[p].layers;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (std::size_t i = 0; i < layers[l].weights.size(); ++i) {
        tape.subnets[p][l].weights[i] += 2.0 * gamma * layers[l].weights[i];
      }
    }
  }
  return tape;
}

void adam_step(
    std::span<std::vector<double> *const> params,
    std::span<const std::vector<double> *const> grads,
    AdamState &state,
    double lr,
    const TrainConfig &config)
{
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: parameter and gradient counts differ");
  }
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t t = 0; t < params.size(); ++t) {
      state.m[t].assign(params[t]->size(), 0.0);
      state.v[t].assign(params[t]->size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state does not match the parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto &p = *params[k];
    const auto &g = *grads[k];
    auto &m = state.m[k];
    auto &v = state.v[k];
    if (p.size() != g.size() || m.size() != p.size()) {
      throw std::invalid_argument("adam_step: tensor " + std::to_string(k) + " has mismatched sizes");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericalError("adam_step: non-finite gradient in tensor " + std::to_string(k));
      }
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.adam_eps);
    }
  }
}

void adam_step(
    CascadeModel &model,
    const GradientTape &tape,
    AdamState &state,
    double lr,
    const TrainConfig &config,
    std::size_t first,
    std::size_t last)
{
  std::vector<std::vector<double> *> params;
  std::vector<const std::vector<double> *> grads;
  for (std::size_t p = first; p < last; ++p) {
    for (std::size_t l = 0; l < model.subnets[p].layers.size(); ++l) {
      params.push_back(&model.subnets[p].layers[l].weights);
      params.push_back(&model.subnets[p].layers[l].bias);
      grads.push_back(&tape.subnets.at(p).at(l).weights);
      grads.push_back(&tape.subnets.at(p).at(l).bias);
    }
  }
  adam_step(params, grads, state, lr, config);
}

std::string TrainingLog::to_json() const
{
  nlohmann::json j = nlohmann::json::array();
  for (const auto &e : epochs) {
    nlohmann::json row{{"phase", e.phase}, {"stage", e.stage}, {"epoch", e.epoch}, {"loss", e.loss}};
    row["val_psnr"] = std::isfinite(e.val_psnr) ? nlohmann::json(e.val_psnr) : nlohmann::json(nullptr);
    j.push_back(std::move(row));
  }
  return nlohmann::json{{"epochs", std::move(j)}}.dump(2);
}

std::vector<std::size_t> epoch_mask_assignment(
    std::size_t samples, std::size_t bank_size, std::uint64_t seed, std::uint64_t phase_tag, std::size_t epoch)
{
  if (bank_size == 0) {
    throw std::invalid_argument("epoch_mask_assignment: empty mask bank");
  }
  std::vector<std::size_t> perm(bank_size);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed, phase_tag, epoch));
  rng.shuffle(perm);
  std::vector<std::size_t> out(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    out[i] = perm[i % bank_size];
  }
  return out;
}

namespace {

double validation_psnr(const CascadeModel &model, const ValidationSet *val)
{
  if (!val || !val->samples || !val->bank || val->samples->empty()) {
    return std::nan("");
  }
  const auto scores = evaluate(model, *val->samples, *val->bank);
  double s = 0.0;
  for (const auto &sc : scores) {
    s += sc.psnr;
  }
  return s / static_cast<double>(scores.size());
}

// One pass over the data in a seeded order; returns the mean batch loss.
double run_epoch(
    CascadeModel &model,
    const std::vector<TrainingSample> &data,
    const MaskBank &bank,
    const TrainConfig &config,
    AdamState &adam,
    double lr,
    Objective objective,
    std::size_t stage,
    std::uint64_t phase_tag,
    std::size_t epoch)
{
  const auto masks = epoch_mask_assignment(data.size(), bank.size(), config.seed, phase_tag, epoch);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(config.seed, kTagShuffle ^ phase_tag, epoch));
  rng.shuffle(order);
  const auto [first, last] = trained_range(model, objective, stage);
  double total = 0.0;
  std::size_t seen = 0;
  for (std::size_t start = 0; start < order.size(); start += config.batch) {
    const std::size_t end = std::min(order.size(), start + config.batch);
    std::vector<BatchItem> batch;
    for (std::size_t k = start; k < end; ++k) {
      batch.push_back({&data[order[k]], &bank.masks[masks[order[k]]]});
    }
    const GradientTape tape = backward(model, batch, config.weight_decay, objective, stage);
    total += tape.loss * static_cast<double>(batch.size());
    seen += batch.size();
    adam_step(model, tape, adam, lr, config, first, last);
  }
  return total / static_cast<double>(seen);
}

} // namespace

CascadeModel train_sequential(
    CascadeModel model,
    const std::vector<TrainingSample> &data,
    const MaskBank &bank,
    const TrainConfig &config,
    TrainingLog *log,
    const ValidationSet *val)
{
  config.validate();
  model.validate();
  if (data.empty()) {
    throw std::invalid_argument("train_sequential: empty dataset");
  }
  for (std::size_t p = 0; p < model.stages(); ++p) {
    AdamState adam;
    for (std::size_t e = 0; e < config.epochs_per_subnet; ++e) {
      const double loss = run_epoch(
          model, data, bank, config, adam, config.lr, Objective::stage, p, kTagStageMasks + p, e);
      if (log) {
        log->epochs.push_back({"sequential", p, e, loss, validation_psnr(model, val)});
      }
    }
  }
  return model;
}

CascadeModel fine_tune(
    CascadeModel model,
    const std::vector<TrainingSample> &data,
    const MaskBank &bank,
    const TrainConfig &config,
    TrainingLog *log,
    const ValidationSet *val)
{
  config.validate();
  model.validate();
  if (data.empty()) {
    return model;
  }
  AdamState adam;
  for (std::size_t e = 0; e < config.finetune_epochs; ++e) {
    const double loss =
        run_epoch(model, data, bank, config, adam, config.finetune_lr, Objective::end_to_end, 0, kTagTuneMasks, e);
    if (log) {
      log->epochs.push_back({"finetune", 0, e, loss, validation_psnr(model, val)});
    }
  }
  return model;
}

CascadeOutput reconstruct_sample(const CascadeModel &model, const TrainingSample &sample, const SamplingMask &mask)
{
  const KSpaceGrid y_u = undersample(sample.kspace, mask);
  return cascade_forward(y_u, mask, model, sample.maps, sample_kernel(sample));
}

std::vector<ImageScore> evaluate(const CascadeModel &model, const std::vector<TrainingSample> &data, const MaskBank &bank)
{
  std::vector<ImageScore> scores(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const CascadeOutput out = reconstruct_sample(model, data[i], bank[i]);
    scores[i] = {data[i].id, psnr(data[i].reference, out.image), ssim(data[i].reference, out.image)};
  });
  return scores;
}

TransferResult transfer_workflow(
    const Dataset &source, const Dataset &target, std::size_t n_train, std::size_t n_tune, const TransferSetup &setup)
{
  if (source.spec.size != target.spec.size || source.spec.coils != target.spec.coils) {
    throw std::invalid_argument("transfer_workflow: source and target differ in image size or coil count");
  }
  if (setup.arch.mode == CascadeMode::multi_coil && setup.calib_size < setup.kernel.calib_size) {
    throw ConstraintError(
        "transfer_workflow: mask calibration block " + std::to_string(setup.calib_size) +
        " is smaller than the kernel calibration region " + std::to_string(setup.kernel.calib_size));
  }
  const std::size_t n = source.spec.size;
  const auto train = make_samples(source, "train", n_train, setup.kernel);
  const auto tune = make_samples(target, "tune", n_tune, setup.kernel);
  const auto test = make_samples(target, "test", target.split("test").size(), setup.kernel);
  const MaskBank train_bank =
      generate_mask_bank(setup.mask_bank_size, n, n, setup.accel, setup.calib_size, setup.mask_seed, BankRole::train);
  const MaskBank test_bank = generate_mask_bank(
      std::max<std::size_t>(test.size(), 1), n, n, setup.accel, setup.calib_size,
      setup.mask_seed + kTestBankSeedOffset, BankRole::test);

  std::optional<SpiritKernel> kernel;
  if (setup.arch.mode == CascadeMode::multi_coil) {
    if (train.empty()) {
      throw std::invalid_argument("transfer_workflow: multi-coil training needs at least one sample");
    }
    kernel = train.front().kernel;
  }
  TransferResult result;
  result.base = train_sequential(make_cascade(setup.arch, kernel), train, train_bank, setup.train, &result.log);
  result.raw_scores = evaluate(result.base, test, test_bank);
  result.tuned = fine_tune(result.base, tune, train_bank, setup.train, &result.log);
  result.tuned_scores = evaluate(result.tuned, test, test_bank);
  return result;
}

} // namespace mrxfer
