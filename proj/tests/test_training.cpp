#include "oracles.hpp"

#include "mrxfer/errors.hpp"
#include "mrxfer/numerics.hpp"
#include "mrxfer/training.hpp"

#include <doctest.h>

using namespace mrxfer;

namespace {

Dataset tiny_domain(DomainKind kind, std::size_t size, std::size_t coils, std::size_t count)
{
  DomainSpec spec;
  spec.kind = kind;
  spec.size = size;
  spec.coils = coils;
  spec.coil_map_variants = 2;
  spec.splits["train"] = {0, count};
  spec.splits["tune"] = {1000, count};
  spec.splits["test"] = {2000, 4};
  return build_domain(spec);
}

CascadeModel tiny_model(CascadeMode mode, std::size_t stages, std::optional<SpiritKernel> kernel = std::nullopt)
{
  ArchitectureConfig arch;
  arch.mode = mode;
  arch.subnets = stages;
  arch.hidden_channels = 4;
  arch.hidden_layers = 1;
  arch.seed = 3;
  return make_cascade(arch, std::move(kernel));
}

std::vector<BatchItem> batch_of(const std::vector<TrainingSample> &s, const MaskBank &bank)
{
  std::vector<BatchItem> b;
  for (std::size_t i = 0; i < s.size(); ++i) {
    b.push_back({&s[i], &bank[i]});
  }
  return b;
}

/// Worst relative mismatch between the tape and central differences of batch_loss.
double gradient_mismatch(
    CascadeModel model, std::span<const BatchItem> batch, double gamma, Objective obj, std::size_t stage)
{
  const GradientTape tape = backward(model, batch, gamma, obj, stage);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t p = 0; p < model.stages(); ++p) {
    if (obj == Objective::stage && p != stage) {
      continue;
    }
    for (std::size_t l = 0; l < model.subnets[p].layers.size(); ++l) {
      for (bool is_bias : {false, true}) {
        auto &param = is_bias ? model.subnets[p].layers[l].bias : model.subnets[p].layers[l].weights;
        const auto &grad = is_bias ? tape.subnets[p][l].bias : tape.subnets[p][l].weights;
        for (std::size_t i = 0; i < param.size(); i += 3) {
          const double keep = param[i];
          param[i] = keep + h;
          const double up = batch_loss(model, batch, gamma, obj, stage);
          param[i] = keep - h;
          const double down = batch_loss(model, batch, gamma, obj, stage);
          param[i] = keep;
          const double fd = (up - down) / (2 * h);
          worst = std::max(worst, std::abs(fd - grad[i]) / std::max(std::abs(fd), 1e-4));
        }
      }
    }
  }
  return worst;
}

std::vector<double> flat_params(const CascadeModel &m)
{
  std::vector<double> out;
  for (const auto &s : m.subnets) {
    for (const auto &l : s.layers) {
      out.insert(out.end(), l.weights.begin(), l.weights.end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
  }
  return out;
}

} // namespace

TEST_SUITE("training")
{
  TEST_CASE("loss worked examples")
  {
    const ComplexImage ref = fixture::random_image(4, 4, 1);
    CHECK(recon_loss(ref, ref, {}, 1e-6) == 0.0);
    const std::vector<double> w{2.0};
    CHECK(recon_loss(ref, ref, w, 1e-6) == doctest::Approx(4e-6).epsilon(1e-12));
    ComplexImage off = ref;
    for (auto &v : off.data()) {
      v += 1.0;
    }
    CHECK(recon_loss(off, ref, {}, 0.0) == doctest::Approx(2.0).epsilon(1e-12));
  }

  TEST_CASE("first ADAM step has magnitude lr")
  {
    std::vector<double> p{0.5, -1.0}, g{2.0, 0.0};
    std::vector<double> *params[] = {&p};
    const std::vector<double> *grads[] = {&g};
    AdamState st;
    TrainConfig cfg;
    adam_step(params, grads, st, 1e-4, cfg);
    CHECK(p[0] - 0.5 == doctest::Approx(-9.99999995e-5).epsilon(1e-9));
    CHECK(p[1] == -1.0);
    CHECK(st.step == 1);
  }

  TEST_CASE("identical tensors with identical gradients stay identical")
  {
    std::vector<double> a{0.1, 0.2, 0.3}, b = a;
    std::vector<double> ga{0.4, -0.5, 0.6};
    std::vector<double> *params[] = {&a, &b};
    const std::vector<double> *grads[] = {&ga, &ga};
    AdamState st;
    for (int k = 0; k < 5; ++k) {
      adam_step(params, grads, st, 1e-2, TrainConfig{});
    }
    CHECK(a == b);
  }

  TEST_CASE("data-consistency Jacobian is the masked diagonal in k-space")
  {
    const ComplexImage g = fixture::random_image(8, 8, 2);
    const SamplingMask m = fixture::random_mask(8, 8, 0.4, 3);
    for (double lam : {kHardDataConsistency, 1.0, 4.0}) {
      const KSpaceGrid k = fft2c(dc_jacobian(g, m, lam)), kg = fft2c(g);
      for (std::size_t i = 0; i < k.size(); ++i) {
        CHECK(std::abs(k.data()[i] - dc_lambda_diag(m.acquired(i), lam) * kg.data()[i]) < 1e-13);
      }
    }
    CHECK(fixture::max_abs(dc_jacobian(g, SamplingMask::full(8, 8), kHardDataConsistency)) < 1e-15);
  }

  TEST_CASE("single-coil gradients match central differences")
  {
    const Dataset d = tiny_domain(DomainKind::phantom, 16, 1, 2);
    const auto samples = make_samples(d, "train", 2);
    const MaskBank bank = generate_mask_bank(2, 16, 16, 3.0, 0, 4);
    const auto batch = batch_of(samples, bank);
    const CascadeModel model = tiny_model(CascadeMode::single_coil, 2);
    CHECK(gradient_mismatch(model, batch, 1e-3, Objective::end_to_end, 0) <= 1e-5);
    CHECK(gradient_mismatch(model, batch, 1e-3, Objective::stage, 1) <= 1e-5);
  }

  TEST_CASE("multi-coil gradients match central differences")
  {
    const Dataset d = tiny_domain(DomainKind::phantom, 16, 3, 2);
    const auto samples = make_samples(d, "train", 2, KernelSettings{8, 3, 1e-2});
    const MaskBank bank = generate_mask_bank(2, 16, 16, 2.5, 0, 5);
    const auto batch = batch_of(samples, bank);
    const CascadeModel model = tiny_model(CascadeMode::multi_coil, 2, samples[0].kernel);
    CHECK(gradient_mismatch(model, batch, 1e-3, Objective::end_to_end, 0) <= 1e-5);
    CHECK(gradient_mismatch(model, batch, 1e-3, Objective::stage, 1) <= 1e-5);
  }

  TEST_CASE("fully sampled data gives zero residual gradients")
  {
    const Dataset d = tiny_domain(DomainKind::phantom, 16, 1, 2);
    const auto samples = make_samples(d, "train", 2);
    const MaskBank bank{{SamplingMask::full(16, 16)}};
    std::vector<BatchItem> batch{{&samples[0], &bank[0]}, {&samples[1], &bank[0]}};
    const CascadeModel model = tiny_model(CascadeMode::single_coil, 2);
    const GradientTape tape = backward(model, batch, 0.0, Objective::end_to_end);
    CHECK(tape.loss < 1e-12);
    for (const auto &s : tape.subnets) {
      for (const auto &l : s) {
        for (double v : l.weights) {
          CHECK(std::abs(v) <= 1e-12);
        }
        for (double v : l.bias) {
          CHECK(std::abs(v) <= 1e-12);
        }
      }
    }
  }

  TEST_CASE("mask assignment cycles a permutation of the bank")
  {
    const auto a = epoch_mask_assignment(10, 4, 1, 0, 0);
    CHECK(a.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(a[i] < 4);
      CHECK(a[i] == a[i % 4]);
    }
    CHECK(a == epoch_mask_assignment(10, 4, 1, 0, 0));
    std::vector<std::size_t> head(a.begin(), a.begin() + 4);
    std::sort(head.begin(), head.end());
    CHECK(head == std::vector<std::size_t>{0, 1, 2, 3});
  }

  TEST_CASE("sequential training is deterministic and lowers the loss")
  {
    const Dataset d = tiny_domain(DomainKind::mr_like_t1, 24, 1, 16);
    const auto samples = make_samples(d, "train", 16);
    const MaskBank bank = generate_mask_bank(8, 24, 24, 4.0, 0, 6);
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch = 4;
    cfg.epochs_per_subnet = 6;
    cfg.seed = 2;
    TrainingLog log;
    const CascadeModel a = train_sequential(tiny_model(CascadeMode::single_coil, 2), samples, bank, cfg, &log);
    const CascadeModel b = train_sequential(tiny_model(CascadeMode::single_coil, 2), samples, bank, cfg);
    CHECK(flat_params(a) == flat_params(b));
    CHECK(log.epochs.size() == 12);

    for (std::size_t stage = 0; stage < 2; ++stage) {
      std::vector<double> curve;
      for (const auto &e : log.epochs) {
        if (e.stage == stage) {
          curve.push_back(e.loss);
        }
      }
      REQUIRE(curve.size() == 6);
      CHECK(curve.back() <= curve.front());
      for (std::size_t k = 1; k < curve.size(); ++k) {
        CHECK(curve[k] <= curve[k - 1] * 1.05);
      }
    }
    CHECK_THROWS_AS(train_sequential(tiny_model(CascadeMode::single_coil, 1), {}, bank, cfg), std::invalid_argument);
  }

  TEST_CASE("fine-tuning edge cases")
  {
    const Dataset d = tiny_domain(DomainKind::phantom, 16, 1, 4);
    const auto samples = make_samples(d, "tune", 4);
    const MaskBank bank = generate_mask_bank(4, 16, 16, 4.0, 0, 7);
    const CascadeModel base = tiny_model(CascadeMode::single_coil, 1);
    TrainConfig cfg;
    cfg.finetune_epochs = 3;
    cfg.finetune_lr = 0.0;
    CHECK(flat_params(fine_tune(base, samples, bank, cfg)) == flat_params(base));
    cfg.finetune_lr = 1e-3;
    CHECK(flat_params(fine_tune(base, {}, bank, cfg)) == flat_params(base));
    CHECK(flat_params(fine_tune(base, samples, bank, cfg)) != flat_params(base));
  }

  TEST_CASE("transfer workflow rejects a calibration block smaller than the kernel's")
  {
    const Dataset d = tiny_domain(DomainKind::phantom, 32, 2, 2);
    TransferSetup setup;
    setup.arch.mode = CascadeMode::multi_coil;
    setup.calib_size = 8;
    setup.kernel.calib_size = 12;
    CHECK_THROWS_AS(transfer_workflow(d, d, 1, 1, setup), ConstraintError);
  }
}
