// Command-line entry point. Every subcommand prints its resolved
// configuration as one JSON object on stdout before doing any work.

#include "mrxfer/cascade.hpp"
#include "mrxfer/cs.hpp"
#include "mrxfer/datasim.hpp"
#include "mrxfer/errors.hpp"
#include "mrxfer/experiment.hpp"
#include "mrxfer/io.hpp"
#include "mrxfer/metrics.hpp"
#include "mrxfer/numerics.hpp"
#include "mrxfer/sampling.hpp"
#include "mrxfer/spirit.hpp"
#include "mrxfer/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace mrxfer;
using nlohmann::json;

namespace {

void emit_config(const std::string &command, json config)
{
  std::cout << json{{"command", command}, {"config", std::move(config)}}.dump() << std::endl;
}

json lambda_json(double v) { return std::isinf(v) ? json("inf") : json(v); }

double parse_lambda(const std::string &s)
{
  if (s == "inf") {
    return kHardDataConsistency;
  }
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size() || v < 0) {
    throw std::invalid_argument("--lambda-dc must be \"inf\" or a non-negative number");
  }
  return v;
}

std::string pick_split(const Dataset &data, const std::string &requested)
{
  if (!requested.empty()) {
    return requested;
  }
  if (data.splits.size() != 1) {
    throw std::invalid_argument("dataset has several splits; choose one with --split");
  }
  return data.splits.begin()->first;
}

void write_file(const std::string &path, const std::string &text)
{
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << text;
  os.flush();
  if (!os) {
    throw FormatError(FormatErrc::io, "cannot write " + path);
  }
}

// ---------------------------------------------------------------------------

struct MaskArgs {
  std::size_t height = 256, width = 256, calib = 0, count = 1;
  double accel = 4.0;
  std::uint64_t seed = 0;
  std::string out;
};

void run_mask(const MaskArgs &a)
{
  emit_config(
      "mask",
      {{"height", a.height},
       {"width", a.width},
       {"accel", a.accel},
       {"calib", a.calib},
       {"seed", a.seed},
       {"count", a.count},
       {"out", a.out}});
  if (a.count == 1) {
    save_tensor(a.out, encode_mask(generate_mask(a.height, a.width, a.accel, a.calib, a.seed)));
  } else {
    save_tensor(a.out, encode_masks(generate_mask_bank(a.count, a.height, a.width, a.accel, a.calib, a.seed).masks));
  }
}

struct SimulateArgs {
  std::string domain = "mr-like-t1";
  std::size_t count = 16, size = 64, coils = 1, variants = 4;
  std::uint64_t seed = 0, map_seed = 7;
  std::string split = "train";
  std::string out_dir;
};

void run_simulate(const SimulateArgs &a)
{
  DomainSpec spec;
  spec.kind = parse_domain_kind(a.domain);
  spec.size = a.size;
  spec.coils = a.coils;
  spec.coil_map_variants = a.variants;
  spec.map_seed = a.map_seed;
  spec.splits[a.split] = {a.seed, a.count};
  emit_config("simulate", {{"spec", json::parse(domain_spec_json(spec))}, {"out_dir", a.out_dir}});
  save_dataset(a.out_dir, build_domain(spec));
}

struct TrainArgs {
  std::string dataset, split, out_model, log;
  double accel = 4.0, lr = 1e-4, weight_decay = 1e-6;
  std::size_t calib = 0, subnets = 5, hidden_channels = 64, hidden_layers = 3, epochs = 20, batch = 8;
  std::size_t n_train = 0, bank_size = 100;
  std::uint64_t seed = 0, mask_seed = 0;
  std::string lambda_dc = "inf";
  KernelSettings kernel;
};

void run_train(const TrainArgs &a)
{
  const Dataset data = load_dataset(a.dataset);
  const std::string split = pick_split(data, a.split);
  const std::size_t n = a.n_train ? a.n_train : data.split(split).size();
  ArchitectureConfig arch;
  arch.mode = data.multicoil() ? CascadeMode::multi_coil : CascadeMode::single_coil;
  arch.subnets = a.subnets;
  arch.hidden_channels = a.hidden_channels;
  arch.hidden_layers = a.hidden_layers;
  arch.lambda_dc = parse_lambda(a.lambda_dc);
  arch.seed = a.seed;
  TrainConfig tc;
  tc.lr = a.lr;
  tc.weight_decay = a.weight_decay;
  tc.batch = a.batch;
  tc.epochs_per_subnet = a.epochs;
  tc.seed = a.seed;
  tc.validate();
  if (data.multicoil() && a.calib < a.kernel.calib_size) {
    throw ConstraintError("multi-coil training needs --calib >= --kernel-calib");
  }
  emit_config(
      "train",
      {{"dataset", a.dataset},
       {"split", split},
       {"n_train", n},
       {"mode", to_string(arch.mode)},
       {"accel", a.accel},
       {"calib", a.calib},
       {"mask_seed", a.mask_seed},
       {"bank_size", a.bank_size},
       {"subnets", arch.subnets},
       {"hidden_channels", arch.hidden_channels},
       {"hidden_layers", arch.hidden_layers},
       {"lambda_dc", lambda_json(arch.lambda_dc)},
       {"epochs", tc.epochs_per_subnet},
       {"batch", tc.batch},
       {"lr", tc.lr},
       {"weight_decay", tc.weight_decay},
       {"seed", a.seed},
       {"kernel", {{"calib_size", a.kernel.calib_size}, {"width", a.kernel.width}, {"tikhonov", a.kernel.tikhonov}}},
       {"out_model", a.out_model}});
  const auto samples = make_samples(data, split, n, a.kernel);
  const std::size_t size = data.spec.size;
  const MaskBank bank = generate_mask_bank(a.bank_size, size, size, a.accel, a.calib, a.mask_seed);
  std::optional<SpiritKernel> kernel;
  if (data.multicoil() && !samples.empty()) {
    kernel = samples.front().kernel;
  }
  TrainingLog log;
  const CascadeModel model = train_sequential(make_cascade(arch, kernel), samples, bank, tc, &log);
  save_model(a.out_model, model);
  if (!a.log.empty()) {
    write_file(a.log, log.to_json());
  }
}

struct FinetuneArgs {
  std::string model, dataset, split, out_model, log;
  std::size_t n_tune = 0, epochs = 100, batch = 8, calib = 0, bank_size = 100;
  double lr = 1e-5, accel = 4.0, weight_decay = 1e-6;
  std::uint64_t seed = 0, mask_seed = 0;
  KernelSettings kernel;
};

void run_finetune(const FinetuneArgs &a)
{
  const CascadeModel base = load_model(a.model);
  const Dataset data = load_dataset(a.dataset);
  const std::string split = pick_split(data, a.split);
  const std::size_t n = a.n_tune ? a.n_tune : data.split(split).size();
  TrainConfig tc;
  tc.finetune_lr = a.lr;
  tc.finetune_epochs = a.epochs;
  tc.batch = a.batch;
  tc.weight_decay = a.weight_decay;
  tc.seed = a.seed;
  tc.validate();
  emit_config(
      "finetune",
      {{"model", a.model},
       {"dataset", a.dataset},
       {"split", split},
       {"n_tune", n},
       {"accel", a.accel},
       {"calib", a.calib},
       {"mask_seed", a.mask_seed},
       {"bank_size", a.bank_size},
       {"epochs", tc.finetune_epochs},
       {"batch", tc.batch},
       {"lr", tc.finetune_lr},
       {"weight_decay", tc.weight_decay},
       {"seed", a.seed},
       {"out_model", a.out_model}});
  if ((base.mode == CascadeMode::multi_coil) != data.multicoil()) {
    throw ConstraintError("model mode " + to_string(base.mode) + " does not match the dataset coil count");
  }
  const auto samples = make_samples(data, split, n, a.kernel);
  const std::size_t size = data.spec.size;
  const MaskBank bank = generate_mask_bank(a.bank_size, size, size, a.accel, a.calib, a.mask_seed);
  TrainingLog log;
  save_model(a.out_model, fine_tune(base, samples, bank, tc, &log));
  if (!a.log.empty()) {
    write_file(a.log, log.to_json());
  }
}

struct ReconArgs {
  std::string method = "zf", model, input, mask, out, coil_maps;
  std::string input_domain = "kspace";
  double lambda_l1 = 1e-3;
  int iters = 0;
  KernelSettings kernel;
};

// Zero-filled image for image-domain input, written as x minus the
// unacquired component so a full mask returns x exactly.
ComplexImage zero_filled_from_image(const ComplexImage &x, const SamplingMask &mask)
{
  KSpaceGrid k = fft2c(x);
  for (std::size_t i = 0; i < mask.pattern.size(); ++i) {
    if (mask.acquired(i)) {
      k.data()[i] = 0.0;
    }
  }
  const CoilImages missing = ifft2c(k);
  ComplexImage out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] -= missing.data()[i];
  }
  return out;
}

void run_reconstruct(const ReconArgs &a)
{
  const Mrx1Tensor input = load_tensor(a.input);
  const SamplingMask mask = decode_mask(load_tensor(a.mask));
  std::optional<CoilSensitivities> maps;
  if (!a.coil_maps.empty()) {
    maps = CoilSensitivities{decode_coil_images(load_tensor(a.coil_maps))};
  }
  const int iters = a.iters > 0 ? a.iters : (a.method == "cs" ? CsParams{}.iters : pocs_iterations_for(mask.accel));
  json cfg{
      {"method", a.method},
      {"input", a.input},
      {"input_domain", a.input_domain},
      {"mask", a.mask},
      {"mask_accel", mask.accel},
      {"coil_maps", a.coil_maps},
      {"out", a.out}};
  if (a.method == "cs" || a.method == "spirit") {
    cfg["lambda_l1"] = a.lambda_l1;
    cfg["iters"] = iters;
  }
  if (a.method == "spirit" || a.method == "nn") {
    cfg["kernel"] = {{"calib_size", a.kernel.calib_size}, {"width", a.kernel.width}, {"tikhonov", a.kernel.tikhonov}};
  }
  if (a.method == "nn") {
    cfg["model"] = a.model;
  }
  emit_config("reconstruct", cfg);

  KSpaceGrid full;
  ComplexImage image_input;
  if (a.input_domain == "image") {
    image_input = decode_image(input);
    full = maps ? fft2c(apply_coils(image_input, *maps)) : fft2c(image_input);
  } else if (a.input_domain == "kspace") {
    full = decode_kspace(input);
  } else {
    throw std::invalid_argument("--input-domain must be image or kspace");
  }
  if (full.height() != mask.height || full.width() != mask.width) {
    throw std::invalid_argument("mask shape does not match the input");
  }
  if (full.coils() > 1 && !maps) {
    throw std::invalid_argument("multi-coil input needs --coil-maps");
  }
  const KSpaceGrid y_u = undersample(full, mask);
  const auto combine = [&](const CoilImages &c) {
    return maps ? coil_combine(c, *maps)
                : ComplexImage(c.height(), c.width(), std::vector<cplx>(c.data().begin(), c.data().end()));
  };

  ComplexImage out;
  if (a.method == "zf") {
    out = (a.input_domain == "image" && !maps) ? zero_filled_from_image(image_input, mask)
                                               : combine(zero_filled_recon(y_u));
  } else if (a.method == "cs") {
    if (full.coils() != 1) {
      throw std::invalid_argument("cs reconstruction is single-coil only");
    }
    CsParams p;
    p.lambda_l1 = a.lambda_l1;
    p.iters = iters;
    out = nlcg_reconstruct(y_u, mask, p).image;
  } else if (a.method == "spirit") {
    const SpiritKernel k =
        calibrate_kernel(extract_calibration(y_u, mask, a.kernel.calib_size), a.kernel.width, a.kernel.tikhonov);
    out = combine(pocs_spirit(y_u, mask, k, a.lambda_l1, iters).images);
  } else if (a.method == "nn") {
    if (a.model.empty()) {
      throw std::invalid_argument("--method nn needs --model");
    }
    const CascadeModel model = load_model(a.model);
    std::optional<SpiritKernel> scan_kernel;
    if (model.mode == CascadeMode::multi_coil) {
      scan_kernel =
          calibrate_kernel(extract_calibration(y_u, mask, a.kernel.calib_size), a.kernel.width, a.kernel.tikhonov);
    }
    out = cascade_forward(y_u, mask, model, maps ? &*maps : nullptr, scan_kernel ? &*scan_kernel : nullptr).image;
  } else {
    throw std::invalid_argument("unknown method '" + a.method + "'");
  }

  // Output precision mirrors the input; real inputs get magnitudes. An
  // image input keeps its exact shape, including a leading unit dimension.
  const DType dt = input.dtype;
  Mrx1Tensor result;
  if (dt == DType::cf32 || dt == DType::cf64) {
    result = encode_image(out, dt);
  } else if (dt == DType::f32 || dt == DType::f64) {
    std::vector<double> mag(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      mag[i] = std::abs(out[i]);
    }
    result = encode_real(mag, {out.height(), out.width()}, dt);
  } else {
    throw FormatError(FormatErrc::dtype_mismatch, "input tensor must be real or complex floating point");
  }
  if (a.input_domain == "image") {
    result.dims = input.dims;
  }
  save_tensor(a.out, result);
}

struct EvalArgs {
  std::string ref, test, metrics = "psnr,ssim", out_csv;
};

void run_eval(const EvalArgs &a)
{
  std::vector<std::string> names;
  std::stringstream ss(a.metrics);
  for (std::string m; std::getline(ss, m, ',');) {
    if (m != "psnr" && m != "ssim") {
      throw std::invalid_argument("unknown metric '" + m + "'");
    }
    names.push_back(m);
  }
  emit_config("eval", {{"ref", a.ref}, {"test", a.test}, {"metrics", names}, {"out_csv", a.out_csv}});
  const auto refs = decode_images(load_tensor(a.ref));
  const auto tests = decode_images(load_tensor(a.test));
  if (refs.size() != tests.size()) {
    throw std::invalid_argument("reference and test files hold different image counts");
  }
  std::ostringstream os;
  os << "image";
  for (const auto &m : names) {
    os << ',' << (m == "psnr" ? "psnr_db" : "ssim");
  }
  os << '\n';
  for (std::size_t i = 0; i < refs.size(); ++i) {
    os << i;
    for (const auto &m : names) {
      os << ',' << format_number(m == "psnr" ? psnr(refs[i], tests[i]) : ssim(refs[i], tests[i]));
    }
    os << '\n';
  }
  if (a.out_csv.empty()) {
    std::cout << os.str();
  } else {
    write_file(a.out_csv, os.str());
  }
}

struct ExperimentArgs {
  std::string grid_config, out_dir;
  bool quiet = false;
};

void run_experiment_cmd(const ExperimentArgs &a)
{
  const GridConfig cfg = load_grid_config(a.grid_config);
  emit_config("experiment", {{"grid", json::parse(to_json(cfg))}, {"out_dir", a.out_dir}});
  const ExperimentResult result = run_experiment(cfg, a.quiet ? nullptr : &std::cerr);
  write_experiment(a.out_dir, cfg, result);
}

void add_kernel_flags(CLI::App *cmd, KernelSettings &k)
{
  cmd->add_option("--kernel-calib", k.calib_size, "calibration region edge for the SPIRiT kernel")
      ->capture_default_str();
  cmd->add_option("--kernel-width", k.width, "SPIRiT kernel width")->capture_default_str();
  cmd->add_option("--tikhonov", k.tikhonov, "relative Tikhonov weight for kernel calibration")->capture_default_str();
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"mrxfer: undersampled MRI reconstruction and domain-transfer experiments"};
  app.set_config("--config", "", "TOML/INI file with option defaults; explicit flags win");
  app.require_subcommand(1);

  MaskArgs mask;
  auto *c_mask = app.add_subcommand("mask", "generate Poisson-disc sampling masks");
  c_mask->add_option("--height", mask.height)->capture_default_str();
  c_mask->add_option("--width", mask.width)->capture_default_str();
  c_mask->add_option("--accel", mask.accel)->capture_default_str();
  c_mask->add_option("--calib", mask.calib)->capture_default_str();
  c_mask->add_option("--seed", mask.seed)->capture_default_str();
  c_mask->add_option("--count", mask.count)->capture_default_str();
  c_mask->add_option("--out", mask.out)->required();

  SimulateArgs sim;
  auto *c_sim = app.add_subcommand("simulate", "generate a synthetic dataset directory");
  c_sim->add_option("--domain", sim.domain)
      ->check(CLI::IsMember({"natural-like", "mr-like-t1", "mr-like-t2", "phantom"}))
      ->capture_default_str();
  c_sim->add_option("--count", sim.count)->capture_default_str();
  c_sim->add_option("--size", sim.size)->capture_default_str();
  c_sim->add_option("--coils", sim.coils)->capture_default_str();
  c_sim->add_option("--coil-map-variants", sim.variants)->capture_default_str();
  c_sim->add_option("--seed", sim.seed, "first item seed")->capture_default_str();
  c_sim->add_option("--map-seed", sim.map_seed)->capture_default_str();
  c_sim->add_option("--split", sim.split, "split name")->capture_default_str();
  c_sim->add_option("--out-dir", sim.out_dir)->required();

  TrainArgs tr;
  auto *c_train = app.add_subcommand("train", "train a cascade subnetwork by subnetwork");
  c_train->add_option("--dataset", tr.dataset)->required();
  c_train->add_option("--split", tr.split, "split to train on (default: the only split)");
  c_train->add_option("--n-train", tr.n_train, "number of items (0 = all)")->capture_default_str();
  c_train->add_option("--accel", tr.accel)->capture_default_str();
  c_train->add_option("--calib", tr.calib, "fully sampled mask center")->capture_default_str();
  c_train->add_option("--mask-seed", tr.mask_seed)->capture_default_str();
  c_train->add_option("--bank-size", tr.bank_size)->capture_default_str();
  c_train->add_option("--subnets", tr.subnets)->capture_default_str();
  c_train->add_option("--hidden-channels", tr.hidden_channels)->capture_default_str();
  c_train->add_option("--hidden-layers", tr.hidden_layers)->capture_default_str();
  c_train->add_option("--lambda-dc", tr.lambda_dc, "\"inf\" for hard data consistency")->capture_default_str();
  c_train->add_option("--epochs", tr.epochs, "epochs per subnetwork")->capture_default_str();
  c_train->add_option("--batch", tr.batch)->capture_default_str();
  c_train->add_option("--lr", tr.lr)->capture_default_str();
  c_train->add_option("--weight-decay", tr.weight_decay)->capture_default_str();
  c_train->add_option("--seed", tr.seed)->capture_default_str();
  c_train->add_option("--log", tr.log, "write the epoch log as JSON");
  c_train->add_option("--out-model", tr.out_model)->required();
  add_kernel_flags(c_train, tr.kernel);

  FinetuneArgs ft;
  auto *c_ft = app.add_subcommand("finetune", "fine-tune a trained cascade end to end");
  c_ft->add_option("--model", ft.model)->required();
  c_ft->add_option("--dataset", ft.dataset)->required();
  c_ft->add_option("--split", ft.split, "split to tune on (default: the only split)");
  c_ft->add_option("--n-tune", ft.n_tune, "number of items (0 = all)")->capture_default_str();
  c_ft->add_option("--accel", ft.accel)->capture_default_str();
  c_ft->add_option("--calib", ft.calib)->capture_default_str();
  c_ft->add_option("--mask-seed", ft.mask_seed)->capture_default_str();
  c_ft->add_option("--bank-size", ft.bank_size)->capture_default_str();
  c_ft->add_option("--lr", ft.lr)->capture_default_str();
  c_ft->add_option("--epochs", ft.epochs)->capture_default_str();
  c_ft->add_option("--batch", ft.batch)->capture_default_str();
  c_ft->add_option("--weight-decay", ft.weight_decay)->capture_default_str();
  c_ft->add_option("--seed", ft.seed)->capture_default_str();
  c_ft->add_option("--log", ft.log, "write the epoch log as JSON");
  c_ft->add_option("--out-model", ft.out_model)->required();
  add_kernel_flags(c_ft, ft.kernel);

  ReconArgs rc;
  auto *c_rec = app.add_subcommand("reconstruct", "reconstruct undersampled data");
  c_rec->add_option("--method", rc.method)->check(CLI::IsMember({"zf", "cs", "spirit", "nn"}))->capture_default_str();
  c_rec->add_option("--model", rc.model, "model file for --method nn");
  c_rec->add_option("--input", rc.input)->required();
  c_rec->add_option("--input-domain", rc.input_domain, "image or kspace")
      ->check(CLI::IsMember({"image", "kspace"}))
      ->capture_default_str();
  c_rec->add_option("--mask", rc.mask)->required();
  c_rec->add_option("--coil-maps", rc.coil_maps, "[C, H, W] sensitivities for multi-coil data");
  c_rec->add_option("--lambda-l1", rc.lambda_l1, "L1 weight for cs and spirit")->capture_default_str();
  c_rec->add_option("--iters", rc.iters, "iterations (0 = method default)")->capture_default_str();
  c_rec->add_option("--out", rc.out)->required();
  add_kernel_flags(c_rec, rc.kernel);

  EvalArgs ev;
  auto *c_eval = app.add_subcommand("eval", "score test images against references");
  c_eval->add_option("--ref", ev.ref)->required();
  c_eval->add_option("--test", ev.test)->required();
  c_eval->add_option("--metrics", ev.metrics)->capture_default_str();
  c_eval->add_option("--out-csv", ev.out_csv, "CSV path (default: stdout)");

  ExperimentArgs ex;
  auto *c_exp = app.add_subcommand("experiment", "run a transfer-learning grid");
  c_exp->add_option("--grid-config", ex.grid_config)->required()->check(CLI::ExistingFile);
  c_exp->add_option("--out-dir", ex.out_dir)->required();
  c_exp->add_flag("--quiet", ex.quiet, "suppress progress on stderr");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*c_mask) {
      run_mask(mask);
    } else if (*c_sim) {
      run_simulate(sim);
    } else if (*c_train) {
      run_train(tr);
    } else if (*c_ft) {
      run_finetune(ft);
    } else if (*c_rec) {
      run_reconstruct(rc);
    } else if (*c_eval) {
      run_eval(ev);
    } else if (*c_exp) {
      run_experiment_cmd(ex);
    }
  } catch (const std::exception &e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "mrxfer: error: " << msg << std::endl;
    return 1;
  }
  return 0;
}
