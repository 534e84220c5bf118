#include "mrxfer/cascade.hpp"

#include "engine.hpp"
#include "mrxfer/numerics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mrxfer {

void ConvLayer::validate() const
{
  if (in_channels == 0 || out_channels == 0) {
    throw std::invalid_argument("ConvLayer: channel counts must be positive");
  }
  if (kernel_h % 2 == 0 || kernel_w % 2 == 0) {
    throw std::invalid_argument("ConvLayer: kernel dimensions must be odd");
  }
  if (weights.size() != out_channels * in_channels * kernel_h * kernel_w || bias.size() != out_channels) {
    throw std::invalid_argument("ConvLayer: parameter sizes do not match the shape");
  }
  for (double v : weights) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("ConvLayer: non-finite weight");
    }
  }
  for (double v : bias) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("ConvLayer: non-finite bias");
    }
  }
}

std::size_t Subnetwork::parameter_count() const
{
  std::size_t n = 0;
  for (const auto &l : layers) {
    n += l.weights.size() + l.bias.size();
  }
  return n;
}

void Subnetwork::validate() const
{
  if (layers.empty()) {
    throw std::invalid_argument("Subnetwork: no layers");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].validate();
    if (i > 0 && layers[i].in_channels != layers[i - 1].out_channels) {
      throw std::invalid_argument("Subnetwork: channel mismatch at layer " + std::to_string(i));
    }
  }
  if (in_channels() != 2) {
    throw std::invalid_argument("Subnetwork: input must have 2 channels (real, imaginary)");
  }
}

std::string to_string(CascadeMode mode) { return mode == CascadeMode::single_coil ? "single-coil" : "multi-coil"; }

CascadeMode parse_cascade_mode(const std::string &name)
{
  if (name == "single-coil") {
    return CascadeMode::single_coil;
  }
  if (name == "multi-coil") {
    return CascadeMode::multi_coil;
  }
  throw std::invalid_argument("unknown cascade mode: " + name);
}

void CascadeModel::validate() const
{
  if (subnets.empty()) {
    throw std::invalid_argument("CascadeModel: at least one subnetwork is required");
  }
  if (!(lambda_dc > 0.0)) {
    throw std::invalid_argument("CascadeModel: lambda_dc must be > 0 or infinite");
  }
  const std::size_t out = mode == CascadeMode::single_coil ? 1 : 2;
  for (const auto &s : subnets) {
    s.validate();
    if (s.out_channels() != out) {
      throw std::invalid_argument(
          "CascadeModel: " + to_string(mode) + " subnetworks must emit " + std::to_string(out) + " channel(s)");
    }
  }
  if (mode == CascadeMode::multi_coil) {
    if (!cc_kernel) {
      throw std::invalid_argument("CascadeModel: multi-coil mode requires a calibration kernel");
    }
    if (cc_kernel->coils != coils) {
      throw std::invalid_argument("CascadeModel: kernel coil count differs from model coils");
    }
  }
}

Subnetwork make_subnetwork(
    std::size_t in_channels,
    std::size_t hidden_channels,
    std::size_t hidden_layers,
    std::size_t out_channels,
    std::size_t kernel_size,
    Rng &rng)
{
  if (kernel_size % 2 == 0 || in_channels == 0 || hidden_channels == 0 || out_channels == 0) {
    throw std::invalid_argument("make_subnetwork: invalid architecture");
  }
  Subnetwork net;
  auto add = [&](std::size_t in, std::size_t out, Activation act) {
    ConvLayer l;
    l.in_channels = in;
    l.out_channels = out;
    l.kernel_h = l.kernel_w = kernel_size;
    l.activation = act;
    const double bound = std::sqrt(6.0 / static_cast<double>(in * kernel_size * kernel_size));
    l.weights.resize(out * in * kernel_size * kernel_size);
    for (auto &v : l.weights) {
      v = rng.uniform(-bound, bound);
    }
    l.bias.assign(out, 0.0);
    net.layers.push_back(std::move(l));
  };
  add(in_channels, hidden_channels, Activation::relu);
  for (std::size_t i = 0; i < hidden_layers; ++i) {
    add(hidden_channels, hidden_channels, Activation::relu);
  }
  add(hidden_channels, out_channels, Activation::none);
  return net;
}

CascadeModel make_cascade(const ArchitectureConfig &arch, std::optional<SpiritKernel> kernel)
{
  if (arch.subnets == 0) {
    throw std::invalid_argument("make_cascade: at least one subnetwork is required");
  }
  CascadeModel model;
  model.mode = arch.mode;
  model.lambda_dc = arch.lambda_dc;
  model.seed = arch.seed;
  if (arch.mode == CascadeMode::multi_coil) {
    if (!kernel) {
      throw std::invalid_argument("make_cascade: multi-coil mode requires a calibration kernel");
    }
    model.coils = kernel->coils;
    model.cc_kernel = std::move(kernel);
    model.cc_kernel_id = "embedded";
  }
  const std::size_t out = arch.mode == CascadeMode::single_coil ? 1 : 2;
  for (std::size_t p = 0; p < arch.subnets; ++p) {
    Rng rng(derive_seed(arch.seed, 0x4E4554, p));
    model.subnets.push_back(
        make_subnetwork(2, arch.hidden_channels, arch.hidden_layers, out, arch.kernel_size, rng));
  }
  model.validate();
  return model;
}

ComplexImage subnet_forward(const ComplexImage &x, const Subnetwork &net)
{
  if (net.in_channels() != 2) {
    throw std::invalid_argument("subnet_forward: network input must have 2 channels");
  }
  const std::size_t n = x.size();
  const auto out = engine::net_forward(net, engine::to_channels(x), x.height(), x.width(), nullptr);
  std::vector<cplx> y(n);
  if (net.out_channels() == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = out[i];
    }
  } else if (net.out_channels() == 2) {
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = cplx{out[i], out[n + i]};
    }
  } else {
    throw std::invalid_argument("subnet_forward: network output must have 1 or 2 channels");
  }
  return ComplexImage(x.height(), x.width(), std::move(y));
}

double dc_lambda_diag(bool acquired, double lambda)
{
  if (!acquired) {
    return 1.0;
  }
  return std::isinf(lambda) ? 0.0 : 1.0 / (1.0 + lambda);
}

void dc_project(KSpaceGrid &y, const KSpaceGrid &y_u, const SamplingMask &mask, double lambda)
{
  if (!y.same_shape(y_u) || mask.height != y.height() || mask.width != y.width()) {
    throw std::invalid_argument("dc_project: k-space and mask shapes differ");
  }
  if (!(lambda > 0.0)) {
    throw std::invalid_argument("dc_project: lambda must be > 0 or infinite");
  }
  const bool hard = std::isinf(lambda);
  for (std::size_t c = 0; c < y.coils(); ++c) {
    auto k = y.coil(c);
    const auto a = y_u.coil(c);
    for (std::size_t i = 0; i < k.size(); ++i) {
      if (mask.acquired(i)) {
        k[i] = hard ? a[i] : (k[i] + lambda * a[i]) / (1.0 + lambda);
      }
    }
  }
}

ComplexImage dc_layer(const ComplexImage &c_out, const KSpaceGrid &y_u, const SamplingMask &mask, double lambda)
{
  if (y_u.coils() != 1 || c_out.height() != y_u.height() || c_out.width() != y_u.width()) {
    throw std::invalid_argument("dc_layer: image and k-space shapes differ");
  }
  KSpaceGrid y = fft2c(c_out);
  dc_project(y, y_u, mask, lambda);
  return ifft2c(y).image(0);
}

ComplexImage dc_jacobian(const ComplexImage &g, const SamplingMask &mask, double lambda)
{
  if (mask.height != g.height() || mask.width != g.width()) {
    throw std::invalid_argument("dc_jacobian: image and mask shapes differ");
  }
  std::vector<cplx> k(g.data().begin(), g.data().end());
  fft2c_inplace(k, g.height(), g.width());
  const double on = dc_lambda_diag(true, lambda);
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (mask.acquired(i)) {
      k[i] *= on;
    }
  }
  ifft2c_inplace(k, g.height(), g.width());
  return ComplexImage(g.height(), g.width(), std::move(k));
}

KSpaceGrid cc_dc_jacobian(const CoilImages &g, const SpiritKernel &kernel, const SamplingMask &mask, double lambda)
{
  if (mask.height != g.height() || mask.width != g.width()) {
    throw std::invalid_argument("cc_dc_jacobian: image and mask shapes differ");
  }
  KSpaceGrid k = fft2c(g);
  const double on = dc_lambda_diag(true, lambda);
  for (std::size_t c = 0; c < k.coils(); ++c) {
    auto plane = k.coil(c);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      if (mask.acquired(i)) {
        plane[i] *= on;
      }
    }
  }
  return apply_G(fft2c(ifft2c(k)), kernel);
}

CascadeOutput cascade_forward_single(const KSpaceGrid &y_u, const SamplingMask &mask, const CascadeModel &model)
{
  if (model.mode != CascadeMode::single_coil) {
    throw std::invalid_argument("cascade_forward_single: model is " + to_string(model.mode));
  }
  const engine::Runner run(model, y_u, mask, nullptr);
  engine::State s = run.initial();
  for (std::size_t p = 0; p < model.stages(); ++p) {
    s = run.step(p, s, nullptr);
  }
  return run.finish(std::move(s));
}

CascadeOutput cascade_forward_multi(
    const KSpaceGrid &y_u,
    const SamplingMask &mask,
    const CascadeModel &model,
    const CoilSensitivities &maps,
    const SpiritKernel *kernel)
{
  if (model.mode != CascadeMode::multi_coil) {
    throw std::invalid_argument("cascade_forward_multi: model is " + to_string(model.mode));
  }
  const engine::Runner run(model, y_u, mask, &maps, kernel);
  engine::State s = run.initial();
  for (std::size_t p = 0; p < model.stages(); ++p) {
    s = run.step(p, s, nullptr);
  }
  return run.finish(std::move(s));
}

CascadeOutput cascade_forward(
    const KSpaceGrid &y_u,
    const SamplingMask &mask,
    const CascadeModel &model,
    const CoilSensitivities *maps,
    const SpiritKernel *kernel)
{
  if (model.mode == CascadeMode::single_coil) {
    return cascade_forward_single(y_u, mask, model);
  }
  if (!maps) {
    throw std::invalid_argument("cascade_forward: multi-coil model requires coil maps");
  }
  return cascade_forward_multi(y_u, mask, model, *maps, kernel);
}

} // namespace mrxfer
