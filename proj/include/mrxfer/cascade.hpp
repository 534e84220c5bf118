#pragma once

#include "mrxfer/array.hpp"
#include "mrxfer/datasim.hpp"
#include "mrxfer/rng.hpp"
#include "mrxfer/sampling.hpp"
#include "mrxfer/spirit.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mrxfer {

enum class Activation { none, relu };

/// 2-D correlation with zero "same" padding over channel-major real maps.
struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  /// out x in x kh x kw, row-major.
  std::vector<double> weights;
  std::vector<double> bias;
  Activation activation = Activation::relu;

  std::size_t weight_index(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const
  {
    return ((o * in_channels + i) * kernel_h + ky) * kernel_w + kx;
  }
  void validate() const;
};

struct Subnetwork {
  std::vector<ConvLayer> layers;

  std::size_t in_channels() const { return layers.empty() ? 0 : layers.front().in_channels; }
  std::size_t out_channels() const { return layers.empty() ? 0 : layers.back().out_channels; }
  std::size_t parameter_count() const;
  void validate() const;
};

/// Parameter gradients of one ConvLayer, same layout as its parameters.
struct LayerGradient {
  std::vector<double> weights;
  std::vector<double> bias;
};

enum class CascadeMode { single_coil, multi_coil };

std::string to_string(CascadeMode mode);
CascadeMode parse_cascade_mode(const std::string &name);

inline constexpr double kHardDataConsistency = std::numeric_limits<double>::infinity();

/// Single-coil: each subnetwork maps the 2-channel image to a magnitude; the
/// input phase is reattached before data consistency.
/// Multi-coil: each subnetwork emits a 2-channel correction r, so the
/// coil-combined estimate is x + r; the correction is lifted to the coil
/// images through the sensitivities.
struct CascadeModel {
  CascadeMode mode = CascadeMode::single_coil;
  std::vector<Subnetwork> subnets;
  double lambda_dc = kHardDataConsistency;
  std::optional<SpiritKernel> cc_kernel;
  std::string cc_kernel_id;
  std::size_t coils = 1;
  std::uint64_t seed = 0;

  std::size_t stages() const { return subnets.size(); }
  void validate() const;
};

struct ArchitectureConfig {
  CascadeMode mode = CascadeMode::single_coil;
  std::size_t subnets = 5;
  std::size_t hidden_channels = 64;
  std::size_t hidden_layers = 3;
  std::size_t kernel_size = 3;
  double lambda_dc = kHardDataConsistency;
  std::uint64_t seed = 0;
};

/// He-uniform weights, zero biases. ReLU on every layer except the last.
Subnetwork make_subnetwork(
    std::size_t in_channels,
    std::size_t hidden_channels,
    std::size_t hidden_layers,
    std::size_t out_channels,
    std::size_t kernel_size,
    Rng &rng);

/// Multi-coil mode requires a kernel; its coil count sets model.coils.
CascadeModel make_cascade(const ArchitectureConfig &arch, std::optional<SpiritKernel> kernel = std::nullopt);

/// Raw network map on the (real, imag) channels. One output channel comes
/// back as the real part, two as (real, imag).
ComplexImage subnet_forward(const ComplexImage &x, const Subnetwork &net);

/// On acquired locations y <- (y + lambda y_u) / (1 + lambda); lambda = inf
/// replaces. Elsewhere unchanged.
void dc_project(KSpaceGrid &y, const KSpaceGrid &y_u, const SamplingMask &mask, double lambda);
ComplexImage dc_layer(const ComplexImage &c_out, const KSpaceGrid &y_u, const SamplingMask &mask, double lambda);

/// Diagonal of Lambda: 1/(1+lambda) on acquired samples (0 for lambda = inf), 1 elsewhere.
double dc_lambda_diag(bool acquired, double lambda);

/// F^-1 Lambda F applied to an image: the Jacobian of dc_layer, which is
/// also its own adjoint.
ComplexImage dc_jacobian(const ComplexImage &g, const SamplingMask &mask, double lambda);

/// G F F^-1 Lambda F applied to a coil-image stack: the Jacobian of the
/// calibration projection that follows a DC layer. Returns k-space.
KSpaceGrid cc_dc_jacobian(
    const CoilImages &g, const SpiritKernel &kernel, const SamplingMask &mask, double lambda);

struct CascadeOutput {
  ComplexImage image;
  /// Internal k-space state after the last data-consistency step.
  KSpaceGrid kspace;
};

CascadeOutput cascade_forward_single(const KSpaceGrid &y_u, const SamplingMask &mask, const CascadeModel &model);
/// kernel overrides model.cc_kernel, e.g. with one calibrated from this scan.
CascadeOutput cascade_forward_multi(
    const KSpaceGrid &y_u,
    const SamplingMask &mask,
    const CascadeModel &model,
    const CoilSensitivities &maps,
    const SpiritKernel *kernel = nullptr);

/// Dispatches on model.mode; maps are required in multi-coil mode.
CascadeOutput cascade_forward(
    const KSpaceGrid &y_u,
    const SamplingMask &mask,
    const CascadeModel &model,
    const CoilSensitivities *maps,
    const SpiritKernel *kernel = nullptr);

} // namespace mrxfer
