#pragma once

// Stage-level forward/backward machinery shared by cascade.cpp and
// training.cpp. Not installed.

#include "mrxfer/cascade.hpp"

#include <vector>

namespace mrxfer::engine {

/// channels x H x W, channel-major.
using Tensor = std::vector<double>;

struct NetTrace {
  /// acts[0] is the input, acts[l + 1] the post-activation output of layer l.
  std::vector<Tensor> acts;
};

using NetGrad = std::vector<LayerGradient>;

NetGrad zero_grad(const Subnetwork &net);
void accumulate(NetGrad &into, const NetGrad &from);

Tensor to_channels(const ComplexImage &x);

Tensor net_forward(const Subnetwork &net, Tensor input, std::size_t h, std::size_t w, NetTrace *trace);

/// Accumulates parameter gradients into grad. Returns the input gradient
/// when need_input is set, otherwise an empty tensor.
Tensor net_backward(
    const Subnetwork &net,
    const NetTrace &trace,
    std::size_t h,
    std::size_t w,
    Tensor grad_out,
    NetGrad &grad,
    bool need_input);

struct StageTrace {
  NetTrace net;
  /// Single-coil: unit phase and modulus of the stage input.
  std::vector<cplx> unit;
  std::vector<double> radius;
  /// Magnitude (single-coil) or the 2-channel correction (multi-coil).
  Tensor net_out;
};

/// Between stages the cascade state is the image (single-coil, h*w) or the
/// coil k-space (multi-coil, coils*h*w). Gradients share the layout.
using State = std::vector<cplx>;

class Runner {
 public:
  Runner(
      const CascadeModel &model,
      const KSpaceGrid &y_u,
      const SamplingMask &mask,
      const CoilSensitivities *maps,
      const SpiritKernel *kernel = nullptr);

  State initial() const;
  State step(std::size_t p, const State &in, StageTrace *trace) const;
  ComplexImage output(const State &s) const;
  CascadeOutput finish(State s) const;

  /// Stage estimate C(x_ip): the magnitude as a real image (single-coil) or
  /// the corrected coil-combined image (multi-coil).
  ComplexImage stage_estimate(const State &in, std::size_t p, StageTrace &trace) const;

  /// Gradient with respect to the final state given dL/d(output image).
  State output_adjoint(const ComplexImage &g) const;
  /// Backpropagates through stage p. Parameter gradients land in grad.
  State backward_stage(std::size_t p, const StageTrace &trace, State g_out, NetGrad &grad, bool need_input) const;
  /// Backpropagates from dL/d(stage estimate) into the subnet parameters.
  void backward_estimate(std::size_t p, const StageTrace &trace, const ComplexImage &g, NetGrad &grad) const;

  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }

 private:
  void dc(std::vector<cplx> &k, std::size_t coils) const;
  void lambda_diag(std::vector<cplx> &k, std::size_t coils) const;
  /// Sensitivity lift A and conjugate combine A* on flat buffers.
  std::vector<cplx> lift(const std::vector<cplx> &img) const;
  std::vector<cplx> combine(const std::vector<cplx> &coils) const;
  void fft_planes(std::vector<cplx> &data, std::size_t coils, bool inverse) const;

  const CascadeModel &model_;
  const KSpaceGrid &y_u_;
  const SamplingMask &mask_;
  const CoilSensitivities *maps_;
  const SpiritKernel *kernel_ = nullptr;
  std::size_t h_, w_, coils_;
};

} // namespace mrxfer::engine
