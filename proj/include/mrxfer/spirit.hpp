#pragma once

#include "mrxfer/array.hpp"
#include "mrxfer/sampling.hpp"

#include <cstddef>
#include <vector>

namespace mrxfer {

/// k-space interpolation kernel. For target coil t, the synthesized sample is
///   (G y)_t(k) = sum_s sum_{dy,dx} w[t][s][dy][dx] * y_s(k + (dy, dx))
/// with circular indexing. The (t, t, 0, 0) entry is always zero.
struct SpiritKernel {
  std::size_t coils = 0;
  std::size_t width = 0;
  double tikhonov = 0.0;
  /// Layout [target][source][ky][kx], offsets ky - width/2 and kx - width/2.
  std::vector<cplx> weights;

  std::size_t half() const { return width / 2; }
  std::size_t index(std::size_t target, std::size_t source, std::size_t ky, std::size_t kx) const
  {
    return ((target * coils + source) * width + ky) * width + kx;
  }
  cplx weight(std::size_t target, std::size_t source, std::size_t ky, std::size_t kx) const
  {
    return weights[index(target, source, ky, kx)];
  }
};

/// Central size x size block of every coil (rows/cols from calib_origin).
KSpaceGrid extract_calibration(const KSpaceGrid &ksp, std::size_t size);
/// As above, but first checks the block is fully acquired in mask; throws
/// ConstraintError otherwise.
KSpaceGrid extract_calibration(const KSpaceGrid &ksp, const SamplingMask &mask, std::size_t size);

/// Per target coil, regularized least squares predicting each calibration
/// sample from its width x width x coils neighborhood (self excluded). The
/// ridge term is tikhonov * trace(A^H A) / unknowns.
SpiritKernel calibrate_kernel(const KSpaceGrid &calib, std::size_t width, double tikhonov);

KSpaceGrid apply_G(const KSpaceGrid &ksp, const SpiritKernel &kernel);
KSpaceGrid apply_G_adjoint(const KSpaceGrid &ksp, const SpiritKernel &kernel);

/// ||(G - I) y|| / ||y|| over the whole grid.
double consistency_residual(const KSpaceGrid &ksp, const SpiritKernel &kernel);

/// Calibration consistency G F x for a multi-coil image stack, returned in
/// k-space.
KSpaceGrid cc_projection(const CoilImages &images, const SpiritKernel &kernel);

struct PocsResult {
  CoilImages images;
  /// k-space state after the final data-consistency step.
  KSpaceGrid kspace;
  int iterations = 0;
};

/// L1-SPIRiT by projection onto convex sets, starting from zero-filled
/// k-space: each iteration applies G, per-coil wavelet soft-thresholding
/// with lambda_l1, and a hard replacement of acquired samples.
PocsResult pocs_spirit(
    const KSpaceGrid &y_u,
    const SamplingMask &mask,
    const SpiritKernel &kernel,
    double lambda_l1,
    int iters,
    std::size_t levels = 4);

/// Iteration counts tuned per acceleration: R = 2, 4, 6, 8, 10 use
/// 20, 30, 45, 65, 80. Other R are linearly interpolated and clamped.
int pocs_iterations_for(double accel);

inline constexpr std::size_t kDefaultKernelWidth = 7;
inline constexpr double kDefaultTikhonov = 1e-2;
inline constexpr std::size_t kDefaultCalibSize = 24;

} // namespace mrxfer
