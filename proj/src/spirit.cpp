#include "mrxfer/spirit.hpp"

#include "mrxfer/errors.hpp"
#include "mrxfer/numerics.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mrxfer {

KSpaceGrid extract_calibration(const KSpaceGrid &ksp, std::size_t size)
{
  if (size == 0 || size > ksp.height() || size > ksp.width()) {
    throw std::invalid_argument("extract_calibration: block size exceeds the grid");
  }
  const std::size_t y0 = calib_origin(ksp.height(), size), x0 = calib_origin(ksp.width(), size);
  KSpaceGrid out(ksp.coils(), size, size);
  for (std::size_t c = 0; c < ksp.coils(); ++c) {
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        out(c, y, x) = ksp(c, y0 + y, x0 + x);
      }
    }
  }
  return out;
}

KSpaceGrid extract_calibration(const KSpaceGrid &ksp, const SamplingMask &mask, std::size_t size)
{
  if (mask.height != ksp.height() || mask.width != ksp.width()) {
    throw std::invalid_argument("extract_calibration: mask and k-space shapes differ");
  }
  if (size == 0 || size > ksp.height() || size > ksp.width()) {
    throw std::invalid_argument("extract_calibration: block size exceeds the grid");
  }
  const std::size_t y0 = calib_origin(ksp.height(), size), x0 = calib_origin(ksp.width(), size);
  for (std::size_t y = y0; y < y0 + size; ++y) {
    for (std::size_t x = x0; x < x0 + size; ++x) {
      if (!mask(y, x)) {
        throw ConstraintError(
            "extract_calibration: central " + std::to_string(size) + "x" + std::to_string(size) +
            " region is not fully sampled");
      }
    }
  }
  return extract_calibration(ksp, size);
}

SpiritKernel calibrate_kernel(const KSpaceGrid &calib, std::size_t width, double tikhonov)
{
  if (width == 0 || width % 2 == 0) {
    throw std::invalid_argument("calibrate_kernel: width must be odd");
  }
  if (!(tikhonov >= 0.0)) {
    throw std::invalid_argument("calibrate_kernel: tikhonov must be >= 0");
  }
  if (calib.height() < width || calib.width() < width) {
    throw std::invalid_argument("calibrate_kernel: calibration block smaller than the kernel");
  }
  const std::size_t C = calib.coils(), w = width, half = w / 2;
  const std::size_t cols = C * w * w;
  const std::size_t rows_y = calib.height() - w + 1, rows_x = calib.width() - w + 1;

  SpiritKernel kernel;
  kernel.coils = C;
  kernel.width = w;
  kernel.tikhonov = tikhonov;
  kernel.weights.assign(C * cols, cplx{});
  if (cols == 1) {
    return kernel;
  }

  // Every neighborhood of the block, one row per center position; the
  // column for (source, ky, kx) is source * w * w + ky * w + kx.
  Eigen::MatrixXcd A(rows_y * rows_x, cols);
  for (std::size_t ry = 0; ry < rows_y; ++ry) {
    for (std::size_t rx = 0; rx < rows_x; ++rx) {
      const Eigen::Index row = static_cast<Eigen::Index>(ry * rows_x + rx);
      for (std::size_t s = 0; s < C; ++s) {
        for (std::size_t ky = 0; ky < w; ++ky) {
          for (std::size_t kx = 0; kx < w; ++kx) {
            A(row, static_cast<Eigen::Index>((s * w + ky) * w + kx)) = calib(s, ry + ky, rx + kx);
          }
        }
      }
    }
  }
  const Eigen::MatrixXcd gram = A.adjoint() * A;
  const Eigen::Index n = static_cast<Eigen::Index>(cols) - 1;

  for (std::size_t t = 0; t < C; ++t) {
    const Eigen::Index self = static_cast<Eigen::Index>((t * w + half) * w + half);
    auto keep = [self](Eigen::Index i) { return i < self ? i : i + 1; };
    Eigen::MatrixXcd normal(n, n);
    Eigen::VectorXcd rhs(n);
    double trace = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        normal(i, j) = gram(keep(i), keep(j));
      }
      rhs(i) = gram(keep(i), self);
      trace += normal(i, i).real();
    }
    const double ridge = tikhonov * trace / static_cast<double>(n);
    normal.diagonal().array() += ridge;
    Eigen::LLT<Eigen::MatrixXcd> llt(normal);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("calibrate_kernel: normal equations are singular for target coil " + std::to_string(t));
    }
    const Eigen::VectorXcd sol = llt.solve(rhs);
    if (!sol.allFinite()) {
      throw NumericalError("calibrate_kernel: non-finite weights for target coil " + std::to_string(t));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      kernel.weights[t * cols + static_cast<std::size_t>(keep(i))] = sol(i);
    }
  }
  return kernel;
}

namespace {

void check_kernel(const KSpaceGrid &ksp, const SpiritKernel &kernel)
{
  if (kernel.coils == 0 || kernel.weights.size() != kernel.coils * kernel.coils * kernel.width * kernel.width) {
    throw std::invalid_argument("SPIRiT kernel is empty or malformed");
  }
  if (ksp.coils() != kernel.coils) {
    throw std::invalid_argument(
        "SPIRiT kernel has " + std::to_string(kernel.coils) + " coils, data has " + std::to_string(ksp.coils()));
  }
}

// out_t(k) += sum w * in_s(k +/- d). sign = +1 for G, -1 with conjugated
// weights for the adjoint.
template <bool Adjoint>
KSpaceGrid convolve(const KSpaceGrid &in, const SpiritKernel &kernel)
{
  check_kernel(in, kernel);
  const std::size_t C = kernel.coils, w = kernel.width, half = kernel.half();
  const std::size_t H = in.height(), W = in.width();
  KSpaceGrid out(C, H, W);
  for (std::size_t t = 0; t < C; ++t) {
    for (std::size_t s = 0; s < C; ++s) {
      for (std::size_t ky = 0; ky < w; ++ky) {
        for (std::size_t kx = 0; kx < w; ++kx) {
          cplx wt = kernel.weight(t, s, ky, kx);
          if (wt == cplx{}) {
            continue;
          }
          // Offsets taken modulo the grid so negative shifts wrap.
          std::size_t oy = (ky + H * (1 + w) - half) % H;
          std::size_t ox = (kx + W * (1 + w) - half) % W;
          if constexpr (Adjoint) {
            wt = std::conj(wt);
            oy = (H - oy) % H;
            ox = (W - ox) % W;
          }
          const std::size_t dst = Adjoint ? s : t, src = Adjoint ? t : s;
          auto o = out.coil(dst);
          auto i = in.coil(src);
          for (std::size_t y = 0; y < H; ++y) {
            const std::size_t sy = (y + oy) % H;
            for (std::size_t x = 0; x < W; ++x) {
              o[y * W + x] += wt * i[sy * W + (x + ox) % W];
            }
          }
        }
      }
    }
  }
  return out;
}

} // namespace

KSpaceGrid apply_G(const KSpaceGrid &ksp, const SpiritKernel &kernel) { return convolve<false>(ksp, kernel); }

KSpaceGrid apply_G_adjoint(const KSpaceGrid &ksp, const SpiritKernel &kernel) { return convolve<true>(ksp, kernel); }

double consistency_residual(const KSpaceGrid &ksp, const SpiritKernel &kernel)
{
  const KSpaceGrid g = apply_G(ksp, kernel);
  return nrmse(g.data(), ksp.data());
}

KSpaceGrid cc_projection(const CoilImages &images, const SpiritKernel &kernel)
{
  return apply_G(fft2c(images), kernel);
}

PocsResult pocs_spirit(
    const KSpaceGrid &y_u,
    const SamplingMask &mask,
    const SpiritKernel &kernel,
    double lambda_l1,
    int iters,
    std::size_t levels)
{
  check_kernel(y_u, kernel);
  if (mask.height != y_u.height() || mask.width != y_u.width()) {
    throw std::invalid_argument("pocs_spirit: mask and k-space shapes differ");
  }
  if (!(lambda_l1 >= 0.0) || iters < 0) {
    throw std::invalid_argument("pocs_spirit: lambda_l1 and iters must be non-negative");
  }
  if (lambda_l1 > 0.0) {
    check_wavelet_dims(y_u.height(), y_u.width(), levels);
  }
  const std::size_t H = y_u.height(), W = y_u.width();
  KSpaceGrid y = undersample(y_u, mask);
  for (int it = 0; it < iters; ++it) {
    y = apply_G(y, kernel);
    if (lambda_l1 > 0.0) {
      for (std::size_t c = 0; c < y.coils(); ++c) {
        auto plane = y.coil(c);
        ifft2c_inplace(plane, H, W);
        dwt2_inplace(plane, H, W, levels);
        soft_threshold_inplace(plane, lambda_l1);
        idwt2_inplace(plane, H, W, levels);
        fft2c_inplace(plane, H, W);
      }
    }
    for (std::size_t c = 0; c < y.coils(); ++c) {
      auto plane = y.coil(c);
      auto acq = y_u.coil(c);
      for (std::size_t i = 0; i < plane.size(); ++i) {
        if (mask.acquired(i)) {
          plane[i] = acq[i];
        }
      }
    }
    if (!all_finite(y.data())) {
      throw NumericalError("pocs_spirit: non-finite k-space at iteration " + std::to_string(it));
    }
  }
  PocsResult result{ifft2c(y), std::move(y), iters};
  return result;
}

int pocs_iterations_for(double accel)
{
  static constexpr std::array<double, 5> rs{2, 4, 6, 8, 10};
  static constexpr std::array<double, 5> its{20, 30, 45, 65, 80};
  if (accel <= rs.front()) {
    return static_cast<int>(its.front());
  }
  if (accel >= rs.back()) {
    return static_cast<int>(its.back());
  }
  for (std::size_t i = 1; i < rs.size(); ++i) {
    if (accel <= rs[i]) {
      const double f = (accel - rs[i - 1]) / (rs[i] - rs[i - 1]);
      return static_cast<int>(std::lround(its[i - 1] + f * (its[i] - its[i - 1])));
    }
  }
  return static_cast<int>(its.back());
}

} // namespace mrxfer
