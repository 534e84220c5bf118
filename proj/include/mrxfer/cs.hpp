#pragma once

#include "mrxfer/array.hpp"
#include "mrxfer/sampling.hpp"

#include <vector>

namespace mrxfer {

/// Single-coil compressed sensing with a smoothed wavelet L1 penalty:
///   f(x) = ||M .* F x - y||^2 + lambda * sum_w sqrt(|w|^2 + eps),  w = dwt2(x).
struct CsParams {
  double lambda_l1 = 1e-3;
  int iters = 80;
  double smoothing_eps = 1e-15;
  /// Armijo sufficient-decrease constant.
  double ls_alpha = 0.05;
  /// Backtracking shrink factor.
  double ls_beta = 0.6;
  int max_backtracks = 20;
  std::size_t levels = 4;

  void validate() const;
};

double cs_objective(const ComplexImage &x, const KSpaceGrid &y_u, const SamplingMask &mask, const CsParams &p);
ComplexImage cs_gradient(const ComplexImage &x, const KSpaceGrid &y_u, const SamplingMask &mask, const CsParams &p);

struct CsResult {
  ComplexImage image;
  /// Objective at the start point followed by one entry per accepted step.
  std::vector<double> objective;
  int iterations = 0;
  /// Set when the line search failed even along steepest descent.
  bool stalled = false;
};

/// Polak-Ribiere nonlinear conjugate gradient from the zero-filled image.
CsResult nlcg_reconstruct(const KSpaceGrid &y_u, const SamplingMask &mask, const CsParams &p);

} // namespace mrxfer
