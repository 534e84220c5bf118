#pragma once

#include "mrxfer/array.hpp"

#include <cstddef>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace mrxfer {

/// Returned by psnr for identical magnitudes.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / MSE) over magnitudes, peak = max |ref|. Throws
/// ConstraintError for an all-zero reference.
double psnr(const ComplexImage &ref, const ComplexImage &test);

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Mean SSIM of the magnitudes over all fully contained 11x11 Gaussian
/// windows. The dynamic range defaults to max |ref|.
double ssim(const ComplexImage &ref, const ComplexImage &test, std::optional<double> dynamic_range = std::nullopt);

struct ConvergencePoint {
  double n_tune = 0;
  double psnr = 0;
};

struct ConvergenceResult {
  double n_tune = 0;
  bool converged = false;
};

/// Smallest n_tune whose PSNR increment over the previous point is below
/// 0.05% of ref_psnr. Falls back to the last point with converged = false.
/// Throws std::invalid_argument for fewer than two points or an unsorted
/// curve.
ConvergenceResult convergence_samples(const std::vector<ConvergencePoint> &curve, double ref_psnr);

inline constexpr double kConvergenceFraction = 0.0005;

struct MeanStd {
  double mean = 0;
  double stddev = 0;
};

/// Population standard deviation; non-finite values propagate.
MeanStd mean_std(const std::vector<double> &values);

} // namespace mrxfer
