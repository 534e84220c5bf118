#pragma once

#include "mrxfer/array.hpp"

#include <cstdint>
#include <vector>

namespace mrxfer {

/// Slope of the variable-density profile r(k) = r0 * (1 + slope * d(k)),
/// where d is the distance from the k-space center normalized by the
/// half-extent of each axis.
inline constexpr double kDensitySlope = 2.0;
/// Candidates tried around each active point during dart throwing.
inline constexpr int kPoissonCandidates = 30;
/// Bisection stops once the sampled fraction is within this relative
/// distance of 1/R.
inline constexpr double kFractionTolerance = 0.005;
/// Test banks draw seeds from a range disjoint from training banks.
inline constexpr std::uint64_t kTestBankSeedOffset = 1'000'000;

/// Boolean k-space pattern; true entries are acquired.
struct SamplingMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pattern;
  double accel = 1.0;
  std::size_t calib_size = 0;
  std::uint64_t seed = 0;
  /// Radius scale r0 selected by the fraction calibration (0 for full masks).
  double min_radius = 0.0;

  bool operator()(std::size_t y, std::size_t x) const { return pattern[y * width + x] != 0; }
  bool acquired(std::size_t i) const { return pattern[i] != 0; }
  std::size_t count() const;
  double fraction() const;

  static SamplingMask full(std::size_t height, std::size_t width);
};

enum class BankRole { train, test };

struct MaskBank {
  std::vector<SamplingMask> masks;
  BankRole role = BankRole::train;

  const SamplingMask &operator[](std::size_t i) const { return masks[i % masks.size()]; }
  std::size_t size() const { return masks.size(); }
};

/// First row/column of the centered calibration block of edge `size`.
inline std::size_t calib_origin(std::size_t n, std::size_t size) { return n / 2 - size / 2; }

/// Local minimum-distance radius at pixel (y, x) for radius scale r0.
double poisson_radius(std::size_t height, std::size_t width, double y, double x, double r0);

/// Variable-density Poisson-disc mask with a fully sampled calib_size square
/// at the center. The radius scale is bisected until the sampled fraction
/// is within kFractionTolerance of 1/accel. Deterministic in its arguments.
/// Throws std::invalid_argument for accel < 1 or calib_size >= min(height,
/// width), ConstraintError when 1/accel is outside the reachable range.
SamplingMask generate_mask(std::size_t height, std::size_t width, double accel, std::size_t calib_size, std::uint64_t seed);

/// n pairwise-distinct masks from seeds seed, seed+1, ... (colliding seeds
/// are skipped). Throws ConstraintError if n distinct masks cannot be found.
MaskBank generate_mask_bank(
    std::size_t n,
    std::size_t height,
    std::size_t width,
    double accel,
    std::size_t calib_size,
    std::uint64_t seed,
    BankRole role = BankRole::train);

/// True if every pair of acquired points outside the calibration block is at
/// least r(midpoint) apart.
bool satisfies_poisson_disc(const SamplingMask &mask);

KSpaceGrid undersample(const KSpaceGrid &ksp, const SamplingMask &mask);
void undersample_inplace(KSpaceGrid &ksp, const SamplingMask &mask);

/// Per-coil inverse FFT of undersampled k-space.
CoilImages zero_filled_recon(const KSpaceGrid &ksp_u);

} // namespace mrxfer
