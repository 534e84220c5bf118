#pragma once

#include "mrxfer/array.hpp"

#include <array>
#include <cstddef>
#include <span>

namespace mrxfer {

// ---------------------------------------------------------------------------
// Centered, orthonormal 2D FFT. The DC term sits at (height/2, width/2) and
// both directions are scaled by 1/sqrt(height*width), so Parseval holds.

KSpaceGrid fft2c(const ComplexImage &img);
KSpaceGrid fft2c(const CoilImages &imgs);
CoilImages ifft2c(const KSpaceGrid &ksp);

/// In-place transforms of one row-major plane.
void fft2c_inplace(std::span<cplx> plane, std::size_t height, std::size_t width);
void ifft2c_inplace(std::span<cplx> plane, std::size_t height, std::size_t width);

// ---------------------------------------------------------------------------
// Daubechies-4 (db2, four taps) orthogonal wavelet, periodic extension.

/// Analysis lowpass taps (1+sqrt3, 3+sqrt3, 3-sqrt3, 1-sqrt3) / (4 sqrt2).
inline constexpr std::array<double, 4> kDb2Lowpass{
    0.482962913144534143,
    0.836516303737807906,
    0.224143868042013381,
    -0.129409522551260381,
};

enum class Subband { LL, HL, LH, HH };

/// Packed multilevel coefficients: the deepest LL block sits in the top-left
/// corner, and level l (1 = finest) occupies the quadrants of the
/// (height >> (l-1)) x (width >> (l-1)) block. HL holds horizontal detail
/// (top-right), LH vertical detail (bottom-left), HH diagonal.
struct WaveletCoeffs {
  std::size_t levels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<cplx> data;

  /// Copy of one subband. LL is only defined at level == levels.
  ComplexImage subband(std::size_t level, Subband band) const;
};

WaveletCoeffs dwt2(const ComplexImage &img, std::size_t levels);
ComplexImage idwt2(const WaveletCoeffs &coeffs);

void dwt2_inplace(std::span<cplx> plane, std::size_t height, std::size_t width, std::size_t levels);
void idwt2_inplace(std::span<cplx> plane, std::size_t height, std::size_t width, std::size_t levels);

/// Throws std::invalid_argument unless both dims are divisible by 2^levels.
void check_wavelet_dims(std::size_t height, std::size_t width, std::size_t levels);

// ---------------------------------------------------------------------------
// Complex soft-thresholding: w -> w * max(|w| - tau, 0) / |w|.

WaveletCoeffs soft_threshold(WaveletCoeffs coeffs, double tau);
void soft_threshold_inplace(std::span<cplx> values, double tau);

} // namespace mrxfer
