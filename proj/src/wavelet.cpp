#include "mrxfer/numerics.hpp"

#include <stdexcept>
#include <string>

namespace mrxfer {

namespace {

constexpr std::size_t kTaps = kDb2Lowpass.size();

// Quadrature mirror highpass: g[n] = (-1)^n h[N-1-n].
constexpr std::array<double, kTaps> highpass()
{
  std::array<double, kTaps> g{};
  for (std::size_t n = 0; n < kTaps; ++n) {
    g[n] = (n % 2 ? -1.0 : 1.0) * kDb2Lowpass[kTaps - 1 - n];
  }
  return g;
}
constexpr auto kDb2Highpass = highpass();

// One analysis step on a strided 1D signal of even length n. The first n/2
// outputs are approximation, the rest detail.
void analyze(cplx *x, std::size_t n, std::size_t stride, std::vector<cplx> &buf)
{
  buf.assign(n, cplx{});
  const std::size_t half = n / 2;
  for (std::size_t k = 0; k < half; ++k) {
    cplx a{}, d{};
    for (std::size_t j = 0; j < kTaps; ++j) {
      const cplx v = x[((2 * k + j) % n) * stride];
      a += kDb2Lowpass[j] * v;
      d += kDb2Highpass[j] * v;
    }
    buf[k] = a;
    buf[half + k] = d;
  }
  for (std::size_t i = 0; i < n; ++i) {
    x[i * stride] = buf[i];
  }
}

void synthesize(cplx *x, std::size_t n, std::size_t stride, std::vector<cplx> &buf)
{
  buf.assign(n, cplx{});
  const std::size_t half = n / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const cplx a = x[k * stride];
    const cplx d = x[(half + k) * stride];
    for (std::size_t j = 0; j < kTaps; ++j) {
      buf[(2 * k + j) % n] += kDb2Lowpass[j] * a + kDb2Highpass[j] * d;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    x[i * stride] = buf[i];
  }
}

} // namespace

void check_wavelet_dims(std::size_t height, std::size_t width, std::size_t levels)
{
  if (height == 0 || width == 0) {
    throw std::invalid_argument("dwt2: zero-sized dimension");
  }
  if (levels >= 8 * sizeof(std::size_t)) {
    throw std::invalid_argument("dwt2: too many levels");
  }
  const std::size_t block = std::size_t{1} << levels;
  if (height % block != 0 || width % block != 0) {
    throw std::invalid_argument(
        "dwt2: dimensions " + std::to_string(height) + "x" + std::to_string(width) + " not divisible by 2^" +
        std::to_string(levels));
  }
}

void dwt2_inplace(std::span<cplx> plane, std::size_t height, std::size_t width, std::size_t levels)
{
  check_wavelet_dims(height, width, levels);
  if (plane.size() != height * width) {
    throw std::invalid_argument("dwt2: plane length does not match dimensions");
  }
  std::vector<cplx> buf;
  std::size_t h = height, w = width;
  for (std::size_t l = 0; l < levels; ++l) {
    for (std::size_t y = 0; y < h; ++y) {
      analyze(plane.data() + y * width, w, 1, buf);
    }
    for (std::size_t x = 0; x < w; ++x) {
      analyze(plane.data() + x, h, width, buf);
    }
    h /= 2;
    w /= 2;
  }
}

void idwt2_inplace(std::span<cplx> plane, std::size_t height, std::size_t width, std::size_t levels)
{
  check_wavelet_dims(height, width, levels);
  if (plane.size() != height * width) {
    throw std::invalid_argument("idwt2: plane length does not match dimensions");
  }
  std::vector<cplx> buf;
  for (std::size_t l = levels; l-- > 0;) {
    const std::size_t h = height >> l, w = width >> l;
    for (std::size_t x = 0; x < w; ++x) {
      synthesize(plane.data() + x, h, width, buf);
    }
    for (std::size_t y = 0; y < h; ++y) {
      synthesize(plane.data() + y * width, w, 1, buf);
    }
  }
}

WaveletCoeffs dwt2(const ComplexImage &img, std::size_t levels)
{
  WaveletCoeffs c{levels, img.height(), img.width(), std::vector<cplx>(img.data().begin(), img.data().end())};
  dwt2_inplace(c.data, c.height, c.width, levels);
  return c;
}

ComplexImage idwt2(const WaveletCoeffs &coeffs)
{
  if (coeffs.data.size() != coeffs.height * coeffs.width) {
    throw std::invalid_argument("idwt2: coefficient count does not match dimensions");
  }
  ComplexImage img(coeffs.height, coeffs.width, coeffs.data);
  idwt2_inplace(img.data(), coeffs.height, coeffs.width, coeffs.levels);
  return img;
}

ComplexImage WaveletCoeffs::subband(std::size_t level, Subband band) const
{
  if (level == 0 || level > levels || (band == Subband::LL && level != levels)) {
    throw std::invalid_argument("WaveletCoeffs::subband: no such subband");
  }
  const std::size_t h = height >> level, w = width >> level;
  const std::size_t y0 = (band == Subband::LH || band == Subband::HH) ? h : 0;
  const std::size_t x0 = (band == Subband::HL || band == Subband::HH) ? w : 0;
  ComplexImage out(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      out(y, x) = data[(y0 + y) * width + x0 + x];
    }
  }
  return out;
}

void soft_threshold_inplace(std::span<cplx> values, double tau)
{
  if (!(tau >= 0.0)) {
    throw std::invalid_argument("soft_threshold: tau must be non-negative");
  }
  for (auto &w : values) {
    const double mag = std::abs(w);
    w = mag > tau ? w * ((mag - tau) / mag) : cplx{};
  }
}

WaveletCoeffs soft_threshold(WaveletCoeffs coeffs, double tau)
{
  soft_threshold_inplace(coeffs.data, tau);
  return coeffs;
}

} // namespace mrxfer
