#pragma once

// Independent reference implementations used only by tests. They follow the
// textbook definitions directly and share no code with the library.

#include "mrxfer/array.hpp"
#include "mrxfer/cascade.hpp"
#include "mrxfer/numerics.hpp"
#include "mrxfer/rng.hpp"
#include "mrxfer/sampling.hpp"
#include "mrxfer/spirit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

using mrxfer::cplx;

/// Centered orthonormal 1-D DFT matrix: frequency index k maps to k - n/2,
/// sample index j maps to j - n/2.
inline Eigen::MatrixXcd dft_matrix(std::size_t n)
{
  Eigen::MatrixXcd m(n, n);
  const double c = static_cast<double>(n / 2);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const double ph = -2.0 * std::numbers::pi * (static_cast<double>(k) - c) * (static_cast<double>(j) - c) / n;
      m(k, j) = std::polar(1.0 / std::sqrt(static_cast<double>(n)), ph);
    }
  }
  return m;
}

/// 2-D centered DFT as a dense (h*w) x (h*w) operator on row-major images.
inline Eigen::MatrixXcd dft2_matrix(std::size_t h, std::size_t w)
{
  const Eigen::MatrixXcd fy = dft_matrix(h), fx = dft_matrix(w);
  Eigen::MatrixXcd m(h * w, h * w);
  for (std::size_t ky = 0; ky < h; ++ky) {
    for (std::size_t kx = 0; kx < w; ++kx) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          m(ky * w + kx, y * w + x) = fy(ky, y) * fx(kx, x);
        }
      }
    }
  }
  return m;
}

inline std::vector<cplx> naive_dft2c(const std::vector<cplx> &img, std::size_t h, std::size_t w)
{
  const Eigen::MatrixXcd f = dft2_matrix(h, w);
  Eigen::VectorXcd v = Eigen::Map<const Eigen::VectorXcd>(img.data(), static_cast<Eigen::Index>(img.size()));
  Eigen::VectorXcd r = f * v;
  return std::vector<cplx>(r.data(), r.data() + r.size());
}

/// Block-diagonal per-coil operator built from a per-plane matrix.
inline Eigen::MatrixXcd block_diag(const Eigen::MatrixXcd &m, std::size_t blocks)
{
  const auto n = m.rows();
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n * blocks, n * blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    out.block(b * n, b * n, n, n) = m;
  }
  return out;
}

/// Dense SPIRiT operator straight from the weights: row (t, k) gets
/// w[t][s][d] at column (s, (k + d) mod grid).
inline Eigen::MatrixXcd dense_G(const mrxfer::SpiritKernel &k, std::size_t h, std::size_t w)
{
  const std::size_t C = k.coils, n = h * w;
  const long half = static_cast<long>(k.width / 2);
  Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(C * n, C * n);
  for (std::size_t t = 0; t < C; ++t) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t s = 0; s < C; ++s) {
          for (std::size_t ky = 0; ky < k.width; ++ky) {
            for (std::size_t kx = 0; kx < k.width; ++kx) {
              const long sy = ((static_cast<long>(y) + static_cast<long>(ky) - half) % static_cast<long>(h) + h) % h;
              const long sx = ((static_cast<long>(x) + static_cast<long>(kx) - half) % static_cast<long>(w) + w) % w;
              g(t * n + y * w + x, s * n + sy * w + sx) += k.weights[((t * C + s) * k.width + ky) * k.width + kx];
            }
          }
        }
      }
    }
  }
  return g;
}

/// Diagonal Lambda over coils x grid.
inline Eigen::MatrixXcd dense_lambda(const mrxfer::SamplingMask &mask, std::size_t coils, double lambda)
{
  const std::size_t n = mask.height * mask.width;
  Eigen::MatrixXcd d = Eigen::MatrixXcd::Zero(coils * n, coils * n);
  for (std::size_t c = 0; c < coils; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double v = 1.0;
      if (mask.pattern[i]) {
        v = std::isinf(lambda) ? 0.0 : 1.0 / (1.0 + lambda);
      }
      d(c * n + i, c * n + i) = v;
    }
  }
  return d;
}

/// Brute-force PSNR over magnitudes, peak of the reference.
inline double psnr(const std::vector<cplx> &ref, const std::vector<cplx> &test)
{
  long double peak = 0, se = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    peak = std::max<long double>(peak, std::abs(ref[i]));
    const long double d = std::abs(ref[i]) - std::abs(test[i]);
    se += d * d;
  }
  if (se == 0) {
    return std::numeric_limits<double>::infinity();
  }
  return static_cast<double>(10.0L * std::log10(peak * peak / (se / ref.size())));
}

/// Brute-force SSIM: explicit 2-D 11x11 Gaussian window at every valid
/// position, moments computed directly from the window.
inline double ssim(const std::vector<cplx> &ref, const std::vector<cplx> &test, std::size_t h, std::size_t w, double range)
{
  constexpr int win = 11;
  constexpr double sigma = 1.5;
  double g[win][win];
  double sum = 0;
  for (int i = 0; i < win; ++i) {
    for (int j = 0; j < win; ++j) {
      g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * sigma * sigma));
      sum += g[i][j];
    }
  }
  const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + win <= h; ++y) {
    for (std::size_t x = 0; x + win <= w; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
          const double wt = g[i][j] / sum;
          ma += wt * std::abs(ref[(y + i) * w + x + j]);
          mb += wt * std::abs(test[(y + i) * w + x + j]);
        }
      }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
          const double wt = g[i][j] / sum;
          const double a = std::abs(ref[(y + i) * w + x + j]) - ma;
          const double b = std::abs(test[(y + i) * w + x + j]) - mb;
          va += wt * a * a;
          vb += wt * b * b;
          cov += wt * a * b;
        }
      }
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / count;
}


/// One-level periodic db2 analysis matrix built from the textbook taps:
/// rows 0..n/2-1 lowpass, the rest the quadrature-mirror highpass.
inline Eigen::MatrixXd db2_analysis(std::size_t n)
{
  const double s3 = std::sqrt(3.0), d = 4.0 * std::sqrt(2.0);
  const double h[4] = {(1 + s3) / d, (3 + s3) / d, (3 - s3) / d, (1 - s3) / d};
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t k = 0; k < n / 2; ++k) {
    for (std::size_t j = 0; j < 4; ++j) {
      W(k, (2 * k + j) % n) += h[j];
      W(n / 2 + k, (2 * k + j) % n) += (j % 2 ? -1.0 : 1.0) * h[3 - j];
    }
  }
  return W;
}

/// Packed multilevel 2-D transform: X <- Wh X Ww^T, then recurse on the
/// top-left quarter.
inline Eigen::MatrixXcd dwt2_dense(Eigen::MatrixXcd x, std::size_t levels)
{
  std::size_t h = static_cast<std::size_t>(x.rows()), w = static_cast<std::size_t>(x.cols());
  for (std::size_t l = 0; l < levels; ++l) {
    const Eigen::MatrixXd Wh = db2_analysis(h), Ww = db2_analysis(w);
    const Eigen::MatrixXcd blk = x.topLeftCorner(h, w);
    x.topLeftCorner(h, w) = Wh.cast<cplx>() * blk * Ww.transpose().cast<cplx>();
    h /= 2;
    w /= 2;
  }
  return x;
}

/// Smoothed-L1 compressed-sensing objective written out term by term.
inline double cs_objective(
    const std::vector<cplx> &x, const std::vector<cplx> &y_u, const mrxfer::SamplingMask &mask, double lambda,
    double eps, std::size_t levels)
{
  const std::size_t h = mask.height, w = mask.width;
  const auto k = naive_dft2c(x, h, w);
  long double data = 0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (mask.pattern[i]) {
      data += std::norm(k[i] - y_u[i]);
    } else {
      data += std::norm(y_u[i]);
    }
  }
  Eigen::MatrixXcd img(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      img(r, c) = x[r * w + c];
    }
  }
  const Eigen::MatrixXcd coeffs = dwt2_dense(img, levels);
  long double l1 = 0;
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) {
    l1 += std::sqrt(std::norm(coeffs.data()[i]) + eps);
  }
  return static_cast<double>(data + lambda * l1);
}

using mrxfer::ComplexImage;

/// Brute-force PSNR over magnitudes in long double.
inline double psnr(const ComplexImage &ref, const ComplexImage &test)
{
  long double peak = 0, sse = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const long double r = std::abs(ref[i]), t = std::abs(test[i]);
    peak = std::max(peak, r);
    sse += (r - t) * (r - t);
  }
  return static_cast<double>(10.0L * std::log10(peak * peak * ref.size() / sse));
}

/// Direct 2-D Gaussian windows, no separable filtering.
inline double ssim(const ComplexImage &ref, const ComplexImage &test, double range)
{
  const int half = 5;
  long double g[11][11], gsum = 0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      g[i][j] = std::exp(-static_cast<long double>((i - half) * (i - half) + (j - half) * (j - half)) / (2 * 1.5L * 1.5L));
      gsum += g[i][j];
    }
  }
  const long double c1 = std::pow(0.01L * range, 2), c2 = std::pow(0.03L * range, 2);
  long double total = 0;
  std::size_t windows = 0;
  for (std::size_t y = 0; y + 11 <= ref.height(); ++y) {
    for (std::size_t x = 0; x + 11 <= ref.width(); ++x) {
      long double ma = 0, mb = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          const long double w = g[i][j] / gsum;
          ma += w * std::abs(ref(y + i, x + j));
          mb += w * std::abs(test(y + i, x + j));
        }
      }
      long double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          const long double w = g[i][j] / gsum;
          const long double da = std::abs(ref(y + i, x + j)) - ma, db = std::abs(test(y + i, x + j)) - mb;
          va += w * da * da;
          vb += w * db * db;
          cov += w * da * db;
        }
      }
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  }
  return static_cast<double>(total / windows);
}

} // namespace oracle

namespace fixture {

/// Largest magnitude in any array with a data() span; takes the array by
/// reference so temporaries outlive the scan.
template <class A>
double max_abs(const A &a)
{
  double m = 0.0;
  for (const auto v : a.data()) {
    m = std::max(m, static_cast<double>(std::abs(v)));
  }
  return m;
}

using mrxfer::cplx;

inline mrxfer::ComplexImage random_image(std::size_t h, std::size_t w, std::uint64_t seed, double scale = 1.0)
{
  mrxfer::Rng rng(seed);
  mrxfer::ComplexImage img(h, w);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img[i] = cplx{rng.uniform(-scale, scale), rng.uniform(-scale, scale)};
  }
  return img;
}

/// Bernoulli mask with the DC sample forced on.
inline mrxfer::SamplingMask random_mask(std::size_t h, std::size_t w, double fraction, std::uint64_t seed)
{
  mrxfer::Rng rng(seed);
  mrxfer::SamplingMask m;
  m.height = h;
  m.width = w;
  m.pattern.resize(h * w);
  for (auto &p : m.pattern) {
    p = rng.uniform() < fraction ? 1 : 0;
  }
  m.pattern[(h / 2) * w + w / 2] = 1;
  m.accel = static_cast<double>(h * w) / static_cast<double>(m.count());
  m.seed = seed;
  return m;
}

/// Random kernel with the self taps zeroed.
inline mrxfer::SpiritKernel random_kernel(std::size_t coils, std::size_t width, std::uint64_t seed, double scale = 0.1)
{
  mrxfer::Rng rng(seed);
  mrxfer::SpiritKernel k;
  k.coils = coils;
  k.width = width;
  k.weights.resize(coils * coils * width * width);
  for (auto &v : k.weights) {
    v = cplx{rng.uniform(-scale, scale), rng.uniform(-scale, scale)};
  }
  for (std::size_t t = 0; t < coils; ++t) {
    k.weights[k.index(t, t, width / 2, width / 2)] = cplx{};
  }
  return k;
}


/// Multi-coil k-space whose coils obey an exact finite cross-coil relation:
/// each sensitivity has a 3 x 3 k-space support, so y_c is the image
/// spectrum circularly convolved with a 3 x 3 stencil and any two coils
/// satisfy s_b * y_a == s_a * y_b.
inline mrxfer::KSpaceGrid exact_relation_kspace(std::size_t n, std::size_t coils, std::uint64_t seed)
{
  using namespace mrxfer;
  Rng rng(seed);
  ComplexImage x = random_image(n, n, seed + 1);
  KSpaceGrid out(coils, n, n);
  const std::size_t c0 = n / 2;
  for (std::size_t c = 0; c < coils; ++c) {
    ComplexImage spec(n, n);
    for (std::size_t dy = 0; dy < 3; ++dy) {
      for (std::size_t dx = 0; dx < 3; ++dx) {
        spec(c0 - 1 + dy, c0 - 1 + dx) = cplx{rng.uniform(-1, 1), rng.uniform(-1, 1)};
      }
    }
    spec(c0, c0) += 3.0;
    const CoilImages map = ifft2c(KSpaceGrid(1, n, n, {spec.data().begin(), spec.data().end()}));
    ComplexImage prod(n, n);
    for (std::size_t i = 0; i < prod.size(); ++i) {
      prod[i] = map.data()[i] * x[i];
    }
    const KSpaceGrid k = fft2c(prod);
    std::copy(k.data().begin(), k.data().end(), out.coil(c).begin());
  }
  return out;
}

} // namespace fixture
