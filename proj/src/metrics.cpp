#include "mrxfer/metrics.hpp"

#include "mrxfer/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mrxfer {

namespace {

void check_pair(const ComplexImage &a, const ComplexImage &b, const char *who)
{
  if (!a.same_shape(b) || a.empty()) {
    throw std::invalid_argument(std::string(who) + ": images must be non-empty and the same shape");
  }
}

std::vector<double> magnitudes(const ComplexImage &x)
{
  std::vector<double> m(x.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = std::abs(x[i]);
  }
  return m;
}

std::array<double, kSsimWindow> gaussian_window()
{
  std::array<double, kSsimWindow> g{};
  const double c = (kSsimWindow - 1) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += g[i];
  }
  for (auto &v : g) {
    v /= sum;
  }
  return g;
}

// Valid-region separable filtering: (h-10) x (w-10) output.
std::vector<double> filter_valid(const std::vector<double> &img, std::size_t h, std::size_t w)
{
  static const auto g = gaussian_window();
  const std::size_t oh = h - kSsimWindow + 1, ow = w - kSsimWindow + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) {
        s += g[k] * img[y * w + x + k];
      }
      rows[y * ow + x] = s;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) {
        s += g[k] * rows[(y + k) * ow + x];
      }
      out[y * ow + x] = s;
    }
  }
  return out;
}

} // namespace

double psnr(const ComplexImage &ref, const ComplexImage &test)
{
  check_pair(ref, test, "psnr");
  double peak = 0.0, sse = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double r = std::abs(ref[i]);
    const double d = r - std::abs(test[i]);
    peak = std::max(peak, r);
    sse += d * d;
  }
  if (peak == 0.0) {
    throw ConstraintError("psnr: reference is all zero, peak is undefined");
  }
  if (sse == 0.0) {
    return kPsnrIdentical;
  }
  const double mse = sse / static_cast<double>(ref.size());
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const ComplexImage &ref, const ComplexImage &test, std::optional<double> dynamic_range)
{
  check_pair(ref, test, "ssim");
  const std::size_t h = ref.height(), w = ref.width();
  if (h < kSsimWindow || w < kSsimWindow) {
    throw std::invalid_argument("ssim: images must be at least 11x11");
  }
  const auto a = magnitudes(ref), b = magnitudes(test);
  const double range = dynamic_range ? *dynamic_range : *std::max_element(a.begin(), a.end());
  if (!(range > 0.0)) {
    throw ConstraintError("ssim: dynamic range must be positive");
  }
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, h, w), mu_b = filter_valid(b, h, w);
  const auto e_aa = filter_valid(aa, h, w), e_bb = filter_valid(bb, h, w), e_ab = filter_valid(ab, h, w);
  const double c1 = (kSsimK1 * range) * (kSsimK1 * range);
  const double c2 = (kSsimK2 * range) * (kSsimK2 * range);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

ConvergenceResult convergence_samples(const std::vector<ConvergencePoint> &curve, double ref_psnr)
{
  if (curve.size() < 2) {
    throw std::invalid_argument("convergence_samples: at least two points are required");
  }
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (!(curve[i].n_tune > curve[i - 1].n_tune)) {
      throw std::invalid_argument("convergence_samples: curve must be strictly increasing in n_tune");
    }
  }
  const double threshold = kConvergenceFraction * ref_psnr;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (std::abs(curve[i].psnr - curve[i - 1].psnr) < threshold) {
      return {curve[i].n_tune, true};
    }
  }
  return {curve.back().n_tune, false};
}

MeanStd mean_std(const std::vector<double> &values)
{
  if (values.empty()) {
    return {std::nan(""), std::nan("")};
  }
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) {
    ss += (v - mean) * (v - mean);
  }
  return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

} // namespace mrxfer
