#include "mrxfer/cs.hpp"

#include "mrxfer/errors.hpp"
#include "mrxfer/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mrxfer {

void CsParams::validate() const
{
  if (!(lambda_l1 >= 0.0)) {
    throw std::invalid_argument("CsParams: lambda_l1 must be >= 0");
  }
  if (iters < 1) {
    throw std::invalid_argument("CsParams: iters must be >= 1");
  }
  if (!(smoothing_eps > 0.0)) {
    throw std::invalid_argument("CsParams: smoothing_eps must be > 0");
  }
  if (!(ls_alpha > 0.0 && ls_alpha < 1.0) || !(ls_beta > 0.0 && ls_beta < 1.0) || max_backtracks < 1) {
    throw std::invalid_argument("CsParams: invalid line-search constants");
  }
}

namespace {

void check_shapes(const ComplexImage &x, const KSpaceGrid &y_u, const SamplingMask &mask)
{
  if (y_u.coils() != 1) {
    throw std::invalid_argument("cs: expected single-coil k-space");
  }
  if (x.height() != y_u.height() || x.width() != y_u.width() || mask.height != y_u.height() ||
      mask.width != y_u.width()) {
    throw std::invalid_argument("cs: image, k-space and mask shapes differ");
  }
}

std::vector<cplx> forward_fft(std::span<const cplx> x, std::size_t h, std::size_t w)
{
  std::vector<cplx> k(x.begin(), x.end());
  fft2c_inplace(k, h, w);
  return k;
}

std::vector<cplx> forward_dwt(std::span<const cplx> x, std::size_t h, std::size_t w, std::size_t levels)
{
  std::vector<cplx> c(x.begin(), x.end());
  dwt2_inplace(c, h, w, levels);
  return c;
}

// Objective along x + t d given the transforms of x and d.
class LineObjective {
 public:
  LineObjective(
      std::vector<cplx> fx,
      std::vector<cplx> fd,
      std::vector<cplx> wx,
      std::vector<cplx> wd,
      std::span<const cplx> y,
      const SamplingMask &mask,
      const CsParams &p)
      : fx_(std::move(fx)), fd_(std::move(fd)), wx_(std::move(wx)), wd_(std::move(wd)), y_(y), mask_(mask), p_(p)
  {
  }

  double operator()(double t) const
  {
    double data = 0.0;
    for (std::size_t i = 0; i < fx_.size(); ++i) {
      const cplx pred = mask_.acquired(i) ? fx_[i] + t * fd_[i] : cplx{};
      data += std::norm(pred - y_[i]);
    }
    double l1 = 0.0;
    if (p_.lambda_l1 > 0.0) {
      for (std::size_t i = 0; i < wx_.size(); ++i) {
        l1 += std::sqrt(std::norm(wx_[i] + t * wd_[i]) + p_.smoothing_eps);
      }
    }
    return data + p_.lambda_l1 * l1;
  }

 private:
  std::vector<cplx> fx_, fd_, wx_, wd_;
  std::span<const cplx> y_;
  const SamplingMask &mask_;
  const CsParams &p_;
};

} // namespace

double cs_objective(const ComplexImage &x, const KSpaceGrid &y_u, const SamplingMask &mask, const CsParams &p)
{
  check_shapes(x, y_u, mask);
  const auto fx = forward_fft(x.data(), x.height(), x.width());
  double data = 0.0;
  const auto y = y_u.coil(0);
  for (std::size_t i = 0; i < fx.size(); ++i) {
    data += std::norm((mask.acquired(i) ? fx[i] : cplx{}) - y[i]);
  }
  double l1 = 0.0;
  if (p.lambda_l1 > 0.0) {
    for (const auto &w : forward_dwt(x.data(), x.height(), x.width(), p.levels)) {
      l1 += std::sqrt(std::norm(w) + p.smoothing_eps);
    }
  }
  return data + p.lambda_l1 * l1;
}

ComplexImage cs_gradient(const ComplexImage &x, const KSpaceGrid &y_u, const SamplingMask &mask, const CsParams &p)
{
  check_shapes(x, y_u, mask);
  const std::size_t h = x.height(), w = x.width();
  auto r = forward_fft(x.data(), h, w);
  const auto y = y_u.coil(0);
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = mask.acquired(i) ? 2.0 * (r[i] - y[i]) : cplx{};
  }
  ifft2c_inplace(r, h, w);

  ComplexImage g(h, w, std::move(r));
  if (p.lambda_l1 > 0.0) {
    auto c = forward_dwt(x.data(), h, w, p.levels);
    for (auto &v : c) {
      v = p.lambda_l1 * v / std::sqrt(std::norm(v) + p.smoothing_eps);
    }
    // The transform is orthogonal, so its adjoint is the inverse.
    idwt2_inplace(c, h, w, p.levels);
    for (std::size_t i = 0; i < c.size(); ++i) {
      g[i] += c[i];
    }
  }
  return g;
}

CsResult nlcg_reconstruct(const KSpaceGrid &y_u, const SamplingMask &mask, const CsParams &p)
{
  p.validate();
  if (y_u.coils() != 1) {
    throw std::invalid_argument("nlcg_reconstruct: expected single-coil k-space");
  }
  const std::size_t h = y_u.height(), w = y_u.width();
  ComplexImage x = ifft2c(y_u).image(0);
  check_shapes(x, y_u, mask);

  CsResult result;
  double fval = cs_objective(x, y_u, mask, p);
  result.objective.push_back(fval);

  ComplexImage g = cs_gradient(x, y_u, mask, p);
  std::vector<cplx> d(g.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = -g[i];
  }
  std::vector<cplx> g_prev;
  double t0 = 1.0;

  for (int it = 0; it < p.iters; ++it) {
    if (norm2(g.data()) == 0.0) {
      break;
    }
    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      double slope = dot_re(g.data(), d);
      if (attempt == 1 || slope >= 0.0) {
        for (std::size_t i = 0; i < d.size(); ++i) {
          d[i] = -g[i];
        }
        slope = dot_re(g.data(), d);
      }
      const LineObjective line(
          forward_fft(x.data(), h, w), forward_fft(d, h, w), forward_dwt(x.data(), h, w, p.levels),
          forward_dwt(d, h, w, p.levels), y_u.coil(0), mask, p);

      // Armijo backtracking from t0. The next first trial shrinks after more
      // than two backtracks and grows after none.
      double t = t0;
      for (int bt = 0; bt <= p.max_backtracks; ++bt) {
        const double ft = line(t);
        if (ft <= fval + p.ls_alpha * t * slope) {
          for (std::size_t i = 0; i < d.size(); ++i) {
            x[i] += t * d[i];
          }
          fval = ft;
          if (bt > 2) {
            t0 *= p.ls_beta;
          } else if (bt == 0) {
            t0 /= p.ls_beta;
          }
          accepted = true;
          break;
        }
        t *= p.ls_beta;
      }
    }
    if (!accepted) {
      result.stalled = true;
      break;
    }
    if (!all_finite(x.data())) {
      throw NumericalError("nlcg_reconstruct: non-finite iterate at iteration " + std::to_string(it));
    }
    result.objective.push_back(fval);
    result.iterations = it + 1;

    g_prev.assign(g.data().begin(), g.data().end());
    g = cs_gradient(x, y_u, mask, p);
    const double gg_prev = dot_re(g_prev, g_prev);
    double beta = 0.0;
    if (gg_prev > 0.0) {
      double num = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const cplx diff = g[i] - g_prev[i];
        num += g[i].real() * diff.real() + g[i].imag() * diff.imag();
      }
      beta = std::max(0.0, num / gg_prev);
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] = -g[i] + beta * d[i];
    }
  }
  result.image = std::move(x);
  return result;
}

} // namespace mrxfer
