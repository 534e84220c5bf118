#include "mrxfer/sampling.hpp"

#include "mrxfer/errors.hpp"
#include "mrxfer/numerics.hpp"
#include "mrxfer/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <tuple>

namespace mrxfer {

std::size_t SamplingMask::count() const
{
  return static_cast<std::size_t>(std::count(pattern.begin(), pattern.end(), std::uint8_t{1}));
}

double SamplingMask::fraction() const
{
  return pattern.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(pattern.size());
}

SamplingMask SamplingMask::full(std::size_t height, std::size_t width)
{
  SamplingMask m;
  m.height = height;
  m.width = width;
  m.pattern.assign(height * width, 1);
  return m;
}

double poisson_radius(std::size_t height, std::size_t width, double y, double x, double r0)
{
  const double dy = (y - static_cast<double>(height / 2)) / (0.5 * static_cast<double>(height));
  const double dx = (x - static_cast<double>(width / 2)) / (0.5 * static_cast<double>(width));
  return r0 * (1.0 + kDensitySlope * std::sqrt(dy * dy + dx * dx));
}

namespace {

struct Geometry {
  std::size_t height, width, calib;
  std::size_t cy0, cx0;

  Geometry(std::size_t h, std::size_t w, std::size_t c)
      : height(h), width(w), calib(c), cy0(calib_origin(h, c)), cx0(calib_origin(w, c))
  {
  }

  bool in_calib(std::size_t y, std::size_t x) const
  {
    return calib > 0 && y >= cy0 && y < cy0 + calib && x >= cx0 && x < cx0 + calib;
  }
};

// Reach of the neighborhood search around a point whose local radius is r.
// The radius at a conflicting neighbor q is bounded by r plus the growth of
// the profile over the separation, which gives r / (1 - 2*slope*r0/min(H,W)).
double search_reach(const Geometry &g, double r, double r0)
{
  const double m = static_cast<double>(std::min(g.height, g.width));
  const double denom = 1.0 - 2.0 * kDensitySlope * r0 / m;
  if (denom <= 0.1) {
    return poisson_radius(g.height, g.width, 0.0, 0.0, r0) * 2.0;
  }
  return r / denom;
}

class DiscSampler {
 public:
  DiscSampler(const Geometry &g, double r0) : g_(g), r0_(r0), taken_(g.height * g.width, 0) {}

  bool admissible(long y, long x) const
  {
    if (y < 0 || x < 0 || y >= static_cast<long>(g_.height) || x >= static_cast<long>(g_.width)) {
      return false;
    }
    const auto uy = static_cast<std::size_t>(y), ux = static_cast<std::size_t>(x);
    if (g_.in_calib(uy, ux) || taken_[uy * g_.width + ux]) {
      return false;
    }
    const double r = poisson_radius(g_.height, g_.width, y, x, r0_);
    const long reach = static_cast<long>(std::ceil(search_reach(g_, r, r0_)));
    const long y0 = std::max(0L, y - reach), y1 = std::min<long>(g_.height - 1, y + reach);
    const long x0 = std::max(0L, x - reach), x1 = std::min<long>(g_.width - 1, x + reach);
    for (long qy = y0; qy <= y1; ++qy) {
      for (long qx = x0; qx <= x1; ++qx) {
        if (!taken_[qy * g_.width + qx]) {
          continue;
        }
        const double my = 0.5 * static_cast<double>(y + qy), mx = 0.5 * static_cast<double>(x + qx);
        const double rm = poisson_radius(g_.height, g_.width, my, mx, r0_);
        const double dy = static_cast<double>(y - qy), dx = static_cast<double>(x - qx);
        if (dy * dy + dx * dx < rm * rm) {
          return false;
        }
      }
    }
    return true;
  }

  void take(long y, long x)
  {
    taken_[static_cast<std::size_t>(y) * g_.width + static_cast<std::size_t>(x)] = 1;
    ++count_;
  }

  std::size_t count() const { return count_; }
  const std::vector<std::uint8_t> &taken() const { return taken_; }

 private:
  const Geometry &g_;
  double r0_;
  std::vector<std::uint8_t> taken_;
  std::size_t count_ = 0;
};

// Bridson dart throwing on the integer grid followed by a shuffled sweep that
// fills any pixel the active-list phase could not reach, so the result is a
// maximal disc packing.
std::vector<std::uint8_t> poisson_pattern(const Geometry &g, double r0, std::uint64_t seed, std::size_t *count)
{
  Rng rng(seed);
  DiscSampler sampler(g, r0);
  std::vector<std::pair<long, long>> active;

  for (int attempt = 0; attempt < 64 && active.empty(); ++attempt) {
    const long y = static_cast<long>(rng.index(g.height));
    const long x = static_cast<long>(rng.index(g.width));
    if (sampler.admissible(y, x)) {
      sampler.take(y, x);
      active.emplace_back(y, x);
    }
  }

  while (!active.empty()) {
    const std::size_t i = rng.index(active.size());
    const auto [py, px] = active[i];
    const double r = std::max(1.0, poisson_radius(g.height, g.width, py, px, r0));
    bool placed = false;
    for (int k = 0; k < kPoissonCandidates; ++k) {
      const double angle = 2.0 * std::numbers::pi * rng.uniform();
      const double rad = r * (1.0 + rng.uniform());
      const long qy = py + std::lround(rad * std::sin(angle));
      const long qx = px + std::lround(rad * std::cos(angle));
      if (sampler.admissible(qy, qx)) {
        sampler.take(qy, qx);
        active.emplace_back(qy, qx);
        placed = true;
        break;
      }
    }
    if (!placed) {
      active[i] = active.back();
      active.pop_back();
    }
  }

  std::vector<std::size_t> order(g.height * g.width);
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  rng.shuffle(order);
  for (const auto i : order) {
    const long y = static_cast<long>(i / g.width), x = static_cast<long>(i % g.width);
    if (sampler.admissible(y, x)) {
      sampler.take(y, x);
    }
  }

  auto pattern = sampler.taken();
  std::size_t n = sampler.count();
  for (std::size_t y = g.cy0; y < g.cy0 + g.calib; ++y) {
    for (std::size_t x = g.cx0; x < g.cx0 + g.calib; ++x) {
      pattern[y * g.width + x] = 1;
      ++n;
    }
  }
  *count = n;
  return pattern;
}

struct Trial {
  double r0;
  std::vector<std::uint8_t> pattern;
  double fraction;
};

Trial run_trial(const Geometry &g, double r0, std::uint64_t seed)
{
  std::size_t n = 0;
  auto p = poisson_pattern(g, r0, seed, &n);
  return {r0, std::move(p), static_cast<double>(n) / static_cast<double>(g.height * g.width)};
}

// Bisection on r0 starting from an initial guess. Fraction decreases with r0.
Trial calibrate(const Geometry &g, double target, std::uint64_t seed, double guess)
{
  const double tol = kFractionTolerance * target;
  Trial best = run_trial(g, guess, seed);
  if (std::abs(best.fraction - target) <= tol) {
    return best;
  }
  auto consider = [&](Trial &&t) {
    if (std::abs(t.fraction - target) < std::abs(best.fraction - target)) {
      best = std::move(t);
    }
  };

  double lo = guess, hi = guess;
  const double r_cap = static_cast<double>(std::max(g.height, g.width));
  if (best.fraction > target) {
    // r0 too small; grow hi until the fraction drops below target.
    for (;;) {
      hi = std::min(hi * 1.25 + 0.05, r_cap);
      Trial t = run_trial(g, hi, seed);
      const bool below = t.fraction <= target;
      consider(std::move(t));
      if (below || hi >= r_cap) {
        break;
      }
      lo = hi;
    }
  } else {
    for (;;) {
      lo = std::max(lo / 1.25 - 0.05, 0.05);
      Trial t = run_trial(g, lo, seed);
      const bool above = t.fraction >= target;
      consider(std::move(t));
      if (above || lo <= 0.05) {
        break;
      }
      hi = lo;
    }
  }
  for (int it = 0; it < 48 && std::abs(best.fraction - target) > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    Trial t = run_trial(g, mid, seed);
    if (t.fraction > target) {
      lo = mid;
    } else {
      hi = mid;
    }
    consider(std::move(t));
    if (hi - lo < 1e-9) {
      break;
    }
  }
  return best;
}

// Radius scale that hits the target for a fixed reference stream. Per-seed
// calibration starts from it, which usually converges in one or two trials.
double reference_radius(const Geometry &g, double target)
{
  static std::mutex mutex;
  static std::map<std::tuple<std::size_t, std::size_t, std::size_t, double>, double> cache;
  const auto key = std::make_tuple(g.height, g.width, g.calib, target);
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) {
      return it->second;
    }
  }
  // Area heuristic: a disc packing of radius r covers ~ (sqrt3/2) r^2 per point.
  const double area_per_point = 1.0 / target;
  const double guess = std::max(0.3, std::sqrt(area_per_point / 0.866) / (1.0 + kDensitySlope * 0.6));
  const double r0 = calibrate(g, target, 0x5EED0000ull, guess).r0;
  std::lock_guard lock(mutex);
  cache.emplace(key, r0);
  return r0;
}

} // namespace

SamplingMask generate_mask(std::size_t height, std::size_t width, double accel, std::size_t calib_size, std::uint64_t seed)
{
  if (height == 0 || width == 0) {
    throw std::invalid_argument("generate_mask: zero-sized dimension");
  }
  if (!(accel >= 1.0) || !std::isfinite(accel)) {
    throw std::invalid_argument("generate_mask: acceleration must be >= 1");
  }
  if (calib_size >= std::min(height, width)) {
    throw std::invalid_argument("generate_mask: calibration size must be smaller than both dimensions");
  }

  SamplingMask mask;
  mask.height = height;
  mask.width = width;
  mask.accel = accel;
  mask.calib_size = calib_size;
  mask.seed = seed;
  if (accel == 1.0) {
    mask.pattern.assign(height * width, 1);
    return mask;
  }

  const double target = 1.0 / accel;
  const double total = static_cast<double>(height * width);
  const double calib_frac = static_cast<double>(calib_size * calib_size) / total;
  if (calib_frac > target * (1.0 + 0.05)) {
    std::ostringstream msg;
    msg << "generate_mask: acceleration " << accel << " unreachable; calibration block alone samples "
        << calib_frac << " of k-space, achievable fractions are [" << calib_frac << ", 1]";
    throw ConstraintError(msg.str());
  }

  const Geometry g(height, width, calib_size);
  const double r_ref = reference_radius(g, target);
  Trial t = calibrate(g, target, seed, r_ref);
  if (std::abs(t.fraction - target) > 0.05 * target) {
    std::ostringstream msg;
    msg << "generate_mask: could not reach sampling fraction " << target << " (closest " << t.fraction
        << "); achievable fractions lie in [" << calib_frac << ", 1]";
    throw ConstraintError(msg.str());
  }
  mask.pattern = std::move(t.pattern);
  mask.min_radius = t.r0;
  return mask;
}

MaskBank generate_mask_bank(
    std::size_t n,
    std::size_t height,
    std::size_t width,
    double accel,
    std::size_t calib_size,
    std::uint64_t seed,
    BankRole role)
{
  if (n == 0) {
    throw std::invalid_argument("generate_mask_bank: n must be >= 1");
  }
  MaskBank bank;
  bank.role = role;
  std::set<std::vector<std::uint8_t>> seen;
  const std::uint64_t max_tries = 10 * n + 10;
  std::uint64_t s = seed;
  for (std::uint64_t tries = 0; bank.masks.size() < n && tries < max_tries; ++tries, ++s) {
    SamplingMask m = generate_mask(height, width, accel, calib_size, s);
    if (seen.insert(m.pattern).second) {
      bank.masks.push_back(std::move(m));
    }
  }
  if (bank.masks.size() < n) {
    throw ConstraintError(
        "generate_mask_bank: only " + std::to_string(bank.masks.size()) + " distinct masks found, " +
        std::to_string(n) + " requested");
  }
  return bank;
}

bool satisfies_poisson_disc(const SamplingMask &mask)
{
  if (mask.min_radius <= 0.0) {
    return true;
  }
  const Geometry g(mask.height, mask.width, mask.calib_size);
  std::vector<std::pair<long, long>> pts;
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      if (mask(y, x) && !g.in_calib(y, x)) {
        pts.emplace_back(static_cast<long>(y), static_cast<long>(x));
      }
    }
  }
  // Bucket by row so each point only meets neighbors within the global reach.
  const double r_max = poisson_radius(mask.height, mask.width, 0.0, 0.0, mask.min_radius);
  const long reach = static_cast<long>(std::ceil(r_max)) + 1;
  std::vector<std::vector<std::size_t>> rows(mask.height);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    rows[pts[i].first].push_back(i);
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto [y, x] = pts[i];
    for (long qy = y; qy <= std::min<long>(mask.height - 1, y + reach); ++qy) {
      for (const auto j : rows[qy]) {
        if (j <= i) {
          continue;
        }
        const auto [y2, x2] = pts[j];
        if (std::abs(x2 - x) > reach) {
          continue;
        }
        const double rm = poisson_radius(mask.height, mask.width, 0.5 * (y + y2), 0.5 * (x + x2), mask.min_radius);
        const double d2 = static_cast<double>((y - y2) * (y - y2) + (x - x2) * (x - x2));
        if (d2 < rm * rm) {
          return false;
        }
      }
    }
  }
  return true;
}

void undersample_inplace(KSpaceGrid &ksp, const SamplingMask &mask)
{
  if (ksp.height() != mask.height || ksp.width() != mask.width) {
    throw std::invalid_argument("undersample: k-space and mask shapes differ");
  }
  for (std::size_t c = 0; c < ksp.coils(); ++c) {
    auto plane = ksp.coil(c);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      if (!mask.acquired(i)) {
        plane[i] = cplx{};
      }
    }
  }
}

KSpaceGrid undersample(const KSpaceGrid &ksp, const SamplingMask &mask)
{
  KSpaceGrid out = ksp;
  undersample_inplace(out, mask);
  return out;
}

CoilImages zero_filled_recon(const KSpaceGrid &ksp_u) { return ifft2c(ksp_u); }

} // namespace mrxfer
