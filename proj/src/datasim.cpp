#include "mrxfer/datasim.hpp"

#include "mrxfer/rng.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mrxfer {

DomainKind parse_domain_kind(const std::string &name)
{
  std::string s;
  for (char ch : name) {
    s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  std::replace(s.begin(), s.end(), '_', '-');
  if (s == "natural-like" || s == "natural") {
    return DomainKind::natural_like;
  }
  if (s == "mr-like-t1" || s == "t1") {
    return DomainKind::mr_like_t1;
  }
  if (s == "mr-like-t2" || s == "t2") {
    return DomainKind::mr_like_t2;
  }
  if (s == "phantom") {
    return DomainKind::phantom;
  }
  throw std::invalid_argument("unknown domain kind '" + name + "'");
}

std::string to_string(DomainKind kind)
{
  switch (kind) {
  case DomainKind::natural_like:
    return "natural-like";
  case DomainKind::mr_like_t1:
    return "mr-like-t1";
  case DomainKind::mr_like_t2:
    return "mr-like-t2";
  case DomainKind::phantom:
    return "phantom";
  }
  return "unknown";
}

namespace {

struct Ellipse {
  double cy, cx; // normalized [-1, 1] coordinates
  double ay, ax; // semi-axes
  double angle;
  bool contains(double y, double x) const
  {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dy = y - cy, dx = x - cx;
    const double u = (c * dx + s * dy) / ax;
    const double v = (-s * dx + c * dy) / ay;
    return u * u + v * v <= 1.0;
  }
};

// Renders f(y, x) over normalized coordinates with 2x2 supersampling.
template <class F>
ComplexImage render(std::size_t h, std::size_t w, F &&f)
{
  ComplexImage img(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const double ny = (static_cast<double>(y) + 0.25 + 0.5 * sy) / static_cast<double>(h) * 2.0 - 1.0;
          const double nx = (static_cast<double>(x) + 0.25 + 0.5 * sx) / static_cast<double>(w) * 2.0 - 1.0;
          acc += f(ny, nx);
        }
      }
      img(y, x) = std::clamp(0.25 * acc, 0.0, 1.0);
    }
  }
  return img;
}

enum Tissue { background = 0, scalp, gray, white, csf, kTissueCount };

ComplexImage mr_like(std::size_t h, std::size_t w, DomainKind kind, std::uint64_t seed)
{
  Rng rng(derive_seed(seed, 0x4D52));
  const double cy = rng.uniform(-0.04, 0.04), cx = rng.uniform(-0.04, 0.04);
  const double ay = rng.uniform(0.80, 0.90), ax = rng.uniform(0.64, 0.76);
  const double tilt = rng.uniform(-0.15, 0.15);
  const Ellipse head{cy, cx, ay, ax, tilt};
  const double skull = rng.uniform(0.07, 0.10);
  const Ellipse brain{cy, cx, ay - skull, ax - skull, tilt};
  const double cortex = rng.uniform(0.10, 0.16);
  const Ellipse wm{cy + rng.uniform(-0.03, 0.03), cx, ay - skull - cortex, ax - skull - cortex, tilt};

  std::vector<std::pair<Ellipse, Tissue>> blobs;
  // Ventricles.
  const double vy = cy + rng.uniform(-0.12, 0.02), vsep = rng.uniform(0.06, 0.12);
  const double va = rng.uniform(0.14, 0.24), vb = rng.uniform(0.04, 0.07);
  blobs.push_back({{vy, cx - vsep, va, vb, tilt + rng.uniform(0.1, 0.35)}, csf});
  blobs.push_back({{vy, cx + vsep, va, vb, tilt - rng.uniform(0.1, 0.35)}, csf});
  // Deep gray nuclei and small structures.
  const int extra = 3 + static_cast<int>(rng.index(5));
  for (int i = 0; i < extra; ++i) {
    const double r = rng.uniform(0.0, 0.45), t = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Tissue tissue = static_cast<Tissue>(gray + rng.index(3));
    blobs.push_back(
        {{cy + r * std::sin(t), cx + r * std::cos(t), rng.uniform(0.03, 0.12), rng.uniform(0.03, 0.12),
          rng.uniform(0.0, std::numbers::pi)},
         tissue});
  }
  // Smooth receive-field shading shared by both contrasts.
  const double by = rng.uniform(-0.15, 0.15), bx = rng.uniform(-0.15, 0.15);

  // Intensity per tissue. T1-like: bright white matter and fat, dark fluid.
  // T2-like: bright fluid, gray above white matter, dim fat.
  std::array<double, kTissueCount> palette{};
  if (kind == DomainKind::mr_like_t1) {
    palette = {0.0, 0.92, 0.55, 0.80, 0.10};
  } else {
    palette = {0.0, 0.30, 0.68, 0.48, 1.00};
  }

  return render(h, w, [&](double y, double x) {
    Tissue t = background;
    if (head.contains(y, x)) {
      t = scalp;
      if (brain.contains(y, x)) {
        t = wm.contains(y, x) ? white : gray;
        for (const auto &[e, tissue] : blobs) {
          if (e.contains(y, x)) {
            t = tissue;
          }
        }
      }
    }
    const double shade = 1.0 + by * y + bx * x - 0.08 * (y * y + x * x);
    return palette[t] * std::clamp(shade, 0.6, 1.0);
  });
}

ComplexImage shepp_logan(std::size_t h, std::size_t w, std::uint64_t seed)
{
  // Modified Shepp-Logan: (intensity, ay, ax, cy, cx, angle in degrees).
  struct Row {
    double value, ay, ax, cy, cx, deg;
  };
  static constexpr std::array<Row, 10> rows{{
      {1.0, 0.92, 0.69, 0.0, 0.0, 0},
      {-0.8, 0.874, 0.6624, -0.0184, 0.0, 0},
      {-0.2, 0.41, 0.11, 0.0, 0.22, -18},
      {-0.2, 0.31, 0.16, 0.0, -0.22, 18},
      {0.1, 0.25, 0.21, 0.35, 0.0, 0},
      {0.1, 0.046, 0.046, 0.1, 0.0, 0},
      {0.1, 0.046, 0.046, -0.1, 0.0, 0},
      {0.1, 0.023, 0.046, -0.605, -0.08, 0},
      {0.1, 0.023, 0.023, -0.606, 0.0, 0},
      {0.1, 0.046, 0.023, -0.605, 0.06, 0},
  }};
  Rng rng(derive_seed(seed, 0x534C));
  std::vector<std::pair<Ellipse, double>> es;
  for (const auto &r : rows) {
    const double j = 1.0 + rng.uniform(-0.03, 0.03);
    // Image rows grow downward, so the y-center flips sign.
    es.push_back(
        {{-r.cy + rng.uniform(-0.01, 0.01), r.cx + rng.uniform(-0.01, 0.01), r.ay * j, r.ax * j,
          r.deg * std::numbers::pi / 180.0},
         r.value});
  }
  return render(h, w, [&](double y, double x) {
    double v = 0.0;
    for (const auto &[e, value] : es) {
      if (e.contains(y, x)) {
        v += value;
      }
    }
    return v;
  });
}

ComplexImage natural_like(std::size_t h, std::size_t w, std::uint64_t seed)
{
  Rng rng(derive_seed(seed, 0x4E41));
  struct Rect {
    double y0, y1, x0, x1, value, gy, gx, angle;
  };
  struct Disc {
    double cy, cx, r, value;
  };
  struct Grating {
    double fy, fx, phase, amp, cy, cx, r;
  };
  const double base = rng.uniform(0.1, 0.6);
  const double base_gy = rng.uniform(-0.3, 0.3), base_gx = rng.uniform(-0.3, 0.3);
  std::vector<Rect> rects(6 + rng.index(8));
  for (auto &r : rects) {
    const double cy = rng.uniform(-1.0, 1.0), cx = rng.uniform(-1.0, 1.0);
    const double hy = rng.uniform(0.08, 0.6), hx = rng.uniform(0.08, 0.6);
    r = {cy - hy, cy + hy, cx - hx, cx + hx, rng.uniform(0.0, 1.0), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
         rng.uniform(-0.6, 0.6)};
  }
  std::vector<Disc> discs(2 + rng.index(5));
  for (auto &d : discs) {
    d = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(0.05, 0.35), rng.uniform(0.0, 1.0)};
  }
  std::vector<Grating> gratings(1 + rng.index(3));
  for (auto &g : gratings) {
    g = {rng.uniform(-12.0, 12.0), rng.uniform(-12.0, 12.0), rng.uniform(0.0, 6.3), rng.uniform(0.05, 0.2),
         rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(0.2, 0.6)};
  }
  return render(h, w, [&](double y, double x) {
    double v = base + base_gy * y + base_gx * x;
    for (const auto &r : rects) {
      const double cy = 0.5 * (r.y0 + r.y1), cx = 0.5 * (r.x0 + r.x1);
      const double c = std::cos(r.angle), s = std::sin(r.angle);
      const double u = c * (x - cx) + s * (y - cy), t = -s * (x - cx) + c * (y - cy);
      if (std::abs(t) <= 0.5 * (r.y1 - r.y0) && std::abs(u) <= 0.5 * (r.x1 - r.x0)) {
        v = r.value + r.gy * t + r.gx * u;
      }
    }
    for (const auto &d : discs) {
      if ((y - d.cy) * (y - d.cy) + (x - d.cx) * (x - d.cx) <= d.r * d.r) {
        v = d.value;
      }
    }
    for (const auto &g : gratings) {
      if ((y - g.cy) * (y - g.cy) + (x - g.cx) * (x - g.cx) <= g.r * g.r) {
        v += g.amp * std::sin(g.fy * y + g.fx * x + g.phase);
      }
    }
    return std::clamp(v, 0.0, 1.0);
  });
}

} // namespace

ComplexImage make_phantom(std::size_t height, std::size_t width, DomainKind kind, std::uint64_t seed)
{
  if (height < 16 || width < 16) {
    throw std::invalid_argument("make_phantom: dimensions must be at least 16");
  }
  switch (kind) {
  case DomainKind::natural_like:
    return natural_like(height, width, seed);
  case DomainKind::mr_like_t1:
  case DomainKind::mr_like_t2:
    return mr_like(height, width, kind, seed);
  case DomainKind::phantom:
    return shepp_logan(height, width, seed);
  }
  throw std::invalid_argument("make_phantom: unknown kind");
}

PhaseModulation PhaseModulation::random(std::uint64_t seed)
{
  Rng rng(derive_seed(seed, 0x5048));
  PhaseModulation p;
  p.freq_row = rng.uniform(-std::numbers::pi, std::numbers::pi);
  p.freq_col = rng.uniform(-std::numbers::pi, std::numbers::pi);
  p.amp_row = rng.uniform();
  p.amp_col = rng.uniform();
  return p;
}

ComplexImage add_sinusoidal_phase(const ComplexImage &mag, const PhaseModulation &phase)
{
  ComplexImage out(mag.height(), mag.width());
  for (std::size_t m = 0; m < mag.height(); ++m) {
    const double pr = phase.amp_row * std::sin(phase.freq_row * static_cast<double>(m));
    for (std::size_t n = 0; n < mag.width(); ++n) {
      const cplx v = mag(m, n);
      if (v.imag() != 0.0 || v.real() < 0.0 || !std::isfinite(v.real())) {
        throw std::invalid_argument("add_sinusoidal_phase: magnitude must be real and non-negative");
      }
      const double phi = pr + phase.amp_col * std::sin(phase.freq_col * static_cast<double>(n));
      out(m, n) = v.real() * std::polar(1.0, phi);
    }
  }
  return out;
}

ComplexImage add_sinusoidal_phase(const ComplexImage &mag, std::uint64_t seed)
{
  return add_sinusoidal_phase(mag, PhaseModulation::random(seed));
}

CoilSensitivities analytic_coil_maps(std::size_t height, std::size_t width, std::size_t coils, std::uint64_t seed)
{
  if (coils == 0 || coils > kMaxCoils) {
    throw std::invalid_argument("analytic_coil_maps: coil count must be in [1, 64]");
  }
  if (height == 0 || width == 0) {
    throw std::invalid_argument("analytic_coil_maps: zero-sized dimension");
  }
  Rng rng(derive_seed(seed, 0x434D));
  CoilImages maps(coils, height, width);
  const double h = static_cast<double>(height), w = static_cast<double>(width);
  for (std::size_t c = 0; c < coils; ++c) {
    const double theta = 2.0 * std::numbers::pi * (static_cast<double>(c) + rng.uniform(-0.15, 0.15)) /
                         static_cast<double>(coils);
    const double ring = rng.uniform(0.55, 0.7);
    const double py = 0.5 * h + ring * 0.5 * h * std::sin(theta);
    const double px = 0.5 * w + ring * 0.5 * w * std::cos(theta);
    const double sigma = rng.uniform(0.35, 0.5) * std::max(h, w);
    const double ky = rng.uniform(-1.5, 1.5) * std::numbers::pi / h;
    const double kx = rng.uniform(-1.5, 1.5) * std::numbers::pi / w;
    const double phase0 = rng.uniform(-std::numbers::pi, std::numbers::pi);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = static_cast<double>(y) - py, dx = static_cast<double>(x) - px;
        const double mag = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        maps(c, y, x) = std::polar(mag, phase0 + ky * static_cast<double>(y) + kx * static_cast<double>(x));
      }
    }
  }
  for (std::size_t i = 0; i < height * width; ++i) {
    double sos = 0.0;
    for (std::size_t c = 0; c < coils; ++c) {
      sos += std::norm(maps.coil(c)[i]);
    }
    const double inv = 1.0 / std::sqrt(sos);
    for (std::size_t c = 0; c < coils; ++c) {
      maps.coil(c)[i] *= inv;
    }
  }
  return CoilSensitivities{std::move(maps)};
}

CoilImages apply_coils(const ComplexImage &x, const CoilSensitivities &maps)
{
  if (x.height() != maps.height() || x.width() != maps.width()) {
    throw std::invalid_argument("apply_coils: image and coil map shapes differ");
  }
  CoilImages out(maps.coils(), x.height(), x.width());
  for (std::size_t c = 0; c < maps.coils(); ++c) {
    auto dst = out.coil(c);
    auto m = maps.maps.coil(c);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = m[i] * x[i];
    }
  }
  return out;
}

ComplexImage coil_combine(const CoilImages &stack, const CoilSensitivities &maps)
{
  if (!stack.same_shape(maps.maps)) {
    throw std::invalid_argument("coil_combine: stack and coil map shapes differ");
  }
  ComplexImage out(stack.height(), stack.width());
  for (std::size_t c = 0; c < stack.coils(); ++c) {
    auto src = stack.coil(c);
    auto m = maps.maps.coil(c);
    for (std::size_t i = 0; i < src.size(); ++i) {
      out[i] += std::conj(m[i]) * src[i];
    }
  }
  return out;
}

const std::vector<DataItem> &Dataset::split(const std::string &name) const
{
  auto it = splits.find(name);
  if (it == splits.end()) {
    throw std::invalid_argument("dataset has no split '" + name + "'");
  }
  return it->second;
}

Dataset build_domain(const DomainSpec &spec)
{
  if (spec.splits.empty()) {
    throw std::invalid_argument("build_domain: spec has no splits");
  }
  if (spec.coils == 0 || spec.coils > kMaxCoils) {
    throw std::invalid_argument("build_domain: coil count must be in [1, 64]");
  }
  for (auto a = spec.splits.begin(); a != spec.splits.end(); ++a) {
    for (auto b = std::next(a); b != spec.splits.end(); ++b) {
      const auto &ra = a->second, &rb = b->second;
      if (ra.count && rb.count && ra.seed_begin < rb.seed_begin + rb.count && rb.seed_begin < ra.seed_begin + ra.count) {
        throw std::invalid_argument("build_domain: splits '" + a->first + "' and '" + b->first + "' overlap in seed range");
      }
    }
  }

  Dataset ds;
  ds.spec = spec;
  const bool multicoil = spec.coils > 1;
  if (multicoil) {
    const std::size_t variants = std::max<std::size_t>(1, spec.coil_map_variants);
    for (std::size_t v = 0; v < variants; ++v) {
      ds.coil_maps.push_back(analytic_coil_maps(spec.size, spec.size, spec.coils, derive_seed(spec.map_seed, v)));
    }
  }
  for (const auto &[name, range] : spec.splits) {
    auto &items = ds.splits[name];
    items.reserve(range.count);
    for (std::size_t i = 0; i < range.count; ++i) {
      DataItem item;
      item.seed = range.seed_begin + i;
      item.reference = make_phantom(spec.size, spec.size, spec.kind, item.seed);
      if (multicoil) {
        if (spec.kind == DomainKind::natural_like) {
          item.reference = add_sinusoidal_phase(item.reference, derive_seed(item.seed, 0x5048));
        }
        Rng pick(derive_seed(item.seed, 0x4D4150));
        item.coil_map_id = static_cast<int>(pick.index(ds.coil_maps.size()));
      }
      items.push_back(std::move(item));
    }
  }
  return ds;
}

double ks_statistic(const ComplexImage &a, const ComplexImage &b)
{
  std::vector<double> va, vb;
  for (const auto &z : a.data()) {
    va.push_back(std::abs(z));
  }
  for (const auto &z : b.data()) {
    vb.push_back(std::abs(z));
  }
  std::sort(va.begin(), va.end());
  std::sort(vb.begin(), vb.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < va.size() && j < vb.size()) {
    const double v = std::min(va[i], vb[j]);
    while (i < va.size() && va[i] <= v) {
      ++i;
    }
    while (j < vb.size() && vb[j] <= v) {
      ++j;
    }
    d = std::max(d, std::abs(static_cast<double>(i) / va.size() - static_cast<double>(j) / vb.size()));
  }
  return d;
}

} // namespace mrxfer
