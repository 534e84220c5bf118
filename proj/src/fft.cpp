#include "mrxfer/numerics.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace mrxfer {

namespace {

// FFTW planning is not thread-safe; execution with fftw_execute_dft is.
// Plans are created once per (height, width, sign) and reused for the
// lifetime of the process.
class PlanCache {
 public:
  fftw_plan get(std::size_t h, std::size_t w, int sign)
  {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(h, w, sign);
    if (auto it = plans_.find(key); it != plans_.end()) {
      return it->second;
    }
    std::vector<cplx> scratch(h * w);
    auto *buf = reinterpret_cast<fftw_complex *>(scratch.data());
    fftw_plan plan = fftw_plan_dft_2d(
        static_cast<int>(h), static_cast<int>(w), buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan) {
      throw std::runtime_error("fft2c: FFTW failed to create a plan");
    }
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

PlanCache &plan_cache()
{
  static PlanCache cache;
  return cache;
}

// Circular shift of a plane by (sy, sx): out[(y+sy)%h][(x+sx)%w] = in[y][x].
void circshift(std::span<cplx> plane, std::size_t h, std::size_t w, std::size_t sy, std::size_t sx)
{
  if (sy == 0 && sx == 0) {
    return;
  }
  std::vector<cplx> tmp(plane.begin(), plane.end());
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t yy = (y + sy) % h;
    for (std::size_t x = 0; x < w; ++x) {
      plane[yy * w + (x + sx) % w] = tmp[y * w + x];
    }
  }
}

void check_plane(std::span<cplx> plane, std::size_t h, std::size_t w)
{
  if (h == 0 || w == 0) {
    throw std::invalid_argument("fft2c: zero-sized dimension");
  }
  if (plane.size() != h * w) {
    throw std::invalid_argument("fft2c: plane length does not match dimensions");
  }
}

void transform(std::span<cplx> plane, std::size_t h, std::size_t w, int sign)
{
  check_plane(plane, h, w);
  // ifftshift moves the center sample to the origin; fftshift moves it back.
  circshift(plane, h, w, h - h / 2, w - w / 2);
  fftw_plan plan = plan_cache().get(h, w, sign);
  auto *buf = reinterpret_cast<fftw_complex *>(plane.data());
  fftw_execute_dft(plan, buf, buf);
  circshift(plane, h, w, h / 2, w / 2);
  const double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (auto &z : plane) {
    z *= scale;
  }
}

} // namespace

void fft2c_inplace(std::span<cplx> plane, std::size_t height, std::size_t width)
{
  transform(plane, height, width, FFTW_FORWARD);
}

void ifft2c_inplace(std::span<cplx> plane, std::size_t height, std::size_t width)
{
  transform(plane, height, width, FFTW_BACKWARD);
}

KSpaceGrid fft2c(const ComplexImage &img)
{
  KSpaceGrid out(img);
  if (img.empty()) {
    throw std::invalid_argument("fft2c: zero-sized dimension");
  }
  fft2c_inplace(out.coil(0), out.height(), out.width());
  return out;
}

KSpaceGrid fft2c(const CoilImages &imgs)
{
  if (imgs.size() == 0) {
    throw std::invalid_argument("fft2c: zero-sized dimension");
  }
  KSpaceGrid out(imgs.coils(), imgs.height(), imgs.width(), std::vector<cplx>(imgs.data().begin(), imgs.data().end()));
  for (std::size_t c = 0; c < out.coils(); ++c) {
    fft2c_inplace(out.coil(c), out.height(), out.width());
  }
  return out;
}

CoilImages ifft2c(const KSpaceGrid &ksp)
{
  if (ksp.size() == 0) {
    throw std::invalid_argument("ifft2c: zero-sized dimension");
  }
  CoilImages out(ksp.coils(), ksp.height(), ksp.width(), std::vector<cplx>(ksp.data().begin(), ksp.data().end()));
  for (std::size_t c = 0; c < out.coils(); ++c) {
    ifft2c_inplace(out.coil(c), out.height(), out.width());
  }
  return out;
}

} // namespace mrxfer
