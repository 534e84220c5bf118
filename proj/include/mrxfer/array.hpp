#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrxfer {

using cplx = std::complex<double>;

/// Row-major 2D complex array in the image domain.
class ComplexImage {
 public:
  ComplexImage() = default;
  ComplexImage(std::size_t height, std::size_t width) : height_(height), width_(width), data_(height * width) {}
  ComplexImage(std::size_t height, std::size_t width, std::vector<cplx> data)
      : height_(height), width_(width), data_(std::move(data))
  {
    if (data_.size() != height_ * width_) {
      throw std::invalid_argument("ComplexImage: data length does not match height x width");
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  cplx &operator()(std::size_t y, std::size_t x) { return data_[y * width_ + x]; }
  const cplx &operator()(std::size_t y, std::size_t x) const { return data_[y * width_ + x]; }
  cplx &operator[](std::size_t i) { return data_[i]; }
  const cplx &operator[](std::size_t i) const { return data_[i]; }

  std::span<cplx> data() noexcept { return data_; }
  std::span<const cplx> data() const noexcept { return data_; }

  /// Moves the storage out, leaving the image empty.
  std::vector<cplx> release() &&
  {
    height_ = width_ = 0;
    return std::move(data_);
  }

  bool same_shape(const ComplexImage &o) const noexcept { return height_ == o.height_ && width_ == o.width_; }

  friend bool operator==(const ComplexImage &, const ComplexImage &) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<cplx> data_;
};

struct KSpaceDomain {};
struct ImageDomain {};

/// Coil-stacked complex array (coils x height x width), row-major per coil.
/// The domain tag keeps k-space data and coil images from being mixed up.
template <class Domain>
class CoilArray {
 public:
  CoilArray() = default;
  CoilArray(std::size_t coils, std::size_t height, std::size_t width)
      : coils_(coils), height_(height), width_(width), data_(coils * height * width)
  {
  }
  CoilArray(std::size_t coils, std::size_t height, std::size_t width, std::vector<cplx> data)
      : coils_(coils), height_(height), width_(width), data_(std::move(data))
  {
    if (data_.size() != coils_ * height_ * width_) {
      throw std::invalid_argument("CoilArray: data length does not match coils x height x width");
    }
  }
  /// Single-coil array holding a copy of img.
  explicit CoilArray(const ComplexImage &img)
      : coils_(1), height_(img.height()), width_(img.width()), data_(img.data().begin(), img.data().end())
  {
  }

  std::size_t coils() const noexcept { return coils_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }

  cplx &operator()(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * height_ + y) * width_ + x]; }
  const cplx &operator()(std::size_t c, std::size_t y, std::size_t x) const
  {
    return data_[(c * height_ + y) * width_ + x];
  }

  std::span<cplx> coil(std::size_t c) { return std::span<cplx>(data_).subspan(c * plane_size(), plane_size()); }
  std::span<const cplx> coil(std::size_t c) const
  {
    return std::span<const cplx>(data_).subspan(c * plane_size(), plane_size());
  }

  ComplexImage image(std::size_t c) const
  {
    auto p = coil(c);
    return ComplexImage(height_, width_, std::vector<cplx>(p.begin(), p.end()));
  }

  std::span<cplx> data() noexcept { return data_; }
  std::span<const cplx> data() const noexcept { return data_; }

  std::vector<cplx> release() &&
  {
    coils_ = height_ = width_ = 0;
    return std::move(data_);
  }

  template <class Other>
  bool same_shape(const CoilArray<Other> &o) const noexcept
  {
    return coils_ == o.coils() && height_ == o.height() && width_ == o.width();
  }

  friend bool operator==(const CoilArray &, const CoilArray &) = default;

 private:
  std::size_t coils_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<cplx> data_;
};

using KSpaceGrid = CoilArray<KSpaceDomain>;
using CoilImages = CoilArray<ImageDomain>;

inline bool all_finite(std::span<const cplx> v)
{
  for (const auto &z : v) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
      return false;
    }
  }
  return true;
}

inline double norm2(std::span<const cplx> v)
{
  double s = 0.0;
  for (const auto &z : v) {
    s += std::norm(z);
  }
  return std::sqrt(s);
}

/// Real part of the Hermitian inner product, i.e. the Euclidean inner
/// product of the underlying real vectors.
inline double dot_re(std::span<const cplx> a, std::span<const cplx> b)
{
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
  }
  return s;
}

/// ||a - b|| / ||b||
inline double nrmse(std::span<const cplx> a, std::span<const cplx> b)
{
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

} // namespace mrxfer
