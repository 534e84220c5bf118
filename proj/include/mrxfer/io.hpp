#pragma once

#include "mrxfer/array.hpp"
#include "mrxfer/cascade.hpp"
#include "mrxfer/datasim.hpp"
#include "mrxfer/sampling.hpp"
#include "mrxfer/spirit.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mrxfer {

// MRX1 tensor layout, all integers little-endian:
//   "MRX1" | u32 version | u32 dtype | u32 ndim | u64 dims[ndim] | payload
// Payload is row-major with the last dimension fastest; complex values are
// interleaved (re, im).

enum class DType : std::uint32_t { f32 = 0, cf32 = 1, f64 = 2, cf64 = 3, u8 = 4 };

inline constexpr std::uint32_t kMrx1Version = 1;

std::size_t dtype_size(DType t);
std::string to_string(DType t);

struct Mrx1Tensor {
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  /// Little-endian encoded elements.
  std::vector<std::uint8_t> payload;

  std::uint64_t element_count() const;
  friend bool operator==(const Mrx1Tensor &, const Mrx1Tensor &) = default;
};

/// Throws FormatError (bad_magic, unsupported_version, truncated, io).
void write_tensor(std::ostream &os, const Mrx1Tensor &t);
Mrx1Tensor read_tensor(std::istream &is);
void save_tensor(const std::filesystem::path &path, const Mrx1Tensor &t);
Mrx1Tensor load_tensor(const std::filesystem::path &path);

// Typed conversions. Readers accept either float width and throw FormatError
// (dtype_mismatch) for a wrong element kind or rank.
Mrx1Tensor encode_real(std::span<const double> values, std::vector<std::uint64_t> dims, DType dtype = DType::f64);
Mrx1Tensor encode_complex(std::span<const cplx> values, std::vector<std::uint64_t> dims, DType dtype = DType::cf64);
std::vector<double> decode_real(const Mrx1Tensor &t);
std::vector<cplx> decode_complex(const Mrx1Tensor &t);

Mrx1Tensor encode_image(const ComplexImage &img, DType dtype = DType::cf64);
/// Rank 2, or rank 3 with a leading 1.
ComplexImage decode_image(const Mrx1Tensor &t);
/// [N, H, W]; a rank-2 tensor yields one image.
Mrx1Tensor encode_images(const std::vector<ComplexImage> &imgs, DType dtype = DType::cf64);
std::vector<ComplexImage> decode_images(const Mrx1Tensor &t);

template <class Domain>
Mrx1Tensor encode_coils(const CoilArray<Domain> &a, DType dtype = DType::cf64)
{
  return encode_complex(a.data(), {a.coils(), a.height(), a.width()}, dtype);
}
/// Rank 3 [C, H, W], rank 4 with a leading 1, or rank 2 as one coil.
KSpaceGrid decode_kspace(const Mrx1Tensor &t);
CoilImages decode_coil_images(const Mrx1Tensor &t);

/// u8 [H, W]; the acceleration is recomputed from the sample count.
Mrx1Tensor encode_mask(const SamplingMask &m);
Mrx1Tensor encode_masks(const std::vector<SamplingMask> &masks);
SamplingMask decode_mask(const Mrx1Tensor &t);
std::vector<SamplingMask> decode_masks(const Mrx1Tensor &t);

// Model container:
//   "MRXM" | u32 version | u64 manifest length | manifest JSON |
//   u32 tensor count | { u32 name length | name | MRX1 tensor }*
// The manifest records the architecture, mode, lambda, coil count, seed and
// kernel metadata; a multi-coil model embeds its kernel as tensor "cc_kernel".

inline constexpr std::uint32_t kModelVersion = 1;

void write_model(std::ostream &os, const CascadeModel &model);
CascadeModel read_model(std::istream &is);
void save_model(const std::filesystem::path &path, const CascadeModel &model);
CascadeModel load_model(const std::filesystem::path &path);

/// Kernel weights as cf64 [coils, coils, width, width]. The regularization
/// value is not part of the tensor; the model manifest records it.
Mrx1Tensor encode_kernel(const SpiritKernel &k);
SpiritKernel decode_kernel(const Mrx1Tensor &t, double tikhonov = 0.0);

// Dataset directory: manifest.json, <split>.mrx ([N, H, W] cf32 references)
// and, for multi-coil data, coil_maps.mrx ([V, C, H, W] cf64).
void save_dataset(const std::filesystem::path &dir, const Dataset &data);
Dataset load_dataset(const std::filesystem::path &dir);

} // namespace mrxfer
