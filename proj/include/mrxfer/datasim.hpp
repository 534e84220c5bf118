#pragma once

#include "mrxfer/array.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mrxfer {

enum class DomainKind { natural_like, mr_like_t1, mr_like_t2, phantom };

/// Parses "natural-like", "mr-like-t1", "mr-like-t2", "phantom"
/// (case-insensitive). Throws std::invalid_argument otherwise.
DomainKind parse_domain_kind(const std::string &name);
std::string to_string(DomainKind kind);

/// Real-valued magnitude image in [0, 1] stored as a ComplexImage with zero
/// imaginary part. MR-like kinds share ellipse geometry for a given seed and
/// differ only in tissue intensities.
ComplexImage make_phantom(std::size_t height, std::size_t width, DomainKind kind, std::uint64_t seed);

/// Sinusoidal phase phi(m, n) = amp_row sin(freq_row m) + amp_col sin(freq_col n),
/// with m the row and n the column index.
struct PhaseModulation {
  double amp_row = 0.0;
  double amp_col = 0.0;
  double freq_row = 0.0;
  double freq_col = 0.0;

  /// Frequencies uniform in [-pi, pi] rad/pixel, amplitudes uniform in [0, 1].
  static PhaseModulation random(std::uint64_t seed);
};

ComplexImage add_sinusoidal_phase(const ComplexImage &mag, std::uint64_t seed);
ComplexImage add_sinusoidal_phase(const ComplexImage &mag, const PhaseModulation &phase);

/// Pixelwise coil sensitivities, normalized so that sum_c |A_c|^2 == 1.
struct CoilSensitivities {
  CoilImages maps;

  std::size_t coils() const { return maps.coils(); }
  std::size_t height() const { return maps.height(); }
  std::size_t width() const { return maps.width(); }
};

inline constexpr std::size_t kMaxCoils = 64;

/// Gaussian-lobe profiles centered on a ring around the field of view, each
/// with its own linear phase, then sum-of-squares normalized.
CoilSensitivities analytic_coil_maps(std::size_t height, std::size_t width, std::size_t coils, std::uint64_t seed);

/// A: per-coil pixelwise product maps_c * x.
CoilImages apply_coils(const ComplexImage &x, const CoilSensitivities &maps);
/// A*: sum_c conj(maps_c) * x_c.
ComplexImage coil_combine(const CoilImages &stack, const CoilSensitivities &maps);

// ---------------------------------------------------------------------------
// Synthetic datasets.

struct SplitRange {
  std::uint64_t seed_begin = 0;
  std::size_t count = 0;
};

/// Description of one synthetic domain. Splits are keyed by name (train,
/// val, tune, test, ...) and must use disjoint seed ranges.
struct DomainSpec {
  DomainKind kind = DomainKind::phantom;
  std::size_t size = 64;
  /// 1 means single-coil magnitude data.
  std::size_t coils = 1;
  /// Number of distinct coil-map sets items draw from.
  std::size_t coil_map_variants = 4;
  std::uint64_t map_seed = 7;
  std::map<std::string, SplitRange> splits;
};

struct DataItem {
  std::uint64_t seed = 0;
  /// Fully sampled reference (coil-combined for multi-coil data).
  ComplexImage reference;
  /// Index into Dataset::coil_maps, or -1 for single-coil data.
  int coil_map_id = -1;
};

struct Dataset {
  DomainSpec spec;
  std::map<std::string, std::vector<DataItem>> splits;
  std::vector<CoilSensitivities> coil_maps;

  const std::vector<DataItem> &split(const std::string &name) const;
  bool multicoil() const { return spec.coils > 1; }
};

/// Deterministic in spec. Throws std::invalid_argument on overlapping split
/// seed ranges or an empty spec.
Dataset build_domain(const DomainSpec &spec);

/// Two-sample Kolmogorov-Smirnov statistic between the pixel magnitudes of two images.
double ks_statistic(const ComplexImage &a, const ComplexImage &b);

} // namespace mrxfer
