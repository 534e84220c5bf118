#include "oracles.hpp"

#include "mrxfer/datasim.hpp"

#include <doctest.h>

using namespace mrxfer;

TEST_SUITE("datasim")
{
  TEST_CASE("phantoms are deterministic and bounded")
  {
    for (DomainKind k : {DomainKind::natural_like, DomainKind::mr_like_t1, DomainKind::mr_like_t2, DomainKind::phantom}) {
      const ComplexImage a = make_phantom(48, 48, k, 12);
      CHECK(a == make_phantom(48, 48, k, 12));
      double hi = 0.0;
      for (const cplx v : a.data()) {
        CHECK(v.imag() == 0.0);
        CHECK(v.real() >= 0.0);
        CHECK(v.real() <= 1.0);
        hi = std::max(hi, v.real());
      }
      CHECK(hi > 0.0);
    }
  }

  TEST_CASE("T1 and T2 share geometry but not intensities")
  {
    const ComplexImage t1 = make_phantom(64, 64, DomainKind::mr_like_t1, 5);
    const ComplexImage t2 = make_phantom(64, 64, DomainKind::mr_like_t2, 5);
    std::size_t support_mismatch = 0;
    for (std::size_t i = 0; i < t1.size(); ++i) {
      support_mismatch += (t1[i].real() > 0) != (t2[i].real() > 0);
    }
    CHECK(support_mismatch == 0);
    CHECK(ks_statistic(t1, t2) > 0.2);
  }

  TEST_CASE("domain kind names")
  {
    CHECK(parse_domain_kind("MR-like-T1") == DomainKind::mr_like_t1);
    CHECK(to_string(DomainKind::natural_like) == "natural-like");
    CHECK_THROWS_AS(parse_domain_kind("ct"), std::invalid_argument);
  }

  TEST_CASE("sinusoidal phase keeps magnitudes")
  {
    const ComplexImage mag = make_phantom(32, 32, DomainKind::natural_like, 3);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const ComplexImage z = add_sinusoidal_phase(mag, seed);
      for (std::size_t i = 0; i < z.size(); ++i) {
        CHECK(std::abs(std::abs(z[i]) - mag[i].real()) < 1e-15);
        if (mag[i].real() > 1e-3) {
          CHECK(std::abs(std::arg(z[i])) <= 2.0 + 1e-12);
        }
      }
      const PhaseModulation p = PhaseModulation::random(seed);
      CHECK(p.amp_row >= 0.0);
      CHECK(p.amp_row <= 1.0);
      CHECK(std::abs(p.freq_col) <= std::numbers::pi);
    }
    CHECK(add_sinusoidal_phase(mag, PhaseModulation{}) == mag);
    ComplexImage neg(2, 2);
    neg[0] = -1.0;
    CHECK_THROWS_AS(add_sinusoidal_phase(neg, 1), std::invalid_argument);
  }

  TEST_CASE("coil maps are SOS-normalized and A*A is the identity")
  {
    const CoilSensitivities maps = analytic_coil_maps(32, 24, 6, 9);
    for (std::size_t i = 0; i < 32 * 24; ++i) {
      double sos = 0.0;
      for (std::size_t c = 0; c < 6; ++c) {
        sos += std::norm(maps.maps.coil(c)[i]);
      }
      CHECK(std::abs(sos - 1.0) < 1e-10);
    }
    const ComplexImage x = fixture::random_image(32, 24, 1);
    CHECK(nrmse(coil_combine(apply_coils(x, maps), maps).data(), x.data()) < 1e-10);

    const CoilSensitivities one = analytic_coil_maps(8, 8, 1, 2);
    for (const cplx v : one.maps.data()) {
      CHECK(std::abs(std::abs(v) - 1.0) < 1e-12);
    }
    const ComplexImage y = fixture::random_image(8, 8, 4);
    const CoilImages s = apply_coils(y, one);
    for (std::size_t i = 0; i < y.size(); ++i) {
      CHECK(std::abs(s.data()[i] - one.maps.data()[i] * y[i]) == 0.0);
    }
    CHECK(fixture::max_abs(apply_coils(ComplexImage(32, 24), maps)) == 0.0);
    CHECK_THROWS_AS(analytic_coil_maps(8, 8, 65, 1), std::invalid_argument);
    CHECK_THROWS_AS(apply_coils(ComplexImage(8, 9), maps), std::invalid_argument);
  }

  TEST_CASE("coil combine by hand on a 2 x 2, 2-coil case")
  {
    const cplx I{0, 1};
    CoilSensitivities maps{CoilImages(2, 2, 2, {1.0, 0.0, I, 0.6, 0.0, 1.0, 0.0, 0.8})};
    const CoilImages stack(2, 2, 2, {2.0, 5.0, 3.0 * I, 1.0, 7.0, 4.0, 1.0, 2.0});
    const ComplexImage c = coil_combine(stack, maps);
    CHECK(std::abs(c[0] - cplx{2.0, 0}) < 1e-15);
    CHECK(std::abs(c[1] - cplx{4.0, 0}) < 1e-15);
    CHECK(std::abs(c[2] - cplx{3.0, 0}) < 1e-15);
    CHECK(std::abs(c[3] - cplx{2.2, 0}) < 1e-15);

    CoilImages scaled = stack;
    for (auto &v : scaled.data()) {
      v *= cplx{0.5, -2.0};
    }
    const ComplexImage cs = coil_combine(scaled, maps);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(std::abs(cs[i] - cplx{0.5, -2.0} * c[i]) < 1e-14);
    }
  }

  TEST_CASE("build_domain")
  {
    DomainSpec spec;
    spec.kind = DomainKind::natural_like;
    spec.size = 32;
    spec.coils = 4;
    spec.coil_map_variants = 3;
    spec.splits["train"] = {0, 10};
    spec.splits["test"] = {100, 4};
    const Dataset a = build_domain(spec);
    CHECK(a.split("train").size() == 10);
    CHECK(a.split("test").size() == 4);
    CHECK(a.coil_maps.size() == 3);
    bool complex_phase = false;
    for (const auto &item : a.split("train")) {
      CHECK(item.coil_map_id >= 0);
      CHECK(item.coil_map_id < 3);
      for (const cplx v : item.reference.data()) {
        complex_phase = complex_phase || std::abs(v.imag()) > 1e-6;
      }
    }
    CHECK(complex_phase);

    const Dataset b = build_domain(spec);
    for (const auto &[name, items] : a.splits) {
      for (std::size_t i = 0; i < items.size(); ++i) {
        CHECK(items[i].reference == b.split(name)[i].reference);
        CHECK(items[i].coil_map_id == b.split(name)[i].coil_map_id);
      }
    }

    spec.splits["tune"] = {5, 3};
    CHECK_THROWS_AS(build_domain(spec), std::invalid_argument);
    CHECK_THROWS_AS(a.split("val"), std::invalid_argument);
  }
}
