#include "oracles.hpp"

#include "mrxfer/errors.hpp"
#include "mrxfer/numerics.hpp"
#include "mrxfer/sampling.hpp"
#include "mrxfer/spirit.hpp"

#include <doctest.h>

using namespace mrxfer;

namespace {

Eigen::VectorXcd as_vector(std::span<const cplx> s)
{
  return Eigen::Map<const Eigen::VectorXcd>(s.data(), static_cast<Eigen::Index>(s.size()));
}

KSpaceGrid random_kspace(std::size_t coils, std::size_t n, std::uint64_t seed)
{
  KSpaceGrid k(coils, n, n);
  for (std::size_t c = 0; c < coils; ++c) {
    const ComplexImage x = fixture::random_image(n, n, seed + c);
    std::copy(x.data().begin(), x.data().end(), k.coil(c).begin());
  }
  return k;
}

} // namespace

TEST_SUITE("spirit")
{
  TEST_CASE("calibration block extraction")
  {
    KSpaceGrid ramp(2, 10, 12);
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t y = 0; y < 10; ++y) {
        for (std::size_t x = 0; x < 12; ++x) {
          ramp(c, y, x) = cplx{100.0 * c + 10.0 * y + x, 0};
        }
      }
    }
    const KSpaceGrid b = extract_calibration(ramp, 4);
    // Rows and columns start at n/2 - 2: 3 for height 10, 4 for width 12.
    CHECK(b.height() == 4);
    CHECK(b.width() == 4);
    CHECK(b(0, 0, 0) == cplx{34, 0});
    CHECK(b(1, 3, 3) == cplx{100 + 60 + 7, 0});
    CHECK_THROWS_AS(extract_calibration(ramp, 11), std::invalid_argument);

    const SamplingMask m = fixture::random_mask(10, 12, 0.2, 1);
    CHECK_THROWS_AS(extract_calibration(ramp, m, 4), ConstraintError);
    CHECK(extract_calibration(ramp, SamplingMask::full(10, 12), 4) == b);
  }

  TEST_CASE("one coil with width one has nothing to predict from")
  {
    const KSpaceGrid calib = random_kspace(1, 8, 3);
    const SpiritKernel k = calibrate_kernel(calib, 1, 1e-2);
    for (const cplx w : k.weights) {
      CHECK(w == cplx{});
    }
    CHECK(fixture::max_abs(apply_G(random_kspace(1, 8, 4), k)) == 0.0);
  }

  TEST_CASE("exact relation is recovered as the regularization vanishes")
  {
    const KSpaceGrid y = fixture::exact_relation_kspace(32, 4, 5);
    const KSpaceGrid calib = extract_calibration(y, 24);
    const SpiritKernel tiny = calibrate_kernel(calib, 7, 1e-12);
    CHECK(consistency_residual(y, tiny) <= 1e-8);
    const KSpaceGrid g = apply_G(y, tiny);
    CHECK(nrmse(g.data(), y.data()) <= 1e-8);
    CHECK(nrmse(cc_projection(ifft2c(y), tiny).data(), y.data()) <= 1e-8);
  }

  TEST_CASE("heavy regularization costs consistency")
  {
    // The fit uses interior patches while the residual wraps around the
    // grid, so only the coarse ordering is guaranteed.
    const KSpaceGrid y = fixture::exact_relation_kspace(32, 3, 6);
    const KSpaceGrid calib = extract_calibration(y, 20);
    const double light = consistency_residual(y, calibrate_kernel(calib, 5, 1e-6));
    const double heavy = consistency_residual(y, calibrate_kernel(calib, 5, 1.0));
    CHECK(light < 1e-3);
    CHECK(heavy > 10 * light);
  }

  TEST_CASE("calibration argument checks")
  {
    const KSpaceGrid calib = random_kspace(2, 8, 7);
    CHECK_THROWS_AS(calibrate_kernel(calib, 4, 1e-2), std::invalid_argument);
    CHECK_THROWS_AS(calibrate_kernel(calib, 3, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(calibrate_kernel(calib, 9, 1e-2), std::invalid_argument);
  }

  TEST_CASE("G matches its dense form and is linear")
  {
    const SpiritKernel k = fixture::random_kernel(2, 3, 8, 0.5);
    const KSpaceGrid a = random_kspace(2, 8, 20), b = random_kspace(2, 8, 30);
    const Eigen::MatrixXcd G = oracle::dense_G(k, 8, 8);
    const Eigen::VectorXcd want = G * as_vector(a.data());
    const KSpaceGrid ga = apply_G(a, k);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      CHECK(std::abs(ga.data()[i] - want(static_cast<Eigen::Index>(i))) < 1e-10);
    }
    const Eigen::VectorXcd want_adj = G.adjoint() * as_vector(a.data());
    const KSpaceGrid gh = apply_G_adjoint(a, k);
    for (std::size_t i = 0; i < gh.size(); ++i) {
      CHECK(std::abs(gh.data()[i] - want_adj(static_cast<Eigen::Index>(i))) < 1e-10);
    }

    const cplx al{0.3, -1.2}, be{-0.7, 0.4};
    KSpaceGrid mix = a;
    for (std::size_t i = 0; i < mix.size(); ++i) {
      mix.data()[i] = al * a.data()[i] + be * b.data()[i];
    }
    const KSpaceGrid gm = apply_G(mix, k), gb = apply_G(b, k);
    for (std::size_t i = 0; i < gm.size(); ++i) {
      CHECK(std::abs(gm.data()[i] - (al * ga.data()[i] + be * gb.data()[i])) < 1e-12);
    }
    CHECK(fixture::max_abs(apply_G(KSpaceGrid(2, 8, 8), k)) == 0.0);
    CHECK_THROWS_AS(apply_G(random_kspace(3, 8, 1), k), std::invalid_argument);
  }

  TEST_CASE("POCS keeps fully sampled data and acquired samples")
  {
    const KSpaceGrid y = fixture::exact_relation_kspace(32, 3, 9);
    const SpiritKernel k = calibrate_kernel(extract_calibration(y, 16), 5, 1e-2);
    for (int iters : {1, 7}) {
      const PocsResult r = pocs_spirit(y, SamplingMask::full(32, 32), k, 1e-3, iters, 2);
      CHECK(nrmse(r.kspace.data(), y.data()) <= 1e-8);
      CHECK(nrmse(r.images.data(), ifft2c(y).data()) <= 1e-8);
    }
    const SamplingMask m = generate_mask(32, 32, 3.0, 16, 4);
    const KSpaceGrid y_u = undersample(y, m);
    const PocsResult a = pocs_spirit(y_u, m, k, 1e-3, 10, 2);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < m.pattern.size(); ++i) {
        if (m.acquired(i)) {
          CHECK(a.kspace.coil(c)[i] == y_u.coil(c)[i]);
        }
      }
    }
    const PocsResult b = pocs_spirit(y_u, m, k, 1e-3, 10, 2);
    CHECK(a.kspace == b.kspace);
    CHECK(a.iterations == 10);
  }

  TEST_CASE("POCS converges on an exact-relation scan at R = 2")
  {
    // Eight coils make the consistent set unique; four leave a null space
    // and POCS stalls near 0.14.
    const std::size_t n = 64;
    const KSpaceGrid y = fixture::exact_relation_kspace(n, 8, 11);
    const SamplingMask m = generate_mask(n, n, 2.0, 24, 12);
    const KSpaceGrid y_u = undersample(y, m);
    const SpiritKernel k = calibrate_kernel(extract_calibration(y_u, m, 24), 7, 1e-9);
    const double e100 = nrmse(pocs_spirit(y_u, m, k, 0.0, 100).kspace.data(), y.data());
    const double e400 = nrmse(pocs_spirit(y_u, m, k, 0.0, 400).kspace.data(), y.data());
    CHECK(e100 < nrmse(y_u.data(), y.data()));
    CHECK(e400 < e100);
    CHECK(e400 <= 0.02);
  }

  TEST_CASE("iteration table")
  {
    CHECK(pocs_iterations_for(2) == 20);
    CHECK(pocs_iterations_for(4) == 30);
    CHECK(pocs_iterations_for(6) == 45);
    CHECK(pocs_iterations_for(8) == 65);
    CHECK(pocs_iterations_for(10) == 80);
    CHECK(pocs_iterations_for(5) == 38);
    CHECK(pocs_iterations_for(1) == 20);
    CHECK(pocs_iterations_for(16) == 80);
  }
}
