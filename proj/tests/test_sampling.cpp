#include "oracles.hpp"

#include "mrxfer/errors.hpp"
#include "mrxfer/numerics.hpp"
#include "mrxfer/sampling.hpp"

#include <doctest.h>

#include <set>

using namespace mrxfer;

TEST_SUITE("sampling")
{
  TEST_CASE("R = 1 gives a full mask")
  {
    const SamplingMask m = generate_mask(32, 32, 1.0, 0, 3);
    CHECK(m.count() == 32 * 32);
  }

  TEST_CASE("fraction lands in the band at 256 x 256, R = 4")
  {
    const SamplingMask m = generate_mask(256, 256, 4.0, 24, 7);
    CHECK(m.fraction() >= 0.2375);
    CHECK(m.fraction() <= 0.2625);
    CHECK(satisfies_poisson_disc(m));
  }

  TEST_CASE("calibration block is fully sampled")
  {
    const SamplingMask m = generate_mask(64, 64, 6.0, 16, 2);
    const std::size_t o = calib_origin(64, 16);
    for (std::size_t y = o; y < o + 16; ++y) {
      for (std::size_t x = o; x < o + 16; ++x) {
        CHECK(m(y, x));
      }
    }
  }

  TEST_CASE("generation is a pure function of its arguments")
  {
    const SamplingMask a = generate_mask(64, 64, 4.0, 8, 1);
    const SamplingMask b = generate_mask(64, 64, 4.0, 8, 1);
    const SamplingMask c = generate_mask(64, 64, 4.0, 8, 2);
    CHECK(a.pattern == b.pattern);
    CHECK(a.pattern != c.pattern);
  }

  TEST_CASE("invalid requests")
  {
    CHECK_THROWS_AS(generate_mask(32, 32, 0.5, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_mask(32, 32, 4.0, 32, 1), std::invalid_argument);
    // A 24 x 24 block already covers more than 1/R of a 32 x 32 grid.
    CHECK_THROWS_AS(generate_mask(32, 32, 4.0, 24, 1), ConstraintError);
  }

  TEST_CASE("banks")
  {
    const MaskBank one = generate_mask_bank(1, 32, 32, 4.0, 0, 0);
    CHECK(one.size() == 1);
    CHECK_THROWS(generate_mask_bank(3, 4, 4, 1.0, 0, 0));
    const MaskBank bank = generate_mask_bank(20, 64, 64, 4.0, 0, 10);
    std::set<std::vector<std::uint8_t>> distinct;
    for (const auto &m : bank.masks) {
      distinct.insert(m.pattern);
    }
    CHECK(distinct.size() == 20);
    CHECK(&bank[23] == &bank[3]);
  }

  TEST_CASE("undersample keeps acquired samples and zeroes the rest")
  {
    const ComplexImage x = fixture::random_image(16, 16, 4);
    const KSpaceGrid k = fft2c(x);
    const SamplingMask full = SamplingMask::full(16, 16);
    CHECK(undersample(k, full) == k);

    const SamplingMask m = fixture::random_mask(16, 16, 0.3, 9);
    const KSpaceGrid u = undersample(k, m);
    for (std::size_t i = 0; i < u.size(); ++i) {
      CHECK(u.data()[i] == (m.acquired(i) ? k.data()[i] : cplx{}));
    }
    CHECK(undersample(u, m) == u);
    CHECK_THROWS_AS(undersample(k, SamplingMask::full(8, 16)), std::invalid_argument);
  }

  TEST_CASE("a calibration-only mask keeps only the central block")
  {
    SamplingMask m = SamplingMask::full(16, 16);
    std::fill(m.pattern.begin(), m.pattern.end(), 0);
    const std::size_t o = calib_origin(16, 4);
    for (std::size_t y = o; y < o + 4; ++y) {
      for (std::size_t x = o; x < o + 4; ++x) {
        m.pattern[y * 16 + x] = 1;
      }
    }
    const KSpaceGrid u = undersample(fft2c(fixture::random_image(16, 16, 2)), m);
    for (std::size_t y = 0; y < 16; ++y) {
      for (std::size_t x = 0; x < 16; ++x) {
        const bool inside = y >= o && y < o + 4 && x >= o && x < o + 4;
        CHECK((u(0, y, x) != cplx{}) == inside);
      }
    }
  }

  TEST_CASE("zero-filled reconstruction")
  {
    const ComplexImage x = fixture::random_image(12, 12, 5);
    CHECK(nrmse(zero_filled_recon(fft2c(x)).data(), x.data()) < 1e-14);
    CHECK(fixture::max_abs(zero_filled_recon(KSpaceGrid(2, 8, 8))) == 0.0);
  }

  TEST_CASE("local radius grows away from the center")
  {
    double prev = 0.0;
    for (double r = 0; r < 30; r += 1.0) {
      const double v = poisson_radius(64, 64, 32 + r, 32, 1.0);
      CHECK(v >= prev);
      prev = v;
    }
  }
}
