#include "oracles.hpp"

#include "mrxfer/cs.hpp"
#include "mrxfer/datasim.hpp"
#include "mrxfer/numerics.hpp"

#include <doctest.h>

using namespace mrxfer;

namespace {

std::vector<cplx> vec(std::span<const cplx> s) { return {s.begin(), s.end()}; }

} // namespace

TEST_SUITE("cs")
{
  TEST_CASE("objective vanishes on consistent data without regularization")
  {
    const ComplexImage x = fixture::random_image(8, 8, 1);
    const SamplingMask m = fixture::random_mask(8, 8, 0.4, 2);
    const KSpaceGrid y = undersample(fft2c(x), m);
    CsParams p;
    p.lambda_l1 = 0.0;
    p.levels = 2;
    CHECK(cs_objective(x, y, m, p) < 1e-26);
  }

  TEST_CASE("zero input gives the smoothing floor")
  {
    const SamplingMask m = fixture::random_mask(8, 8, 0.4, 2);
    CsParams p;
    p.levels = 2;
    p.lambda_l1 = 0.25;
    p.smoothing_eps = 1e-6;
    CHECK(cs_objective(ComplexImage(8, 8), KSpaceGrid(1, 8, 8), m, p) == doctest::Approx(0.25 * 64 * 1e-3).epsilon(1e-14));
  }

  TEST_CASE("objective matches the dense oracle")
  {
    const ComplexImage x = fixture::random_image(8, 8, 3);
    const SamplingMask m = fixture::random_mask(8, 8, 0.5, 4);
    const KSpaceGrid y = undersample(fft2c(fixture::random_image(8, 8, 5)), m);
    CsParams p;
    p.levels = 2;
    p.lambda_l1 = 0.3;
    p.smoothing_eps = 1e-8;
    const double want = oracle::cs_objective(vec(x.data()), vec(y.data()), m, p.lambda_l1, p.smoothing_eps, p.levels);
    CHECK(std::abs(cs_objective(x, y, m, p) - want) <= 1e-12 * std::abs(want));
  }

  TEST_CASE("gradient matches central differences")
  {
    const ComplexImage x = fixture::random_image(8, 8, 6);
    const SamplingMask m = fixture::random_mask(8, 8, 0.5, 7);
    const KSpaceGrid y = undersample(fft2c(fixture::random_image(8, 8, 8)), m);
    CsParams p;
    p.levels = 2;
    p.lambda_l1 = 0.05;
    p.smoothing_eps = 1e-2;
    const ComplexImage g = cs_gradient(x, y, m, p);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (cplx dir : {cplx{1, 0}, cplx{0, 1}}) {
        ComplexImage xp = x, xm = x;
        xp[i] += h * dir;
        xm[i] -= h * dir;
        const double fd = (cs_objective(xp, y, m, p) - cs_objective(xm, y, m, p)) / (2 * h);
        const double an = dir.real() != 0 ? g[i].real() : g[i].imag();
        worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), 1e-3));
      }
    }
    CHECK(worst <= 1e-6);
  }

  TEST_CASE("data-term gradient without regularization")
  {
    const ComplexImage x = fixture::random_image(8, 8, 9);
    const SamplingMask m = fixture::random_mask(8, 8, 0.5, 10);
    const KSpaceGrid y = undersample(fft2c(fixture::random_image(8, 8, 11)), m);
    CsParams p;
    p.levels = 2;
    p.lambda_l1 = 0.0;
    // 2 F^H (M F x - y) with F as a dense matrix.
    const Eigen::MatrixXcd F = oracle::dft2_matrix(8, 8);
    Eigen::VectorXcd xv(64), yv(64), mv(64);
    for (std::size_t i = 0; i < 64; ++i) {
      xv(i) = x[i];
      yv(i) = y.data()[i];
      mv(i) = m.pattern[i] ? 1.0 : 0.0;
    }
    const Eigen::VectorXcd want = 2.0 * F.adjoint() * ((mv.array() * (F * xv).array()).matrix() - yv);
    const ComplexImage g = cs_gradient(x, y, m, p);
    for (std::size_t i = 0; i < 64; ++i) {
      CHECK(std::abs(g[i] - want(i)) < 1e-12);
    }
  }

  TEST_CASE("stationary point of the fully sampled problem")
  {
    const ComplexImage x = fixture::random_image(8, 8, 12);
    const KSpaceGrid y = fft2c(x);
    CsParams p;
    p.levels = 2;
    p.lambda_l1 = 0.0;
    const ComplexImage g = cs_gradient(x, y, SamplingMask::full(8, 8), p);
    for (const cplx v : g.data()) {
      CHECK(std::abs(v) <= 1e-10);
    }
  }

  TEST_CASE("full mask recovers the inverse transform in five iterations")
  {
    const ComplexImage x = fixture::random_image(16, 16, 13);
    const KSpaceGrid y = fft2c(x);
    CsParams p;
    p.lambda_l1 = 0.0;
    p.iters = 5;
    const CsResult r = nlcg_reconstruct(y, SamplingMask::full(16, 16), p);
    CHECK(nrmse(r.image.data(), ifft2c(y).data()) < 1e-8);
  }

  TEST_CASE("objective is nonincreasing and runs are deterministic")
  {
    const ComplexImage x = make_phantom(32, 32, DomainKind::phantom, 1);
    const SamplingMask m = fixture::random_mask(32, 32, 0.3, 14);
    const KSpaceGrid y = undersample(fft2c(x), m);
    CsParams p;
    p.iters = 25;
    p.levels = 3;
    const CsResult a = nlcg_reconstruct(y, m, p);
    for (std::size_t k = 1; k < a.objective.size(); ++k) {
      CHECK(a.objective[k] <= a.objective[k - 1]);
    }
    CHECK(a.objective.back() < a.objective.front());
    const CsResult b = nlcg_reconstruct(y, m, p);
    CHECK(a.image == b.image);
  }

  TEST_CASE("parameter validation")
  {
    CsParams p;
    p.lambda_l1 = -1;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = CsParams{};
    p.iters = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = CsParams{};
    p.smoothing_eps = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    CHECK_THROWS_AS(
        cs_objective(ComplexImage(8, 8), KSpaceGrid(1, 8, 4), SamplingMask::full(8, 8), CsParams{}),
        std::invalid_argument);
  }
}
