#include "mrxfer/experiment.hpp"
#include "mrxfer/metrics.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

using namespace mrxfer;

namespace {

const std::filesystem::path kData = MRXFER_TEST_DATA;

std::string read_text(const std::filesystem::path &p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const ExperimentResult &demo_result()
{
  static const ExperimentResult r = run_experiment(load_grid_config(kData / "demo_grid.json"));
  return r;
}

bool same_number(double a, double b, double tol)
{
  if (std::isnan(a) || std::isnan(b)) {
    return std::isnan(a) && std::isnan(b);
  }
  if (std::isinf(a) || std::isinf(b)) {
    return a == b;
  }
  return std::abs(a - b) <= tol * std::max(1.0, std::abs(b));
}

const char *kMinimal = R"({
  "source": {"kind": "phantom", "size": 32, "splits": {"train": {"seed_begin": 0, "count": 8}}},
  "target": {"kind": "mr-like-t2", "size": 32, "splits": {"tune": {"seed_begin": 100, "count": 4}, "test": {"seed_begin": 200, "count": 2}}},
  "n_train": [8]
})";

} // namespace

TEST_SUITE("experiment")
{
  TEST_CASE("minimal config takes defaults")
  {
    const GridConfig g = parse_grid_config(kMinimal);
    CHECK(g.accel == std::vector<double>{4.0});
    CHECK(g.n_tune == std::vector<std::size_t>{0});
    CHECK(g.seeds == std::vector<std::uint64_t>{0});
    CHECK(g.mask_bank_size == 100);
    CHECK(g.arch.subnets == 5);
    CHECK(g.arch.hidden_channels == 64);
    CHECK(g.arch.lambda_dc == kHardDataConsistency);
    CHECK(g.arch.mode == CascadeMode::single_coil);
    CHECK(g.spirit_iters == 0);
    CHECK(g.target.kind == DomainKind::mr_like_t2);

    const GridConfig again = parse_grid_config(to_json(g));
    CHECK(to_json(again) == to_json(g));
  }

  TEST_CASE("invalid configs are rejected")
  {
    const auto with = [](const std::string &key_value) {
      std::string s = kMinimal;
      s.insert(s.rfind('}'), ", " + key_value);
      return s;
    };
    CHECK_THROWS_AS(parse_grid_config(with(R"("n_tune": [])")), std::invalid_argument);
    CHECK_THROWS_AS(parse_grid_config(with(R"("baselines": ["spirit"])")), std::invalid_argument);
    CHECK_THROWS_AS(parse_grid_config(with(R"("baselines": ["magic"])")), std::invalid_argument);
    CHECK_THROWS_AS(parse_grid_config(with(R"("architecture": {"lambda_dc": -1})")), std::invalid_argument);
    CHECK_THROWS_AS(parse_grid_config(with(R"("accel": "four")")), std::invalid_argument);
    CHECK_THROWS_AS(parse_grid_config("{not json"), std::invalid_argument);
    CHECK_THROWS_AS(parse_grid_config(R"({"source": {"kind": "phantom"}})"), std::invalid_argument);

    std::string mismatch = kMinimal;
    mismatch.replace(mismatch.rfind("\"size\": 32"), 10, "\"size\": 64");
    CHECK_THROWS_AS(parse_grid_config(mismatch), std::invalid_argument);
  }

  TEST_CASE("domain specs round trip")
  {
    DomainSpec s;
    s.kind = DomainKind::natural_like;
    s.size = 48;
    s.coils = 6;
    s.coil_map_variants = 2;
    s.map_seed = 11;
    s.splits["train"] = {3, 9};
    const DomainSpec back = parse_domain_spec(domain_spec_json(s));
    CHECK(back.kind == s.kind);
    CHECK(back.size == 48);
    CHECK(back.coils == 6);
    CHECK(back.coil_map_variants == 2);
    CHECK(back.map_seed == 11);
    CHECK(back.splits.at("train").seed_begin == 3);
    CHECK(back.splits.at("train").count == 9);
  }

  TEST_CASE("numbers are printed in shortest round-trip form")
  {
    CHECK(format_number(4.0) == "4");
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(-2.5e-7) == "-2.5e-07");
    CHECK(format_number(std::numeric_limits<double>::infinity()) == "+inf");
    CHECK(format_number(-std::numeric_limits<double>::infinity()) == "-inf");
    CHECK(format_number(std::nan("")) == "nan");
    const double x = 23.456789012345678;
    CHECK(std::stod(format_number(x)) == x);
  }

  TEST_CASE("demo grid cardinality")
  {
    const ExperimentResult &r = demo_result();
    std::map<std::pair<std::string, double>, std::size_t> per_image, errors, aggs;
    for (const auto &rec : r.records) {
      const auto key = std::make_pair(rec.method, rec.accel);
      if (rec.agg) {
        ++aggs[key];
      } else if (rec.status == "ok") {
        ++per_image[key];
      } else {
        ++errors[key];
      }
    }
    // Three test images; two seeds; three n_tune values.
    CHECK(per_image[{"zf", 2.0}] == 3);
    CHECK(per_image[{"cs", 2.0}] == 3);
    CHECK(per_image[{"target", 2.0}] == 6);
    CHECK(per_image[{"nn", 2.0}] == 18);
    CHECK(aggs[{"nn", 2.0}] == 3);
    CHECK(aggs[{"zf", 2.0}] == 1);
    // An 8 x 8 calibration block is a quarter of the grid, so R = 8 cannot be met.
    CHECK(per_image[{"nn", 8.0}] == 0);
    CHECK(errors[{"nn", 8.0}] == 6);
    CHECK(aggs[{"nn", 8.0}] == 3);
    CHECK(r.records.size() == 30 + 6 + 9);

    bool seen_agg = false;
    for (const auto &rec : r.records) {
      CHECK((rec.agg || !seen_agg));
      seen_agg = seen_agg || rec.agg;
      if (rec.agg && rec.accel == 8.0) {
        CHECK(rec.n == 0);
        CHECK(rec.status.rfind("error: ", 0) == 0);
        CHECK(std::isnan(rec.psnr));
      }
      if (!rec.agg && rec.status == "ok") {
        CHECK(rec.n == 1);
        CHECK(rec.image_id.has_value());
        CHECK(rec.seed.has_value() == (rec.method == "nn" || rec.method == "target"));
      }
    }
  }

  TEST_CASE("aggregates equal their recomputation")
  {
    const ExperimentResult &r = demo_result();
    for (const auto &a : r.records) {
      if (!a.agg || a.n == 0) {
        continue;
      }
      std::vector<double> p, s;
      for (const auto &rec : r.records) {
        if (!rec.agg && rec.status == "ok" && rec.method == a.method && rec.accel == a.accel &&
            rec.n_train == a.n_train && rec.n_tune == a.n_tune) {
          p.push_back(rec.psnr);
          s.push_back(rec.ssim);
        }
      }
      REQUIRE(p.size() == a.n);
      const MeanStd mp = mean_std(p), ms = mean_std(s);
      CHECK(std::abs(a.psnr - mp.mean) <= 1e-12);
      CHECK(std::abs(a.psnr_std - mp.stddev) <= 1e-12);
      CHECK(std::abs(a.ssim - ms.mean) <= 1e-12);
      CHECK(std::abs(a.ssim_std - ms.stddev) <= 1e-12);
    }
  }

  TEST_CASE("convergence column follows the aggregated curve")
  {
    const ExperimentResult &r = demo_result();
    REQUIRE(r.convergence.size() == 1);
    const ConvergenceRecord &c = r.convergence.front();
    CHECK(c.accel == 2.0);
    CHECK(c.ref_source == "target");
    std::vector<ConvergencePoint> curve;
    for (const auto &a : r.records) {
      if (a.agg && a.method == "nn" && a.accel == 2.0) {
        curve.push_back({static_cast<double>(a.n_tune), a.psnr});
      }
      if (a.agg && a.method == "target" && a.accel == 2.0) {
        CHECK(c.ref_psnr == a.psnr);
      }
    }
    const ConvergenceResult want = convergence_samples(curve, c.ref_psnr);
    CHECK(c.n_converged == want.n_tune);
    CHECK(c.converged == want.converged);
  }

  TEST_CASE("CSV round trip")
  {
    const ExperimentResult &r = demo_result();
    const std::string csv = metrics_csv(r.records);
    const auto back = parse_metrics_csv(csv);
    REQUIRE(back.size() == r.records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].agg == r.records[i].agg);
      CHECK(back[i].method == r.records[i].method);
      CHECK(back[i].seed == r.records[i].seed);
      CHECK(back[i].image_id == r.records[i].image_id);
      CHECK(back[i].status == r.records[i].status);
      CHECK(same_number(back[i].psnr, r.records[i].psnr, 0.0));
      CHECK(same_number(back[i].ssim_std, r.records[i].ssim_std, 0.0));
    }
    CHECK(metrics_csv(back) == csv);

    MetricsRecord odd;
    odd.method = "nn";
    odd.status = "error: bad \"quote\", comma";
    odd.psnr = std::numeric_limits<double>::infinity();
    const auto parsed = parse_metrics_csv(metrics_csv({odd}));
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].status == odd.status);
    CHECK(parsed[0].psnr == odd.psnr);
    CHECK_THROWS_AS(parse_metrics_csv("x,y\n1,2\n"), std::invalid_argument);
  }

  TEST_CASE("demo grid matches the golden file")
  {
    const auto golden = parse_metrics_csv(read_text(kData / "demo_metrics.golden.csv"));
    const ExperimentResult &r = demo_result();
    REQUIRE(golden.size() == r.records.size());
    for (std::size_t i = 0; i < golden.size(); ++i) {
      const MetricsRecord &g = golden[i], &m = r.records[i];
      CHECK(g.method == m.method);
      CHECK(g.accel == m.accel);
      CHECK(g.n_tune == m.n_tune);
      CHECK(g.status.substr(0, 6) == m.status.substr(0, 6));
      CHECK(same_number(m.psnr, g.psnr, 1e-9));
      CHECK(same_number(m.ssim, g.ssim, 1e-9));
    }
  }
}
