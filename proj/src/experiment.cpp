#include "mrxfer/experiment.hpp"

#include "mrxfer/errors.hpp"
#include "mrxfer/metrics.hpp"
#include "mrxfer/numerics.hpp"
#include "mrxfer/sampling.hpp"
#include "mrxfer/spirit.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

namespace mrxfer {

namespace {

using nlohmann::json;

json domain_to_json(const DomainSpec &s)
{
  json splits = json::object();
  for (const auto &[name, r] : s.splits) {
    splits[name] = {{"seed_begin", r.seed_begin}, {"count", r.count}};
  }
  return {
      {"kind", to_string(s.kind)},
      {"size", s.size},
      {"coils", s.coils},
      {"coil_map_variants", s.coil_map_variants},
      {"map_seed", s.map_seed},
      {"splits", splits}};
}

DomainSpec domain_from_json(const json &j)
{
  DomainSpec s;
  s.kind = parse_domain_kind(j.at("kind").get<std::string>());
  s.size = j.value("size", s.size);
  s.coils = j.value("coils", s.coils);
  s.coil_map_variants = j.value("coil_map_variants", s.coil_map_variants);
  s.map_seed = j.value("map_seed", s.map_seed);
  for (const auto &[name, r] : j.at("splits").items()) {
    s.splits[name] = {r.value("seed_begin", std::uint64_t{0}), r.at("count").get<std::size_t>()};
  }
  return s;
}

json lambda_json(double v) { return std::isinf(v) ? json("inf") : json(v); }

double lambda_value(const json &j)
{
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") {
      return kHardDataConsistency;
    }
    throw std::invalid_argument("lambda_dc must be a number or \"inf\"");
  }
  return j.get<double>();
}

template <class T>
std::vector<T> axis(const json &j, const char *key, std::vector<T> fallback)
{
  if (!j.contains(key)) {
    return fallback;
  }
  return j.at(key).get<std::vector<T>>();
}

std::string csv_field(const std::string &s)
{
  if (s.find_first_of(",\"\n") == std::string::npos) {
    return s;
  }
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') {
      out += '"';
    }
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string &line)
{
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double parse_number(const std::string &s)
{
  if (s == "+inf" || s == "inf") {
    return std::numeric_limits<double>::infinity();
  }
  if (s == "-inf") {
    return -std::numeric_limits<double>::infinity();
  }
  if (s == "nan") {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a number: '" + s + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string &s)
{
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw std::invalid_argument("not an unsigned integer: '" + s + "'");
  }
  return v;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<TrainingSample> head(const std::vector<TrainingSample> &all, std::size_t n)
{
  return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n)};
}

ComplexImage combine_or_single(const CoilImages &imgs, const TrainingSample &s)
{
  if (s.maps) {
    return coil_combine(imgs, *s.maps);
  }
  return ComplexImage(imgs.height(), imgs.width(), std::vector<cplx>(imgs.data().begin(), imgs.data().end()));
}

ComplexImage baseline_recon(const std::string &method, const GridConfig &cfg, const TrainingSample &s, const SamplingMask &mask)
{
  const KSpaceGrid y_u = undersample(s.kspace, mask);
  if (method == "zf") {
    return combine_or_single(zero_filled_recon(y_u), s);
  }
  if (method == "cs") {
    return nlcg_reconstruct(y_u, mask, cfg.cs).image;
  }
  const SpiritKernel k = calibrate_kernel(
      extract_calibration(y_u, mask, cfg.kernel.calib_size), cfg.kernel.width, cfg.kernel.tikhonov);
  const int iters = cfg.spirit_iters > 0 ? cfg.spirit_iters : pocs_iterations_for(mask.accel);
  return combine_or_single(pocs_spirit(y_u, mask, k, cfg.spirit_lambda_l1, iters).images, s);
}

struct Emitter {
  std::vector<MetricsRecord> &rows;

  void scores(
      const std::string &method, double R, std::size_t n_train, std::size_t n_tune, std::optional<std::uint64_t> seed,
      const std::vector<ImageScore> &scores)
  {
    for (const auto &sc : scores) {
      MetricsRecord r;
      r.method = method;
      r.accel = R;
      r.n_train = n_train;
      r.n_tune = n_tune;
      r.seed = seed;
      r.image_id = sc.image_id;
      r.psnr = sc.psnr;
      r.ssim = sc.ssim;
      r.n = 1;
      rows.push_back(std::move(r));
    }
  }

  void error(
      const std::string &method, double R, std::size_t n_train, std::size_t n_tune, std::optional<std::uint64_t> seed,
      const std::string &what)
  {
    MetricsRecord r;
    r.method = method;
    r.accel = R;
    r.n_train = n_train;
    r.n_tune = n_tune;
    r.seed = seed;
    r.psnr = std::numeric_limits<double>::quiet_NaN();
    r.ssim = std::numeric_limits<double>::quiet_NaN();
    r.psnr_std = r.ssim_std = r.psnr;
    r.n = 0;
    r.status = "error: " + what;
    rows.push_back(std::move(r));
  }
};

using CellKey = std::tuple<std::string, double, std::size_t, std::size_t>;

std::vector<MetricsRecord> aggregate(const std::vector<MetricsRecord> &rows)
{
  std::vector<CellKey> order;
  std::map<CellKey, std::vector<const MetricsRecord *>> cells;
  for (const auto &r : rows) {
    const CellKey key{r.method, r.accel, r.n_train, r.n_tune};
    auto [it, fresh] = cells.try_emplace(key);
    if (fresh) {
      order.push_back(key);
    }
    it->second.push_back(&r);
  }
  std::vector<MetricsRecord> out;
  for (const auto &key : order) {
    std::vector<double> p, s;
    std::string failure;
    for (const auto *r : cells[key]) {
      if (r->status == "ok") {
        p.push_back(r->psnr);
        s.push_back(r->ssim);
      } else if (failure.empty()) {
        failure = r->status;
      }
    }
    MetricsRecord a;
    a.agg = true;
    std::tie(a.method, a.accel, a.n_train, a.n_tune) = key;
    a.n = p.size();
    if (p.empty()) {
      a.psnr = a.ssim = a.psnr_std = a.ssim_std = std::numeric_limits<double>::quiet_NaN();
      a.status = failure;
    } else {
      const MeanStd mp = mean_std(p), ms = mean_std(s);
      a.psnr = mp.mean;
      a.psnr_std = mp.stddev;
      a.ssim = ms.mean;
      a.ssim_std = ms.stddev;
      // Partial failures still aggregate the successful images.
      a.status = failure.empty() ? "ok" : "partial: " + failure;
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<ConvergenceRecord> summarize_convergence(const GridConfig &cfg, const std::vector<MetricsRecord> &agg)
{
  std::vector<ConvergenceRecord> out;
  for (double R : cfg.accel) {
    std::optional<double> target;
    for (const auto &a : agg) {
      if (a.method == "target" && a.accel == R && a.status == "ok") {
        target = a.psnr;
      }
    }
    for (std::size_t n_train : cfg.n_train) {
      std::vector<ConvergencePoint> curve;
      for (const auto &a : agg) {
        if (a.method == "nn" && a.accel == R && a.n_train == n_train && a.n > 0) {
          curve.push_back({static_cast<double>(a.n_tune), a.psnr});
        }
      }
      std::sort(curve.begin(), curve.end(), [](const auto &x, const auto &y) { return x.n_tune < y.n_tune; });
      if (curve.size() < 2) {
        continue;
      }
      ConvergenceRecord c;
      c.accel = R;
      c.n_train = n_train;
      c.ref_psnr = target ? *target : curve.back().psnr;
      c.ref_source = target ? "target" : "max_n_tune";
      const ConvergenceResult res = convergence_samples(curve, c.ref_psnr);
      c.n_converged = res.n_tune;
      c.converged = res.converged;
      out.push_back(c);
    }
  }
  return out;
}

std::string svg_plot(double R, const std::vector<MetricsRecord> &agg)
{
  std::map<std::size_t, std::vector<std::pair<double, double>>> lines;
  std::map<std::string, double> levels;
  double xmax = 1, ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  for (const auto &a : agg) {
    if (a.accel != R || a.n == 0 || !std::isfinite(a.psnr)) {
      continue;
    }
    if (a.method == "nn") {
      lines[a.n_train].emplace_back(static_cast<double>(a.n_tune), a.psnr);
      xmax = std::max(xmax, static_cast<double>(a.n_tune));
    } else {
      levels[a.method] = a.psnr;
    }
    ymin = std::min(ymin, a.psnr);
    ymax = std::max(ymax, a.psnr);
  }
  if (!std::isfinite(ymin)) {
    ymin = 0;
    ymax = 1;
  }
  if (ymax - ymin < 1e-9) {
    ymax = ymin + 1;
  }
  const double W = 640, H = 400, L = 60, B = 50, T = 30, Rm = 150;
  const auto px = [&](double x) { return L + (W - L - Rm) * x / xmax; };
  const auto py = [&](double y) { return H - B - (H - B - T) * (y - ymin) / (ymax - ymin); };
  static const char *colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - Rm << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (W - Rm + L) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">n_tune</text>\n";
  os << "<text x=\"15\" y=\"" << (H - B + T) / 2 << "\" transform=\"rotate(-90 15 " << (H - B + T) / 2
     << ")\" text-anchor=\"middle\">PSNR (dB)</text>\n";
  os << "<text x=\"" << L << "\" y=\"20\">R = " << format_number(R) << "</text>\n";
  for (double y : {ymin, (ymin + ymax) / 2, ymax}) {
    os << "<text x=\"" << L - 5 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
       << std::round(y * 100) / 100 << "</text>\n";
  }
  std::size_t ci = 0, row = 0;
  for (const auto &[n_train, pts] : lines) {
    const char *col = colors[ci++ % 6];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (const auto &[x, y] : pts) {
      os << px(x) << "," << py(y) << " ";
    }
    os << "\"/>\n";
    for (const auto &[x, y] : pts) {
      os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << col << "\"/>\n";
    }
    os << "<text x=\"" << W - Rm + 10 << "\" y=\"" << T + 15 * row++ << "\" fill=\"" << col
       << "\" font-size=\"12\">n_train " << n_train << "</text>\n";
  }
  for (const auto &[method, y] : levels) {
    const char *col = colors[ci++ % 6];
    os << "<line x1=\"" << L << "\" y1=\"" << py(y) << "\" x2=\"" << W - Rm << "\" y2=\"" << py(y) << "\" stroke=\""
       << col << "\" stroke-dasharray=\"6 4\"/>\n";
    os << "<text x=\"" << W - Rm + 10 << "\" y=\"" << T + 15 * row++ << "\" fill=\"" << col << "\" font-size=\"12\">"
       << method << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_text(const std::filesystem::path &path, const std::string &text)
{
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << text;
  os.flush();
  if (!os) {
    throw FormatError(FormatErrc::io, "cannot write " + path.string());
  }
}

} // namespace

// ---------------------------------------------------------------------------

std::string format_number(double v)
{
  if (std::isnan(v)) {
    return "nan";
  }
  if (std::isinf(v)) {
    return v > 0 ? "+inf" : "-inf";
  }
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string domain_spec_json(const DomainSpec &spec) { return domain_to_json(spec).dump(2); }

DomainSpec parse_domain_spec(const std::string &json_text)
{
  try {
    return domain_from_json(json::parse(json_text));
  } catch (const json::exception &e) {
    throw std::invalid_argument(std::string("invalid domain spec: ") + e.what());
  }
}

void GridConfig::validate() const
{
  if (accel.empty() || n_train.empty() || n_tune.empty() || seeds.empty()) {
    throw std::invalid_argument("grid config: accel, n_train, n_tune and seeds must be non-empty");
  }
  if (source.size != target.size || source.coils != target.coils) {
    throw std::invalid_argument("grid config: source and target differ in size or coil count");
  }
  const bool multi = source.coils > 1;
  if ((arch.mode == CascadeMode::multi_coil) != multi) {
    throw std::invalid_argument("grid config: cascade mode does not match the coil count");
  }
  if (multi && calib_size < kernel.calib_size) {
    throw std::invalid_argument("grid config: multi-coil data needs calib_size >= kernel.calib_size");
  }
  for (const auto &b : baselines) {
    if (b != "zf" && b != "cs" && b != "spirit") {
      throw std::invalid_argument("grid config: unknown baseline '" + b + "'");
    }
    if (b == "cs" && multi) {
      throw std::invalid_argument("grid config: the cs baseline is single-coil only");
    }
    if (b == "spirit" && !multi) {
      throw std::invalid_argument("grid config: the spirit baseline needs multi-coil data");
    }
  }
  if (!(arch.lambda_dc > 0.0) || arch.subnets == 0 || arch.hidden_channels == 0 || arch.kernel_size % 2 == 0) {
    throw std::invalid_argument("grid config: lambda_dc > 0, subnets >= 1, hidden_channels >= 1 and an odd kernel are required");
  }
  if (mask_bank_size == 0 || (reference.enabled && reference.n_train == 0)) {
    throw std::invalid_argument("grid config: mask_bank_size and reference.n_train must be positive");
  }
  for (double R : accel) {
    if (!(R >= 1.0)) {
      throw std::invalid_argument("grid config: accelerations must be >= 1");
    }
  }
  train.validate();
  cs.validate();
}

GridConfig parse_grid_config(const std::string &json_text)
{
  GridConfig c;
  try {
    const json j = json::parse(json_text);
    c.source = domain_from_json(j.at("source"));
    c.target = domain_from_json(j.at("target"));
    c.accel = axis<double>(j, "accel", c.accel);
    c.n_train = axis<std::size_t>(j, "n_train", {});
    c.n_tune = axis<std::size_t>(j, "n_tune", c.n_tune);
    c.seeds = axis<std::uint64_t>(j, "seeds", c.seeds);
    c.calib_size = j.value("calib_size", c.calib_size);
    c.mask_bank_size = j.value("mask_bank_size", c.mask_bank_size);
    c.mask_seed = j.value("mask_seed", c.mask_seed);
    c.arch.mode = c.source.coils > 1 ? CascadeMode::multi_coil : CascadeMode::single_coil;
    if (j.contains("architecture")) {
      const json &a = j.at("architecture");
      c.arch.subnets = a.value("subnets", c.arch.subnets);
      c.arch.hidden_channels = a.value("hidden_channels", c.arch.hidden_channels);
      c.arch.hidden_layers = a.value("hidden_layers", c.arch.hidden_layers);
      c.arch.kernel_size = a.value("kernel_size", c.arch.kernel_size);
      if (a.contains("lambda_dc")) {
        c.arch.lambda_dc = lambda_value(a.at("lambda_dc"));
      }
    }
    if (j.contains("train")) {
      const json &t = j.at("train");
      c.train.lr = t.value("lr", c.train.lr);
      c.train.beta1 = t.value("beta1", c.train.beta1);
      c.train.beta2 = t.value("beta2", c.train.beta2);
      c.train.adam_eps = t.value("adam_eps", c.train.adam_eps);
      c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
      c.train.batch = t.value("batch", c.train.batch);
      c.train.epochs_per_subnet = t.value("epochs_per_subnet", c.train.epochs_per_subnet);
      c.train.finetune_lr = t.value("finetune_lr", c.train.finetune_lr);
      c.train.finetune_epochs = t.value("finetune_epochs", c.train.finetune_epochs);
    }
    if (j.contains("kernel")) {
      const json &k = j.at("kernel");
      c.kernel.calib_size = k.value("calib_size", c.kernel.calib_size);
      c.kernel.width = k.value("width", c.kernel.width);
      c.kernel.tikhonov = k.value("tikhonov", c.kernel.tikhonov);
    }
    if (j.contains("reference")) {
      c.reference.enabled = j.at("reference").value("enabled", false);
      c.reference.n_train = j.at("reference").value("n_train", std::size_t{0});
    }
    c.baselines = axis<std::string>(j, "baselines", {});
    if (j.contains("cs")) {
      c.cs.lambda_l1 = j.at("cs").value("lambda_l1", c.cs.lambda_l1);
      c.cs.iters = j.at("cs").value("iters", c.cs.iters);
    }
    if (j.contains("spirit")) {
      c.spirit_lambda_l1 = j.at("spirit").value("lambda_l1", c.spirit_lambda_l1);
      c.spirit_iters = j.at("spirit").value("iters", c.spirit_iters);
    }
    c.plots = j.value("plots", c.plots);
  } catch (const json::exception &e) {
    throw std::invalid_argument(std::string("invalid grid config: ") + e.what());
  }
  if (c.reference.enabled && c.reference.n_train == 0) {
    c.reference.n_train = *std::max_element(c.n_train.begin(), c.n_train.end());
  }
  c.validate();
  return c;
}

GridConfig load_grid_config(const std::filesystem::path &path)
{
  std::ifstream is(path);
  if (!is) {
    throw FormatError(FormatErrc::io, "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_grid_config(ss.str());
}

std::string to_json(const GridConfig &c)
{
  json j;
  j["source"] = domain_to_json(c.source);
  j["target"] = domain_to_json(c.target);
  j["accel"] = c.accel;
  j["n_train"] = c.n_train;
  j["n_tune"] = c.n_tune;
  j["seeds"] = c.seeds;
  j["calib_size"] = c.calib_size;
  j["mask_bank_size"] = c.mask_bank_size;
  j["mask_seed"] = c.mask_seed;
  j["architecture"] = {
      {"mode", to_string(c.arch.mode)},
      {"subnets", c.arch.subnets},
      {"hidden_channels", c.arch.hidden_channels},
      {"hidden_layers", c.arch.hidden_layers},
      {"kernel_size", c.arch.kernel_size},
      {"lambda_dc", lambda_json(c.arch.lambda_dc)}};
  j["train"] = {
      {"lr", c.train.lr},
      {"beta1", c.train.beta1},
      {"beta2", c.train.beta2},
      {"adam_eps", c.train.adam_eps},
      {"weight_decay", c.train.weight_decay},
      {"batch", c.train.batch},
      {"epochs_per_subnet", c.train.epochs_per_subnet},
      {"finetune_lr", c.train.finetune_lr},
      {"finetune_epochs", c.train.finetune_epochs}};
  j["kernel"] = {{"calib_size", c.kernel.calib_size}, {"width", c.kernel.width}, {"tikhonov", c.kernel.tikhonov}};
  j["reference"] = {{"enabled", c.reference.enabled}, {"n_train", c.reference.n_train}};
  j["baselines"] = c.baselines;
  j["cs"] = {{"lambda_l1", c.cs.lambda_l1}, {"iters", c.cs.iters}};
  j["spirit"] = {{"lambda_l1", c.spirit_lambda_l1}, {"iters", c.spirit_iters}};
  j["plots"] = c.plots;
  return j.dump(2);
}

ExperimentResult run_experiment(const GridConfig &cfg, std::ostream *progress)
{
  cfg.validate();
  const auto log = [&](const std::string &line) {
    if (progress) {
      *progress << line << std::endl;
    }
  };
  const std::size_t n = cfg.source.size;
  const Dataset source = build_domain(cfg.source);
  const Dataset target = build_domain(cfg.target);
  const std::size_t max_train = *std::max_element(cfg.n_train.begin(), cfg.n_train.end());
  const std::size_t max_tune = *std::max_element(cfg.n_tune.begin(), cfg.n_tune.end());
  const auto train_all = make_samples(source, "train", max_train, cfg.kernel);
  const auto tune_all = make_samples(target, "tune", max_tune, cfg.kernel);
  const auto test = make_samples(target, "test", target.split("test").size(), cfg.kernel);
  std::vector<TrainingSample> ref_train;
  if (cfg.reference.enabled) {
    ref_train = make_samples(target, "train", cfg.reference.n_train, cfg.kernel);
  }

  ExperimentResult result;
  Emitter emit{result.records};
  for (double R : cfg.accel) {
    const auto t0 = Clock::now();
    MaskBank train_bank, test_bank;
    try {
      train_bank = generate_mask_bank(cfg.mask_bank_size, n, n, R, cfg.calib_size, cfg.mask_seed, BankRole::train);
      test_bank = generate_mask_bank(
          std::max<std::size_t>(test.size(), 1), n, n, R, cfg.calib_size, cfg.mask_seed + kTestBankSeedOffset,
          BankRole::test);
    } catch (const std::exception &e) {
      for (std::uint64_t seed : cfg.seeds) {
        for (std::size_t nt : cfg.n_train) {
          for (std::size_t nu : cfg.n_tune) {
            emit.error("nn", R, nt, nu, seed, e.what());
          }
        }
      }
      log("R=" + format_number(R) + ": mask generation failed: " + e.what());
      continue;
    }
    log("R=" + format_number(R) + ": mask banks ready in " + format_number(std::round(seconds_since(t0) * 10) / 10) + " s");

    for (const auto &method : cfg.baselines) {
      std::vector<ImageScore> scores(test.size());
      try {
        for (std::size_t i = 0; i < test.size(); ++i) {
          const ComplexImage rec = baseline_recon(method, cfg, test[i], test_bank[i]);
          scores[i] = {test[i].id, psnr(test[i].reference, rec), ssim(test[i].reference, rec)};
        }
        emit.scores(method, R, 0, 0, std::nullopt, scores);
      } catch (const std::exception &e) {
        emit.error(method, R, 0, 0, std::nullopt, e.what());
      }
    }

    for (std::uint64_t seed : cfg.seeds) {
      ArchitectureConfig arch = cfg.arch;
      arch.seed = seed;
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      const auto kernel_of = [&](const std::vector<TrainingSample> &s) -> std::optional<SpiritKernel> {
        if (cfg.arch.mode != CascadeMode::multi_coil || s.empty()) {
          return std::nullopt;
        }
        return s.front().kernel;
      };

      if (cfg.reference.enabled) {
        try {
          const auto t1 = Clock::now();
          const CascadeModel m = train_sequential(make_cascade(arch, kernel_of(ref_train)), ref_train, train_bank, tc);
          emit.scores("target", R, cfg.reference.n_train, 0, seed, evaluate(m, test, test_bank));
          log("R=" + format_number(R) + " seed=" + std::to_string(seed) + ": target model trained in " +
              format_number(std::round(seconds_since(t1) * 10) / 10) + " s");
        } catch (const std::exception &e) {
          emit.error("target", R, cfg.reference.n_train, 0, seed, e.what());
        }
      }

      for (std::size_t nt : cfg.n_train) {
        const auto t1 = Clock::now();
        const std::string tag =
            "R=" + format_number(R) + " seed=" + std::to_string(seed) + " n_train=" + std::to_string(nt);
        std::optional<CascadeModel> base;
        try {
          const auto train = head(train_all, nt);
          base = train_sequential(make_cascade(arch, kernel_of(train)), train, train_bank, tc);
          log(tag + ": base trained in " + format_number(std::round(seconds_since(t1) * 10) / 10) + " s");
        } catch (const std::exception &e) {
          for (std::size_t nu : cfg.n_tune) {
            emit.error("nn", R, nt, nu, seed, e.what());
          }
          log(tag + ": base training failed: " + e.what());
          continue;
        }
        for (std::size_t nu : cfg.n_tune) {
          try {
            const CascadeModel tuned = nu == 0 ? *base : fine_tune(*base, head(tune_all, nu), train_bank, tc);
            const auto scores = evaluate(tuned, test, test_bank);
            emit.scores("nn", R, nt, nu, seed, scores);
            double mean = 0;
            for (const auto &s : scores) {
              mean += s.psnr / static_cast<double>(scores.size());
            }
            log(tag + " n_tune=" + std::to_string(nu) + ": mean PSNR " + format_number(std::round(mean * 100) / 100) +
                " dB");
          } catch (const std::exception &e) {
            emit.error("nn", R, nt, nu, seed, e.what());
          }
        }
      }
    }
  }

  const auto agg = aggregate(result.records);
  result.records.insert(result.records.end(), agg.begin(), agg.end());
  result.convergence = summarize_convergence(cfg, agg);
  return result;
}

std::string metrics_csv(const std::vector<MetricsRecord> &records)
{
  std::ostringstream os;
  os << "agg,method,R,n_train,n_tune,seed,image_id,psnr_db,ssim,psnr_std,ssim_std,n,status\n";
  for (const auto &r : records) {
    os << (r.agg ? 1 : 0) << ',' << csv_field(r.method) << ',' << format_number(r.accel) << ',' << r.n_train << ','
       << r.n_tune << ',' << (r.seed ? std::to_string(*r.seed) : "") << ','
       << (r.image_id ? std::to_string(*r.image_id) : "") << ',' << format_number(r.psnr) << ','
       << format_number(r.ssim) << ',' << format_number(r.psnr_std) << ',' << format_number(r.ssim_std) << ',' << r.n
       << ',' << csv_field(r.status) << '\n';
  }
  return os.str();
}

std::vector<MetricsRecord> parse_metrics_csv(const std::string &text)
{
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  if (line.rfind("agg,method,R,", 0) != 0) {
    throw std::invalid_argument("parse_metrics_csv: missing header");
  }
  std::vector<MetricsRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) {
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 13) {
      throw std::invalid_argument("parse_metrics_csv: expected 13 fields, found " + std::to_string(f.size()));
    }
    MetricsRecord r;
    r.agg = f[0] == "1";
    r.method = f[1];
    r.accel = parse_number(f[2]);
    r.n_train = parse_uint(f[3]);
    r.n_tune = parse_uint(f[4]);
    if (!f[5].empty()) {
      r.seed = parse_uint(f[5]);
    }
    if (!f[6].empty()) {
      r.image_id = parse_uint(f[6]);
    }
    r.psnr = parse_number(f[7]);
    r.ssim = parse_number(f[8]);
    r.psnr_std = parse_number(f[9]);
    r.ssim_std = parse_number(f[10]);
    r.n = parse_uint(f[11]);
    r.status = f[12];
    out.push_back(std::move(r));
  }
  return out;
}

std::string convergence_csv(const std::vector<ConvergenceRecord> &records)
{
  std::ostringstream os;
  os << "R,n_train,ref_psnr,ref_source,n_converged,converged\n";
  for (const auto &c : records) {
    os << format_number(c.accel) << ',' << c.n_train << ',' << format_number(c.ref_psnr) << ',' << c.ref_source << ','
       << format_number(c.n_converged) << ',' << (c.converged ? 1 : 0) << '\n';
  }
  return os.str();
}

void write_experiment(const std::filesystem::path &dir, const GridConfig &config, const ExperimentResult &result)
{
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw FormatError(FormatErrc::io, "cannot create " + dir.string() + ": " + ec.message());
  }
  write_text(dir / "metrics.csv", metrics_csv(result.records));
  write_text(dir / "convergence.csv", convergence_csv(result.convergence));
  write_text(dir / "config.json", to_json(config) + "\n");
  if (config.plots) {
    std::vector<MetricsRecord> agg;
    std::copy_if(result.records.begin(), result.records.end(), std::back_inserter(agg), [](const auto &r) {
      return r.agg;
    });
    for (double R : config.accel) {
      write_text(dir / ("psnr_vs_ntune_R" + format_number(R) + ".svg"), svg_plot(R, agg));
    }
  }
}

} // namespace mrxfer
