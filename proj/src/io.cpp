#include "mrxfer/io.hpp"

#include "mrxfer/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mrxfer {

namespace {

using nlohmann::json;

constexpr char kTensorMagic[4] = {'M', 'R', 'X', '1'};
constexpr char kModelMagic[4] = {'M', 'R', 'X', 'M'};
// Guards against absurd allocations from corrupted headers.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;
constexpr std::uint32_t kMaxRank = 16;

void put_u32(std::ostream &os, std::uint32_t v)
{
  char b[4];
  for (int i = 0; i < 4; ++i) {
    b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  os.write(b, 4);
}

void put_u64(std::ostream &os, std::uint64_t v)
{
  char b[8];
  for (int i = 0; i < 8; ++i) {
    b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  os.write(b, 8);
}

void read_exact(std::istream &is, char *dst, std::size_t n, const char *what)
{
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw FormatError(FormatErrc::truncated, std::string("truncated input while reading ") + what);
  }
}

std::uint32_t get_u32(std::istream &is, const char *what)
{
  unsigned char b[4];
  read_exact(is, reinterpret_cast<char *>(b), 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  }
  return v;
}

std::uint64_t get_u64(std::istream &is, const char *what)
{
  unsigned char b[8];
  read_exact(is, reinterpret_cast<char *>(b), 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  }
  return v;
}

template <class U>
void store_le(std::uint8_t *dst, U bits)
{
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    dst[i] = static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF);
  }
}

template <class U>
U load_le(const std::uint8_t *src)
{
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(src[i]) << (8 * i);
  }
  return v;
}

void put_scalar(std::uint8_t *dst, double v, bool single)
{
  if (single) {
    store_le(dst, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  } else {
    store_le(dst, std::bit_cast<std::uint64_t>(v));
  }
}

double get_scalar(const std::uint8_t *src, bool single)
{
  if (single) {
    return static_cast<double>(std::bit_cast<float>(load_le<std::uint32_t>(src)));
  }
  return std::bit_cast<double>(load_le<std::uint64_t>(src));
}

std::uint64_t product(const std::vector<std::uint64_t> &dims)
{
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > kMaxElements / d) {
      throw FormatError(FormatErrc::truncated, "tensor dimensions overflow");
    }
    n *= d;
  }
  return n;
}

bool is_complex(DType t) { return t == DType::cf32 || t == DType::cf64; }
bool is_single(DType t) { return t == DType::f32 || t == DType::cf32; }

std::ofstream open_out(const std::filesystem::path &path)
{
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw FormatError(FormatErrc::io, "cannot open " + path.string() + " for writing");
  }
  return os;
}

std::ifstream open_in(const std::filesystem::path &path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw FormatError(FormatErrc::io, "cannot open " + path.string());
  }
  return is;
}

void finish_write(std::ostream &os, const std::filesystem::path &path)
{
  os.flush();
  if (!os) {
    throw FormatError(FormatErrc::io, "write failed for " + path.string());
  }
}

} // namespace

std::size_t dtype_size(DType t)
{
  switch (t) {
  case DType::f32:
    return 4;
  case DType::cf32:
    return 8;
  case DType::f64:
    return 8;
  case DType::cf64:
    return 16;
  case DType::u8:
    return 1;
  }
  throw FormatError(FormatErrc::dtype_mismatch, "unknown dtype");
}

std::string to_string(DType t)
{
  switch (t) {
  case DType::f32:
    return "f32";
  case DType::cf32:
    return "cf32";
  case DType::f64:
    return "f64";
  case DType::cf64:
    return "cf64";
  case DType::u8:
    return "u8";
  }
  return "unknown";
}

std::uint64_t Mrx1Tensor::element_count() const { return product(dims); }

void write_tensor(std::ostream &os, const Mrx1Tensor &t)
{
  if (t.payload.size() != t.element_count() * dtype_size(t.dtype)) {
    throw std::invalid_argument("write_tensor: payload length does not match dims and dtype");
  }
  os.write(kTensorMagic, 4);
  put_u32(os, kMrx1Version);
  put_u32(os, static_cast<std::uint32_t>(t.dtype));
  put_u32(os, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) {
    put_u64(os, d);
  }
  os.write(reinterpret_cast<const char *>(t.payload.data()), static_cast<std::streamsize>(t.payload.size()));
  if (!os) {
    throw FormatError(FormatErrc::io, "write_tensor: stream error");
  }
}

Mrx1Tensor read_tensor(std::istream &is)
{
  char magic[4];
  read_exact(is, magic, 4, "tensor magic");
  if (std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw FormatError(FormatErrc::bad_magic, "not an MRX1 tensor (bad magic)");
  }
  const std::uint32_t version = get_u32(is, "tensor version");
  if (version != kMrx1Version) {
    throw FormatError(FormatErrc::unsupported_version, "unsupported MRX1 version " + std::to_string(version));
  }
  const std::uint32_t dt = get_u32(is, "tensor dtype");
  if (dt > static_cast<std::uint32_t>(DType::u8)) {
    throw FormatError(FormatErrc::dtype_mismatch, "unknown MRX1 dtype " + std::to_string(dt));
  }
  Mrx1Tensor t;
  t.dtype = static_cast<DType>(dt);
  const std::uint32_t ndim = get_u32(is, "tensor rank");
  if (ndim > kMaxRank) {
    throw FormatError(FormatErrc::truncated, "implausible tensor rank " + std::to_string(ndim));
  }
  t.dims.resize(ndim);
  for (auto &d : t.dims) {
    d = get_u64(is, "tensor dims");
  }
  t.payload.resize(t.element_count() * dtype_size(t.dtype));
  read_exact(is, reinterpret_cast<char *>(t.payload.data()), t.payload.size(), "tensor payload");
  return t;
}

void save_tensor(const std::filesystem::path &path, const Mrx1Tensor &t)
{
  auto os = open_out(path);
  write_tensor(os, t);
  finish_write(os, path);
}

Mrx1Tensor load_tensor(const std::filesystem::path &path)
{
  auto is = open_in(path);
  return read_tensor(is);
}

Mrx1Tensor encode_real(std::span<const double> values, std::vector<std::uint64_t> dims, DType dtype)
{
  if (dtype != DType::f32 && dtype != DType::f64) {
    throw std::invalid_argument("encode_real: dtype must be f32 or f64");
  }
  Mrx1Tensor t{dtype, std::move(dims), {}};
  if (t.element_count() != values.size()) {
    throw std::invalid_argument("encode_real: value count does not match dims");
  }
  const std::size_t es = dtype_size(dtype);
  t.payload.resize(values.size() * es);
  for (std::size_t i = 0; i < values.size(); ++i) {
    put_scalar(t.payload.data() + i * es, values[i], is_single(dtype));
  }
  return t;
}

Mrx1Tensor encode_complex(std::span<const cplx> values, std::vector<std::uint64_t> dims, DType dtype)
{
  if (!is_complex(dtype)) {
    throw std::invalid_argument("encode_complex: dtype must be cf32 or cf64");
  }
  Mrx1Tensor t{dtype, std::move(dims), {}};
  if (t.element_count() != values.size()) {
    throw std::invalid_argument("encode_complex: value count does not match dims");
  }
  const std::size_t half = dtype_size(dtype) / 2;
  t.payload.resize(values.size() * 2 * half);
  for (std::size_t i = 0; i < values.size(); ++i) {
    put_scalar(t.payload.data() + 2 * i * half, values[i].real(), is_single(dtype));
    put_scalar(t.payload.data() + (2 * i + 1) * half, values[i].imag(), is_single(dtype));
  }
  return t;
}

std::vector<double> decode_real(const Mrx1Tensor &t)
{
  if (t.dtype != DType::f32 && t.dtype != DType::f64) {
    throw FormatError(FormatErrc::dtype_mismatch, "expected a real tensor, found " + to_string(t.dtype));
  }
  const std::size_t es = dtype_size(t.dtype);
  std::vector<double> out(t.element_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = get_scalar(t.payload.data() + i * es, is_single(t.dtype));
  }
  return out;
}

std::vector<cplx> decode_complex(const Mrx1Tensor &t)
{
  if (!is_complex(t.dtype)) {
    throw FormatError(FormatErrc::dtype_mismatch, "expected a complex tensor, found " + to_string(t.dtype));
  }
  const std::size_t half = dtype_size(t.dtype) / 2;
  std::vector<cplx> out(t.element_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = cplx{
        get_scalar(t.payload.data() + 2 * i * half, is_single(t.dtype)),
        get_scalar(t.payload.data() + (2 * i + 1) * half, is_single(t.dtype))};
  }
  return out;
}

Mrx1Tensor encode_image(const ComplexImage &img, DType dtype)
{
  return encode_complex(img.data(), {img.height(), img.width()}, dtype);
}

ComplexImage decode_image(const Mrx1Tensor &t)
{
  auto imgs = decode_images(t);
  if (imgs.size() != 1) {
    throw FormatError(FormatErrc::dtype_mismatch, "expected a single image, found " + std::to_string(imgs.size()));
  }
  return std::move(imgs.front());
}

Mrx1Tensor encode_images(const std::vector<ComplexImage> &imgs, DType dtype)
{
  if (imgs.empty()) {
    return encode_complex({}, {0, 0, 0}, dtype);
  }
  const std::size_t h = imgs.front().height(), w = imgs.front().width();
  std::vector<cplx> all;
  all.reserve(imgs.size() * h * w);
  for (const auto &im : imgs) {
    if (im.height() != h || im.width() != w) {
      throw std::invalid_argument("encode_images: images differ in shape");
    }
    all.insert(all.end(), im.data().begin(), im.data().end());
  }
  return encode_complex(all, {imgs.size(), h, w}, dtype);
}

std::vector<ComplexImage> decode_images(const Mrx1Tensor &t)
{
  std::size_t n = 1, h = 0, w = 0;
  if (t.dims.size() == 2) {
    h = t.dims[0];
    w = t.dims[1];
  } else if (t.dims.size() == 3) {
    n = t.dims[0];
    h = t.dims[1];
    w = t.dims[2];
  } else {
    throw FormatError(FormatErrc::dtype_mismatch, "expected a rank-2 or rank-3 image tensor");
  }
  std::vector<cplx> all;
  if (is_complex(t.dtype)) {
    all = decode_complex(t);
  } else {
    const auto r = decode_real(t);
    all.assign(r.begin(), r.end());
  }
  std::vector<ComplexImage> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.emplace_back(h, w, std::vector<cplx>(all.begin() + i * h * w, all.begin() + (i + 1) * h * w));
  }
  return out;
}

namespace {

template <class Domain>
CoilArray<Domain> decode_coils(const Mrx1Tensor &t)
{
  if (t.dims.size() == 2) {
    return CoilArray<Domain>(1, t.dims[0], t.dims[1], decode_complex(t));
  }
  const std::size_t lead = t.dims.size() == 4 && t.dims[0] == 1 ? 1 : 0;
  if (t.dims.size() != 3 + lead) {
    throw FormatError(FormatErrc::dtype_mismatch, "expected a rank-3 coil tensor");
  }
  return CoilArray<Domain>(t.dims[lead], t.dims[lead + 1], t.dims[lead + 2], decode_complex(t));
}

} // namespace

KSpaceGrid decode_kspace(const Mrx1Tensor &t) { return decode_coils<KSpaceDomain>(t); }
CoilImages decode_coil_images(const Mrx1Tensor &t) { return decode_coils<ImageDomain>(t); }

Mrx1Tensor encode_mask(const SamplingMask &m)
{
  return Mrx1Tensor{DType::u8, {m.height, m.width}, std::vector<std::uint8_t>(m.pattern.begin(), m.pattern.end())};
}

Mrx1Tensor encode_masks(const std::vector<SamplingMask> &masks)
{
  if (masks.empty()) {
    throw std::invalid_argument("encode_masks: no masks");
  }
  Mrx1Tensor t{DType::u8, {masks.size(), masks.front().height, masks.front().width}, {}};
  for (const auto &m : masks) {
    if (m.height != masks.front().height || m.width != masks.front().width) {
      throw std::invalid_argument("encode_masks: masks differ in shape");
    }
    t.payload.insert(t.payload.end(), m.pattern.begin(), m.pattern.end());
  }
  return t;
}

std::vector<SamplingMask> decode_masks(const Mrx1Tensor &t)
{
  if (t.dtype != DType::u8) {
    throw FormatError(FormatErrc::dtype_mismatch, "expected a u8 mask tensor, found " + to_string(t.dtype));
  }
  std::size_t n = 1, h = 0, w = 0;
  if (t.dims.size() == 2) {
    h = t.dims[0];
    w = t.dims[1];
  } else if (t.dims.size() == 3) {
    n = t.dims[0];
    h = t.dims[1];
    w = t.dims[2];
  } else {
    throw FormatError(FormatErrc::dtype_mismatch, "expected a rank-2 or rank-3 mask tensor");
  }
  std::vector<SamplingMask> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    SamplingMask &m = out[i];
    m.height = h;
    m.width = w;
    m.pattern.assign(t.payload.begin() + i * h * w, t.payload.begin() + (i + 1) * h * w);
    for (auto &p : m.pattern) {
      p = p ? 1 : 0;
    }
    const std::size_t c = m.count();
    m.accel = c ? static_cast<double>(h * w) / static_cast<double>(c) : 0.0;
  }
  return out;
}

SamplingMask decode_mask(const Mrx1Tensor &t)
{
  auto all = decode_masks(t);
  if (all.size() != 1) {
    throw FormatError(FormatErrc::dtype_mismatch, "expected one mask, found " + std::to_string(all.size()));
  }
  return std::move(all.front());
}

Mrx1Tensor encode_kernel(const SpiritKernel &k)
{
  return encode_complex(k.weights, {k.coils, k.coils, k.width, k.width}, DType::cf64);
}

SpiritKernel decode_kernel(const Mrx1Tensor &t, double tikhonov)
{
  if (t.dims.size() != 4 || t.dims[0] != t.dims[1] || t.dims[2] != t.dims[3]) {
    throw FormatError(FormatErrc::dtype_mismatch, "expected a [C, C, w, w] kernel tensor");
  }
  SpiritKernel k;
  k.coils = t.dims[0];
  k.width = t.dims[2];
  k.tikhonov = tikhonov;
  k.weights = decode_complex(t);
  return k;
}

// ---------------------------------------------------------------------------
// Model container.

namespace {

std::string layer_name(std::size_t p, std::size_t l, const char *what)
{
  return "subnet" + std::to_string(p) + ".layer" + std::to_string(l) + "." + what;
}

json lambda_to_json(double v) { return std::isinf(v) ? json("inf") : json(v); }

double lambda_from_json(const json &j)
{
  if (j.is_string() && j.get<std::string>() == "inf") {
    return kHardDataConsistency;
  }
  return j.get<double>();
}

} // namespace

void write_model(std::ostream &os, const CascadeModel &model)
{
  model.validate();
  json manifest;
  manifest["format"] = "mrxfer-model";
  manifest["mode"] = to_string(model.mode);
  manifest["subnets"] = model.stages();
  manifest["lambda_dc"] = lambda_to_json(model.lambda_dc);
  manifest["coils"] = model.coils;
  manifest["seed"] = model.seed;
  manifest["cc_kernel_id"] = model.cc_kernel_id;
  std::vector<std::pair<std::string, Mrx1Tensor>> tensors;
  json arch = json::array();
  for (std::size_t p = 0; p < model.stages(); ++p) {
    json layers = json::array();
    const auto &net = model.subnets[p];
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      const ConvLayer &c = net.layers[l];
      layers.push_back(
          {{"in", c.in_channels},
           {"out", c.out_channels},
           {"kh", c.kernel_h},
           {"kw", c.kernel_w},
           {"activation", c.activation == Activation::relu ? "relu" : "none"}});
      tensors.emplace_back(
          layer_name(p, l, "weight"), encode_real(c.weights, {c.out_channels, c.in_channels, c.kernel_h, c.kernel_w}));
      tensors.emplace_back(layer_name(p, l, "bias"), encode_real(c.bias, {c.out_channels}));
    }
    arch.push_back({{"layers", std::move(layers)}});
  }
  manifest["architecture"] = std::move(arch);
  if (model.cc_kernel) {
    manifest["kernel"] = {
        {"width", model.cc_kernel->width}, {"coils", model.cc_kernel->coils}, {"tikhonov", model.cc_kernel->tikhonov}};
    tensors.emplace_back("cc_kernel", encode_kernel(*model.cc_kernel));
  } else {
    manifest["kernel"] = nullptr;
  }
  json names = json::array();
  for (const auto &[name, t] : tensors) {
    names.push_back(name);
  }
  manifest["tensors"] = std::move(names);

  const std::string text = manifest.dump();
  os.write(kModelMagic, 4);
  put_u32(os, kModelVersion);
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto &[name, t] : tensors) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, t);
  }
  if (!os) {
    throw FormatError(FormatErrc::io, "write_model: stream error");
  }
}

CascadeModel read_model(std::istream &is)
{
  char magic[4];
  read_exact(is, magic, 4, "model magic");
  if (std::memcmp(magic, kModelMagic, 4) != 0) {
    throw FormatError(FormatErrc::bad_magic, "not a model container (bad magic)");
  }
  const std::uint32_t version = get_u32(is, "model version");
  if (version != kModelVersion) {
    throw FormatError(FormatErrc::unsupported_version, "unsupported model version " + std::to_string(version));
  }
  const std::uint64_t len = get_u64(is, "manifest length");
  if (len > (std::uint64_t{1} << 30)) {
    throw FormatError(FormatErrc::truncated, "implausible manifest length");
  }
  std::string text(len, '\0');
  read_exact(is, text.data(), len, "manifest");
  const std::uint32_t count = get_u32(is, "tensor count");
  std::map<std::string, Mrx1Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t nl = get_u32(is, "tensor name length");
    if (nl > 4096) {
      throw FormatError(FormatErrc::truncated, "implausible tensor name length");
    }
    std::string name(nl, '\0');
    read_exact(is, name.data(), nl, "tensor name");
    tensors[name] = read_tensor(is);
  }

  CascadeModel model;
  try {
    const json m = json::parse(text);
    if (m.at("format").get<std::string>() != "mrxfer-model") {
      throw FormatError(FormatErrc::bad_manifest, "manifest format tag is not mrxfer-model");
    }
    model.mode = parse_cascade_mode(m.at("mode").get<std::string>());
    model.lambda_dc = lambda_from_json(m.at("lambda_dc"));
    model.coils = m.at("coils").get<std::size_t>();
    model.seed = m.at("seed").get<std::uint64_t>();
    model.cc_kernel_id = m.at("cc_kernel_id").get<std::string>();
    const auto &arch = m.at("architecture");
    for (std::size_t p = 0; p < arch.size(); ++p) {
      Subnetwork net;
      const auto &layers = arch[p].at("layers");
      for (std::size_t l = 0; l < layers.size(); ++l) {
        ConvLayer c;
        c.in_channels = layers[l].at("in").get<std::size_t>();
        c.out_channels = layers[l].at("out").get<std::size_t>();
        c.kernel_h = layers[l].at("kh").get<std::size_t>();
        c.kernel_w = layers[l].at("kw").get<std::size_t>();
        c.activation = layers[l].at("activation").get<std::string>() == "relu" ? Activation::relu : Activation::none;
        const auto &wt = tensors.at(layer_name(p, l, "weight"));
        const auto &bt = tensors.at(layer_name(p, l, "bias"));
        if (wt.dims != std::vector<std::uint64_t>{c.out_channels, c.in_channels, c.kernel_h, c.kernel_w} ||
            bt.dims != std::vector<std::uint64_t>{c.out_channels}) {
          throw FormatError(FormatErrc::bad_manifest, "tensor shapes disagree with the manifest at " + layer_name(p, l, ""));
        }
        c.weights = decode_real(wt);
        c.bias = decode_real(bt);
        net.layers.push_back(std::move(c));
      }
      model.subnets.push_back(std::move(net));
    }
    if (!m.at("kernel").is_null()) {
      model.cc_kernel = decode_kernel(tensors.at("cc_kernel"), m.at("kernel").at("tikhonov").get<double>());
    }
    if (m.at("subnets").get<std::size_t>() != model.stages()) {
      throw FormatError(FormatErrc::bad_manifest, "subnet count disagrees with the architecture");
    }
    model.validate();
  } catch (const FormatError &) {
    throw;
  } catch (const std::exception &e) {
    throw FormatError(FormatErrc::bad_manifest, std::string("invalid model manifest: ") + e.what());
  }
  return model;
}

void save_model(const std::filesystem::path &path, const CascadeModel &model)
{
  auto os = open_out(path);
  write_model(os, model);
  finish_write(os, path);
}

CascadeModel load_model(const std::filesystem::path &path)
{
  auto is = open_in(path);
  return read_model(is);
}

// ---------------------------------------------------------------------------
// Dataset directories.

void save_dataset(const std::filesystem::path &dir, const Dataset &data)
{
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw FormatError(FormatErrc::io, "cannot create " + dir.string() + ": " + ec.message());
  }
  json manifest;
  manifest["format"] = "mrxfer-dataset";
  manifest["kind"] = to_string(data.spec.kind);
  manifest["size"] = data.spec.size;
  manifest["coils"] = data.spec.coils;
  manifest["coil_map_variants"] = data.spec.coil_map_variants;
  manifest["map_seed"] = data.spec.map_seed;
  json splits = json::object();
  for (const auto &[name, items] : data.splits) {
    const auto &range = data.spec.splits.at(name);
    json seeds = json::array(), ids = json::array();
    std::vector<ComplexImage> refs;
    for (const auto &it : items) {
      seeds.push_back(it.seed);
      ids.push_back(it.coil_map_id);
      refs.push_back(it.reference);
    }
    splits[name] = {
        {"seed_begin", range.seed_begin},
        {"count", range.count},
        {"file", name + ".mrx"},
        {"seeds", std::move(seeds)},
        {"coil_map_ids", std::move(ids)}};
    if (!refs.empty()) {
      save_tensor(dir / (name + ".mrx"), encode_images(refs, DType::cf32));
    }
  }
  manifest["splits"] = std::move(splits);
  if (!data.coil_maps.empty()) {
    const auto &m0 = data.coil_maps.front();
    std::vector<cplx> all;
    for (const auto &m : data.coil_maps) {
      all.insert(all.end(), m.maps.data().begin(), m.maps.data().end());
    }
    save_tensor(
        dir / "coil_maps.mrx",
        encode_complex(all, {data.coil_maps.size(), m0.coils(), m0.height(), m0.width()}, DType::cf64));
  }
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  os << manifest.dump(2) << "\n";
  finish_write(os, dir / "manifest.json");
}

Dataset load_dataset(const std::filesystem::path &dir)
{
  std::ifstream is(dir / "manifest.json");
  if (!is) {
    throw FormatError(FormatErrc::io, "cannot open " + (dir / "manifest.json").string());
  }
  Dataset data;
  try {
    const json m = json::parse(is);
    if (m.at("format").get<std::string>() != "mrxfer-dataset") {
      throw FormatError(FormatErrc::bad_manifest, "manifest format tag is not mrxfer-dataset");
    }
    data.spec.kind = parse_domain_kind(m.at("kind").get<std::string>());
    data.spec.size = m.at("size").get<std::size_t>();
    data.spec.coils = m.at("coils").get<std::size_t>();
    data.spec.coil_map_variants = m.at("coil_map_variants").get<std::size_t>();
    data.spec.map_seed = m.at("map_seed").get<std::uint64_t>();
    if (data.spec.coils > 1) {
      const Mrx1Tensor t = load_tensor(dir / "coil_maps.mrx");
      if (t.dims.size() != 4) {
        throw FormatError(FormatErrc::dtype_mismatch, "coil_maps.mrx must be rank 4");
      }
      const auto all = decode_complex(t);
      const std::size_t per = t.dims[1] * t.dims[2] * t.dims[3];
      for (std::size_t v = 0; v < t.dims[0]; ++v) {
        data.coil_maps.push_back({CoilImages(
            t.dims[1], t.dims[2], t.dims[3], std::vector<cplx>(all.begin() + v * per, all.begin() + (v + 1) * per))});
      }
    }
    for (const auto &[name, s] : m.at("splits").items()) {
      data.spec.splits[name] = {s.at("seed_begin").get<std::uint64_t>(), s.at("count").get<std::size_t>()};
      auto &items = data.splits[name];
      const auto &seeds = s.at("seeds");
      const auto &ids = s.at("coil_map_ids");
      if (seeds.empty()) {
        continue;
      }
      const auto refs = decode_images(load_tensor(dir / s.at("file").get<std::string>()));
      if (refs.size() != seeds.size() || ids.size() != seeds.size()) {
        throw FormatError(FormatErrc::bad_manifest, "split '" + name + "' item count disagrees with its file");
      }
      for (std::size_t i = 0; i < refs.size(); ++i) {
        const int id = ids[i].get<int>();
        if (data.spec.coils > 1 && (id < 0 || static_cast<std::size_t>(id) >= data.coil_maps.size())) {
          throw FormatError(FormatErrc::bad_manifest, "coil map id out of range in split '" + name + "'");
        }
        items.push_back({seeds[i].get<std::uint64_t>(), refs[i], id});
      }
    }
  } catch (const FormatError &) {
    throw;
  } catch (const std::exception &e) {
    throw FormatError(FormatErrc::bad_manifest, std::string("invalid dataset manifest: ") + e.what());
  }
  return data;
}

} // namespace mrxfer
