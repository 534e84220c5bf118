#include "engine.hpp"

#include "mrxfer/errors.hpp"
#include "mrxfer/numerics.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>

namespace mrxfer::engine {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void im2col(const ConvLayer &layer, const double *in, std::size_t h, std::size_t w, std::vector<double> &col)
{
  const std::size_t kh = layer.kernel_h, kw = layer.kernel_w, hw = h * w;
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  col.assign(layer.in_channels * kh * kw * hw, 0.0);
  for (std::size_t c = 0; c < layer.in_channels; ++c) {
    const double *plane = in + c * hw;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double *row = col.data() + ((c * kh + ky) * kw + kx) * hw;
        const long dy = static_cast<long>(ky) - ph, dx = static_cast<long>(kx) - pw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            continue;
          }
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x) + dx;
            if (sx >= 0 && sx < static_cast<long>(w)) {
              row[y * w + x] = plane[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)];
            }
          }
        }
      }
    }
  }
}

void col2im(const ConvLayer &layer, const std::vector<double> &col, std::size_t h, std::size_t w, double *out)
{
  const std::size_t kh = layer.kernel_h, kw = layer.kernel_w, hw = h * w;
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  for (std::size_t c = 0; c < layer.in_channels; ++c) {
    double *plane = out + c * hw;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const double *row = col.data() + ((c * kh + ky) * kw + kx) * hw;
        const long dy = static_cast<long>(ky) - ph, dx = static_cast<long>(kx) - pw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            continue;
          }
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x) + dx;
            if (sx >= 0 && sx < static_cast<long>(w)) {
              plane[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)] += row[y * w + x];
            }
          }
        }
      }
    }
  }
}

Tensor conv_forward(const ConvLayer &layer, const Tensor &in, std::size_t h, std::size_t w)
{
  const std::size_t hw = h * w, k = layer.in_channels * layer.kernel_h * layer.kernel_w;
  if (in.size() != layer.in_channels * hw) {
    throw std::invalid_argument(
        "conv: expected " + std::to_string(layer.in_channels) + " input channels, got " +
        std::to_string(hw ? in.size() / hw : 0));
  }
  std::vector<double> col;
  im2col(layer, in.data(), h, w, col);
  Tensor out(layer.out_channels * hw);
  const ConstMapMat wm(layer.weights.data(), static_cast<Eigen::Index>(layer.out_channels), static_cast<Eigen::Index>(k));
  const ConstMapMat cm(col.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
  MapMat om(out.data(), static_cast<Eigen::Index>(layer.out_channels), static_cast<Eigen::Index>(hw));
  om.noalias() = wm * cm;
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    om.row(static_cast<Eigen::Index>(o)).array() += layer.bias[o];
  }
  if (layer.activation == Activation::relu) {
    for (auto &v : out) {
      v = v > 0.0 ? v : 0.0;
    }
  }
  return out;
}

void check_finite(const std::vector<double> &v, const std::string &what)
{
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericalError("non-finite gradient in " + what);
    }
  }
}

} // namespace

NetGrad zero_grad(const Subnetwork &net)
{
  NetGrad g(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    g[l].weights.assign(net.layers[l].weights.size(), 0.0);
    g[l].bias.assign(net.layers[l].bias.size(), 0.0);
  }
  return g;
}

void accumulate(NetGrad &into, const NetGrad &from)
{
  for (std::size_t l = 0; l < into.size(); ++l) {
    for (std::size_t i = 0; i < into[l].weights.size(); ++i) {
      into[l].weights[i] += from[l].weights[i];
    }
    for (std::size_t i = 0; i < into[l].bias.size(); ++i) {
      into[l].bias[i] += from[l].bias[i];
    }
  }
}

Tensor to_channels(const ComplexImage &x)
{
  const std::size_t n = x.size();
  Tensor t(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = x[i].real();
    t[n + i] = x[i].imag();
  }
  return t;
}

Tensor net_forward(const Subnetwork &net, Tensor input, std::size_t h, std::size_t w, NetTrace *trace)
{
  if (net.layers.empty()) {
    throw std::invalid_argument("subnetwork has no layers");
  }
  if (trace) {
    trace->acts.clear();
    trace->acts.reserve(net.layers.size() + 1);
    trace->acts.push_back(input);
  }
  Tensor cur = std::move(input);
  for (const auto &layer : net.layers) {
    cur = conv_forward(layer, cur, h, w);
    if (trace) {
      trace->acts.push_back(cur);
    }
  }
  return cur;
}

Tensor net_backward(
    const Subnetwork &net,
    const NetTrace &trace,
    std::size_t h,
    std::size_t w,
    Tensor grad_out,
    NetGrad &grad,
    bool need_input)
{
  const std::size_t hw = h * w;
  Tensor g = std::move(grad_out);
  std::vector<double> col;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const ConvLayer &layer = net.layers[li];
    const Tensor &out = trace.acts[li + 1];
    const Tensor &in = trace.acts[li];
    if (layer.activation == Activation::relu) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(out[i] > 0.0)) {
          g[i] = 0.0;
        }
      }
    }
    const std::size_t k = layer.in_channels * layer.kernel_h * layer.kernel_w;
    im2col(layer, in.data(), h, w, col);
    const ConstMapMat gm(g.data(), static_cast<Eigen::Index>(layer.out_channels), static_cast<Eigen::Index>(hw));
    const ConstMapMat cm(col.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
    MapMat gw(grad[li].weights.data(), static_cast<Eigen::Index>(layer.out_channels), static_cast<Eigen::Index>(k));
    gw.noalias() += gm * cm.transpose();
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
      grad[li].bias[o] += gm.row(static_cast<Eigen::Index>(o)).sum();
    }
    const std::string name = "layer " + std::to_string(li);
    check_finite(grad[li].weights, name + " weights");
    check_finite(grad[li].bias, name + " bias");
    if (li == 0 && !need_input) {
      return {};
    }
    const ConstMapMat wm(layer.weights.data(), static_cast<Eigen::Index>(layer.out_channels), static_cast<Eigen::Index>(k));
    std::vector<double> dcol(k * hw);
    MapMat dm(dcol.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
    dm.noalias() = wm.transpose() * gm;
    Tensor gin(layer.in_channels * hw, 0.0);
    col2im(layer, dcol, h, w, gin.data());
    g = std::move(gin);
  }
  return g;
}

Runner::Runner(
    const CascadeModel &model,
    const KSpaceGrid &y_u,
    const SamplingMask &mask,
    const CoilSensitivities *maps,
    const SpiritKernel *kernel)
    : model_(model), y_u_(y_u), mask_(mask), maps_(maps), h_(y_u.height()), w_(y_u.width()), coils_(y_u.coils())
{
  if (mask.height != h_ || mask.width != w_) {
    throw std::invalid_argument("cascade: mask and k-space shapes differ");
  }
  if (model.mode == CascadeMode::single_coil) {
    if (coils_ != 1) {
      throw std::invalid_argument("cascade: single-coil model given multi-coil data");
    }
    return;
  }
  kernel_ = kernel ? kernel : (model.cc_kernel ? &*model.cc_kernel : nullptr);
  if (!kernel_) {
    throw std::invalid_argument("cascade: multi-coil model has no calibration kernel");
  }
  if (!maps) {
    throw std::invalid_argument("cascade: multi-coil model requires coil maps");
  }
  if (maps->coils() != coils_ || maps->height() != h_ || maps->width() != w_) {
    throw std::invalid_argument("cascade: coil maps do not match the k-space shape");
  }
  if (kernel_->coils != coils_) {
    throw std::invalid_argument("cascade: kernel coil count does not match the data");
  }
}

void Runner::fft_planes(std::vector<cplx> &data, std::size_t coils, bool inverse) const
{
  const std::size_t n = h_ * w_;
  for (std::size_t c = 0; c < coils; ++c) {
    std::span<cplx> plane(data.data() + c * n, n);
    if (inverse) {
      ifft2c_inplace(plane, h_, w_);
    } else {
      fft2c_inplace(plane, h_, w_);
    }
  }
}

void Runner::dc(std::vector<cplx> &k, std::size_t coils) const
{
  const std::size_t n = h_ * w_;
  const double lambda = model_.lambda_dc;
  const bool hard = std::isinf(lambda);
  for (std::size_t c = 0; c < coils; ++c) {
    const auto acq = y_u_.coil(c);
    for (std::size_t i = 0; i < n; ++i) {
      if (mask_.acquired(i)) {
        cplx &v = k[c * n + i];
        v = hard ? acq[i] : (v + lambda * acq[i]) / (1.0 + lambda);
      }
    }
  }
}

void Runner::lambda_diag(std::vector<cplx> &k, std::size_t coils) const
{
  const std::size_t n = h_ * w_;
  const double on = dc_lambda_diag(true, model_.lambda_dc);
  for (std::size_t c = 0; c < coils; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      if (mask_.acquired(i)) {
        k[c * n + i] *= on;
      }
    }
  }
}

std::vector<cplx> Runner::lift(const std::vector<cplx> &img) const
{
  const std::size_t n = h_ * w_;
  std::vector<cplx> out(coils_ * n);
  for (std::size_t c = 0; c < coils_; ++c) {
    const auto s = maps_->maps.coil(c);
    for (std::size_t i = 0; i < n; ++i) {
      out[c * n + i] = s[i] * img[i];
    }
  }
  return out;
}

std::vector<cplx> Runner::combine(const std::vector<cplx> &coils) const
{
  const std::size_t n = h_ * w_;
  std::vector<cplx> out(n);
  for (std::size_t c = 0; c < coils_; ++c) {
    const auto s = maps_->maps.coil(c);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] += std::conj(s[i]) * coils[c * n + i];
    }
  }
  return out;
}

State Runner::initial() const
{
  State k(y_u_.data().begin(), y_u_.data().end());
  const std::size_t n = h_ * w_;
  for (std::size_t c = 0; c < coils_; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask_.acquired(i)) {
        k[c * n + i] = cplx{};
      }
    }
  }
  if (model_.mode == CascadeMode::single_coil) {
    fft_planes(k, 1, true);
  }
  return k;
}

State Runner::step(std::size_t p, const State &in, StageTrace *trace) const
{
  const Subnetwork &net = model_.subnets.at(p);
  const std::size_t n = h_ * w_;
  if (model_.mode == CascadeMode::single_coil) {
    std::vector<cplx> unit(n);
    std::vector<double> radius(n);
    for (std::size_t i = 0; i < n; ++i) {
      radius[i] = std::abs(in[i]);
      unit[i] = radius[i] > 0.0 ? in[i] / radius[i] : cplx{1.0, 0.0};
    }
    const ComplexImage x(h_, w_, in);
    Tensor m = net_forward(net, to_channels(x), h_, w_, trace ? &trace->net : nullptr);
    State c(n);
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = m[i] * unit[i];
    }
    fft_planes(c, 1, false);
    dc(c, 1);
    fft_planes(c, 1, true);
    if (trace) {
      trace->unit = std::move(unit);
      trace->radius = std::move(radius);
      trace->net_out = std::move(m);
    }
    return c;
  }

  // CC then DC in k-space, then the subnetwork correction on the combined
  // image, lifted back to the coils, then DC again.
  State xm = apply_G(KSpaceGrid(coils_, h_, w_, in), *kernel_).release();
  dc(xm, coils_);
  fft_planes(xm, coils_, true);
  const ComplexImage comb(h_, w_, combine(xm));
  Tensor r = net_forward(net, to_channels(comb), h_, w_, trace ? &trace->net : nullptr);
  std::vector<cplx> rc(n);
  for (std::size_t i = 0; i < n; ++i) {
    rc[i] = cplx{r[i], r[n + i]};
  }
  const auto lifted = lift(rc);
  for (std::size_t i = 0; i < xm.size(); ++i) {
    xm[i] += lifted[i];
  }
  fft_planes(xm, coils_, false);
  dc(xm, coils_);
  if (trace) {
    trace->net_out = std::move(r);
  }
  return xm;
}

ComplexImage Runner::stage_estimate(const State &in, std::size_t p, StageTrace &trace) const
{
  const std::size_t n = h_ * w_;
  step(p, in, &trace);
  if (model_.mode == CascadeMode::single_coil) {
    std::vector<cplx> m(n);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = trace.net_out[i];
    }
    return ComplexImage(h_, w_, std::move(m));
  }
  const Tensor &x = trace.net.acts.front();
  std::vector<cplx> est(n);
  for (std::size_t i = 0; i < n; ++i) {
    est[i] = cplx{x[i] + trace.net_out[i], x[n + i] + trace.net_out[n + i]};
  }
  return ComplexImage(h_, w_, std::move(est));
}

ComplexImage Runner::output(const State &s) const
{
  if (model_.mode == CascadeMode::single_coil) {
    return ComplexImage(h_, w_, s);
  }
  State x = s;
  fft_planes(x, coils_, true);
  return ComplexImage(h_, w_, combine(x));
}

CascadeOutput Runner::finish(State s) const
{
  if (model_.mode == CascadeMode::single_coil) {
    State k = s;
    fft_planes(k, 1, false);
    return {ComplexImage(h_, w_, std::move(s)), KSpaceGrid(1, h_, w_, std::move(k))};
  }
  ComplexImage img = output(s);
  return {std::move(img), KSpaceGrid(coils_, h_, w_, std::move(s))};
}

State Runner::output_adjoint(const ComplexImage &g) const
{
  if (model_.mode == CascadeMode::single_coil) {
    return State(g.data().begin(), g.data().end());
  }
  State k = lift(State(g.data().begin(), g.data().end()));
  fft_planes(k, coils_, false);
  return k;
}

State Runner::backward_stage(std::size_t p, const StageTrace &trace, State g_out, NetGrad &grad, bool need_input) const
{
  const Subnetwork &net = model_.subnets.at(p);
  const std::size_t n = h_ * w_;
  if (model_.mode == CascadeMode::single_coil) {
    State gc = std::move(g_out);
    fft_planes(gc, 1, false);
    lambda_diag(gc, 1);
    fft_planes(gc, 1, true);
    Tensor gm(n);
    for (std::size_t i = 0; i < n; ++i) {
      gm[i] = (std::conj(trace.unit[i]) * gc[i]).real();
    }
    Tensor gch = net_backward(net, trace.net, h_, w_, std::move(gm), grad, need_input);
    if (!need_input) {
      return {};
    }
    State gin(n);
    for (std::size_t i = 0; i < n; ++i) {
      gin[i] = cplx{gch[i], gch[n + i]};
      if (trace.radius[i] > 0.0) {
        const cplx u = trace.unit[i];
        const double radial = (std::conj(u) * gc[i]).real();
        gin[i] += (trace.net_out[i] / trace.radius[i]) * (gc[i] - radial * u);
      }
    }
    return gin;
  }

  State gx = std::move(g_out);
  lambda_diag(gx, coils_);
  fft_planes(gx, coils_, true);
  const auto gr = combine(gx);
  Tensor gch(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    gch[i] = gr[i].real();
    gch[n + i] = gr[i].imag();
  }
  Tensor gcomb = net_backward(net, trace.net, h_, w_, std::move(gch), grad, need_input);
  if (!need_input) {
    return {};
  }
  std::vector<cplx> gc(n);
  for (std::size_t i = 0; i < n; ++i) {
    gc[i] = cplx{gcomb[i], gcomb[n + i]};
  }
  const auto lifted = lift(gc);
  for (std::size_t i = 0; i < gx.size(); ++i) {
    gx[i] += lifted[i];
  }
  fft_planes(gx, coils_, false);
  lambda_diag(gx, coils_);
  return apply_G_adjoint(KSpaceGrid(coils_, h_, w_, std::move(gx)), *kernel_).release();
}

void Runner::backward_estimate(std::size_t p, const StageTrace &trace, const ComplexImage &g, NetGrad &grad) const
{
  const std::size_t n = h_ * w_;
  Tensor gt(model_.mode == CascadeMode::single_coil ? n : 2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    gt[i] = g[i].real();
    if (model_.mode == CascadeMode::multi_coil) {
      gt[n + i] = g[i].imag();
    }
  }
  net_backward(model_.subnets.at(p), trace.net, h_, w_, std::move(gt), grad, false);
}

} // namespace mrxfer::engine
