#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mstcn/rng.hpp"
#include "mstcn/tensor.hpp"

namespace mstcn {

enum class Mode { train, eval };

template <class Real>
struct NamedTensor {
  std::string name;
  Tensor<Real> tensor;
  bool decay = true;  // weight decay applies; off for biases and norm params
};

template <class Real>
using ParamList = std::vector<NamedTensor<Real>>;

// Kaiming-uniform fan-in init, gain sqrt(2).
template <class Real>
Tensor<Real> kaiming_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return Tensor<Real>::rand_uniform(std::move(shape), rng,
                                    static_cast<Real>(-bound),
                                    static_cast<Real>(bound));
}

namespace ops {

// ---------------------------------------------------------------------------
// conv1d, dilated, length-preserving
// ---------------------------------------------------------------------------

// x: B x Cin x T, w: Cout x Cin x k, b: Cout. Non-causal pads (k-1)*d/2 on
// both sides (odd k required); causal pads (k-1)*d on the left only. Output
// length is always T.
template <class Real>
Tensor<Real> conv1d(const Tensor<Real>& x, const Tensor<Real>& w,
                    const Tensor<Real>& b, std::int64_t dilation, bool causal,
                    Tape<Real>* tape = nullptr) {
  if (x.rank() != 3 || w.rank() != 3)
    throw std::invalid_argument("conv1d expects x rank 3 and w rank 3");
  const std::int64_t B = x.dim(0), Cin = x.dim(1), T = x.dim(2);
  const std::int64_t Cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != Cin)
    throw std::invalid_argument("conv1d channel mismatch: x has " +
                                std::to_string(Cin) + ", w expects " +
                                std::to_string(w.dim(1)));
  if (!causal && k % 2 == 0)
    throw std::invalid_argument("conv1d non-causal mode requires odd kernel, got " +
                                std::to_string(k));
  if (b.size() != Cout)
    throw std::invalid_argument("conv1d bias size mismatch");
  const std::int64_t pad = causal ? (k - 1) * dilation : (k - 1) * dilation / 2;

  Tensor<Real> y(Shape{B, Cout, T});
  {
    auto& yd = y.data();
    const auto& xd = x.data();
    const auto& wd = w.data();
    const auto& bd = b.data();
    for (std::int64_t bi = 0; bi < B; ++bi)
      for (std::int64_t co = 0; co < Cout; ++co) {
        Real* yrow = yd.data() + (bi * Cout + co) * T;
        const Real bias = bd[co];
        for (std::int64_t t = 0; t < T; ++t) yrow[t] = bias;
        for (std::int64_t ci = 0; ci < Cin; ++ci) {
          const Real* xrow = xd.data() + (bi * Cin + ci) * T;
          const Real* wrow = wd.data() + (co * Cin + ci) * k;
          for (std::int64_t j = 0; j < k; ++j) {
            const std::int64_t shift = j * dilation - pad;
            const Real wv = wrow[j];
            const std::int64_t t0 = std::max<std::int64_t>(0, -shift);
            const std::int64_t t1 = std::min<std::int64_t>(T, T - shift);
            for (std::int64_t t = t0; t < t1; ++t)
              yrow[t] += wv * xrow[t + shift];
          }
        }
      }
  }

  if (tape != nullptr &&
      (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
    Tensor<Real> xc = x, wc = w, bc = b, yc = y;
    tape->record({x, w, b}, y,
                 [xc, wc, bc, yc, B, Cin, Cout, T, k, dilation, pad]() mutable {
      if (!yc.has_grad()) return;
      const auto& gy = yc.grad();
      const auto& xd = xc.data();
      const auto& wd = wc.data();
      auto& gx = xc.grad_buffer();
      auto& gw = wc.grad_buffer();
      auto& gb = bc.grad_buffer();
      for (std::int64_t bi = 0; bi < B; ++bi)
        for (std::int64_t co = 0; co < Cout; ++co) {
          const Real* gyrow = gy.data() + (bi * Cout + co) * T;
          Real acc = 0;
          for (std::int64_t t = 0; t < T; ++t) acc += gyrow[t];
          gb[co] += acc;
          for (std::int64_t ci = 0; ci < Cin; ++ci) {
            const Real* xrow = xd.data() + (bi * Cin + ci) * T;
            Real* gxrow = gx.data() + (bi * Cin + ci) * T;
            const Real* wrow = wd.data() + (co * Cin + ci) * k;
            Real* gwrow = gw.data() + (co * Cin + ci) * k;
            for (std::int64_t j = 0; j < k; ++j) {
              const std::int64_t shift = j * dilation - pad;
              const std::int64_t t0 = std::max<std::int64_t>(0, -shift);
              const std::int64_t t1 = std::min<std::int64_t>(T, T - shift);
              const Real wv = wrow[j];
              Real wacc = 0;
              for (std::int64_t t = t0; t < t1; ++t) {
                gxrow[t + shift] += wv * gyrow[t];
                wacc += gyrow[t] * xrow[t + shift];
              }
              gwrow[j] += wacc;
            }
          }
        }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// conv2d (stride + symmetric zero padding)
// ---------------------------------------------------------------------------

inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k,
                                    std::int64_t stride, std::int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

template <class Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& w,
                    const Tensor<Real>& b, std::int64_t stride,
                    std::int64_t pad, Tape<Real>* tape = nullptr) {
  if (x.rank() != 4 || w.rank() != 4)
    throw std::invalid_argument("conv2d expects x rank 4 and w rank 4");
  const std::int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != Cin) throw std::invalid_argument("conv2d channel mismatch");
  const std::int64_t OH = conv_out_extent(H, kh, stride, pad);
  const std::int64_t OW = conv_out_extent(W, kw, stride, pad);
  if (OH <= 0 || OW <= 0)
    throw std::invalid_argument("conv2d output collapses to zero extent");

  Tensor<Real> y(Shape{B, Cout, OH, OW});
  {
    auto& yd = y.data();
    const auto& xd = x.data();
    const auto& wd = w.data();
    const auto& bd = b.data();
    for (std::int64_t bi = 0; bi < B; ++bi)
      for (std::int64_t co = 0; co < Cout; ++co) {
        Real* yplane = yd.data() + (bi * Cout + co) * OH * OW;
        const Real bias = bd[co];
        for (std::int64_t i = 0; i < OH * OW; ++i) yplane[i] = bias;
        for (std::int64_t ci = 0; ci < Cin; ++ci) {
          const Real* xplane = xd.data() + (bi * Cin + ci) * H * W;
          const Real* wk = wd.data() + (co * Cin + ci) * kh * kw;
          for (std::int64_t jh = 0; jh < kh; ++jh)
            for (std::int64_t jw = 0; jw < kw; ++jw) {
              const Real wv = wk[jh * kw + jw];
              for (std::int64_t oh = 0; oh < OH; ++oh) {
                const std::int64_t ih = oh * stride - pad + jh;
                if (ih < 0 || ih >= H) continue;
                Real* yrow = yplane + oh * OW;
                const Real* xrow = xplane + ih * W;
                for (std::int64_t ow = 0; ow < OW; ++ow) {
                  const std::int64_t iw = ow * stride - pad + jw;
                  if (iw < 0 || iw >= W) continue;
                  yrow[ow] += wv * xrow[iw];
                }
              }
            }
        }
      }
  }

  if (tape != nullptr &&
      (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
    Tensor<Real> xc = x, wc = w, bc = b, yc = y;
    tape->record({x, w, b}, y, [xc, wc, bc, yc, B, Cin, Cout, H, W, OH, OW, kh,
                                kw, stride, pad]() mutable {
      if (!yc.has_grad()) return;
      const auto& gy = yc.grad();
      const auto& xd = xc.data();
      const auto& wd = wc.data();
      auto& gx = xc.grad_buffer();
      auto& gw = wc.grad_buffer();
      auto& gb = bc.grad_buffer();
      for (std::int64_t bi = 0; bi < B; ++bi)
        for (std::int64_t co = 0; co < Cout; ++co) {
          const Real* gyplane = gy.data() + (bi * Cout + co) * OH * OW;
          Real acc = 0;
          for (std::int64_t i = 0; i < OH * OW; ++i) acc += gyplane[i];
          gb[co] += acc;
          for (std::int64_t ci = 0; ci < Cin; ++ci) {
            const Real* xplane = xd.data() + (bi * Cin + ci) * H * W;
            Real* gxplane = gx.data() + (bi * Cin + ci) * H * W;
            const Real* wk = wd.data() + (co * Cin + ci) * kh * kw;
            Real* gwk = gw.data() + (co * Cin + ci) * kh * kw;
            for (std::int64_t jh = 0; jh < kh; ++jh)
              for (std::int64_t jw = 0; jw < kw; ++jw) {
                const Real wv = wk[jh * kw + jw];
                Real wacc = 0;
                for (std::int64_t oh = 0; oh < OH; ++oh) {
                  const std::int64_t ih = oh * stride - pad + jh;
                  if (ih < 0 || ih >= H) continue;
                  const Real* gyrow = gyplane + oh * OW;
                  const Real* xrow = xplane + ih * W;
                  Real* gxrow = gxplane + ih * W;
                  for (std::int64_t ow = 0; ow < OW; ++ow) {
                    const std::int64_t iw = ow * stride - pad + jw;
                    if (iw < 0 || iw >= W) continue;
                    gxrow[iw] += wv * gyrow[ow];
                    wacc += gyrow[ow] * xrow[iw];
                  }
                }
                gwk[jh * kw + jw] += wacc;
              }
          }
        }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// conv3d with temporal stride 1 (the stem); spatial stride/padding free
// ---------------------------------------------------------------------------

// x: B x Cin x T x H x W, w: Cout x Cin x kt x kh x kw. Temporal padding
// (kt-1)/2 keeps T fixed.
template <class Real>
Tensor<Real> conv3d(const Tensor<Real>& x, const Tensor<Real>& w,
                    const Tensor<Real>& b, std::int64_t spatial_stride,
                    std::int64_t spatial_pad, Tape<Real>* tape = nullptr) {
  if (x.rank() != 5 || w.rank() != 5)
    throw std::invalid_argument("conv3d expects x rank 5 and w rank 5");
  const std::int64_t B = x.dim(0), Cin = x.dim(1), T = x.dim(2), H = x.dim(3),
                     W = x.dim(4);
  const std::int64_t Cout = w.dim(0), kt = w.dim(2), kh = w.dim(3),
                     kw = w.dim(4);
  if (w.dim(1) != Cin) throw std::invalid_argument("conv3d channel mismatch");
  if (kt % 2 == 0)
    throw std::invalid_argument("conv3d requires odd temporal kernel");
  const std::int64_t pt = (kt - 1) / 2;
  const std::int64_t OH = conv_out_extent(H, kh, spatial_stride, spatial_pad);
  const std::int64_t OW = conv_out_extent(W, kw, spatial_stride, spatial_pad);
  if (OH <= 0 || OW <= 0)
    throw std::invalid_argument("conv3d output collapses to zero extent");

  Tensor<Real> y(Shape{B, Cout, T, OH, OW});
  {
    auto& yd = y.data();
    const auto& xd = x.data();
    const auto& wd = w.data();
    const auto& bd = b.data();
    for (std::int64_t bi = 0; bi < B; ++bi)
      for (std::int64_t co = 0; co < Cout; ++co) {
        Real* yvol = yd.data() + (bi * Cout + co) * T * OH * OW;
        const Real bias = bd[co];
        for (std::int64_t i = 0; i < T * OH * OW; ++i) yvol[i] = bias;
        for (std::int64_t ci = 0; ci < Cin; ++ci) {
          const Real* xvol = xd.data() + (bi * Cin + ci) * T * H * W;
          const Real* wvol = wd.data() + (co * Cin + ci) * kt * kh * kw;
          for (std::int64_t jt = 0; jt < kt; ++jt)
            for (std::int64_t jh = 0; jh < kh; ++jh)
              for (std::int64_t jw = 0; jw < kw; ++jw) {
                const Real wv = wvol[(jt * kh + jh) * kw + jw];
                for (std::int64_t t = 0; t < T; ++t) {
                  const std::int64_t it = t - pt + jt;
                  if (it < 0 || it >= T) continue;
                  for (std::int64_t oh = 0; oh < OH; ++oh) {
                    const std::int64_t ih = oh * spatial_stride - spatial_pad + jh;
                    if (ih < 0 || ih >= H) continue;
                    Real* yrow = yvol + (t * OH + oh) * OW;
                    const Real* xrow = xvol + (it * H + ih) * W;
                    for (std::int64_t ow = 0; ow < OW; ++ow) {
                      const std::int64_t iw =
                          ow * spatial_stride - spatial_pad + jw;
                      if (iw < 0 || iw >= W) continue;
                      yrow[ow] += wv * xrow[iw];
                    }
                  }
                }
              }
        }
      }
  }

  if (tape != nullptr &&
      (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
    Tensor<Real> xc = x, wc = w, bc = b, yc = y;
    tape->record({x, w, b}, y, [xc, wc, bc, yc, B, Cin, Cout, T, H, W, OH, OW,
                                kt, kh, kw, pt, spatial_stride,
                                spatial_pad]() mutable {
      if (!yc.has_grad()) return;
      const auto& gy = yc.grad();
      const auto& xd = xc.data();
      const auto& wd = wc.data();
      auto& gx = xc.grad_buffer();
      auto& gw = wc.grad_buffer();
      auto& gb = bc.grad_buffer();
      for (std::int64_t bi = 0; bi < B; ++bi)
        for (std::int64_t co = 0; co < Cout; ++co) {
          const Real* gyvol = gy.data() + (bi * Cout + co) * T * OH * OW;
          Real acc = 0;
          for (std::int64_t i = 0; i < T * OH * OW; ++i) acc += gyvol[i];
          gb[co] += acc;
          for (std::int64_t ci = 0; ci < Cin; ++ci) {
            const Real* xvol = xd.data() + (bi * Cin + ci) * T * H * W;
            Real* gxvol = gx.data() + (bi * Cin + ci) * T * H * W;
            const Real* wvol = wd.data() + (co * Cin + ci) * kt * kh * kw;
            Real* gwvol = gw.data() + (co * Cin + ci) * kt * kh * kw;
            for (std::int64_t jt = 0; jt < kt; ++jt)
              for (std::int64_t jh = 0; jh < kh; ++jh)
                for (std::int64_t jw = 0; jw < kw; ++jw) {
                  const Real wv = wvol[(jt * kh + jh) * kw + jw];
                  Real wacc = 0;
                  for (std::int64_t t = 0; t < T; ++t) {
                    const std::int64_t it = t - pt + jt;
                    if (it < 0 || it >= T) continue;
                    for (std::int64_t oh = 0; oh < OH; ++oh) {
                      const std::int64_t ih =
                          oh * spatial_stride - spatial_pad + jh;
                      if (ih < 0 || ih >= H) continue;
                      const Real* gyrow = gyvol + (t * OH + oh) * OW;
                      const Real* xrow = xvol + (it * H + ih) * W;
                      Real* gxrow = gxvol + (it * H + ih) * W;
                      for (std::int64_t ow = 0; ow < OW; ++ow) {
                        const std::int64_t iw =
                            ow * spatial_stride - spatial_pad + jw;
                        if (iw < 0 || iw >= W) continue;
                        gxrow[iw] += wv * gyrow[ow];
                        wacc += gyrow[ow] * xrow[iw];
                      }
                    }
                  }
                  gwvol[(jt * kh + jh) * kw + jw] += wacc;
                }
          }
        }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// max pooling (2D)
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> maxpool2d(const Tensor<Real>& x, std::int64_t k,
                       std::int64_t stride, std::int64_t pad,
                       Tape<Real>* tape = nullptr) {
  if (x.rank() != 4) throw std::invalid_argument("maxpool2d expects rank 4");
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t OH = conv_out_extent(H, k, stride, pad);
  const std::int64_t OW = conv_out_extent(W, k, stride, pad);
  if (OH <= 0 || OW <= 0)
    throw std::invalid_argument("maxpool2d output collapses to zero extent");

  Tensor<Real> y(Shape{B, C, OH, OW});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(y.size(), -1);
  {
    auto& yd = y.data();
    const auto& xd = x.data();
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
      const Real* xplane = xd.data() + bc * H * W;
      Real* yplane = yd.data() + bc * OH * OW;
      std::int64_t* aplane = argmax->data() + bc * OH * OW;
      for (std::int64_t oh = 0; oh < OH; ++oh)
        for (std::int64_t ow = 0; ow < OW; ++ow) {
          Real best = std::numeric_limits<Real>::lowest();
          std::int64_t bestidx = -1;
          for (std::int64_t jh = 0; jh < k; ++jh) {
            const std::int64_t ih = oh * stride - pad + jh;
            if (ih < 0 || ih >= H) continue;
            for (std::int64_t jw = 0; jw < k; ++jw) {
              const std::int64_t iw = ow * stride - pad + jw;
              if (iw < 0 || iw >= W) continue;
              const Real v = xplane[ih * W + iw];
              if (v > best) {
                best = v;
                bestidx = ih * W + iw;
              }
            }
          }
          yplane[oh * OW + ow] = best;
          aplane[oh * OW + ow] = bc * H * W + bestidx;
        }
    }
  }

  if (tracked(tape, x)) {
    Tensor<Real> xc = x, yc = y;
    tape->record({x}, y, [xc, yc, argmax]() mutable {
      if (!yc.has_grad()) return;
      const auto& g = yc.grad();
      auto& gx = xc.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// batchnorm (channel axis 1, statistics over all other axes)
// ---------------------------------------------------------------------------

template <class Real>
struct BatchNormState {
  std::vector<Real> running_mean;
  std::vector<Real> running_var;
  std::int64_t batches_tracked = 0;
};

template <class Real>
Tensor<Real> batchnorm(const Tensor<Real>& x, const Tensor<Real>& gamma,
                       const Tensor<Real>& beta, BatchNormState<Real>& state,
                       Mode mode, Real momentum = Real(0.1),
                       Real eps = Real(1e-5), Tape<Real>* tape = nullptr) {
  if (x.rank() < 2) throw std::invalid_argument("batchnorm expects rank >= 2");
  const std::int64_t C = x.dim(1);
  if (gamma.size() != C || beta.size() != C)
    throw std::invalid_argument("batchnorm parameter size mismatch");
  const std::int64_t outer = x.dim(0);
  std::int64_t inner = 1;
  for (std::size_t d = 2; d < x.rank(); ++d) inner *= x.dim(d);
  const std::int64_t m = outer * inner;  // samples per channel

  if (state.running_mean.empty()) {
    state.running_mean.assign(C, Real(0));
    state.running_var.assign(C, Real(1));
  }

  std::vector<Real> mu(C, Real(0)), var(C, Real(0));
  if (mode == Mode::train) {
    const auto& xd = x.data();
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t c = 0; c < C; ++c) {
        const Real* row = xd.data() + (o * C + c) * inner;
        Real acc = 0;
        for (std::int64_t i = 0; i < inner; ++i) acc += row[i];
        mu[c] += acc;
      }
    for (std::int64_t c = 0; c < C; ++c) mu[c] /= static_cast<Real>(m);
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t c = 0; c < C; ++c) {
        const Real* row = xd.data() + (o * C + c) * inner;
        Real acc = 0;
        for (std::int64_t i = 0; i < inner; ++i) {
          const Real d = row[i] - mu[c];
          acc += d * d;
        }
        var[c] += acc;
      }
    for (std::int64_t c = 0; c < C; ++c) var[c] /= static_cast<Real>(m);
    for (std::int64_t c = 0; c < C; ++c) {
      state.running_mean[c] =
          (Real(1) - momentum) * state.running_mean[c] + momentum * mu[c];
      state.running_var[c] =
          (Real(1) - momentum) * state.running_var[c] + momentum * var[c];
    }
    state.batches_tracked++;
  } else {
    if (state.batches_tracked == 0)
      throw std::runtime_error("batchnorm eval mode before any training batch");
    mu = state.running_mean;
    var = state.running_var;
  }

  Tensor<Real> y(x.shape());
  std::vector<Real> inv_std(C);
  for (std::int64_t c = 0; c < C; ++c)
    inv_std[c] = Real(1) / std::sqrt(var[c] + eps);
  {
    auto& yd = y.data();
    const auto& xd = x.data();
    const auto& gd = gamma.data();
    const auto& bd = beta.data();
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t c = 0; c < C; ++c) {
        const Real* xrow = xd.data() + (o * C + c) * inner;
        Real* yrow = yd.data() + (o * C + c) * inner;
        const Real a = gd[c] * inv_std[c];
        const Real b2 = bd[c] - a * mu[c];
        for (std::int64_t i = 0; i < inner; ++i) yrow[i] = a * xrow[i] + b2;
      }
  }

  if (tape != nullptr && (x.requires_grad() || gamma.requires_grad() ||
                          beta.requires_grad())) {
    Tensor<Real> xc = x, gc = gamma, bc = beta, yc = y;
    const bool train = mode == Mode::train;
    tape->record({x, gamma, beta}, y,
                 [xc, gc, bc, yc, mu, inv_std, outer, C, inner, m,
                  train]() mutable {
      if (!yc.has_grad()) return;
      const auto& gy = yc.grad();
      const auto& xd = xc.data();
      const auto& gd = gc.data();
      auto& gx = xc.grad_buffer();
      auto& gg = gc.grad_buffer();
      auto& gb = bc.grad_buffer();
      // per channel: sums of dy and dy*xhat
      std::vector<Real> sum_dy(C, Real(0)), sum_dy_xhat(C, Real(0));
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t c = 0; c < C; ++c) {
          const Real* xrow = xd.data() + (o * C + c) * inner;
          const Real* grow = gy.data() + (o * C + c) * inner;
          Real s1 = 0, s2 = 0;
          for (std::int64_t i = 0; i < inner; ++i) {
            s1 += grow[i];
            s2 += grow[i] * (xrow[i] - mu[c]) * inv_std[c];
          }
          sum_dy[c] += s1;
          sum_dy_xhat[c] += s2;
        }
      for (std::int64_t c = 0; c < C; ++c) {
        gb[c] += sum_dy[c];
        gg[c] += sum_dy_xhat[c];
      }
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t c = 0; c < C; ++c) {
          const Real* xrow = xd.data() + (o * C + c) * inner;
          const Real* grow = gy.data() + (o * C + c) * inner;
          Real* gxrow = gx.data() + (o * C + c) * inner;
          const Real a = gd[c] * inv_std[c];
          if (train) {
            const Real mean_dy = sum_dy[c] / static_cast<Real>(m);
            const Real mean_dy_xhat = sum_dy_xhat[c] / static_cast<Real>(m);
            for (std::int64_t i = 0; i < inner; ++i) {
              const Real xhat = (xrow[i] - mu[c]) * inv_std[c];
              gxrow[i] += a * (grow[i] - mean_dy - xhat * mean_dy_xhat);
            }
          } else {
            for (std::int64_t i = 0; i < inner; ++i) gxrow[i] += a * grow[i];
          }
        }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// dropout (inverted scaling at train time)
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> dropout(const Tensor<Real>& x, Real rate, Mode mode, Rng& rng,
                     Tape<Real>* tape = nullptr) {
  if (rate < Real(0) || rate >= Real(1))
    throw std::invalid_argument("dropout rate must be in [0,1)");
  if (mode == Mode::eval || rate == Real(0)) return x;
  const Real keep = Real(1) - rate;
  auto mask = std::make_shared<std::vector<Real>>(x.size());
  for (auto& v : *mask)
    v = rng.uniform() < static_cast<double>(keep) ? Real(1) / keep : Real(0);
  Tensor<Real> y(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) y.at(i) = x.at(i) * (*mask)[i];
  if (tracked(tape, x)) {
    Tensor<Real> xc = x, yc = y;
    tape->record({x}, y, [xc, yc, mask]() mutable {
      if (!yc.has_grad()) return;
      const auto& g = yc.grad();
      auto& gx = xc.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * (*mask)[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// cross entropy (mean over batch, stable log-sum-exp)
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits,
                           const std::vector<std::int64_t>& labels,
                           Tape<Real>* tape = nullptr) {
  if (logits.rank() != 2)
    throw std::invalid_argument("cross_entropy expects B x K logits");
  const std::int64_t B = logits.dim(0), K = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != B)
    throw std::invalid_argument("cross_entropy label count mismatch");
  for (auto l : labels)
    if (l < 0 || l >= K)
      throw std::invalid_argument("cross_entropy label " + std::to_string(l) +
                                  " out of range [0," + std::to_string(K) + ")");

  auto softmax = std::make_shared<std::vector<Real>>(logits.size());
  Real loss_acc = 0;
  const auto& ld = logits.data();
  for (std::int64_t b = 0; b < B; ++b) {
    const Real* row = ld.data() + b * K;
    Real mx = row[0];
    for (std::int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    Real z = 0;
    for (std::int64_t k = 0; k < K; ++k) z += std::exp(row[k] - mx);
    const Real logz = std::log(z) + mx;
    for (std::int64_t k = 0; k < K; ++k)
      (*softmax)[b * K + k] = std::exp(row[k] - logz);
    loss_acc += logz - row[labels[b]];
  }
  Tensor<Real> loss = Tensor<Real>::scalar(loss_acc / static_cast<Real>(B));

  if (tracked(tape, logits)) {
    Tensor<Real> lc = logits, oc = loss;
    std::vector<std::int64_t> lab = labels;
    tape->record({logits}, loss, [lc, oc, softmax, lab, B, K]() mutable {
      if (!oc.has_grad()) return;
      const Real g = oc.grad()[0];
      auto& gl = lc.grad_buffer();
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t k = 0; k < K; ++k) {
          Real v = (*softmax)[b * K + k];
          if (k == lab[b]) v -= Real(1);
          gl[b * K + k] += g * v / static_cast<Real>(B);
        }
    });
  }
  return loss;
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Layer wrappers holding parameters
// ---------------------------------------------------------------------------

template <class Real>
struct Conv1dLayer {
  Tensor<Real> weight, bias;
  std::int64_t dilation = 1;
  bool causal = false;

  Conv1dLayer() = default;
  Conv1dLayer(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k,
              std::int64_t dil, bool causal_mode, Rng& rng)
      : weight(kaiming_uniform<Real>({out_ch, in_ch, k}, in_ch * k, rng)),
        bias(Shape{out_ch}),
        dilation(dil),
        causal(causal_mode) {
    weight.set_requires_grad(true);
    bias.set_requires_grad(true);
  }

  Tensor<Real> forward(const Tensor<Real>& x, Tape<Real>* tape) const {
    return ops::conv1d(x, weight, bias, dilation, causal, tape);
  }

  void collect(const std::string& prefix, ParamList<Real>& out) {
    out.push_back({prefix + ".weight", weight, true});
    out.push_back({prefix + ".bias", bias, false});
  }
};

template <class Real>
struct Conv2dLayer {
  Tensor<Real> weight, bias;
  std::int64_t stride = 1, pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k,
              std::int64_t stride_, std::int64_t pad_, Rng& rng)
      : weight(kaiming_uniform<Real>({out_ch, in_ch, k, k}, in_ch * k * k, rng)),
        bias(Shape{out_ch}),
        stride(stride_),
        pad(pad_) {
    weight.set_requires_grad(true);
    bias.set_requires_grad(true);
  }

  Tensor<Real> forward(const Tensor<Real>& x, Tape<Real>* tape) const {
    return ops::conv2d(x, weight, bias, stride, pad, tape);
  }

  void collect(const std::string& prefix, ParamList<Real>& out) {
    out.push_back({prefix + ".weight", weight, true});
    out.push_back({prefix + ".bias", bias, false});
  }
};

template <class Real>
struct Conv3dLayer {
  Tensor<Real> weight, bias;
  std::int64_t spatial_stride = 1, spatial_pad = 0;

  Conv3dLayer() = default;
  Conv3dLayer(std::int64_t in_ch, std::int64_t out_ch, std::int64_t kt,
              std::int64_t ks, std::int64_t stride_, std::int64_t pad_,
              Rng& rng)
      : weight(kaiming_uniform<Real>({out_ch, in_ch, kt, ks, ks},
                                     in_ch * kt * ks * ks, rng)),
        bias(Shape{out_ch}),
        spatial_stride(stride_),
        spatial_pad(pad_) {
    weight.set_requires_grad(true);
    bias.set_requires_grad(true);
  }

  Tensor<Real> forward(const Tensor<Real>& x, Tape<Real>* tape) const {
    return ops::conv3d(x, weight, bias, spatial_stride, spatial_pad, tape);
  }

  void collect(const std::string& prefix, ParamList<Real>& out) {
    out.push_back({prefix + ".weight", weight, true});
    out.push_back({prefix + ".bias", bias, false});
  }
};

template <class Real>
struct BatchNormLayer {
  Tensor<Real> gamma, beta;
  ops::BatchNormState<Real> state;
  Real momentum = Real(0.1);
  Real eps = Real(1e-5);

  BatchNormLayer() = default;
  explicit BatchNormLayer(std::int64_t channels)
      : gamma(Tensor<Real>::full({channels}, Real(1))),
        beta(Shape{channels}) {
    gamma.set_requires_grad(true);
    beta.set_requires_grad(true);
  }

  Tensor<Real> forward(const Tensor<Real>& x, Mode mode, Tape<Real>* tape) {
    return ops::batchnorm(x, gamma, beta, state, mode, momentum, eps, tape);
  }

  void collect(const std::string& prefix, ParamList<Real>& out) {
    out.push_back({prefix + ".gamma", gamma, false});
    out.push_back({prefix + ".beta", beta, false});
  }

  // Running statistics live outside the parameter list but must persist in
  // checkpoints; exposed as plain named buffers.
  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, std::vector<Real>*>>& out) {
    out.push_back({prefix + ".running_mean", &state.running_mean});
    out.push_back({prefix + ".running_var", &state.running_var});
  }
};

template <class Real>
struct DenseLayer {
  Tensor<Real> weight;  // in x out
  Tensor<Real> bias;    // out

  DenseLayer() = default;
  DenseLayer(std::int64_t in, std::int64_t out, Rng& rng)
      : weight(kaiming_uniform<Real>({in, out}, in, rng)), bias(Shape{out}) {
    weight.set_requires_grad(true);
    bias.set_requires_grad(true);
  }

  Tensor<Real> forward(const Tensor<Real>& x, Tape<Real>* tape) const {
    return ops::add(ops::matmul(x, weight, tape), bias, tape);
  }

  void collect(const std::string& prefix, ParamList<Real>& out) {
    out.push_back({prefix + ".weight", weight, true});
    out.push_back({prefix + ".bias", bias, false});
  }
};

}  // namespace mstcn
