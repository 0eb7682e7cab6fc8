#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mstcn/nn.hpp"
#include "mstcn/tensor.hpp"

namespace mstcn {

struct FrontendSpec {
  std::int64_t stem_temporal_kernel = 5;
  std::int64_t stem_spatial_kernel = 7;
  std::int64_t stem_spatial_stride = 2;
  bool stem_pool = true;  // 3x3 stride-2 spatial max pool after the stem
  std::vector<std::int64_t> stage_widths = {16, 32, 64, 128};
  std::int64_t blocks_per_stage = 1;

  std::int64_t output_channels() const { return stage_widths.back(); }

  void validate() const {
    if (stem_temporal_kernel <= 0 || stem_temporal_kernel % 2 == 0)
      throw std::invalid_argument("stem temporal kernel must be positive odd");
    if (stem_spatial_kernel <= 0 || stem_spatial_stride <= 0)
      throw std::invalid_argument("stem spatial kernel/stride must be positive");
    if (stage_widths.empty())
      throw std::invalid_argument("frontend needs at least one stage");
    for (auto w : stage_widths)
      if (w <= 0) throw std::invalid_argument("stage widths must be positive");
    if (blocks_per_stage <= 0)
      throw std::invalid_argument("blocks_per_stage must be positive");
  }

  // Paper-scale preset: full ResNet18 widths at 88x88 crops.
  static FrontendSpec paper_scale() {
    FrontendSpec s;
    s.stage_widths = {64, 128, 256, 512};
    s.blocks_per_stage = 2;
    return s;
  }
};

namespace ops {

// B x C x T x H x W  <->  (B*T) x C x H x W. Time folds into the batch so 2D
// layers process frames independently.
template <class Real>
Tensor<Real> fold_time(const Tensor<Real>& x, Tape<Real>* tape = nullptr) {
  if (x.rank() != 5) throw std::invalid_argument("fold_time expects rank 5");
  const std::int64_t B = x.dim(0), C = x.dim(1), T = x.dim(2), H = x.dim(3),
                     W = x.dim(4);
  auto p = permute(x, {0, 2, 1, 3, 4}, tape);
  return reshape(p, Shape{B * T, C, H, W}, tape);
}

template <class Real>
Tensor<Real> unfold_time(const Tensor<Real>& x, std::int64_t B, std::int64_t T,
                         Tape<Real>* tape = nullptr) {
  if (x.rank() != 4) throw std::invalid_argument("unfold_time expects rank 4");
  if (x.dim(0) != B * T)
    throw std::invalid_argument("unfold_time batch extent mismatch");
  const std::int64_t C = x.dim(1), H = x.dim(2), W = x.dim(3);
  auto r = reshape(x, Shape{B, T, C, H, W}, tape);
  return permute(r, {0, 2, 1, 3, 4}, tape);
}

// Mean over height and width: B x C x T x H x W -> B x C x T.
template <class Real>
Tensor<Real> spatial_gap(const Tensor<Real>& x, Tape<Real>* tape = nullptr) {
  if (x.rank() != 5) throw std::invalid_argument("spatial_gap expects rank 5");
  return mean(x, {3, 4}, /*keepdims=*/false, tape);
}

}  // namespace ops

// Standard 2D basic residual block, applied per frame.
template <class Real>
struct BasicBlock2d {
  Conv2dLayer<Real> conv1, conv2;
  BatchNormLayer<Real> bn1, bn2;
  Conv2dLayer<Real> downsample;
  BatchNormLayer<Real> bn_down;
  bool has_downsample = false;

  BasicBlock2d() = default;
  BasicBlock2d(std::int64_t in_ch, std::int64_t out_ch, std::int64_t stride,
               Rng& rng) {
    conv1 = Conv2dLayer<Real>(in_ch, out_ch, 3, stride, 1, rng);
    conv2 = Conv2dLayer<Real>(out_ch, out_ch, 3, 1, 1, rng);
    bn1 = BatchNormLayer<Real>(out_ch);
    bn2 = BatchNormLayer<Real>(out_ch);
    if (stride != 1 || in_ch != out_ch) {
      downsample = Conv2dLayer<Real>(in_ch, out_ch, 1, stride, 0, rng);
      bn_down = BatchNormLayer<Real>(out_ch);
      has_downsample = true;
    }
  }

  Tensor<Real> forward(const Tensor<Real>& x, Mode mode, Tape<Real>* tape) {
    auto h = conv1.forward(x, tape);
    h = bn1.forward(h, mode, tape);
    h = ops::relu(h, tape);
    h = conv2.forward(h, tape);
    h = bn2.forward(h, mode, tape);
    Tensor<Real> skip = x;
    if (has_downsample) {
      skip = downsample.forward(x, tape);
      skip = bn_down.forward(skip, mode, tape);
    }
    return ops::relu(ops::add(h, skip, tape), tape);
  }

  void collect(const std::string& prefix, ParamList<Real>& out) {
    conv1.collect(prefix + ".conv1", out);
    bn1.collect(prefix + ".bn1", out);
    conv2.collect(prefix + ".conv2", out);
    bn2.collect(prefix + ".bn2", out);
    if (has_downsample) {
      downsample.collect(prefix + ".downsample", out);
      bn_down.collect(prefix + ".bn_down", out);
    }
  }

  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, std::vector<Real>*>>& out) {
    bn1.collect_buffers(prefix + ".bn1", out);
    bn2.collect_buffers(prefix + ".bn2", out);
    if (has_downsample) bn_down.collect_buffers(prefix + ".bn_down", out);
  }
};

// 3D stem + residual stages + spatial GAP. Temporal extent is untouched by
// every layer; only space is downsampled.
template <class Real>
struct Frontend {
  FrontendSpec spec;
  Conv3dLayer<Real> stem;
  BatchNormLayer<Real> stem_bn;
  std::vector<std::vector<BasicBlock2d<Real>>> stages;

  Frontend() = default;
  Frontend(const FrontendSpec& s, Rng& rng) : spec(s) {
    s.validate();
    stem = Conv3dLayer<Real>(1, s.stage_widths[0], s.stem_temporal_kernel,
                             s.stem_spatial_kernel, s.stem_spatial_stride,
                             s.stem_spatial_kernel / 2, rng);
    stem_bn = BatchNormLayer<Real>(s.stage_widths[0]);
    std::int64_t in_ch = s.stage_widths[0];
    for (std::size_t si = 0; si < s.stage_widths.size(); ++si) {
      std::vector<BasicBlock2d<Real>> stage;
      for (std::int64_t b = 0; b < s.blocks_per_stage; ++b) {
        const std::int64_t stride = (si > 0 && b == 0) ? 2 : 1;
        stage.emplace_back(in_ch, s.stage_widths[si], stride, rng);
        in_ch = s.stage_widths[si];
      }
      stages.push_back(std::move(stage));
    }
  }

  // x: B x 1 x T x H x W -> B x C0 x T x H' x W'
  Tensor<Real> stem_forward(const Tensor<Real>& x, Mode mode,
                            Tape<Real>* tape) {
    if (x.rank() != 5 || x.dim(1) != 1)
      throw std::invalid_argument("frontend expects grayscale B x 1 x T x H x W, got " +
                                  shape_str(x.shape()));
    const std::int64_t B = x.dim(0), T = x.dim(2);
    auto h = stem.forward(x, tape);
    h = stem_bn.forward(h, mode, tape);
    h = ops::relu(h, tape);
    if (spec.stem_pool) {
      auto f = ops::fold_time(h, tape);
      f = ops::maxpool2d(f, 3, 2, 1, tape);
      h = ops::unfold_time(f, B, T, tape);
    }
    return h;
  }

  // x: B x 1 x T x H x W -> features B x C x T
  Tensor<Real> forward(const Tensor<Real>& x, Mode mode, Tape<Real>* tape) {
    const std::int64_t B = x.dim(0), T = x.dim(2);
    auto h = stem_forward(x, mode, tape);
    auto f = ops::fold_time(h, tape);
    for (auto& stage : stages)
      for (auto& blk : stage) f = blk.forward(f, mode, tape);
    h = ops::unfold_time(f, B, T, tape);
    return ops::spatial_gap(h, tape);
  }

  void collect(const std::string& prefix, ParamList<Real>& out) {
    stem.collect(prefix + ".stem", out);
    stem_bn.collect(prefix + ".stem_bn", out);
    for (std::size_t si = 0; si < stages.size(); ++si)
      for (std::size_t b = 0; b < stages[si].size(); ++b)
        stages[si][b].collect(prefix + ".stage" + std::to_string(si) +
                                  ".block" + std::to_string(b),
                              out);
  }

  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, std::vector<Real>*>>& out) {
    stem_bn.collect_buffers(prefix + ".stem_bn", out);
    for (std::size_t si = 0; si < stages.size(); ++si)
      for (std::size_t b = 0; b < stages[si].size(); ++b)
        stages[si][b].collect_buffers(prefix + ".stage" + std::to_string(si) +
                                          ".block" + std::to_string(b),
                                      out);
  }
};

}  // namespace mstcn
