#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mstcn/nn.hpp"
#include "mstcn/tensor.hpp"

namespace mstcn {

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

struct TemporalConvSpec {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel_size = 3;
  std::int64_t dilation = 1;
  bool causal = false;

  void validate() const {
    if (in_channels <= 0 || out_channels <= 0)
      throw std::invalid_argument("temporal conv channels must be positive");
    if (kernel_size <= 0 || dilation <= 0)
      throw std::invalid_argument("temporal conv kernel/dilation must be positive");
    if (!causal && kernel_size % 2 == 0)
      throw std::invalid_argument(
          "non-causal temporal conv requires odd kernel size, got " +
          std::to_string(kernel_size));
  }
};

struct TemporalBlockSpec {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel_size = 3;
  std::int64_t dilation = 1;
  double dropout_rate = 0.0;
  bool causal = false;

  void validate() const {
    TemporalConvSpec c{in_channels, out_channels, kernel_size, dilation, causal};
    c.validate();
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw std::invalid_argument("dropout rate must be in [0,1)");
  }
};

struct MultiScaleTCNSpec {
  std::int64_t input_channels = 0;  // feature width coming from the frontend
  std::int64_t num_blocks = 4;
  std::vector<std::int64_t> branch_kernel_sizes = {3, 5, 7};
  std::int64_t channels = 384;  // C, split C/n across branches
  double dropout_rate = 0.2;
  bool causal = false;
  std::int64_t num_classes = 0;

  void validate() const {
    if (input_channels <= 0)
      throw std::invalid_argument("tcn input_channels must be positive");
    if (num_blocks <= 0)
      throw std::invalid_argument("tcn num_blocks must be positive");
    if (branch_kernel_sizes.empty())
      throw std::invalid_argument("tcn needs at least one branch");
    for (auto k : branch_kernel_sizes)
      if (k <= 0 || (!causal && k % 2 == 0))
        throw std::invalid_argument("branch kernel sizes must be positive odd, got " +
                                    std::to_string(k));
    const auto n = static_cast<std::int64_t>(branch_kernel_sizes.size());
    if (channels % n != 0)
      throw std::invalid_argument(
          "channel count " + std::to_string(channels) +
          " not divisible by branch count " + std::to_string(n));
    if (num_classes <= 0)
      throw std::invalid_argument("tcn num_classes must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw std::invalid_argument("dropout rate must be in [0,1)");
  }

  std::int64_t dilation_of_block(std::int64_t i_one_based) const {
    return std::int64_t(1) << (i_one_based - 1);
  }
};

// Analytic receptive field of one branch: two convs per block, block i at
// dilation 2^(i-1). RF = 1 + sum_i 2*(k-1)*2^(i-1).
inline std::int64_t receptive_field(std::int64_t kernel_size,
                                    std::int64_t num_blocks) {
  std::int64_t rf = 1;
  for (std::int64_t i = 1; i <= num_blocks; ++i)
    rf += 2 * (kernel_size - 1) * (std::int64_t(1) << (i - 1));
  return rf;
}

inline std::vector<std::int64_t> receptive_fields(const MultiScaleTCNSpec& spec) {
  spec.validate();
  std::vector<std::int64_t> out;
  for (auto k : spec.branch_kernel_sizes)
    out.push_back(receptive_field(k, spec.num_blocks));
  return out;
}

// Empirical receptive field: build a one-channel conv stack with the same
// kernel/dilation schedule (all-ones weights, zero bias, identity skip),
// poke one centered input frame and count the affected output steps. All
// contributions are non-negative so nothing can cancel.
template <class Real = double>
std::int64_t traced_receptive_field(std::int64_t kernel_size,
                                    std::int64_t num_blocks) {
  const std::int64_t rf_guess = receptive_field(kernel_size, num_blocks);
  const std::int64_t T = 2 * rf_guess + 9;
  Tensor<Real> x(Shape{1, 1, T});
  const std::int64_t center = T / 2;
  x.at(center) = Real(1);

  Tensor<Real> b(Shape{1});
  for (std::int64_t i = 1; i <= num_blocks; ++i) {
    const std::int64_t d = std::int64_t(1) << (i - 1);
    Tensor<Real> w = Tensor<Real>::full({1, 1, kernel_size}, Real(1));
    Tensor<Real> h = ops::conv1d(x, w, b, d, /*causal=*/false);
    h = ops::conv1d(h, w, b, d, /*causal=*/false);
    x = ops::add(h, x);  // identity skip
  }
  std::int64_t affected = 0;
  for (std::int64_t t = 0; t < T; ++t)
    if (x.at(t) != Real(0)) ++affected;
  return affected;
}

// Zero activations at padded steps (x: B x C x T, mask: B x T). Re-applied
// after every stage so a valid step's neighborhood is bit-identical to the
// zero padding a lone unpadded sequence would see; an empty mask is a no-op.
template <class Real>
Tensor<Real> mask_time(const Tensor<Real>& x, const Tensor<Real>& mask,
                       Tape<Real>* tape) {
  if (mask.size() == 0) return x;
  if (mask.rank() != 2 || mask.dim(0) != x.dim(0) || mask.dim(1) != x.dim(2))
    throw std::invalid_argument("mask_time: mask must be B x T matching x");
  return ops::mul(
      x, ops::reshape(mask, {mask.dim(0), std::int64_t(1), mask.dim(1)}, tape),
      tape);
}

// ---------------------------------------------------------------------------
// Temporal block: (conv-bn-relu-dropout) x2 + skip
// ---------------------------------------------------------------------------

template <class Real>
struct TemporalBlock {
  TemporalBlockSpec spec;
  Conv1dLayer<Real> conv1, conv2;
  BatchNormLayer<Real> bn1, bn2;
  Conv1dLayer<Real> downsample;  // 1x1, only when in != out
  bool has_downsample = false;

  TemporalBlock() = default;
  TemporalBlock(const TemporalBlockSpec& s, Rng& rng) : spec(s) {
    s.validate();
    conv1 = Conv1dLayer<Real>(s.in_channels, s.out_channels, s.kernel_size,
                              s.dilation, s.causal, rng);
    conv2 = Conv1dLayer<Real>(s.out_channels, s.out_channels, s.kernel_size,
                              s.dilation, s.causal, rng);
    bn1 = BatchNormLayer<Real>(s.out_channels);
    bn2 = BatchNormLayer<Real>(s.out_channels);
    if (s.in_channels != s.out_channels) {
      downsample = Conv1dLayer<Real>(s.in_channels, s.out_channels, 1, 1,
                                     s.causal, rng);
      has_downsample = true;
    }
  }

  Tensor<Real> forward(const Tensor<Real>& x, Mode mode, Rng& rng,
                       Tape<Real>* tape) {
    return forward(x, Tensor<Real>(), mode, rng, tape);
  }

  Tensor<Real> forward(const Tensor<Real>& x, const Tensor<Real>& mask,
                       Mode mode, Rng& rng, Tape<Real>* tape) {
    const Real rate = static_cast<Real>(spec.dropout_rate);
    auto h = conv1.forward(x, tape);
    h = bn1.forward(h, mode, tape);
    h = ops::relu(h, tape);
    h = ops::dropout(h, rate, mode, rng, tape);
    h = mask_time(h, mask, tape);
    h = conv2.forward(h, tape);
    h = bn2.forward(h, mode, tape);
    h = ops::relu(h, tape);
    h = ops::dropout(h, rate, mode, rng, tape);
    auto skip = has_downsample ? downsample.forward(x, tape) : x;
    return mask_time(ops::add(h, skip, tape), mask, tape);
  }

  void collect(const std::string& prefix, ParamList<Real>& out) {
    conv1.collect(prefix + ".conv1", out);
    bn1.collect(prefix + ".bn1", out);
    conv2.collect(prefix + ".conv2", out);
    bn2.collect(prefix + ".bn2", out);
    if (has_downsample) downsample.collect(prefix + ".downsample", out);
  }

  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, std::vector<Real>*>>& out) {
    bn1.collect_buffers(prefix + ".bn1", out);
    bn2.collect_buffers(prefix + ".bn2", out);
  }
};

// ---------------------------------------------------------------------------
// Multi-scale block: n parallel temporal blocks, channel concatenation in
// ascending kernel-size order
// ---------------------------------------------------------------------------

template <class Real>
struct MultiScaleBlock {
  std::vector<TemporalBlock<Real>> branches;

  MultiScaleBlock() = default;
  MultiScaleBlock(std::int64_t in_channels, std::int64_t out_channels,
                  const std::vector<std::int64_t>& kernel_sizes,
                  std::int64_t dilation, double dropout_rate, bool causal,
                  Rng& rng) {
    const auto n = static_cast<std::int64_t>(kernel_sizes.size());
    if (out_channels % n != 0)
      throw std::invalid_argument("multi-scale block: " +
                                  std::to_string(out_channels) +
                                  " channels not divisible by " +
                                  std::to_string(n) + " branches");
    std::vector<std::int64_t> ks = kernel_sizes;
    std::sort(ks.begin(), ks.end());
    for (auto k : ks) {
      TemporalBlockSpec bs{in_channels, out_channels / n, k, dilation,
                           dropout_rate, causal};
      branches.emplace_back(bs, rng);
    }
  }

  Tensor<Real> forward(const Tensor<Real>& x, Mode mode, Rng& rng,
                       Tape<Real>* tape) {
    return forward(x, Tensor<Real>(), mode, rng, tape);
  }

  Tensor<Real> forward(const Tensor<Real>& x, const Tensor<Real>& mask,
                       Mode mode, Rng& rng, Tape<Real>* tape) {
    std::vector<Tensor<Real>> outs;
    outs.reserve(branches.size());
    for (auto& br : branches)
      outs.push_back(br.forward(x, mask, mode, rng, tape));
    if (outs.size() == 1) return outs[0];
    return ops::concat(outs, /*axis=*/1, tape);
  }

  void collect(const std::string& prefix, ParamList<Real>& out) {
    for (std::size_t i = 0; i < branches.size(); ++i)
      branches[i].collect(prefix + ".branch" + std::to_string(i), out);
  }

  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, std::vector<Real>*>>& out) {
    for (std::size_t i = 0; i < branches.size(); ++i)
      branches[i].collect_buffers(prefix + ".branch" + std::to_string(i), out);
  }
};

// ---------------------------------------------------------------------------
// Full multi-scale TCN with per-step dense classifier
// ---------------------------------------------------------------------------

template <class Real>
struct MultiScaleTCN {
  MultiScaleTCNSpec spec;
  std::vector<MultiScaleBlock<Real>> blocks;
  Conv1dLayer<Real> classifier;  // shared dense map applied at every step

  MultiScaleTCN() = default;
  MultiScaleTCN(const MultiScaleTCNSpec& s, Rng& rng) : spec(s) {
    s.validate();
    std::int64_t in = s.input_channels;
    for (std::int64_t i = 1; i <= s.num_blocks; ++i) {
      blocks.emplace_back(in, s.channels, s.branch_kernel_sizes,
                          s.dilation_of_block(i), s.dropout_rate, s.causal,
                          rng);
      in = s.channels;
    }
    classifier =
        Conv1dLayer<Real>(s.channels, s.num_classes, 1, 1, s.causal, rng);
  }

  // features: B x C_feat x T -> per-step logits B x num_classes x T
  Tensor<Real> forward(const Tensor<Real>& features, Mode mode, Rng& rng,
                       Tape<Real>* tape) {
    return forward(features, Tensor<Real>(), mode, rng, tape);
  }

  Tensor<Real> forward(const Tensor<Real>& features, const Tensor<Real>& mask,
                       Mode mode, Rng& rng, Tape<Real>* tape) {
    Tensor<Real> h = mask_time(features, mask, tape);
    for (auto& blk : blocks) h = blk.forward(h, mask, mode, rng, tape);
    return classifier.forward(h, tape);
  }

  void collect(const std::string& prefix, ParamList<Real>& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(prefix + ".block" + std::to_string(i), out);
    classifier.collect(prefix + ".classifier", out);
  }

  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, std::vector<Real>*>>& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect_buffers(prefix + ".block" + std::to_string(i), out);
  }
};

// ---------------------------------------------------------------------------
// Consensus: masked average of per-step logits
// ---------------------------------------------------------------------------

// step_logits: B x K x T; mask: B x T, nonzero marks valid steps. Padded
// steps are skipped entirely, so padding can never perturb the result.
template <class Real>
Tensor<Real> consensus_classify(const Tensor<Real>& step_logits,
                                const Tensor<Real>& mask,
                                Tape<Real>* tape = nullptr) {
  if (step_logits.rank() != 3)
    throw std::invalid_argument("consensus expects B x K x T step logits");
  const std::int64_t B = step_logits.dim(0), K = step_logits.dim(1),
                     T = step_logits.dim(2);
  if (mask.rank() != 2 || mask.dim(0) != B || mask.dim(1) != T)
    throw std::invalid_argument("consensus mask must be B x T");

  auto counts = std::make_shared<std::vector<std::int64_t>>(B, 0);
  const auto& md = mask.data();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t t = 0; t < T; ++t)
      if (md[b * T + t] != Real(0)) ++(*counts)[b];
    if ((*counts)[b] == 0)
      throw std::invalid_argument("consensus: sequence " + std::to_string(b) +
                                  " has no valid step");
  }

  Tensor<Real> out(Shape{B, K});
  {
    const auto& sd = step_logits.data();
    auto& od = out.data();
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t k = 0; k < K; ++k) {
        Real acc = 0;
        const Real* row = sd.data() + (b * K + k) * T;
        for (std::int64_t t = 0; t < T; ++t)
          if (md[b * T + t] != Real(0)) acc += row[t];
        od[b * K + k] = acc / static_cast<Real>((*counts)[b]);
      }
  }

  if (tracked(tape, step_logits)) {
    Tensor<Real> sc = step_logits, mc = mask, oc = out;
    tape->record({step_logits}, out, [sc, mc, oc, counts, B, K, T]() mutable {
      if (!oc.has_grad()) return;
      const auto& g = oc.grad();
      const auto& md = mc.data();
      auto& gs = sc.grad_buffer();
      for (std::int64_t b = 0; b < B; ++b) {
        const Real inv = Real(1) / static_cast<Real>((*counts)[b]);
        for (std::int64_t k = 0; k < K; ++k) {
          const Real gv = g[b * K + k] * inv;
          Real* grow = gs.data() + (b * K + k) * T;
          for (std::int64_t t = 0; t < T; ++t)
            if (md[b * T + t] != Real(0)) grow[t] += gv;
        }
      }
    });
  }
  return out;
}

}  // namespace mstcn
