#pragma once

#include "mstcn/frontend.hpp"
#include "mstcn/temporal.hpp"

namespace mstcn {

// Full classifier: visual frontend -> multi-scale TCN -> masked consensus.
template <class Real>
struct LipModel {
  Frontend<Real> frontend;
  MultiScaleTCN<Real> tcn;

  LipModel() = default;
  LipModel(const FrontendSpec& fs, MultiScaleTCNSpec ts, Rng& rng) {
    ts.input_channels = fs.output_channels();
    frontend = Frontend<Real>(fs, rng);
    tcn = MultiScaleTCN<Real>(ts, rng);
  }

  // frames: B x 1 x T x H x W, mask: B x T -> sequence logits B x K
  Tensor<Real> forward(const Tensor<Real>& frames, const Tensor<Real>& mask,
                       Mode mode, Rng& rng, Tape<Real>* tape) {
    auto feats = frontend.forward(frames, mode, tape);
    auto step_logits = tcn.forward(feats, mask, mode, rng, tape);
    return consensus_classify(step_logits, mask, tape);
  }

  ParamList<Real> parameters() {
    ParamList<Real> out;
    frontend.collect("frontend", out);
    tcn.collect("tcn", out);
    return out;
  }

  std::vector<std::pair<std::string, std::vector<Real>*>> buffers() {
    std::vector<std::pair<std::string, std::vector<Real>*>> out;
    frontend.collect_buffers("frontend", out);
    tcn.collect_buffers("tcn", out);
    return out;
  }
};

}  // namespace mstcn
