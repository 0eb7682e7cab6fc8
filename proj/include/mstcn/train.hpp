#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mstcn/checkpoint.hpp"
#include "mstcn/data.hpp"
#include "mstcn/model.hpp"

namespace mstcn {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

struct HardPretrainConfig {
  double fraction = 0.10;
  std::int64_t epochs = 5;
  std::int64_t pilot_epochs = 3;  // short full-vocabulary run that supplies
                                  // the per-class difficulty ranking
};

struct TrainConfig {
  std::int64_t epochs = 80;
  double lr_max = 3e-4;
  double lr_min = 0.0;
  double weight_decay = 1e-4;
  std::int64_t batch_size = 32;
  bool variable_length = true;
  std::optional<HardPretrainConfig> hard_pretrain;
  std::uint64_t seed = 0;
  // Spatial augmentation; crop 0 disables cropping.
  std::int64_t crop_h = 0, crop_w = 0;
  double flip_prob = 0.5;
  bool record_wall_time = true;

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (!(lr_max > lr_min) || lr_min < 0.0)
      throw std::invalid_argument("need lr_max > lr_min >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (weight_decay < 0.0)
      throw std::invalid_argument("weight_decay must be >= 0");
    if (flip_prob < 0.0 || flip_prob > 1.0)
      throw std::invalid_argument("flip_prob must be in [0,1]");
    if (hard_pretrain) {
      if (hard_pretrain->fraction <= 0.0 || hard_pretrain->fraction > 1.0)
        throw std::invalid_argument("hard_pretrain fraction must be in (0,1]");
      if (hard_pretrain->epochs < 1 || hard_pretrain->pilot_epochs < 1)
        throw std::invalid_argument("hard_pretrain epoch counts must be >= 1");
    }
  }
};

struct MetricsRecord {
  std::int64_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double acc = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

// ---------------------------------------------------------------------------
// Cosine schedule (single annealing cycle, no restarts)
// ---------------------------------------------------------------------------

inline double cosine_lr(double t, double lr_max, double lr_min) {
  if (t < 0.0 || t > 1.0)
    throw std::invalid_argument("cosine_lr progress " + std::to_string(t) +
                                " outside [0,1]");
  return lr_min + 0.5 * (lr_max - lr_min) *
                      (1.0 + std::cos(3.14159265358979323846 * t));
}

// ---------------------------------------------------------------------------
// Adam (classic L2 coupling: decay added to the gradient)
// ---------------------------------------------------------------------------

template <class Real>
struct OptimState {
  std::vector<std::vector<Real>> m, v;
  std::int64_t step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

template <class Real>
void adam_step(ParamList<Real>& params, OptimState<Real>& state, double lr,
               double weight_decay) {
  if (state.m.empty()) {
    for (auto& p : params) {
      state.m.emplace_back(p.tensor.size(), Real(0));
      state.v.emplace_back(p.tensor.size(), Real(0));
    }
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("optimizer state does not match parameter list");
  state.step++;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi].tensor;
    if (!p.has_grad()) continue;
    auto& g = p.grad();
    if (g.size() != static_cast<std::size_t>(p.size()))
      throw std::invalid_argument("gradient shape mismatch for " +
                                  params[pi].name);
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    const double wd = params[pi].decay ? weight_decay : 0.0;
    for (std::int64_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]) +
                        wd * static_cast<double>(p.at(i));
      const double mi = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p.at(i) = static_cast<Real>(p.at(i) -
                                  lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Hard-class selection
// ---------------------------------------------------------------------------

// The ceil(fraction*K) classes with lowest accuracy, ties broken by id.
inline std::vector<std::int64_t> hard_class_select(
    const std::vector<double>& per_class_acc, double fraction) {
  if (per_class_acc.empty())
    throw std::invalid_argument("hard_class_select: missing per-class metrics");
  const auto K = static_cast<std::int64_t>(per_class_acc.size());
  const auto n = static_cast<std::int64_t>(
      std::ceil(fraction * static_cast<double>(K)));
  std::vector<std::int64_t> order(K);
  for (std::int64_t i = 0; i < K; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    if (per_class_acc[a] != per_class_acc[b])
      return per_class_acc[a] < per_class_acc[b];
    return a < b;
  });
  order.resize(std::min(n, K));
  std::sort(order.begin(), order.end());
  return order;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
  std::vector<double> per_class_acc;
};

// Eval protocol: no dropout, batchnorm running stats, center crop, no flip.
// drop_n random frames are removed per sample; drop indices are drawn from a
// stream seeded by (seed, drop_n) so sweeps are reproducible.
template <class Real>
EvalResult evaluate(LipModel<Real>& model, const std::vector<SequenceSample>& data,
                    std::int64_t drop_n, std::uint64_t seed,
                    std::int64_t batch_size = 32, std::int64_t crop_h = 0,
                    std::int64_t crop_w = 0, std::int64_t num_classes = 0) {
  if (data.empty()) throw std::invalid_argument("evaluate on empty dataset");
  Rng drop_rng = Rng::stream(seed, "eval-drop", static_cast<std::uint64_t>(drop_n));
  Rng dummy(0);  // dropout never fires in eval mode
  std::int64_t correct = 0;
  double loss_sum = 0.0;
  std::int64_t nbatches = 0;
  std::vector<std::int64_t> class_total, class_correct;
  if (num_classes > 0) {
    class_total.assign(num_classes, 0);
    class_correct.assign(num_classes, 0);
  }
  for (std::size_t start = 0; start < data.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::vector<SequenceSample> chunk;
    for (std::size_t i = start;
         i < std::min(data.size(), start + static_cast<std::size_t>(batch_size));
         ++i) {
      SequenceSample s = data[i];
      if (drop_n > 0) {
        if (drop_n >= s.T)
          throw std::invalid_argument("drop_n >= sequence length");
        s = random_frame_drop(s, drop_n, drop_rng);
      }
      if (crop_h > 0)
        s = spatial_augment(s, crop_h, crop_w, 0.0, /*train=*/false, dummy);
      chunk.push_back(std::move(s));
    }
    auto batch = collate<Real>(chunk);
    auto logits = model.forward(batch.frames, batch.mask, Mode::eval, dummy,
                                nullptr);
    const std::int64_t B = logits.dim(0), K = logits.dim(1);
    // loss without tape
    loss_sum += static_cast<double>(
        ops::cross_entropy<Real>(logits, batch.labels, nullptr).at(0));
    ++nbatches;
    for (std::int64_t b = 0; b < B; ++b) {
      std::int64_t arg = 0;
      for (std::int64_t k = 1; k < K; ++k)
        if (logits.at(b * K + k) > logits.at(b * K + arg)) arg = k;
      const bool ok = arg == batch.labels[b];
      correct += ok ? 1 : 0;
      if (num_classes > 0) {
        class_total[batch.labels[b]]++;
        if (ok) class_correct[batch.labels[b]]++;
      }
    }
  }
  EvalResult r;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  r.loss = loss_sum / static_cast<double>(nbatches);
  if (num_classes > 0) {
    r.per_class_acc.resize(num_classes);
    for (std::int64_t c = 0; c < num_classes; ++c)
      r.per_class_acc[c] = class_total[c] == 0
                               ? 0.0
                               : static_cast<double>(class_correct[c]) /
                                     static_cast<double>(class_total[c]);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Metrics CSV (atomic temp-and-rename write)
// ---------------------------------------------------------------------------

inline void write_metrics_csv(const std::filesystem::path& path,
                              const std::vector<MetricsRecord>& history) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    os << "epoch,split,loss,acc,lr,seconds\n";
    for (const auto& r : history) {
      os << r.epoch << "," << r.split << "," << std::setprecision(9)
         << r.loss << "," << r.acc << "," << r.lr << "," << std::fixed
         << std::setprecision(3) << r.seconds << "\n";
      os.unsetf(std::ios::fixed);
    }
    if (!os) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct FitResult {
  std::vector<MetricsRecord> history;
  double best_val_acc = 0.0;
};

namespace train_detail {

// One single-stage run over the given samples; appends metrics, keeps best
// snapshot via callback.
template <class Real, class EpochEnd>
void run_stage(LipModel<Real>& model, const std::vector<SequenceSample>& train,
               const TrainConfig& cfg, std::int64_t epochs,
               const char* stage_tag, EpochEnd&& on_epoch_end) {
  if (epochs <= 0) return;
  ParamList<Real> params = model.parameters();
  OptimState<Real> opt;
  for (std::int64_t epoch = 0; epoch < epochs; ++epoch) {
    const double t = epochs > 1
                         ? static_cast<double>(epoch) /
                               static_cast<double>(epochs - 1)
                         : 0.0;
    const double lr = cosine_lr(t, cfg.lr_max, cfg.lr_min);
    const auto t0 = std::chrono::steady_clock::now();

    Rng shuffle_rng = Rng::stream(cfg.seed, std::string(stage_tag) + "/shuffle",
                                  static_cast<std::uint64_t>(epoch));
    Rng aug_rng = Rng::stream(cfg.seed, std::string(stage_tag) + "/augment",
                              static_cast<std::uint64_t>(epoch));
    Rng drop_rng = Rng::stream(cfg.seed, std::string(stage_tag) + "/dropout",
                               static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::int64_t correct = 0, batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<SequenceSample> chunk;
      for (std::size_t i = start;
           i < std::min(order.size(),
                        start + static_cast<std::size_t>(cfg.batch_size));
           ++i) {
        SequenceSample s = train[order[i]];
        if (cfg.variable_length) s = variable_length_crop(s, aug_rng);
        if (cfg.crop_h > 0)
          s = spatial_augment(s, cfg.crop_h, cfg.crop_w, cfg.flip_prob,
                              /*train=*/true, aug_rng);
        chunk.push_back(std::move(s));
      }
      auto batch = collate<Real>(chunk);
      Tape<Real> tape;
      auto logits = model.forward(batch.frames, batch.mask, Mode::train,
                                  drop_rng, &tape);
      auto loss = ops::cross_entropy(logits, batch.labels, &tape);
      const double loss_v = static_cast<double>(loss.at(0));
      if (!std::isfinite(loss_v))
        throw std::runtime_error(
            "non-finite training loss at epoch " + std::to_string(epoch) +
            ", batch " + std::to_string(batches) + ", lr " + std::to_string(lr));
      for (auto& p : params) p.tensor.clear_grad();
      tape.backward(loss);
      adam_step(params, opt, lr, cfg.weight_decay);

      loss_sum += loss_v;
      ++batches;
      const std::int64_t B = logits.dim(0), K = logits.dim(1);
      for (std::int64_t b = 0; b < B; ++b) {
        std::int64_t arg = 0;
        for (std::int64_t k = 1; k < K; ++k)
          if (logits.at(b * K + k) > logits.at(b * K + arg)) arg = k;
        if (arg == batch.labels[b]) ++correct;
      }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    MetricsRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(batches);
    rec.acc = static_cast<double>(correct) / static_cast<double>(train.size());
    rec.lr = lr;
    rec.seconds = cfg.record_wall_time ? secs : 0.0;
    on_epoch_end(epoch, rec);
  }
}

}  // namespace train_detail

// Single-stage end-to-end training, optionally preceded by hard-class
// pretraining. Writes last.ckpt, best.ckpt and metrics.csv when out_dir is
// non-empty.
template <class Real>
FitResult fit(LipModel<Real>& model, const Dataset& ds, const TrainConfig& cfg,
              const FrontendSpec& frontend_spec,
              const MultiScaleTCNSpec& tcn_spec,
              const std::filesystem::path& out_dir = {},
              const std::string& config_json = "{}") {
  cfg.validate();
  FitResult result;
  const std::int64_t K = tcn_spec.num_classes;

  if (cfg.hard_pretrain && cfg.epochs > 0) {
    const auto& hp = *cfg.hard_pretrain;
    // Pilot: a short throwaway full-vocabulary run that supplies per-class
    // validation accuracy for the difficulty ranking.
    Rng pilot_init = Rng::stream(cfg.seed, "pilot-init");
    MultiScaleTCNSpec pilot_spec = tcn_spec;
    LipModel<Real> pilot(frontend_spec, pilot_spec, pilot_init);
    TrainConfig pilot_cfg = cfg;
    pilot_cfg.hard_pretrain.reset();
    train_detail::run_stage(pilot, ds.train, pilot_cfg, hp.pilot_epochs,
                            "pilot", [](std::int64_t, const MetricsRecord&) {});
    auto pilot_eval = evaluate(pilot, ds.val, 0, cfg.seed, cfg.batch_size,
                               cfg.crop_h, cfg.crop_w, K);
    const auto hard = hard_class_select(pilot_eval.per_class_acc, hp.fraction);

    // Pretrain on the hard subset with a classifier sized to the subset.
    std::vector<std::int64_t> remap(K, -1);
    for (std::size_t i = 0; i < hard.size(); ++i) remap[hard[i]] = i;
    std::vector<SequenceSample> subset;
    for (const auto& s : ds.train)
      if (remap[s.label] >= 0) {
        SequenceSample c = s;
        c.label = remap[s.label];
        subset.push_back(std::move(c));
      }
    Rng head_rng = Rng::stream(cfg.seed, "pretrain-head");
    model.tcn.classifier = Conv1dLayer<Real>(
        tcn_spec.channels, static_cast<std::int64_t>(hard.size()), 1, 1,
        tcn_spec.causal, head_rng);
    train_detail::run_stage(model, subset, cfg, hp.epochs, "pretrain",
                            [&](std::int64_t epoch, MetricsRecord rec) {
                              rec.split = "pretrain";
                              rec.epoch = epoch;
                              result.history.push_back(rec);
                            });
    // Transition: encoder weights carry over, classifier is re-initialized
    // for the full class set.
    Rng full_head_rng = Rng::stream(cfg.seed, "full-head");
    model.tcn.classifier = Conv1dLayer<Real>(tcn_spec.channels, K, 1, 1,
                                             tcn_spec.causal, full_head_rng);
  }

  double best_val = -1.0;
  std::vector<CheckpointEntry> best_snapshot;
  train_detail::run_stage(
      model, ds.train, cfg, cfg.epochs, "main",
      [&](std::int64_t epoch, MetricsRecord train_rec) {
        train_rec.split = "train";
        result.history.push_back(train_rec);
        const auto vt0 = std::chrono::steady_clock::now();
        auto val = evaluate(model, ds.val, 0, cfg.seed, cfg.batch_size,
                            cfg.crop_h, cfg.crop_w);
        MetricsRecord vrec;
        vrec.epoch = epoch;
        vrec.split = "val";
        vrec.loss = val.loss;
        vrec.acc = val.accuracy;
        vrec.lr = train_rec.lr;
        vrec.seconds =
            cfg.record_wall_time
                ? std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - vt0)
                      .count()
                : 0.0;
        result.history.push_back(vrec);
        if (val.accuracy > best_val) {
          best_val = val.accuracy;
          best_snapshot = snapshot_model(model);
        }
        // flush after every epoch so progress is observable mid-run
        if (!out_dir.empty()) {
          std::filesystem::create_directories(out_dir);
          write_metrics_csv(out_dir / "metrics.csv", result.history);
        }
      });
  result.best_val_acc = std::max(0.0, best_val);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    save_checkpoint(out_dir / "last.ckpt", config_json, snapshot_model(model));
    if (!best_snapshot.empty())
      save_checkpoint(out_dir / "best.ckpt", config_json, best_snapshot);
    write_metrics_csv(out_dir / "metrics.csv", result.history);
  }
  return result;
}

}  // namespace mstcn
