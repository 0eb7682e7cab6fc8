// Command-line entry point: data generation, training, evaluation sweeps,
// gradient checks and receptive-field reports. Every command is fully
// determined by (config, seed).
//
// Exit codes: 0 success, 1 validation error (bad config/flags, failed
// checks), 2 runtime failure (I/O, divergence).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mstcn/config.hpp"
#include "mstcn/gradcheck.hpp"
#include "mstcn/train.hpp"

namespace fs = std::filesystem;
using namespace mstcn;

namespace {

RunConfig load_config_or_default(const std::string& path,
                                 std::optional<std::uint64_t> seed) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  if (seed) {
    cfg.seed = *seed;
    cfg.data.seed = *seed;
    cfg.train.seed = *seed;
  }
  return cfg;
}

bool parse_switch(const std::string& v, const std::string& flag) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw std::invalid_argument(flag + " expects on/off, got \"" + v + "\"");
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

int cmd_gen_data(const std::string& config_path,
                 std::optional<std::uint64_t> seed, const std::string& out,
                 bool force) {
  RunConfig cfg = load_config_or_default(config_path, seed);
  cfg.data.validate();
  const fs::path dir(out);
  if (fs::exists(dir) && !force) {
    std::cerr << "error: output directory " << dir
              << " already exists; pass --force to overwrite\n";
    return 1;
  }
  fs::create_directories(dir);

  auto ds = synth_generate(cfg.data);
  io::save_dataset(dir, ds);
  {
    std::ofstream os(dir / "config.json");
    os << run_config_to_json(cfg).dump(2) << "\n";
  }

  std::map<std::int64_t, std::int64_t> dur_hist;
  for (const auto& s : ds.train) dur_hist[s.e - s.s]++;
  std::cout << "dataset written to " << dir.string() << "\n"
            << "classes: " << cfg.data.num_classes << "\n"
            << "splits: train=" << ds.train.size() << " val=" << ds.val.size()
            << " test=" << ds.test.size() << "\n"
            << "clip length: " << cfg.data.canonical_length << " frames, "
            << cfg.data.frame_h << "x" << cfg.data.frame_w << "\n"
            << "target duration histogram (train):\n";
  for (auto& [dur, n] : dur_hist)
    std::cout << "  " << dur << " frames: " << n << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& data_dir, const std::string& out,
              std::optional<std::int64_t> epochs, std::optional<double> lr,
              std::optional<double> wd, std::optional<std::int64_t> batch,
              const std::string& variable_length,
              const std::string& hard_pretrain) {
  RunConfig cfg = load_config_or_default(config_path, seed);
  if (epochs) cfg.train.epochs = *epochs;
  if (lr) cfg.train.lr_max = *lr;
  if (wd) cfg.train.weight_decay = *wd;
  if (batch) cfg.train.batch_size = *batch;
  if (!variable_length.empty())
    cfg.train.variable_length = parse_switch(variable_length, "--variable-length");
  if (!hard_pretrain.empty()) {
    if (parse_switch(hard_pretrain, "--hard-pretrain")) {
      if (!cfg.train.hard_pretrain) cfg.train.hard_pretrain = HardPretrainConfig{};
    } else {
      cfg.train.hard_pretrain.reset();
    }
  }
  cfg.validate();

  Dataset ds = io::load_dataset(data_dir);
  for (const auto* split : {&ds.train, &ds.val, &ds.test})
    for (const auto& s : *split)
      if (s.label < 0 || s.label >= cfg.data.num_classes)
        throw std::invalid_argument(
            "dataset label " + std::to_string(s.label) +
            " outside configured class count " +
            std::to_string(cfg.data.num_classes));

  Rng init = Rng::stream(cfg.seed, "model-init");
  LipModel<float> model(cfg.frontend, cfg.resolved_tcn(), init);
  const std::string provenance = run_config_to_json(cfg).dump();
  auto res = fit(model, ds, cfg.train, cfg.frontend, cfg.resolved_tcn(),
                 fs::path(out), provenance);
  std::cout << "training complete: " << cfg.train.epochs
            << " epochs, best val accuracy "
            << res.best_val_acc * 100.0 << "%\n"
            << "artifacts in " << out << " (last.ckpt, best.ckpt, metrics.csv)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& split, const std::string& drop_range,
             std::uint64_t seed, const std::string& out) {
  auto ck = load_checkpoint(ckpt_path);
  RunConfig cfg = parse_run_config(nlohmann::json::parse(ck.config_json));
  Rng dummy(0);
  LipModel<float> model(cfg.frontend, cfg.resolved_tcn(), dummy);
  restore_model(model, ck);

  std::vector<SequenceSample> data = io::load_split(data_dir, split);
  if (data.empty()) throw std::runtime_error("empty split " + split);
  for (const auto& s : data) {
    if (s.label >= cfg.data.num_classes)
      throw std::invalid_argument("checkpoint trained for " +
                                  std::to_string(cfg.data.num_classes) +
                                  " classes but dataset has label " +
                                  std::to_string(s.label));
    if (s.H != cfg.data.frame_h || s.W != cfg.data.frame_w)
      throw std::invalid_argument("frame size mismatch between checkpoint and dataset");
  }

  std::int64_t n_lo = 0, n_hi = 0;
  {
    const auto dots = drop_range.find("..");
    if (dots == std::string::npos) {
      n_lo = n_hi = std::stoll(drop_range);
    } else {
      n_lo = std::stoll(drop_range.substr(0, dots));
      n_hi = std::stoll(drop_range.substr(dots + 2));
    }
    if (n_lo < 0 || n_hi < n_lo)
      throw std::invalid_argument("bad --drop-frames range " + drop_range);
  }

  std::ostringstream csv;
  csv << "dropped,accuracy,loss\n";
  std::cout << "dropped  accuracy   loss\n";
  for (std::int64_t n = n_lo; n <= n_hi; ++n) {
    auto r = evaluate(model, data, n, seed, cfg.train.batch_size,
                      cfg.train.crop_h, cfg.train.crop_w);
    char line[96];
    std::snprintf(line, sizeof line, "%7lld  %8.4f  %9.6f\n",
                  static_cast<long long>(n), r.accuracy, r.loss);
    std::cout << line;
    csv << n << "," << std::setprecision(9) << r.accuracy << "," << r.loss
        << "\n";
  }
  if (!out.empty()) {
    const std::string tmp = out + ".tmp";
    {
      std::ofstream os(tmp);
      if (!os) throw std::runtime_error("cannot write " + tmp);
      os << csv.str();
    }
    fs::rename(tmp, out);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck (always double precision)
// ---------------------------------------------------------------------------

struct CheckReport {
  bool all_ok = true;

  void run(const std::string& name, const ScalarFn& f,
           std::vector<Tensor<double>> inputs) {
    const double err = finite_difference_check(f, std::move(inputs));
    const bool ok = err < 1e-5;
    all_ok = all_ok && ok;
    char line[128];
    std::snprintf(line, sizeof line, "%-24s max rel err %.3e  (< 1e-5)  %s\n",
                  name.c_str(), err, ok ? "pass" : "FAIL");
    std::cout << line;
  }
};

// reduce everything to a scalar with a curvature-bearing function so both
// branches of each product get exercised
Tensor<double> squash(const Tensor<double>& y, Tape<double>* t) {
  return ops::sum_all(ops::mul(y, y, t), t);
}

void gradcheck_ops(CheckReport& rep) {
  Rng rng(2024);
  auto a23 = Tensor<double>::randn({2, 3}, rng);
  auto b23 = Tensor<double>::randn({2, 3}, rng);
  auto b3 = Tensor<double>::randn({3}, rng);
  for (auto& v : b23.data()) v += (v >= 0 ? 1.5 : -1.5);  // keep div away from 0
  for (auto& v : b3.data()) v += (v >= 0 ? 1.5 : -1.5);

  rep.run("add", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::add(in[0], in[1], t), t);
  }, {a23, b23});
  rep.run("add broadcast", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::add(in[0], in[1], t), t);
  }, {a23, b3});
  rep.run("sub", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::sub(in[0], in[1], t), t);
  }, {a23, b23});
  rep.run("mul", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::mul(in[0], in[1], t), t);
  }, {a23, b23});
  rep.run("div", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::div(in[0], in[1], t), t);
  }, {a23, b23});
  rep.run("div broadcast", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::div(in[0], in[1], t), t);
  }, {a23, b3});
  rep.run("scale", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::scale(in[0], 2.5, t), t);
  }, {a23});
  rep.run("relu", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::relu(in[0], t), t);
  }, {a23});

  auto m1 = Tensor<double>::randn({3, 4}, rng);
  auto m2 = Tensor<double>::randn({4, 2}, rng);
  rep.run("matmul", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::matmul(in[0], in[1], t), t);
  }, {m1, m2});

  auto r234 = Tensor<double>::randn({2, 3, 4}, rng);
  rep.run("sum", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::sum(in[0], {1}, false, t), t);
  }, {r234});
  rep.run("mean", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::mean(in[0], {0, 2}, false, t), t);
  }, {r234});
  rep.run("max", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::reduce_max(in[0], {2}, false, t), t);
  }, {r234});
  rep.run("reshape", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::reshape(in[0], {4, 6}, t), t);
  }, {r234});
  rep.run("permute", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::permute(in[0], {2, 0, 1}, t), t);
  }, {r234});
  rep.run("slice", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::slice(in[0], 2, 1, 3, t), t);
  }, {r234});
  rep.run("concat", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::concat({in[0], in[1]}, 1, t), t);
  }, {a23, b23});

  auto x137 = Tensor<double>::randn({1, 3, 7}, rng);
  auto w1 = Tensor<double>::randn({2, 3, 3}, rng);
  auto bb1 = Tensor<double>::randn({2}, rng);
  rep.run("conv1d dilated", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::conv1d(in[0], in[1], in[2], 2, false, t), t);
  }, {x137, w1, bb1});
  rep.run("conv1d causal", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::conv1d(in[0], in[1], in[2], 2, true, t), t);
  }, {x137, w1, bb1});

  auto x2d = Tensor<double>::randn({2, 2, 5, 5}, rng);
  auto w2 = Tensor<double>::randn({3, 2, 3, 3}, rng);
  auto bb2 = Tensor<double>::randn({3}, rng);
  rep.run("conv2d strided", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::conv2d(in[0], in[1], in[2], 2, 1, t), t);
  }, {x2d, w2, bb2});

  auto x3d = Tensor<double>::randn({1, 1, 4, 5, 5}, rng);
  auto w3 = Tensor<double>::randn({2, 1, 3, 3, 3}, rng);
  auto bb3 = Tensor<double>::randn({2}, rng);
  rep.run("conv3d", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::conv3d(in[0], in[1], in[2], 2, 1, t), t);
  }, {x3d, w3, bb3});

  rep.run("maxpool2d", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::maxpool2d(in[0], 3, 2, 1, t), t);
  }, {x2d});

  auto gam = Tensor<double>::randn({2}, rng);
  auto bet = Tensor<double>::randn({2}, rng);
  for (auto& v : gam.data()) v += (v >= 0 ? 1.0 : -1.0);
  auto xb = Tensor<double>::randn({3, 2, 6}, rng);
  rep.run("batchnorm train", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    ops::BatchNormState<double> st;
    return squash(ops::batchnorm(in[0], in[1], in[2], st, Mode::train, 0.1,
                                 1e-5, t), t);
  }, {xb, gam, bet});

  rep.run("dropout", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    Rng mask_rng(99);  // same mask every call
    return squash(ops::dropout(in[0], 0.3, Mode::train, mask_rng, t), t);
  }, {a23});

  auto logits = Tensor<double>::randn({4, 6}, rng);
  rep.run("cross entropy", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return ops::cross_entropy(in[0], {1, 0, 5, 2}, t);
  }, {logits});

  auto steps = Tensor<double>::randn({2, 3, 5}, rng);
  Tensor<double> mask({2, 5}, {1, 1, 1, 0, 0, 1, 1, 1, 1, 1});
  rep.run("consensus", [mask](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(consensus_classify(in[0], mask, t), t);
  }, {steps});
}

// check a parameterized module: inputs are the data tensor plus every live
// parameter handle, so the FD sweep perturbs the module itself
template <class Module>
void check_module(CheckReport& rep, const std::string& name, Module& mod,
                  Tensor<double> x,
                  const std::function<Tensor<double>(Module&, Tensor<double>&,
                                                     Tape<double>*)>& fwd) {
  ParamList<double> params;
  mod.collect("m", params);
  std::vector<Tensor<double>> inputs{std::move(x)};
  for (auto& p : params) inputs.push_back(p.tensor);
  rep.run(name, [&mod, &fwd](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(fwd(mod, in[0], t), t);
  }, std::move(inputs));
}

void gradcheck_layers(CheckReport& rep) {
  Rng rng(7);

  Conv1dLayer<double> conv(3, 4, 3, 2, false, rng);
  check_module<Conv1dLayer<double>>(
      rep, "dilated conv layer", conv, Tensor<double>::randn({2, 3, 7}, rng),
      [](auto& m, auto& x, Tape<double>* t) { return m.forward(x, t); });

  BatchNormLayer<double> bn(3);
  {
    Rng r2(8);
    for (auto& v : bn.gamma.data()) v = 1.0 + 0.3 * r2.normal();
    for (auto& v : bn.beta.data()) v = 0.2 * r2.normal();
  }
  check_module<BatchNormLayer<double>>(
      rep, "batchnorm train layer", bn, Tensor<double>::randn({3, 3, 5}, rng),
      [](auto& m, auto& x, Tape<double>* t) {
        m.state = ops::BatchNormState<double>{};  // fresh stats per call
        return m.forward(x, Mode::train, t);
      });

  TemporalBlockSpec tbs{2, 4, 3, 2, 0.0, false};
  TemporalBlock<double> tb(tbs, rng);
  Rng tb_rng(0);
  check_module<TemporalBlock<double>>(
      rep, "temporal block", tb, Tensor<double>::randn({2, 2, 6}, rng),
      [&tb_rng](auto& m, auto& x, Tape<double>* t) {
        return m.forward(x, Mode::train, tb_rng, t);
      });

  MultiScaleBlock<double> ms(3, 6, {3, 5}, 2, 0.0, false, rng);
  Rng ms_rng(0);
  check_module<MultiScaleBlock<double>>(
      rep, "multi-scale block", ms, Tensor<double>::randn({1, 3, 8}, rng),
      [&ms_rng](auto& m, auto& x, Tape<double>* t) {
        return m.forward(x, Mode::train, ms_rng, t);
      });

  FrontendSpec fspec;
  fspec.stem_temporal_kernel = 3;
  fspec.stem_spatial_kernel = 3;
  fspec.stem_spatial_stride = 2;
  fspec.stem_pool = false;
  fspec.stage_widths = {2};
  fspec.blocks_per_stage = 1;
  Frontend<double> fe(fspec, rng);
  check_module<Frontend<double>>(
      rep, "frontend stem", fe, Tensor<double>::randn({1, 1, 3, 6, 6}, rng),
      [](auto& m, auto& x, Tape<double>* t) {
        return m.stem_forward(x, Mode::train, t);
      });

  rep.run("spatial GAP", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return squash(ops::spatial_gap(in[0], t), t);
  }, {Tensor<double>::randn({2, 3, 4, 3, 3}, rng)});

  DenseLayer<double> dense(5, 3, rng);
  check_module<DenseLayer<double>>(
      rep, "dense layer", dense, Tensor<double>::randn({4, 5}, rng),
      [](auto& m, auto& x, Tape<double>* t) { return m.forward(x, t); });

  rep.run("cross entropy", [](Tape<double>* t, std::vector<Tensor<double>>& in) {
    return ops::cross_entropy(in[0], {2, 0, 1}, t);
  }, {Tensor<double>::randn({3, 4}, rng)});
}

void gradcheck_model(CheckReport& rep) {
  Rng rng(11);
  FrontendSpec fspec;
  fspec.stem_temporal_kernel = 3;
  fspec.stem_spatial_kernel = 3;
  fspec.stem_spatial_stride = 2;
  fspec.stem_pool = false;
  fspec.stage_widths = {2, 3};
  fspec.blocks_per_stage = 1;
  MultiScaleTCNSpec tspec;
  tspec.input_channels = 3;
  tspec.num_blocks = 2;
  tspec.branch_kernel_sizes = {3};
  tspec.channels = 4;
  tspec.dropout_rate = 0.0;
  tspec.num_classes = 3;
  LipModel<double> model(fspec, tspec, rng);

  auto frames = Tensor<double>::randn({2, 1, 4, 6, 6}, rng);
  Tensor<double> bmask({2, 4}, {1, 1, 1, 0, 1, 1, 1, 1});
  ParamList<double> params = model.parameters();
  std::vector<Tensor<double>> inputs{frames};
  for (auto& p : params) inputs.push_back(p.tensor);
  Rng fwd_rng(0);
  rep.run("model end-to-end",
          [&model, &bmask, &fwd_rng](Tape<double>* t,
                                     std::vector<Tensor<double>>& in) {
            auto logits = model.forward(in[0], bmask, Mode::train, fwd_rng, t);
            return ops::cross_entropy(logits, {0, 2}, t);
          },
          std::move(inputs));
}

int cmd_gradcheck(const std::string& scope) {
  CheckReport rep;
  if (scope == "ops") gradcheck_ops(rep);
  else if (scope == "layers") gradcheck_layers(rep);
  else if (scope == "model") gradcheck_model(rep);
  else throw std::invalid_argument("--scope must be ops, layers or model");
  std::cout << (rep.all_ok ? "all checks passed\n" : "FAILURES above\n");
  return rep.all_ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// rf
// ---------------------------------------------------------------------------

int cmd_rf(const std::string& config_path) {
  RunConfig cfg = load_config_or_default(config_path, std::nullopt);
  MultiScaleTCNSpec spec = cfg.tcn;
  if (spec.input_channels == 0) spec.input_channels = 1;  // irrelevant to RF
  if (spec.num_classes == 0) spec.num_classes = 1;
  spec.validate();

  std::vector<std::int64_t> ks = spec.branch_kernel_sizes;
  std::sort(ks.begin(), ks.end());
  bool ok = true;
  std::cout << "blocks: " << spec.num_blocks
            << " (dilations double per block)\n"
            << "kernel  analytic  traced\n";
  for (auto k : ks) {
    const std::int64_t analytic = receptive_field(k, spec.num_blocks);
    const std::int64_t traced = traced_receptive_field<double>(k, spec.num_blocks);
    char line[96];
    std::snprintf(line, sizeof line, "%6lld  %8lld  %6lld%s\n",
                  static_cast<long long>(k), static_cast<long long>(analytic),
                  static_cast<long long>(traced),
                  analytic == traced ? "" : "  MISMATCH");
    std::cout << line;
    ok = ok && analytic == traced;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-scale temporal convolution toolkit"};
  app.require_subcommand(1);

  std::string config_path, out, data_dir, ckpt_path;
  std::string split = "test", drop_range = "0", scope = "ops";
  std::string variable_length, hard_pretrain;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> epochs, batch;
  std::optional<double> lr, wd;
  bool force = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--config", config_path, "config JSON path");
  gen->add_option("--seed", seed, "root seed (overrides config)");
  gen->add_option("--out", out, "output directory")->required();
  gen->add_flag("--force", force, "overwrite an existing directory");

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "config JSON path");
  train->add_option("--seed", seed, "root seed (overrides config)");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out, "artifact directory")->required();
  train->add_option("--epochs", epochs, "override epoch count");
  train->add_option("--lr", lr, "override peak learning rate");
  train->add_option("--wd", wd, "override weight decay");
  train->add_option("--batch", batch, "override batch size");
  train->add_option("--variable-length", variable_length,
                    "on/off: variable-length temporal augmentation");
  train->add_option("--hard-pretrain", hard_pretrain,
                    "on/off: hard-class pretraining stage");

  auto* eval = app.add_subcommand("eval", "frame-drop robustness sweep");
  eval->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--split", split, "dataset split (default test)");
  eval->add_option("--drop-frames", drop_range, "N or N..M frames to drop");
  std::uint64_t eval_seed = 0;
  eval->add_option("--seed", eval_seed, "seed for the drop draw");
  eval->add_option("--out", out, "also write the table as CSV");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gc->add_option("--scope", scope, "ops, layers or model");

  auto* rf = app.add_subcommand("rf", "receptive field report");
  rf->add_option("--config", config_path, "config JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // usage problems are validation errors
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, seed, out, force);
    if (train->parsed())
      return cmd_train(config_path, seed, data_dir, out, epochs, lr, wd, batch,
                       variable_length, hard_pretrain);
    if (eval->parsed())
      return cmd_eval(ckpt_path, data_dir, split, drop_range, eval_seed, out);
    if (gc->parsed()) return cmd_gradcheck(scope);
    if (rf->parsed()) return cmd_rf(config_path);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
