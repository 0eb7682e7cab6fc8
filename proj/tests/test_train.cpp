#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mstcn/config.hpp"
#include "mstcn/train.hpp"

using namespace mstcn;

namespace {

SynthConfig tiny_data_cfg() {
  SynthConfig d;
  d.num_classes = 3;
  d.canonical_length = 11;
  d.frame_h = 12;
  d.frame_w = 12;
  d.pattern_min = 5;
  d.pattern_max = 7;
  d.train_size = 9;
  d.val_size = 3;
  d.test_size = 3;
  d.seed = 1;
  return d;
}

FrontendSpec tiny_frontend() {
  FrontendSpec f;
  f.stem_temporal_kernel = 3;
  f.stem_spatial_kernel = 3;
  f.stem_spatial_stride = 2;
  f.stem_pool = false;
  f.stage_widths = {2, 3};
  f.blocks_per_stage = 1;
  return f;
}

MultiScaleTCNSpec tiny_tcn(std::int64_t num_classes) {
  MultiScaleTCNSpec t;
  t.input_channels = 3;
  t.num_blocks = 2;
  t.branch_kernel_sizes = {3};
  t.channels = 4;
  t.dropout_rate = 0.1;
  t.num_classes = num_classes;
  return t;
}

}  // namespace

TEST_CASE("cosine schedule closed form") {
  REQUIRE(cosine_lr(0.0, 3e-4, 0.0) == Catch::Approx(3e-4));
  REQUIRE(cosine_lr(0.5, 3e-4, 0.0) == Catch::Approx(1.5e-4));
  REQUIRE(cosine_lr(1.0, 3e-4, 0.0) == Catch::Approx(0.0).margin(1e-18));
  REQUIRE(cosine_lr(0.5, 1e-3, 1e-5) == Catch::Approx(5.05e-4));
  for (int e = 0; e < 80; ++e) {
    const double t = static_cast<double>(e) / 79.0;
    const double want =
        0.0 + 0.5 * (3e-4 - 0.0) * (1.0 + std::cos(3.14159265358979323846 * t));
    REQUIRE(std::abs(cosine_lr(t, 3e-4, 0.0) - want) < 1e-12);
  }
  REQUIRE_THROWS_AS(cosine_lr(-0.01, 1.0, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(cosine_lr(1.01, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("adam first step moves against the gradient sign") {
  Tensor<float> p({4}, {1.0f, -2.0f, 0.5f, 3.0f});
  p.set_requires_grad(true);
  p.grad_buffer() = {0.2f, -0.1f, 0.0f, 5.0f};
  ParamList<float> params{{"p", p, false}};
  OptimState<float> st;
  const double lr = 1e-2;
  adam_step(params, st, lr, 0.0);
  // bias-corrected first step is lr * g / (|g| + eps) = lr * sign(g)
  REQUIRE(p.at(0) == Catch::Approx(1.0 - lr).epsilon(1e-4));
  REQUIRE(p.at(1) == Catch::Approx(-2.0 + lr).epsilon(1e-4));
  REQUIRE(p.at(2) == Catch::Approx(0.5));  // zero gradient, zero decay: frozen
  REQUIRE(p.at(3) == Catch::Approx(3.0 - lr).epsilon(1e-4));
}

TEST_CASE("adam without gradients is a no-op; decay only hits flagged params") {
  Tensor<float> w({2}, {1.0f, 1.0f});
  Tensor<float> b({2}, {1.0f, 1.0f});
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  ParamList<float> params{{"w", w, true}, {"b", b, false}};
  OptimState<float> st;
  adam_step(params, st, 1e-2, 0.5);  // no grad buffers allocated at all
  REQUIRE(w.data() == std::vector<float>{1.0f, 1.0f});
  REQUIRE(b.data() == std::vector<float>{1.0f, 1.0f});

  w.grad_buffer() = {0.0f, 0.0f};
  b.grad_buffer() = {0.0f, 0.0f};
  adam_step(params, st, 1e-2, 0.5);
  REQUIRE(w.at(0) < 1.0f);  // decay pulls the weight down
  REQUIRE(b.data() == std::vector<float>{1.0f, 1.0f});
}

TEST_CASE("adam is deterministic") {
  auto run = [] {
    Rng rng(9);
    auto p = Tensor<float>::randn({8}, rng);
    p.set_requires_grad(true);
    ParamList<float> params{{"p", p, true}};
    OptimState<float> st;
    for (int i = 0; i < 20; ++i) {
      auto g = Tensor<float>::randn({8}, rng);
      p.clear_grad();
      auto& gb = p.grad_buffer();
      for (int j = 0; j < 8; ++j) gb[j] = g.at(j);
      adam_step(params, st, 1e-3, 1e-4);
    }
    return p.data();
  };
  REQUIRE(run() == run());
}

TEST_CASE("hard class selection") {
  SECTION("lowest-accuracy tenth, ties by id") {
    std::vector<double> acc{0.9, 0.2, 0.5, 0.2, 0.8, 0.1, 0.7, 0.6, 0.95, 0.3};
    REQUIRE(hard_class_select(acc, 0.10) == std::vector<std::int64_t>{5});
    REQUIRE(hard_class_select(acc, 0.30) == std::vector<std::int64_t>{1, 3, 5});
  }
  SECTION("fraction 1 keeps everything, sorted") {
    std::vector<double> acc{0.3, 0.1, 0.2};
    REQUIRE(hard_class_select(acc, 1.0) == std::vector<std::int64_t>{0, 1, 2});
  }
  SECTION("a tenth of 500 classes is 50") {
    std::vector<double> acc(500);
    for (int i = 0; i < 500; ++i) acc[i] = static_cast<double>(i) / 500.0;
    auto sel = hard_class_select(acc, 0.10);
    REQUIRE(sel.size() == 50);
    for (int i = 0; i < 50; ++i) REQUIRE(sel[i] == i);
  }
  SECTION("ceil rounding") {
    std::vector<double> acc(7, 0.5);
    REQUIRE(hard_class_select(acc, 0.10).size() == 1);
    REQUIRE(hard_class_select(acc, 0.30).size() == 3);
  }
  SECTION("empty metrics rejected") {
    REQUIRE_THROWS_AS(hard_class_select({}, 0.1), std::invalid_argument);
  }
}

TEST_CASE("metrics csv format") {
  const auto path =
      std::filesystem::temp_directory_path() / "mstcn_metrics_test.csv";
  std::vector<MetricsRecord> hist;
  hist.push_back({0, "train", 1.5, 0.25, 3e-4, 1.234});
  hist.push_back({0, "val", 1.25, 0.5, 3e-4, 0.0});
  write_metrics_csv(path, hist);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  REQUIRE(line == "epoch,split,loss,acc,lr,seconds");
  std::getline(is, line);
  REQUIRE(line == "0,train,1.5,0.25,0.0003,1.234");
  std::getline(is, line);
  REQUIRE(line == "0,val,1.25,0.5,0.0003,0.000");
  std::filesystem::remove(path);
}

TEST_CASE("training fits a tiny model and writes its artifacts") {
  auto ds = synth_generate(tiny_data_cfg());
  Rng init = Rng::stream(7, "model-init");
  auto fs = tiny_frontend();
  auto ts = tiny_tcn(3);
  LipModel<float> model(fs, ts, init);

  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr_max = 1e-3;
  cfg.batch_size = 4;
  cfg.variable_length = true;
  cfg.seed = 7;
  cfg.record_wall_time = false;

  const auto dir = std::filesystem::temp_directory_path() / "mstcn_fit_test";
  std::filesystem::remove_all(dir);
  auto res = fit(model, ds, cfg, fs, ts, dir, "{}");

  REQUIRE(res.history.size() == 4);  // train+val per epoch
  REQUIRE(res.history[0].split == "train");
  REQUIRE(res.history[1].split == "val");
  for (const auto& r : res.history) {
    REQUIRE(std::isfinite(r.loss));
    REQUIRE(r.seconds == 0.0);
  }
  REQUIRE(std::filesystem::exists(dir / "last.ckpt"));
  REQUIRE(std::filesystem::exists(dir / "best.ckpt"));
  REQUIRE(std::filesystem::exists(dir / "metrics.csv"));

  SECTION("training is deterministic end to end, including the csv bytes") {
    Rng init2 = Rng::stream(7, "model-init");
    LipModel<float> model2(fs, ts, init2);
    const auto dir2 = std::filesystem::temp_directory_path() / "mstcn_fit_test2";
    std::filesystem::remove_all(dir2);
    auto res2 = fit(model2, ds, cfg, fs, ts, dir2, "{}");
    for (std::size_t i = 0; i < res.history.size(); ++i) {
      REQUIRE(res2.history[i].loss == res.history[i].loss);
      REQUIRE(res2.history[i].acc == res.history[i].acc);
    }
    auto slurp = [](const std::filesystem::path& p) {
      std::ifstream is(p, std::ios::binary);
      std::ostringstream ss;
      ss << is.rdbuf();
      return ss.str();
    };
    REQUIRE(slurp(dir / "metrics.csv") == slurp(dir2 / "metrics.csv"));
    REQUIRE(slurp(dir / "last.ckpt") == slurp(dir2 / "last.ckpt"));
    std::filesystem::remove_all(dir2);
  }

  SECTION("checkpoint round trip reproduces the evaluation exactly") {
    auto before = evaluate(model, ds.test, 0, 99, 4);
    Rng fresh_rng = Rng::stream(1234, "other-init");
    LipModel<float> fresh(fs, ts, fresh_rng);
    restore_model(fresh, load_checkpoint(dir / "last.ckpt"));
    auto after = evaluate(fresh, ds.test, 0, 99, 4);
    REQUIRE(after.accuracy == before.accuracy);
    REQUIRE(after.loss == before.loss);
  }

  SECTION("mismatched architecture is rejected on restore") {
    auto ts_other = tiny_tcn(3);
    ts_other.channels = 8;
    Rng r2(1);
    LipModel<float> other(fs, ts_other, r2);
    REQUIRE_THROWS_AS(restore_model(other, load_checkpoint(dir / "last.ckpt")),
                      std::runtime_error);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("zero epochs yields an empty run") {
  auto ds = synth_generate(tiny_data_cfg());
  Rng init(1);
  auto fs = tiny_frontend();
  auto ts = tiny_tcn(3);
  LipModel<float> model(fs, ts, init);
  TrainConfig cfg;
  cfg.epochs = 0;
  auto res = fit(model, ds, cfg, fs, ts);
  REQUIRE(res.history.empty());
  REQUIRE(res.best_val_acc == 0.0);
}

TEST_CASE("hard-class pretraining precedes the main stage") {
  auto ds = synth_generate(tiny_data_cfg());
  Rng init = Rng::stream(5, "model-init");
  auto fs = tiny_frontend();
  auto ts = tiny_tcn(3);
  LipModel<float> model(fs, ts, init);

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr_max = 1e-3;
  cfg.batch_size = 4;
  cfg.seed = 5;
  cfg.record_wall_time = false;
  cfg.hard_pretrain = HardPretrainConfig{0.34, 2, 1};

  auto res = fit(model, ds, cfg, fs, ts);
  // 2 pretrain rows, then train+val for the single main epoch
  REQUIRE(res.history.size() == 4);
  REQUIRE(res.history[0].split == "pretrain");
  REQUIRE(res.history[1].split == "pretrain");
  REQUIRE(res.history[2].split == "train");
  REQUIRE(res.history[3].split == "val");
  // classifier ends up sized for the full class set again
  REQUIRE(model.tcn.classifier.weight.dim(0) == 3);
}

TEST_CASE("evaluation protocol") {
  auto ds = synth_generate(tiny_data_cfg());
  Rng init(3);
  auto fs = tiny_frontend();
  auto ts = tiny_tcn(3);
  LipModel<float> model(fs, ts, init);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.seed = 3;
  fit(model, ds, cfg, fs, ts);

  SECTION("repeatable for a fixed seed and drop count") {
    auto a = evaluate(model, ds.test, 3, 11, 4);
    auto b = evaluate(model, ds.test, 3, 11, 4);
    REQUIRE(a.accuracy == b.accuracy);
    REQUIRE(a.loss == b.loss);
  }
  SECTION("per-class accuracies average to the total") {
    auto r = evaluate(model, ds.val, 0, 11, 4, 0, 0, 3);
    REQUIRE(r.per_class_acc.size() == 3);
    double mean = 0;
    for (double a : r.per_class_acc) mean += a;
    REQUIRE(mean / 3.0 == Catch::Approx(r.accuracy));  // balanced classes
  }
  SECTION("dropping nearly all frames still runs") {
    auto r = evaluate(model, ds.test, tiny_data_cfg().canonical_length - 1, 1, 4);
    REQUIRE(std::isfinite(r.loss));
  }
  SECTION("drop count beyond the sequence length is an error") {
    REQUIRE_THROWS_AS(
        evaluate(model, ds.test, tiny_data_cfg().canonical_length, 1, 4),
        std::invalid_argument);
  }
}

TEST_CASE("batched padded inference equals per-sample unpadded, bit-exact") {
  auto dcfg = tiny_data_cfg();
  auto ds = synth_generate(dcfg);
  Rng init(21);
  auto fs = tiny_frontend();
  auto ts = tiny_tcn(3);
  LipModel<float> model(fs, ts, init);
  // one training pass to give batchnorm its running statistics
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.seed = 21;
  fit(model, ds, cfg, fs, ts);

  Rng aug(33);
  Rng dummy(0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<SequenceSample> mixed;
    for (int i = 0; i < 4; ++i)
      mixed.push_back(variable_length_crop(ds.test[(trial * 4 + i) % 3], aug));
    auto batch = collate<float>(mixed);
    auto joint =
        model.forward(batch.frames, batch.mask, Mode::eval, dummy, nullptr);
    for (std::size_t i = 0; i < mixed.size(); ++i) {
      auto solo_batch = collate<float>({mixed[i]});  // unpadded: T = own length
      auto solo = model.forward(solo_batch.frames, solo_batch.mask, Mode::eval,
                                dummy, nullptr);
      for (std::int64_t k = 0; k < 3; ++k)
        REQUIRE(joint.at(static_cast<std::int64_t>(i) * 3 + k) == solo.at(k));
    }
  }
}

TEST_CASE("config file round trip and unknown-key rejection") {
  RunConfig cfg;
  cfg.seed = 17;
  cfg.data = tiny_data_cfg();
  cfg.frontend = tiny_frontend();
  cfg.tcn = tiny_tcn(3);
  cfg.train.epochs = 4;
  cfg.train.hard_pretrain = HardPretrainConfig{0.2, 3, 2};
  auto j = run_config_to_json(cfg);
  auto back = parse_run_config(j);
  REQUIRE(back.seed == 17);
  REQUIRE(back.data.num_classes == 3);
  REQUIRE(back.train.epochs == 4);
  REQUIRE(back.train.hard_pretrain.has_value());
  REQUIRE(back.train.hard_pretrain->fraction == 0.2);
  REQUIRE(run_config_to_json(back) == j);

  j["train"]["learning_rate"] = 1.0;  // not a real key
  REQUIRE_THROWS_AS(parse_run_config(j), std::invalid_argument);
}
