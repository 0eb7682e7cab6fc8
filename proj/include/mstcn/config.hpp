#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "mstcn/data.hpp"
#include "mstcn/frontend.hpp"
#include "mstcn/temporal.hpp"
#include "mstcn/train.hpp"

namespace mstcn {

// Whole-run configuration: one JSON file, CLI flags win on conflict.
struct RunConfig {
  SynthConfig data;
  FrontendSpec frontend;
  MultiScaleTCNSpec tcn;
  TrainConfig train;
  std::uint64_t seed = 0;

  void validate() const {
    data.validate();
    frontend.validate();
    MultiScaleTCNSpec t = tcn;
    t.input_channels = frontend.output_channels();
    t.num_classes = data.num_classes;
    t.validate();
    train.validate();
    if (train.crop_h > data.frame_h || train.crop_w > data.frame_w)
      throw std::invalid_argument("train crop exceeds generated frame size");
  }

  // The spec fed to model construction (class count and input width are
  // derived fields, not free knobs).
  MultiScaleTCNSpec resolved_tcn() const {
    MultiScaleTCNSpec t = tcn;
    t.input_channels = frontend.output_channels();
    t.num_classes = data.num_classes;
    return t;
  }
};

namespace config_detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const char* section,
                           std::initializer_list<const char*> known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) ok = true;
    if (!ok)
      throw std::invalid_argument(std::string("unknown key \"") + it.key() +
                                  "\" in config section \"" + section + "\"");
  }
}

template <class T>
void get(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) obj.at(key).get_to(out);
}

}  // namespace config_detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  using config_detail::get;
  using config_detail::reject_unknown;
  RunConfig cfg;
  reject_unknown(j, "<root>", {"data", "frontend", "tcn", "train", "seed"});
  if (j.contains("seed")) j.at("seed").get_to(cfg.seed);

  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown(d, "data",
                   {"num_classes", "canonical_length", "frame_h", "frame_w",
                    "pattern_min", "pattern_max", "train_size", "val_size",
                    "test_size", "distractor_amplitude"});
    get(d, "num_classes", cfg.data.num_classes);
    get(d, "canonical_length", cfg.data.canonical_length);
    get(d, "frame_h", cfg.data.frame_h);
    get(d, "frame_w", cfg.data.frame_w);
    get(d, "pattern_min", cfg.data.pattern_min);
    get(d, "pattern_max", cfg.data.pattern_max);
    get(d, "train_size", cfg.data.train_size);
    get(d, "val_size", cfg.data.val_size);
    get(d, "test_size", cfg.data.test_size);
    get(d, "distractor_amplitude", cfg.data.distractor_amplitude);
  }

  if (j.contains("frontend")) {
    const auto& f = j.at("frontend");
    reject_unknown(f, "frontend",
                   {"stem_temporal_kernel", "stem_spatial_kernel",
                    "stem_spatial_stride", "stem_pool", "stage_widths",
                    "blocks_per_stage"});
    get(f, "stem_temporal_kernel", cfg.frontend.stem_temporal_kernel);
    get(f, "stem_spatial_kernel", cfg.frontend.stem_spatial_kernel);
    get(f, "stem_spatial_stride", cfg.frontend.stem_spatial_stride);
    get(f, "stem_pool", cfg.frontend.stem_pool);
    get(f, "stage_widths", cfg.frontend.stage_widths);
    get(f, "blocks_per_stage", cfg.frontend.blocks_per_stage);
  }

  if (j.contains("tcn")) {
    const auto& t = j.at("tcn");
    reject_unknown(t, "tcn",
                   {"num_blocks", "branch_kernel_sizes", "channels",
                    "dropout_rate", "causal"});
    get(t, "num_blocks", cfg.tcn.num_blocks);
    get(t, "branch_kernel_sizes", cfg.tcn.branch_kernel_sizes);
    get(t, "channels", cfg.tcn.channels);
    get(t, "dropout_rate", cfg.tcn.dropout_rate);
    get(t, "causal", cfg.tcn.causal);
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t, "train",
                   {"epochs", "lr_max", "lr_min", "weight_decay", "batch_size",
                    "variable_length", "crop_h", "crop_w", "flip_prob",
                    "record_wall_time", "hard_pretrain"});
    get(t, "epochs", cfg.train.epochs);
    get(t, "lr_max", cfg.train.lr_max);
    get(t, "lr_min", cfg.train.lr_min);
    get(t, "weight_decay", cfg.train.weight_decay);
    get(t, "batch_size", cfg.train.batch_size);
    get(t, "variable_length", cfg.train.variable_length);
    get(t, "crop_h", cfg.train.crop_h);
    get(t, "crop_w", cfg.train.crop_w);
    get(t, "flip_prob", cfg.train.flip_prob);
    get(t, "record_wall_time", cfg.train.record_wall_time);
    if (t.contains("hard_pretrain") && !t.at("hard_pretrain").is_null()) {
      const auto& h = t.at("hard_pretrain");
      reject_unknown(h, "train.hard_pretrain",
                     {"fraction", "epochs", "pilot_epochs"});
      HardPretrainConfig hp;
      get(h, "fraction", hp.fraction);
      get(h, "epochs", hp.epochs);
      get(h, "pilot_epochs", hp.pilot_epochs);
      cfg.train.hard_pretrain = hp;
    }
  }

  cfg.data.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config parse error in " + path.string() +
                                ": " + e.what());
  }
  return parse_run_config(j);
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["data"] = {{"num_classes", cfg.data.num_classes},
               {"canonical_length", cfg.data.canonical_length},
               {"frame_h", cfg.data.frame_h},
               {"frame_w", cfg.data.frame_w},
               {"pattern_min", cfg.data.pattern_min},
               {"pattern_max", cfg.data.pattern_max},
               {"train_size", cfg.data.train_size},
               {"val_size", cfg.data.val_size},
               {"test_size", cfg.data.test_size},
               {"distractor_amplitude", cfg.data.distractor_amplitude}};
  j["frontend"] = {{"stem_temporal_kernel", cfg.frontend.stem_temporal_kernel},
                   {"stem_spatial_kernel", cfg.frontend.stem_spatial_kernel},
                   {"stem_spatial_stride", cfg.frontend.stem_spatial_stride},
                   {"stem_pool", cfg.frontend.stem_pool},
                   {"stage_widths", cfg.frontend.stage_widths},
                   {"blocks_per_stage", cfg.frontend.blocks_per_stage}};
  j["tcn"] = {{"num_blocks", cfg.tcn.num_blocks},
              {"branch_kernel_sizes", cfg.tcn.branch_kernel_sizes},
              {"channels", cfg.tcn.channels},
              {"dropout_rate", cfg.tcn.dropout_rate},
              {"causal", cfg.tcn.causal}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"lr_max", cfg.train.lr_max},
                {"lr_min", cfg.train.lr_min},
                {"weight_decay", cfg.train.weight_decay},
                {"batch_size", cfg.train.batch_size},
                {"variable_length", cfg.train.variable_length},
                {"crop_h", cfg.train.crop_h},
                {"crop_w", cfg.train.crop_w},
                {"flip_prob", cfg.train.flip_prob},
                {"record_wall_time", cfg.train.record_wall_time}};
  if (cfg.train.hard_pretrain) {
    j["train"]["hard_pretrain"] = {
        {"fraction", cfg.train.hard_pretrain->fraction},
        {"epochs", cfg.train.hard_pretrain->epochs},
        {"pilot_epochs", cfg.train.hard_pretrain->pilot_epochs}};
  }
  return j;
}

}  // namespace mstcn
