#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mstcn/rng.hpp"
#include "mstcn/tensor.hpp"

namespace mstcn {

// One grayscale clip. frames is T*H*W row-major, values in [0,1]. The class
// pattern occupies the half-open frame range [s, e).
struct SequenceSample {
  std::vector<float> frames;
  std::int64_t T = 0, H = 0, W = 0;
  std::int64_t label = 0;
  std::int64_t s = 0, e = 0;  // target interval

  float at(std::int64_t t, std::int64_t y, std::int64_t x) const {
    return frames[(t * H + y) * W + x];
  }
  float& at(std::int64_t t, std::int64_t y, std::int64_t x) {
    return frames[(t * H + y) * W + x];
  }

  void validate() const {
    if (static_cast<std::int64_t>(frames.size()) != T * H * W)
      throw std::invalid_argument("sample frame buffer size mismatch");
    if (!(0 <= s && s < e && e <= T))
      throw std::invalid_argument("sample target interval invalid");
  }
};

struct SynthConfig {
  std::int64_t num_classes = 10;
  std::int64_t canonical_length = 29;
  std::int64_t frame_h = 32, frame_w = 32;
  std::int64_t pattern_min = 9, pattern_max = 15;
  std::int64_t train_size = 500, val_size = 100, test_size = 100;
  // Brightness of the pre/post context motion relative to the target's 1.0.
  // At 1.0 the target is locatable only through its position in the clip.
  double distractor_amplitude = 0.35;
  std::uint64_t seed = 0;

  // Class signatures are (direction, speed) pairs of a moving blob; 8
  // directions x 2 speeds gives 16 distinguishable classes.
  static constexpr std::int64_t kNumAngles = 8;
  static constexpr std::int64_t kNumSpeeds = 2;
  static constexpr std::int64_t capacity() { return kNumAngles * kNumSpeeds; }

  void validate() const {
    if (num_classes <= 0) throw std::invalid_argument("num_classes must be positive");
    if (num_classes > capacity())
      throw std::invalid_argument(
          "num_classes " + std::to_string(num_classes) +
          " exceeds the " + std::to_string(capacity()) +
          " distinguishable signatures");
    if (canonical_length <= 0 || frame_h <= 0 || frame_w <= 0)
      throw std::invalid_argument("sizes must be positive");
    if (pattern_min <= 0 || pattern_max < pattern_min ||
        pattern_max > canonical_length)
      throw std::invalid_argument("pattern duration range invalid");
    if (train_size <= 0 || val_size <= 0 || test_size <= 0)
      throw std::invalid_argument("split sizes must be positive");
    if (distractor_amplitude < 0.0 || distractor_amplitude > 1.0)
      throw std::invalid_argument("distractor_amplitude must be in [0,1]");
  }
};

struct Dataset {
  std::vector<SequenceSample> train, val, test;
};

namespace detail {

inline void render_blob(SequenceSample& sample, std::int64_t t, double cx,
                        double cy, double sigma, double amplitude) {
  const std::int64_t r = static_cast<std::int64_t>(std::ceil(3 * sigma));
  const std::int64_t x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(cx) - r);
  const std::int64_t x1 = std::min(sample.W - 1, static_cast<std::int64_t>(cx) + r);
  const std::int64_t y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(cy) - r);
  const std::int64_t y1 = std::min(sample.H - 1, static_cast<std::int64_t>(cy) + r);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (std::int64_t y = y0; y <= y1; ++y)
    for (std::int64_t x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double v = amplitude * std::exp(-(dx * dx + dy * dy) * inv2s2);
      float& px = sample.at(t, y, x);
      px = std::min(1.0f, px + static_cast<float>(v));
    }
}

// Draw a straight-line blob trajectory over frames [t0, t1) with the given
// angle and per-frame speed, jittered so the path stays inside the frame.
inline void render_trajectory(SequenceSample& sample, std::int64_t t0,
                              std::int64_t t1, double angle, double speed,
                              Rng& rng, double amplitude) {
  const double len = static_cast<double>(t1 - t0 - 1);
  const double dirx = std::cos(angle), diry = std::sin(angle);
  const double span_x = std::abs(dirx) * speed * len;
  const double span_y = std::abs(diry) * speed * len;
  const double margin = 2.5;
  const double lo_x = margin + std::max(0.0, -dirx) * speed * len;
  const double hi_x = sample.W - 1 - margin - std::max(0.0, dirx) * speed * len;
  const double lo_y = margin + std::max(0.0, -diry) * speed * len;
  const double hi_y = sample.H - 1 - margin - std::max(0.0, diry) * speed * len;
  // Start point uniform over the admissible box (center if degenerate).
  const double sx = lo_x < hi_x ? rng.uniform(lo_x, hi_x)
                                : (sample.W - 1 - span_x * dirx) / 2.0;
  const double sy = lo_y < hi_y ? rng.uniform(lo_y, hi_y)
                                : (sample.H - 1 - span_y * diry) / 2.0;
  for (std::int64_t t = t0; t < t1; ++t) {
    const double d = static_cast<double>(t - t0);
    render_blob(sample, t, sx + dirx * speed * d, sy + diry * speed * d, 1.6,
                amplitude);
  }
}

inline SequenceSample synth_sample(const SynthConfig& cfg, std::int64_t label,
                                   Rng& rng) {
  SequenceSample sample;
  sample.T = cfg.canonical_length;
  sample.H = cfg.frame_h;
  sample.W = cfg.frame_w;
  sample.label = label;
  sample.frames.assign(sample.T * sample.H * sample.W, 0.0f);

  // Target interval: random duration, centered (floor rounding).
  const std::int64_t dur =
      cfg.pattern_min +
      static_cast<std::int64_t>(rng.uniform_int(cfg.pattern_max - cfg.pattern_min + 1));
  sample.s = (sample.T - dur) / 2;
  sample.e = sample.s + dur;

  // Class signature: direction x speed. Opposite directions share the same
  // point set, so the class is only decidable from the temporal order.
  const std::int64_t angle_idx = label % SynthConfig::kNumAngles;
  const std::int64_t speed_idx = label / SynthConfig::kNumAngles;
  const double angle = 2.0 * 3.14159265358979323846 * angle_idx /
                       SynthConfig::kNumAngles;
  const double base = std::min(sample.H, sample.W) / 40.0;
  const double speed = base * (speed_idx == 0 ? 1.0 : 2.2);
  render_trajectory(sample, sample.s, sample.e, angle, speed, rng, 1.0);

  // Class-independent distractor motion before and after the target. Kept
  // dimmer than the target by default so the class evidence stays locatable
  // without positional cues (the pre/post context is distracting, not
  // contradictory); at amplitude 1.0 only the clip layout tells them apart.
  auto distract = [&](std::int64_t t0, std::int64_t t1) {
    if (t1 - t0 < 2) return;
    const double a = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double v = base * rng.uniform(0.6, 2.6);
    render_trajectory(sample, t0, t1, a, v, rng, cfg.distractor_amplitude);
  };
  distract(0, sample.s);
  distract(sample.e, sample.T);

  // Mild per-pixel noise.
  for (auto& px : sample.frames) {
    px += static_cast<float>(rng.uniform(0.0, 0.05));
    px = std::min(1.0f, std::max(0.0f, px));
  }
  return sample;
}

}  // namespace detail

// Deterministic synthetic dataset; every sample derives its own sub-stream
// from (seed, split, index) so generation order is irrelevant.
inline Dataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  auto gen_split = [&](const char* name, std::int64_t n,
                       std::vector<SequenceSample>& out) {
    out.reserve(n);
    for (std::int64_t i = 0; i < n; ++i) {
      Rng rng = Rng::stream(cfg.seed, name, static_cast<std::uint64_t>(i));
      out.push_back(detail::synth_sample(cfg, i % cfg.num_classes, rng));
    }
  };
  gen_split("synth/train", cfg.train_size, ds.train);
  gen_split("synth/val", cfg.val_size, ds.val);
  gen_split("synth/test", cfg.test_size, ds.test);
  return ds;
}

// ---------------------------------------------------------------------------
// Augmentations
// ---------------------------------------------------------------------------

// Random temporal crop at a point before and after the target boundaries.
// Start uniform on [0, s], end uniform on [e, T]; target frames survive
// untouched.
inline SequenceSample variable_length_crop(const SequenceSample& in, Rng& rng) {
  in.validate();
  const std::int64_t new_start =
      static_cast<std::int64_t>(rng.uniform_int(in.s + 1));
  const std::int64_t new_end =
      in.e + static_cast<std::int64_t>(rng.uniform_int(in.T - in.e + 1));
  SequenceSample out;
  out.T = new_end - new_start;
  out.H = in.H;
  out.W = in.W;
  out.label = in.label;
  out.s = in.s - new_start;
  out.e = in.e - new_start;
  const std::int64_t fsz = in.H * in.W;
  out.frames.assign(in.frames.begin() + new_start * fsz,
                    in.frames.begin() + new_end * fsz);
  return out;
}

// Remove N distinct frames chosen uniformly without replacement, preserving
// the order of the survivors.
inline SequenceSample random_frame_drop(const SequenceSample& in,
                                        std::int64_t n, Rng& rng) {
  if (n < 0 || n >= in.T)
    throw std::invalid_argument("random_frame_drop: N=" + std::to_string(n) +
                                " out of range for T=" + std::to_string(in.T));
  if (n == 0) return in;
  std::vector<std::int64_t> idx(in.T);
  for (std::int64_t i = 0; i < in.T; ++i) idx[i] = i;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t j =
        i + static_cast<std::int64_t>(rng.uniform_int(in.T - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<bool> dropped(in.T, false);
  for (std::int64_t i = 0; i < n; ++i) dropped[idx[i]] = true;

  SequenceSample out;
  out.T = in.T - n;
  out.H = in.H;
  out.W = in.W;
  out.label = in.label;
  const std::int64_t fsz = in.H * in.W;
  out.frames.reserve(out.T * fsz);
  std::int64_t new_s = 0, new_e = 0;
  for (std::int64_t t = 0; t < in.T; ++t) {
    if (t < in.s && !dropped[t]) ++new_s;
    if (t < in.e && !dropped[t]) ++new_e;
    if (!dropped[t])
      out.frames.insert(out.frames.end(), in.frames.begin() + t * fsz,
                        in.frames.begin() + (t + 1) * fsz);
  }
  // Keep the interval non-empty even if every target frame was dropped.
  if (new_s == new_e) {
    if (new_e < out.T) ++new_e;
    else --new_s;
  }
  out.s = new_s;
  out.e = new_e;
  return out;
}

// One crop offset and one flip decision per clip, applied to every frame.
// Eval mode uses the center crop and never flips.
inline SequenceSample spatial_augment(const SequenceSample& in,
                                      std::int64_t crop_h, std::int64_t crop_w,
                                      double flip_prob, bool train, Rng& rng) {
  if (crop_h > in.H || crop_w > in.W)
    throw std::invalid_argument("crop " + std::to_string(crop_h) + "x" +
                                std::to_string(crop_w) + " exceeds frame " +
                                std::to_string(in.H) + "x" +
                                std::to_string(in.W));
  std::int64_t oy, ox;
  bool flip = false;
  if (train) {
    oy = static_cast<std::int64_t>(rng.uniform_int(in.H - crop_h + 1));
    ox = static_cast<std::int64_t>(rng.uniform_int(in.W - crop_w + 1));
    flip = flip_prob > 0.0 && rng.bernoulli(flip_prob);
  } else {
    oy = (in.H - crop_h) / 2;
    ox = (in.W - crop_w) / 2;
  }
  SequenceSample out;
  out.T = in.T;
  out.H = crop_h;
  out.W = crop_w;
  out.label = in.label;
  out.s = in.s;
  out.e = in.e;
  out.frames.resize(in.T * crop_h * crop_w);
  for (std::int64_t t = 0; t < in.T; ++t)
    for (std::int64_t y = 0; y < crop_h; ++y)
      for (std::int64_t x = 0; x < crop_w; ++x) {
        const std::int64_t sx = flip ? ox + crop_w - 1 - x : ox + x;
        out.at(t, y, x) = in.at(t, oy + y, sx);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

template <class Real>
struct Batch {
  Tensor<Real> frames;  // B x 1 x T_max x H x W, zero tail padding
  Tensor<Real> mask;    // B x T_max, 1 for real frames
  std::vector<std::int64_t> labels;
  std::vector<std::int64_t> lengths;
};

template <class Real>
Batch<Real> collate(const std::vector<SequenceSample>& samples,
                    std::int64_t pad_to = 0) {
  if (samples.empty()) throw std::invalid_argument("collate of empty batch");
  const std::int64_t H = samples[0].H, W = samples[0].W;
  std::int64_t t_max = 0;
  for (const auto& s : samples) {
    if (s.H != H || s.W != W)
      throw std::invalid_argument("collate: mixed frame sizes " +
                                  std::to_string(H) + "x" + std::to_string(W) +
                                  " vs " + std::to_string(s.H) + "x" +
                                  std::to_string(s.W));
    t_max = std::max(t_max, s.T);
  }
  if (pad_to > 0) {
    if (pad_to < t_max)
      throw std::invalid_argument("collate pad_to shorter than longest sample");
    t_max = pad_to;
  }
  const auto B = static_cast<std::int64_t>(samples.size());
  Batch<Real> batch;
  batch.frames = Tensor<Real>(Shape{B, 1, t_max, H, W});
  batch.mask = Tensor<Real>(Shape{B, t_max});
  for (std::int64_t b = 0; b < B; ++b) {
    const auto& s = samples[b];
    batch.labels.push_back(s.label);
    batch.lengths.push_back(s.T);
    Real* dst = batch.frames.data().data() + b * t_max * H * W;
    for (std::size_t i = 0; i < s.frames.size(); ++i)
      dst[i] = static_cast<Real>(s.frames[i]);
    Real* m = batch.mask.data().data() + b * t_max;
    for (std::int64_t t = 0; t < s.T; ++t) m[t] = Real(1);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Dataset on disk: text manifest + per-sample raw frame files
// ---------------------------------------------------------------------------

namespace io {

inline void write_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void save_sample(const std::filesystem::path& path,
                        const SequenceSample& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_u32le(os, static_cast<std::uint32_t>(s.T));
  write_u32le(os, static_cast<std::uint32_t>(s.H));
  write_u32le(os, static_cast<std::uint32_t>(s.W));
  std::vector<unsigned char> buf(s.frames.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<unsigned char>(
        std::lround(std::min(1.0f, std::max(0.0f, s.frames[i])) * 255.0f));
  os.write(reinterpret_cast<const char*>(buf.data()), buf.size());
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline SequenceSample load_sample(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  SequenceSample s;
  s.T = read_u32le(is);
  s.H = read_u32le(is);
  s.W = read_u32le(is);
  std::vector<unsigned char> buf(s.T * s.H * s.W);
  is.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!is) throw std::runtime_error("truncated sample file: " + path.string());
  s.frames.resize(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    s.frames[i] = static_cast<float>(buf[i]) / 255.0f;
  return s;
}

// Manifest line: id label length s e relpath
inline void save_split(const std::filesystem::path& dir,
                       const std::string& split,
                       const std::vector<SequenceSample>& samples) {
  std::filesystem::create_directories(dir / split);
  std::ostringstream manifest;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::string rel = split + "/" + std::to_string(i) + ".seq";
    save_sample(dir / rel, s);
    manifest << i << " " << s.label << " " << s.T << " " << s.s << " " << s.e
             << " " << rel << "\n";
  }
  std::ofstream os(dir / (split + ".manifest"));
  os << manifest.str();
  if (!os) throw std::runtime_error("cannot write manifest for " + split);
}

inline std::vector<SequenceSample> load_split(const std::filesystem::path& dir,
                                              const std::string& split) {
  std::ifstream is(dir / (split + ".manifest"));
  if (!is)
    throw std::runtime_error("missing manifest: " +
                             (dir / (split + ".manifest")).string());
  std::vector<SequenceSample> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::int64_t id, label, len, s, e;
    std::string rel;
    if (!(ls >> id >> label >> len >> s >> e >> rel))
      throw std::runtime_error("malformed manifest line: " + line);
    SequenceSample smp = load_sample(dir / rel);
    smp.label = label;
    smp.s = s;
    smp.e = e;
    if (smp.T != len)
      throw std::runtime_error("manifest length disagrees with sample file: " + rel);
    smp.validate();
    out.push_back(std::move(smp));
  }
  return out;
}

inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  save_split(dir, "train", ds.train);
  save_split(dir, "val", ds.val);
  save_split(dir, "test", ds.test);
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.train = load_split(dir, "train");
  ds.val = load_split(dir, "val");
  ds.test = load_split(dir, "test");
  return ds;
}

}  // namespace io

}  // namespace mstcn
