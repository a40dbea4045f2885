// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic benchmarks: videos with person tracks, planted
// action segments (the ground truth) and two-stream Gaussian features whose
// onsets are jittered relative to the labels.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "recloc/errors.hpp"
#include "recloc/track_model.hpp"

namespace recloc {

struct SyntheticSpec {
  int n_videos = 16;
  int frames_per_video = 160;
  int num_classes = 3;
  int tracks_per_video = 2;
  int min_segments = 1;
  int max_segments = 2;
  int min_segment_length = 20;
  int max_segment_length = 45;
  int min_gap = 15;
  int feature_dim = 8;
  // Class means are N(0, mean_scale^2 I) per stream, drawn from `seed`.
  double mean_scale = 1.0;
  double noise_sigma = 2.5;
  int jitter = 3;
  // Scales every class mean's offset from the background mean, per stream.
  std::array<double, kNumStreams> stream_weight = {1.0, 1.0};
  // Per stream, per class (index 0 unused): extra offset scaling. Empty
  // means all ones.
  std::array<std::vector<double>, kNumStreams> class_weight;
  double gt_box_noise = 1.0;
  double box_step = 1.0;
  double frame_width = 320.0;
  double frame_height = 240.0;
  std::uint64_t seed = 1;

  double class_weight_at(int stream, int c) const {
    const auto& w = class_weight[static_cast<std::size_t>(stream)];
    return w.empty() ? 1.0 : w.at(static_cast<std::size_t>(c));
  }

  void validate() const {
    if (n_videos < 1 || frames_per_video < 1 || tracks_per_video < 1) {
      throw ConfigError("synthetic: videos, frames and tracks must be >= 1");
    }
    if (num_classes < 1) throw ConfigError("synthetic: need at least one class");
    if (!(noise_sigma > 0.0)) throw ConfigError("synthetic: noise_sigma must be > 0");
    if (min_segment_length < 1 || max_segment_length < min_segment_length) {
      throw ConfigError("synthetic: segment lengths must satisfy 1 <= min <= max");
    }
    if (min_segments < 0 || max_segments < min_segments) {
      throw ConfigError("synthetic: segment counts must satisfy 0 <= min <= max");
    }
    if (min_gap < 0 || jitter < 0 || feature_dim < 1) {
      throw ConfigError("synthetic: gap, jitter and feature_dim must be non-negative/positive");
    }
    const long need = static_cast<long>(max_segments) * min_segment_length +
                      static_cast<long>(std::max(0, max_segments - 1)) * min_gap;
    if (need > frames_per_video) {
      throw ConfigError("synthetic: segments cannot be packed into " +
                        std::to_string(frames_per_video) + " frames");
    }
    for (int s = 0; s < kNumStreams; ++s) {
      const auto& w = class_weight[static_cast<std::size_t>(s)];
      if (!w.empty() && static_cast<int>(w.size()) != num_classes + 1) {
        throw ConfigError("synthetic: class_weight needs num_classes + 1 entries");
      }
    }
    if (tracks_per_video * 40.0 > frame_width) {
      throw ConfigError("synthetic: frame too narrow for the requested number of tracks");
    }
  }
};

// Each stream informs only its own classes: odd classes go to appearance,
// even classes to flow. `factor` in [0,1] shrinks the other classes'
// offsets toward background (1 removes them entirely).
inline SyntheticSpec make_stream_asymmetric(const SyntheticSpec& spec, double factor = 1.0) {
  if (spec.num_classes < 2) throw ConfigError("stream asymmetry needs at least two classes");
  if (factor == 0.0) return spec;
  SyntheticSpec out = spec;
  for (int s = 0; s < kNumStreams; ++s) {
    auto& w = out.class_weight[static_cast<std::size_t>(s)];
    if (w.empty()) w.assign(static_cast<std::size_t>(spec.num_classes + 1), 1.0);
    for (int c = 1; c <= spec.num_classes; ++c) {
      const int owner = (c % 2 == 1) ? 0 : 1;
      if (owner != s) w[static_cast<std::size_t>(c)] *= 1.0 - factor;
    }
  }
  return out;
}

struct SyntheticDataset {
  std::vector<PersonTrack> tracks;
  std::vector<GroundTruthInstance> gts;
  std::vector<std::vector<int>> labels;      // per track, from assign_frame_labels
  std::vector<std::vector<int>> feature_labels;  // per track, jittered class driving features
  std::map<std::string, int> video_lengths;
};

// Effective per-class means, [stream][class] (class 0 = background).
inline std::array<std::vector<Eigen::VectorXd>, kNumStreams> class_means(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ull + 0x5EEDull);
  std::normal_distribution<double> normal(0.0, spec.mean_scale);
  std::array<std::vector<Eigen::VectorXd>, kNumStreams> means;
  for (int s = 0; s < kNumStreams; ++s) {
    auto& m = means[static_cast<std::size_t>(s)];
    for (int c = 0; c <= spec.num_classes; ++c) {
      Eigen::VectorXd v(spec.feature_dim);
      for (int d = 0; d < spec.feature_dim; ++d) v[d] = normal(rng);
      m.push_back(v);
    }
    for (int c = 1; c <= spec.num_classes; ++c) {
      const double w = spec.stream_weight[static_cast<std::size_t>(s)] * spec.class_weight_at(s, c);
      m[static_cast<std::size_t>(c)] = m[0] + w * (m[static_cast<std::size_t>(c)] - m[0]);
    }
  }
  return means;
}

namespace detail {

inline double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

// Non-overlapping segments (0-based, inclusive) with at least min_gap frames
// between them.
inline std::vector<FrameInterval> plant_segments(const SyntheticSpec& spec, std::mt19937_64& rng) {
  const int F = spec.frames_per_video;
  std::uniform_int_distribution<int> count_dist(spec.min_segments, spec.max_segments);
  std::uniform_int_distribution<int> len_dist(spec.min_segment_length, spec.max_segment_length);
  const int n = count_dist(rng);
  if (n == 0) return {};
  std::vector<int> lens(static_cast<std::size_t>(n));
  for (auto& l : lens) l = len_dist(rng);
  auto used = [&] {
    int u = (n - 1) * spec.min_gap;
    for (int l : lens) u += l;
    return u;
  };
  // Shrink the longest segment until everything fits.
  while (used() > F) {
    auto it = std::max_element(lens.begin(), lens.end());
    --*it;
  }
  const int slack = F - used();
  // Split the slack over n + 1 gaps via sorted cut points.
  std::uniform_int_distribution<int> cut_dist(0, slack);
  std::vector<int> cuts(static_cast<std::size_t>(n));
  for (auto& c : cuts) c = cut_dist(rng);
  std::sort(cuts.begin(), cuts.end());
  std::vector<FrameInterval> segs;
  int pos = 0;
  int prev_cut = 0;
  for (int i = 0; i < n; ++i) {
    pos += cuts[static_cast<std::size_t>(i)] - prev_cut;
    prev_cut = cuts[static_cast<std::size_t>(i)];
    segs.push_back({pos, pos + lens[static_cast<std::size_t>(i)] - 1});
    pos += lens[static_cast<std::size_t>(i)] + spec.min_gap;
  }
  return segs;
}

}  // namespace detail

// split 0 and 1 share the signal model (class means) but draw independent
// videos; use them as train and test sets.
inline SyntheticDataset generate(const SyntheticSpec& spec, int split = 0) {
  spec.validate();
  const auto means = class_means(spec);
  {
    // Class means must be distinct in the concatenated two-stream space.
    for (int a = 0; a <= spec.num_classes; ++a) {
      for (int b = a + 1; b <= spec.num_classes; ++b) {
        double d = 0.0;
        for (int s = 0; s < kNumStreams; ++s) {
          d += (means[s][static_cast<std::size_t>(a)] - means[s][static_cast<std::size_t>(b)])
                   .squaredNorm();
        }
        if (d == 0.0) throw ConfigError("synthetic: class means are not distinct");
      }
    }
  }

  std::mt19937_64 rng(spec.seed * 0xBF58476D1CE4E5B9ull + static_cast<std::uint64_t>(split) * 0x94D049BB133111EBull + 17u);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> class_dist(1, spec.num_classes);
  std::uniform_int_distribution<int> jitter_dist(-spec.jitter, spec.jitter);

  SyntheticDataset ds;
  const int F = spec.frames_per_video;
  const double lane = spec.frame_width / spec.tracks_per_video;
  const std::string prefix = split == 0 ? "train" : (split == 1 ? "test" : "split" + std::to_string(split));

  for (int v = 0; v < spec.n_videos; ++v) {
    char vbuf[64];
    std::snprintf(vbuf, sizeof vbuf, "%s_v%03d", prefix.c_str(), v);
    const std::string video_id = vbuf;
    ds.video_lengths[video_id] = F;
    std::vector<GroundTruthInstance> video_gts;
    std::vector<std::vector<int>> video_feat_labels;
    const std::size_t first_track = ds.tracks.size();

    for (int k = 0; k < spec.tracks_per_video; ++k) {
      PersonTrack tr;
      tr.video_id = video_id;
      tr.track_id = video_id + "_t" + std::to_string(k);
      tr.start_frame = 0;
      const double w = std::min(lane - 20.0, 40.0 + 20.0 * unit(rng));
      const double h = std::min(spec.frame_height - 20.0, 80.0 + 40.0 * unit(rng));
      const double lane_lo = k * lane + w / 2 + 5.0;
      const double lane_hi = (k + 1) * lane - w / 2 - 5.0;
      double cx = (lane_lo + lane_hi) / 2;
      double cy = spec.frame_height / 2;
      const double y_lo = h / 2 + 2.0;
      const double y_hi = spec.frame_height - h / 2 - 2.0;
      for (int f = 0; f < F; ++f) {
        if (f > 0) {
          cx = std::clamp(cx + spec.box_step * normal(rng), lane_lo, std::max(lane_lo, lane_hi));
          cy = std::clamp(cy + spec.box_step * normal(rng), y_lo, std::max(y_lo, y_hi));
        }
        tr.boxes.push_back({detail::quantize(cx - w / 2), detail::quantize(cy - h / 2),
                            detail::quantize(cx + w / 2), detail::quantize(cy + h / 2)});
      }

      std::vector<int> feat_label(static_cast<std::size_t>(F), 0);
      for (const auto& seg : detail::plant_segments(spec, rng)) {
        GroundTruthInstance gt;
        gt.video_id = video_id;
        gt.class_id = class_dist(rng);
        gt.start_frame = seg.start;
        for (int f = seg.start; f <= seg.end; ++f) {
          const auto& b = tr.boxes[static_cast<std::size_t>(f)];
          auto jig = [&] { return spec.gt_box_noise * (2.0 * unit(rng) - 1.0); };
          gt.boxes.push_back({detail::quantize(b.x1 + jig()), detail::quantize(b.y1 + jig()),
                              detail::quantize(b.x2 + jig()), detail::quantize(b.y2 + jig())});
        }
        const int on = std::clamp(seg.start + jitter_dist(rng), 0, F - 1);
        const int off = std::clamp(seg.end + jitter_dist(rng), on, F - 1);
        for (int f = on; f <= off; ++f) feat_label[static_cast<std::size_t>(f)] = gt.class_id;
        video_gts.push_back(std::move(gt));
      }

      for (int s = 0; s < kNumStreams; ++s) {
        Eigen::MatrixXd feats(F, spec.feature_dim);
        for (int f = 0; f < F; ++f) {
          const auto& mu = means[s][static_cast<std::size_t>(feat_label[static_cast<std::size_t>(f)])];
          for (int d = 0; d < spec.feature_dim; ++d) {
            feats(f, d) = detail::quantize(mu[d] + spec.noise_sigma * normal(rng));
          }
        }
        tr.features[static_cast<std::size_t>(s)] = std::move(feats);
      }
      ds.tracks.push_back(std::move(tr));
      video_feat_labels.push_back(std::move(feat_label));
    }

    for (std::size_t i = first_track; i < ds.tracks.size(); ++i) {
      ds.labels.push_back(assign_frame_labels(ds.tracks[i], video_gts));
    }
    for (auto& fl : video_feat_labels) ds.feature_labels.push_back(std::move(fl));
    for (auto& g : video_gts) ds.gts.push_back(std::move(g));
  }
  return ds;
}

}  // namespace recloc
