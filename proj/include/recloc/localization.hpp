// SPDX-License-Identifier: Apache-2.0
//
// Temporal localization of actions within scored person tracks.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "recloc/errors.hpp"
#include "recloc/model.hpp"
#include "recloc/track_model.hpp"

namespace recloc {

struct LocalizationConfig {
  double threshold = 0.1;
  int median_window = 25;
  double nms_overlap = 0.2;
  int top_k = 40;

  void validate() const {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must be in (0,1)");
    if (median_window < 1 || median_window % 2 == 0) {
      throw ConfigError("median_window must be odd and >= 1");
    }
    if (!(nms_overlap >= 0.0 && nms_overlap <= 1.0)) {
      throw ConfigError("nms_overlap must be in [0,1]");
    }
    if (top_k < 1) throw ConfigError("top_k must be >= 1");
  }
};

struct ViterbiConfig {
  double smoothness = 5.0;  // cost of each label switch
  double floor = 1e-6;      // scores clamped to [floor, 1 - floor] before logs
};

// Sliding median with the window truncated at the sequence ends. For an
// even number of samples the lower middle value is used.
inline std::vector<double> median_filter(std::span<const double> s, int window) {
  if (window < 1 || window % 2 == 0) throw ConfigError("median window must be odd and >= 1");
  const auto n = static_cast<std::ptrdiff_t>(s.size());
  const std::ptrdiff_t half = window / 2;
  std::vector<double> out(s.size());
  std::vector<double> buf;
  buf.reserve(static_cast<std::size_t>(window));
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const auto lo = std::max<std::ptrdiff_t>(0, t - half);
    const auto hi = std::min<std::ptrdiff_t>(n - 1, t + half);
    buf.assign(s.begin() + lo, s.begin() + hi + 1);
    const auto mid = static_cast<std::ptrdiff_t>((buf.size() - 1) / 2);
    std::nth_element(buf.begin(), buf.begin() + mid, buf.end());
    out[static_cast<std::size_t>(t)] = buf[static_cast<std::size_t>(mid)];
  }
  return out;
}

// Maximal runs of consecutive indices with s[t] >= threshold, as
// 0-based inclusive intervals.
inline std::vector<FrameInterval> threshold_segment(std::span<const double> s, double threshold) {
  std::vector<FrameInterval> runs;
  int start = -1;
  for (std::size_t t = 0; t < s.size(); ++t) {
    if (s[t] >= threshold) {
      if (start < 0) start = static_cast<int>(t);
    } else if (start >= 0) {
      runs.push_back({start, static_cast<int>(t) - 1});
      start = -1;
    }
  }
  if (start >= 0) runs.push_back({start, static_cast<int>(s.size()) - 1});
  return runs;
}

// Mean of the min(top_k, n) largest scores.
inline double score_subtrack(std::span<const double> scores, int top_k) {
  if (scores.empty()) throw InputError("score_subtrack: empty interval");
  if (top_k < 1) throw InputError("score_subtrack: top_k must be >= 1");
  std::vector<double> v(scores.begin(), scores.end());
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(top_k), v.size());
  std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end(),
                    std::greater<>());
  return std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), 0.0) /
         static_cast<double>(k);
}

// Ranking order shared by NMS and matching: score descending, then earlier
// start, then longer duration.
inline bool detection_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start_frame != b.start_frame) return a.start_frame < b.start_frame;
  return a.length() > b.length();
}

// Greedy spatio-temporal NMS: keep the best remaining detection, drop every
// remaining one whose ST-IoU with it exceeds `overlap`. Callers group by
// (video, class).
inline std::vector<Detection> st_nms(std::vector<Detection> dets, double overlap) {
  std::stable_sort(dets.begin(), dets.end(), detection_before);
  std::vector<Detection> kept;
  std::vector<bool> removed(dets.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (removed[i]) continue;
    kept.push_back(dets[i]);
    for (std::size_t j = i + 1; j < dets.size(); ++j) {
      if (!removed[j] && st_iou(dets[i], dets[j]) > overlap) removed[j] = true;
    }
  }
  return kept;
}

inline Detection make_detection(const PersonTrack& track, const FrameInterval& local,
                                int class_id, double score) {
  Detection d;
  d.video_id = track.video_id;
  d.track_id = track.track_id;
  d.class_id = class_id;
  d.score = score;
  d.start_frame = track.start_frame + local.start;
  d.boxes.assign(track.boxes.begin() + local.start, track.boxes.begin() + local.end + 1);
  return d;
}

// Median-filter the class column, threshold it, and turn each run into a
// detection scored from the raw (unfiltered) scores.
inline std::vector<Detection> localize(const PersonTrack& track, const ScoreSequence& scores,
                                       int class_id, const LocalizationConfig& cfg) {
  cfg.validate();
  if (scores.length() != track.length()) {
    throw InputError("localize: score rows do not match track length for " + track.track_id);
  }
  if (class_id < 1 || class_id >= scores.rows.cols()) throw InputError("localize: bad class id");
  const Eigen::VectorXd col = scores.class_scores(class_id);
  const std::span<const double> raw(col.data(), static_cast<std::size_t>(col.size()));
  const auto smooth = median_filter(raw, cfg.median_window);
  std::vector<Detection> out;
  for (const auto& iv : threshold_segment(smooth, cfg.threshold)) {
    const double r = score_subtrack(raw.subspan(static_cast<std::size_t>(iv.start),
                                                static_cast<std::size_t>(iv.length())),
                                    cfg.top_k);
    out.push_back(make_detection(track, iv, class_id, r));
  }
  return out;
}

// Exact MAP binary labelling of
//   sum_t [y_t log s_t + (1 - y_t) log(1 - s_t)] - smoothness * #{t : y_t != y_{t+1}}
// by dynamic programming; returns the runs of y = 1. Ties favour y = 1.
inline std::vector<FrameInterval> viterbi_segment(std::span<const double> s,
                                                  const ViterbiConfig& cfg) {
  const std::size_t T = s.size();
  if (T == 0) return {};
  auto unary = [&](std::size_t t, int y) {
    const double p = std::clamp(s[t], cfg.floor, 1.0 - cfg.floor);
    return y == 1 ? std::log(p) : std::log(1.0 - p);
  };
  std::vector<std::array<double, 2>> best(T);
  std::vector<std::array<int, 2>> from(T);
  best[0] = {unary(0, 0), unary(0, 1)};
  for (std::size_t t = 1; t < T; ++t) {
    for (int y = 0; y < 2; ++y) {
      const double stay = best[t - 1][y];
      const double flip = best[t - 1][1 - y] - cfg.smoothness;
      // On ties prefer the predecessor labelled 1.
      const bool take_flip = y == 1 ? flip > stay : flip >= stay;
      from[t][y] = take_flip ? 1 - y : y;
      best[t][y] = (take_flip ? flip : stay) + unary(t, y);
    }
  }
  std::vector<double> labels(T);
  int y = best[T - 1][1] >= best[T - 1][0] ? 1 : 0;
  for (std::size_t t = T; t-- > 0;) {
    labels[t] = y;
    if (t > 0) y = from[t][y];
  }
  return threshold_segment(labels, 0.5);
}

// Viterbi counterpart of localize(): same detection scoring, no median
// filter.
inline std::vector<Detection> localize_viterbi(const PersonTrack& track, const ScoreSequence& scores,
                                               int class_id, const ViterbiConfig& vcfg,
                                               int top_k) {
  if (scores.length() != track.length()) throw InputError("localize_viterbi: length mismatch");
  const Eigen::VectorXd col = scores.class_scores(class_id);
  const std::span<const double> raw(col.data(), static_cast<std::size_t>(col.size()));
  std::vector<Detection> out;
  for (const auto& iv : viterbi_segment(raw, vcfg)) {
    const double r = score_subtrack(raw.subspan(static_cast<std::size_t>(iv.start),
                                                static_cast<std::size_t>(iv.length())),
                                    top_k);
    out.push_back(make_detection(track, iv, class_id, r));
  }
  return out;
}

}  // namespace recloc
