// SPDX-License-Identifier: Apache-2.0
//
// Glue between the modules: scoring many tracks, per-track localization and
// per-(video, class) NMS.
#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "recloc/localization.hpp"
#include "recloc/model.hpp"
#include "recloc/parallel.hpp"
#include "recloc/track_model.hpp"
#include "recloc/train.hpp"

namespace recloc {

inline std::vector<TrainingExample> make_examples(const std::vector<PersonTrack>& tracks,
                                                  const std::vector<std::vector<int>>& labels) {
  if (tracks.size() != labels.size()) throw InputError("make_examples: labels per track required");
  std::vector<TrainingExample> out;
  out.reserve(tracks.size());
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (labels[i].size() != tracks[i].boxes.size()) {
      throw InputError("make_examples: label count mismatch for " + tracks[i].track_id);
    }
    out.push_back({tracks[i].track_id, tracks[i].features, labels[i]});
  }
  return out;
}

inline std::vector<TrainingExample> make_examples(const std::vector<PersonTrack>& tracks,
                                                  const std::vector<GroundTruthInstance>& gts) {
  std::vector<std::vector<int>> labels;
  for (const auto& t : tracks) labels.push_back(assign_frame_labels(t, gts));
  return make_examples(tracks, labels);
}

inline std::vector<ScoreSequence> score_tracks(const ModelParams& m,
                                               const std::vector<PersonTrack>& tracks,
                                               int jobs = 1) {
  std::vector<ScoreSequence> out(tracks.size());
  parallel_for(tracks.size(), jobs, [&](std::size_t i) {
    out[i] = forward(m, tracks[i].features);
    out[i].track_id = tracks[i].track_id;
  });
  return out;
}

// Every frame gets 1/(C+1) for every class: the untrained reference scorer.
inline std::vector<ScoreSequence> uniform_scores(const std::vector<PersonTrack>& tracks,
                                                 int num_classes) {
  std::vector<ScoreSequence> out;
  for (const auto& t : tracks) {
    out.push_back({t.track_id, Eigen::MatrixXd::Constant(t.length(), num_classes + 1,
                                                         1.0 / (num_classes + 1))});
  }
  return out;
}

// NMS within every (video, class) group; output ordered by video, class,
// then rank.
inline std::vector<Detection> nms_per_group(const std::vector<Detection>& dets, double overlap) {
  std::map<std::pair<std::string, int>, std::vector<Detection>> groups;
  for (const auto& d : dets) groups[{d.video_id, d.class_id}].push_back(d);
  std::vector<Detection> out;
  for (auto& [key, group] : groups) {
    for (auto& d : st_nms(std::move(group), overlap)) out.push_back(std::move(d));
  }
  return out;
}

enum class TemporalMethod { kThreshold, kViterbi };

struct DetectConfig {
  LocalizationConfig loc;
  TemporalMethod method = TemporalMethod::kThreshold;
  ViterbiConfig viterbi;
};

// Localizes every class 1..C on every track, then applies NMS.
inline std::vector<Detection> detect(const std::vector<PersonTrack>& tracks,
                                     const std::vector<ScoreSequence>& scores, int num_classes,
                                     const DetectConfig& cfg) {
  if (tracks.size() != scores.size()) throw InputError("detect: one score sequence per track");
  std::vector<Detection> all;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    for (int c = 1; c <= num_classes; ++c) {
      auto dets = cfg.method == TemporalMethod::kThreshold
                      ? localize(tracks[i], scores[i], c, cfg.loc)
                      : localize_viterbi(tracks[i], scores[i], c, cfg.viterbi, cfg.loc.top_k);
      for (auto& d : dets) all.push_back(std::move(d));
    }
  }
  return nms_per_group(all, cfg.loc.nms_overlap);
}

}  // namespace recloc
