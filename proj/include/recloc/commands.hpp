// SPDX-License-Identifier: Apache-2.0
//
// Subcommands of the `recloc` tool. Each reads its inputs from the run
// directory layout in RunPaths and writes deterministic outputs.
#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "recloc/config.hpp"
#include "recloc/errors.hpp"
#include "recloc/evaluation.hpp"
#include "recloc/io.hpp"
#include "recloc/localization.hpp"
#include "recloc/model.hpp"
#include "recloc/pipeline.hpp"
#include "recloc/synthetic.hpp"
#include "recloc/train.hpp"

namespace recloc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kDataError = 3,
  kDivergence = 4,
};

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw DataError("cannot create directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
}

inline std::string feature_file_name(const std::string& track_id, Stream s) {
  return "features/" + track_id + (s == Stream::kAppearance ? "_app.tfv" : "_flow.tfv");
}

inline void write_split(const fs::path& dir, const SyntheticDataset& ds) {
  ensure_dir(dir / "features");
  std::vector<json> tracks, gts, videos;
  for (const auto& t : ds.tracks) {
    std::array<std::string, kNumStreams> paths;
    for (int s = 0; s < kNumStreams; ++s) {
      if (!t.features[s]) continue;
      paths[s] = feature_file_name(t.track_id, static_cast<Stream>(s));
      io::write_matrix(dir / paths[s], *t.features[s]);
    }
    tracks.push_back(io::track_to_json(t, paths));
  }
  for (const auto& g : ds.gts) gts.push_back(io::gt_to_json(g));
  for (const auto& [v, n] : ds.video_lengths) videos.push_back({{"video", v}, {"frames", n}});
  io::write_json_lines(dir / "tracks.jsonl", tracks);
  io::write_json_lines(dir / "gt.jsonl", gts);
  io::write_json_lines(dir / "videos.jsonl", videos);
}

// Writes <data_dir>/{train,test} and <data_dir>/manifest.json listing every
// file with its digest.
inline json cmd_generate(const RunConfig& rc) {
  ensure_dir(rc.paths.data_dir);
  const std::vector<std::pair<std::string, int>> splits = {{rc.paths.train_split, 0},
                                                           {rc.paths.eval_split, 1}};
  for (const auto& [name, idx] : splits) write_split(rc.paths.split_dir(name), generate(rc.synthetic, idx));

  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(rc.paths.data_dir)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  json manifest = {{"seed", rc.seed}, {"files", json::array()}};
  for (const auto& f : files) {
    manifest["files"].push_back({{"path", fs::relative(f, rc.paths.data_dir).generic_string()},
                                 {"digest", io::file_digest(f)}});
  }
  io::detail::write_file(rc.paths.data_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

struct SplitData {
  std::vector<PersonTrack> tracks;
  std::vector<GroundTruthInstance> gts;
  std::map<std::string, int> video_lengths;
};

inline SplitData load_split(const fs::path& dir, bool with_features) {
  SplitData d;
  d.tracks = io::read_tracks(dir / "tracks.jsonl", with_features);
  d.gts = io::read_ground_truth(dir / "gt.jsonl");
  if (fs::exists(dir / "videos.jsonl")) d.video_lengths = io::read_video_lengths(dir / "videos.jsonl");
  return d;
}

inline int infer_input_dim(const std::vector<PersonTrack>& tracks, unsigned mask) {
  for (const auto& t : tracks) {
    for (int s = 0; s < kNumStreams; ++s) {
      if ((mask >> s) & 1u) {
        if (!t.features[s]) throw DataError("track " + t.track_id + " lacks " +
                                            stream_name(static_cast<Stream>(s)) + " features");
        return static_cast<int>(t.features[s]->cols());
      }
    }
  }
  throw DataError("training split has no tracks");
}

inline TrainResult cmd_train(const RunConfig& rc) {
  const auto data = load_split(rc.paths.split_dir(rc.paths.train_split), true);
  ModelShape shape = rc.model;
  shape.input_dim = infer_input_dim(data.tracks, shape.stream_mask);
  int classes = rc.eval.num_classes;
  for (const auto& g : data.gts) classes = std::max(classes, g.class_id);
  shape.num_classes = std::max(classes, 1);
  const auto examples = make_examples(data.tracks, data.gts);

  TrainResult result = train_model(rc.train, shape, examples);
  ensure_dir(rc.paths.model.parent_path().empty() ? fs::path(".") : rc.paths.model.parent_path());
  save_checkpoint(rc.paths.model, result.params);
  std::string log = "step,phase,loss\n";
  char buf[96];
  for (const auto& rec : result.curve) {
    std::snprintf(buf, sizeof buf, "%d,%s,%.17g\n", rec.step, rec.phase.c_str(), rec.loss);
    log += buf;
  }
  io::detail::write_file(rc.paths.loss_log, log);
  return result;
}

inline fs::path score_file(const fs::path& dir, const std::string& track_id) {
  return dir / (track_id + ".tfv");
}

// One TFV1 file per track with C+1 columns (column 0 background).
inline std::size_t cmd_score(const RunConfig& rc) {
  const ModelParams model = load_checkpoint(rc.paths.model);
  const auto tracks = io::read_tracks(rc.paths.split_dir(rc.paths.eval_split) / "tracks.jsonl", true);
  std::vector<ScoreSequence> scores;
  try {
    scores = score_tracks(model, tracks, rc.jobs);
  } catch (const InputError& e) {
    throw DataError(std::string("checkpoint/feature mismatch: ") + e.what());
  }
  ensure_dir(rc.paths.scores_dir);
  for (const auto& s : scores) io::write_matrix(score_file(rc.paths.scores_dir, s.track_id), s.rows);
  return scores.size();
}

// Tracks that have a score file, paired with their scores.
inline std::pair<std::vector<PersonTrack>, std::vector<ScoreSequence>> load_scored_tracks(
    const RunConfig& rc) {
  const auto all = io::read_tracks(rc.paths.split_dir(rc.paths.eval_split) / "tracks.jsonl", false);
  std::pair<std::vector<PersonTrack>, std::vector<ScoreSequence>> out;
  if (!fs::is_directory(rc.paths.scores_dir)) return out;
  std::map<std::string, const PersonTrack*> by_id;
  for (const auto& t : all) by_id[t.track_id] = &t;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(rc.paths.scores_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".tfv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const std::string id = f.stem().string();
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("score file " + f.string() + " has no matching track");
    ScoreSequence s{id, io::read_matrix(f)};
    if (s.rows.rows() != it->second->length() || s.rows.cols() < 2) {
      throw DataError("score file " + f.string() + " does not match its track");
    }
    out.first.push_back(*it->second);
    out.second.push_back(std::move(s));
  }
  return out;
}

inline std::vector<Detection> cmd_localize(const RunConfig& rc) {
  const auto [tracks, scores] = load_scored_tracks(rc);
  std::vector<Detection> dets;
  if (!scores.empty()) {
    const int C = static_cast<int>(scores.front().rows.cols()) - 1;
    dets = detect(tracks, scores, C, rc.detect);
  }
  const auto parent = rc.paths.detections.parent_path();
  if (!parent.empty()) ensure_dir(parent);
  io::write_detections(rc.paths.detections, dets);
  return dets;
}

inline EvalReport cmd_evaluate(const RunConfig& rc) {
  const auto dets = io::read_detections(rc.paths.detections);
  const auto split = rc.paths.split_dir(rc.paths.eval_split);
  const auto gts = io::read_ground_truth(split / "gt.jsonl");
  EvalConfig cfg = rc.eval;
  if (rc.short_subset) {
    cfg.class_subset = short_class_split(gts, io::read_video_lengths(split / "videos.jsonl"));
  }
  const EvalReport report = evaluate(dets, gts, cfg);
  std::vector<std::pair<Assumptions, EvalReport>> extra;
  if (rc.correctness) {
    EvalConfig ccfg = cfg;
    ccfg.iou_thresholds = {rc.correctness_iou};
    for (int bits = 0; bits < 8; ++bits) {
      const Assumptions a{.classification = (bits & 4) != 0,
                          .spatial = (bits & 2) != 0,
                          .temporal = (bits & 1) != 0};
      extra.emplace_back(a, evaluate(dets, gts, ccfg, a));
    }
  }
  const auto parent = rc.paths.results.parent_path();
  if (!parent.empty()) ensure_dir(parent);
  io::detail::write_file(rc.paths.results, results_csv(report, extra));
  for (int c : report.excluded_classes) {
    std::fprintf(stderr, "warning: class %d has no ground truth; excluded from mAP\n", c);
  }
  return report;
}

// Per track: frame,class,raw_score,filtered_score,label,segment where label
// is the frame's ground-truth class (0 background) and segment is the index
// of the thresholded interval containing the frame for that class, or -1.
inline std::size_t cmd_export_curves(const RunConfig& rc) {
  const auto [tracks, scores] = load_scored_tracks(rc);
  const auto gts = io::read_ground_truth(rc.paths.split_dir(rc.paths.eval_split) / "gt.jsonl");
  ensure_dir(rc.paths.curves_dir);
  char buf[160];
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const auto& tr = tracks[i];
    const auto labels = assign_frame_labels(tr, gts);
    std::string csv = "frame,class,raw_score,filtered_score,label,segment\n";
    for (int c = 1; c < scores[i].rows.cols(); ++c) {
      const Eigen::VectorXd raw = scores[i].class_scores(c);
      const std::span<const double> rs(raw.data(), static_cast<std::size_t>(raw.size()));
      const auto filt = median_filter(rs, rc.detect.loc.median_window);
      std::vector<int> seg(rs.size(), -1);
      const auto runs = threshold_segment(filt, rc.detect.loc.threshold);
      for (std::size_t k = 0; k < runs.size(); ++k) {
        for (int f = runs[k].start; f <= runs[k].end; ++f) seg[static_cast<std::size_t>(f)] = static_cast<int>(k);
      }
      for (std::size_t t = 0; t < rs.size(); ++t) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%.9g,%d,%d\n", tr.start_frame + static_cast<int>(t), c,
                      rs[t], filt[t], labels[t], seg[t]);
        csv += buf;
      }
    }
    io::detail::write_file(rc.paths.curves_dir / (tr.track_id + ".csv"), csv);
  }
  return tracks.size();
}

}  // namespace recloc::cli
