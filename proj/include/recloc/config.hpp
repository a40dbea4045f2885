// SPDX-License-Identifier: Apache-2.0
//
// Run configuration. File grammar, one setting per line:
//
//   # comment
//   key = value
//
// Keys are dotted (`train.steps`), values run to the end of the line with
// surrounding whitespace trimmed. Lists are comma separated. Later
// assignments override earlier ones; unknown keys are errors.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "recloc/errors.hpp"
#include "recloc/evaluation.hpp"
#include "recloc/localization.hpp"
#include "recloc/model.hpp"
#include "recloc/pipeline.hpp"
#include "recloc/synthetic.hpp"
#include "recloc/train.hpp"

namespace recloc {

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

inline KeyValues parse_key_values(std::istream& in, const std::string& origin = "<config>") {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = detail::trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_key_values(in, path.string());
}

// `key=value` from the command line.
inline void apply_override(KeyValues& kv, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like key=value: " + assignment);
  kv[detail::trim(assignment.substr(0, eq))] = detail::trim(assignment.substr(eq + 1));
}

struct RunPaths {
  std::filesystem::path out = "run";
  std::filesystem::path data_dir;      // default: out/data
  std::filesystem::path model;         // default: out/model.rln
  std::filesystem::path loss_log;      // default: out/loss.csv
  std::filesystem::path scores_dir;    // default: out/scores
  std::filesystem::path detections;    // default: out/detections.jsonl
  std::filesystem::path results;       // default: out/results.csv
  std::filesystem::path curves_dir;    // default: out/curves
  std::string train_split = "train";
  std::string eval_split = "test";

  std::filesystem::path split_dir(const std::string& split) const { return data_dir / split; }
};

struct RunConfig {
  std::uint64_t seed = 0;
  int jobs = 1;
  SyntheticSpec synthetic;
  double asymmetry = 0.0;
  ModelShape model;
  TrainConfig train;
  DetectConfig detect;
  EvalConfig eval;
  bool short_subset = false;       // eval.class_subset = short
  bool correctness = false;        // emit correctness-analysis rows
  double correctness_iou = 0.75;
  RunPaths paths;
};

namespace detail {

class KeyReader {
 public:
  explicit KeyReader(const KeyValues& kv) : kv_(kv) {}

  const std::string* find(const std::string& key) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    const std::string* v = find(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        out = *v;
      } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
        out = *v;
      } else if constexpr (std::is_same_v<T, bool>) {
        if (*v == "true" || *v == "1" || *v == "yes") out = true;
        else if (*v == "false" || *v == "0" || *v == "no") out = false;
        else throw std::invalid_argument("bool");
      } else if constexpr (std::is_floating_point_v<T>) {
        std::size_t pos = 0;
        out = static_cast<T>(std::stod(*v, &pos));
        if (pos != v->size()) throw std::invalid_argument("trailing");
      } else if constexpr (std::is_unsigned_v<T>) {
        std::size_t pos = 0;
        out = static_cast<T>(std::stoull(*v, &pos));
        if (pos != v->size()) throw std::invalid_argument("trailing");
      } else {
        std::size_t pos = 0;
        out = static_cast<T>(std::stoll(*v, &pos));
        if (pos != v->size()) throw std::invalid_argument("trailing");
      }
    } catch (const std::logic_error&) {
      throw ConfigError("invalid value for " + key + ": '" + *v + "'");
    }
  }

  void check_all_used() const {
    for (const auto& [k, v] : kv_) {
      if (!used_.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }
  }

 private:
  const KeyValues& kv_;
  std::set<std::string> used_;
};

}  // namespace detail

// Defaults follow the published model (hidden 256, normalized input 1024,
// batches of 100 windows of 20 frames, theta 0.1, median 25, NMS 0.2).
inline RunConfig make_run_config(const KeyValues& kv) {
  RunConfig rc;
  rc.model.hidden = 256;
  rc.model.norm_dim = 1024;
  detail::KeyReader r(kv);

  if (!r.find("seed")) throw ConfigError("'seed' is mandatory");
  r.get("seed", rc.seed);
  r.get("jobs", rc.jobs);
  if (rc.jobs < 1) throw ConfigError("jobs must be >= 1");

  auto& s = rc.synthetic;
  r.get("synthetic.n_videos", s.n_videos);
  r.get("synthetic.frames_per_video", s.frames_per_video);
  r.get("synthetic.num_classes", s.num_classes);
  r.get("synthetic.tracks_per_video", s.tracks_per_video);
  r.get("synthetic.min_segments", s.min_segments);
  r.get("synthetic.max_segments", s.max_segments);
  r.get("synthetic.min_segment_length", s.min_segment_length);
  r.get("synthetic.max_segment_length", s.max_segment_length);
  r.get("synthetic.min_gap", s.min_gap);
  r.get("synthetic.feature_dim", s.feature_dim);
  r.get("synthetic.mean_scale", s.mean_scale);
  r.get("synthetic.noise_sigma", s.noise_sigma);
  r.get("synthetic.jitter", s.jitter);
  r.get("synthetic.appearance_weight", s.stream_weight[0]);
  r.get("synthetic.flow_weight", s.stream_weight[1]);
  r.get("synthetic.asymmetry", rc.asymmetry);
  r.get("synthetic.gt_box_noise", s.gt_box_noise);
  r.get("synthetic.box_step", s.box_step);
  s.seed = rc.seed;

  std::string cell = "gru", fusion = "fusion_layer", stream = "appearance", norm = "tanh";
  r.get("model.cell", cell);
  r.get("model.fusion", fusion);
  r.get("model.stream", stream);
  r.get("model.hidden", rc.model.hidden);
  r.get("model.norm_dim", rc.model.norm_dim);
  r.get("model.norm_activation", norm);
  rc.model.cell = parse_cell_type(cell);
  rc.model.fusion = parse_fusion_mode(fusion);
  if (stream != "appearance" && stream != "flow") {
    throw ConfigError("model.stream must be appearance or flow");
  }
  if (rc.model.fusion == FusionMode::kSingle) {
    rc.model.stream_mask = stream == "appearance" ? 1 : 2;
  } else {
    rc.model.stream_mask = 3;
  }
  if (norm == "tanh") rc.model.norm_activation = NormActivation::kTanh;
  else if (norm == "identity") rc.model.norm_activation = NormActivation::kIdentity;
  else throw ConfigError("model.norm_activation must be tanh or identity");

  auto& t = rc.train;
  r.get("train.batch_tracks", t.batch_tracks);
  r.get("train.window", t.window);
  r.get("train.bptt", t.bptt);
  r.get("train.steps", t.steps);
  r.get("train.fusion_steps", t.fusion_steps);
  r.get("train.learning_rate", t.learning_rate);
  r.get("train.weight_decay", t.weight_decay);
  r.get("train.beta1", t.beta1);
  r.get("train.beta2", t.beta2);
  r.get("train.epsilon", t.epsilon);
  t.seed = rc.seed;
  t.jobs = rc.jobs;
  if (t.batch_tracks < 1 || t.window < 1 || t.bptt < 0 || t.steps < 0) {
    throw ConfigError("train.batch_tracks/window must be >= 1, bptt/steps >= 0");
  }
  if (!(t.learning_rate >= 0.0) || !(t.weight_decay >= 0.0)) {
    throw ConfigError("learning rate and weight decay must be non-negative");
  }

  auto& l = rc.detect.loc;
  std::string method = "threshold";
  r.get("localize.threshold", l.threshold);
  r.get("localize.median_window", l.median_window);
  r.get("localize.nms_overlap", l.nms_overlap);
  r.get("localize.top_k", l.top_k);
  r.get("localize.method", method);
  r.get("localize.viterbi_smoothness", rc.detect.viterbi.smoothness);
  r.get("localize.viterbi_floor", rc.detect.viterbi.floor);
  if (method == "threshold") rc.detect.method = TemporalMethod::kThreshold;
  else if (method == "viterbi") rc.detect.method = TemporalMethod::kViterbi;
  else throw ConfigError("localize.method must be threshold or viterbi");
  l.validate();

  std::string thresholds, subset;
  r.get("eval.iou_thresholds", thresholds);
  r.get("eval.class_subset", subset);
  r.get("eval.num_classes", rc.eval.num_classes);
  r.get("eval.correctness", rc.correctness);
  r.get("eval.correctness_iou", rc.correctness_iou);
  if (!thresholds.empty()) {
    rc.eval.iou_thresholds.clear();
    for (const auto& v : detail::split_list(thresholds)) {
      try {
        rc.eval.iou_thresholds.push_back(std::stod(v));
      } catch (const std::logic_error&) {
        throw ConfigError("invalid IoU threshold '" + v + "'");
      }
    }
  }
  if (subset == "short") {
    rc.short_subset = true;
  } else if (!subset.empty()) {
    std::vector<int> ids;
    for (const auto& v : detail::split_list(subset)) {
      try {
        ids.push_back(std::stoi(v));
      } catch (const std::logic_error&) {
        throw ConfigError("invalid class id '" + v + "' in eval.class_subset");
      }
    }
    rc.eval.class_subset = ids;
  }
  rc.eval.validate();

  auto& p = rc.paths;
  r.get("out", p.out);
  r.get("paths.data_dir", p.data_dir);
  r.get("paths.model", p.model);
  r.get("paths.loss_log", p.loss_log);
  r.get("paths.scores_dir", p.scores_dir);
  r.get("paths.detections", p.detections);
  r.get("paths.results", p.results);
  r.get("paths.curves_dir", p.curves_dir);
  r.get("paths.train_split", p.train_split);
  r.get("paths.eval_split", p.eval_split);
  if (p.data_dir.empty()) p.data_dir = p.out / "data";
  if (p.model.empty()) p.model = p.out / "model.rln";
  if (p.loss_log.empty()) p.loss_log = p.out / "loss.csv";
  if (p.scores_dir.empty()) p.scores_dir = p.out / "scores";
  if (p.detections.empty()) p.detections = p.out / "detections.jsonl";
  if (p.results.empty()) p.results = p.out / "results.csv";
  if (p.curves_dir.empty()) p.curves_dir = p.out / "curves";

  r.check_all_used();
  if (rc.asymmetry != 0.0) rc.synthetic = make_stream_asymmetric(rc.synthetic, rc.asymmetry);
  rc.synthetic.validate();
  return rc;
}

}  // namespace recloc
