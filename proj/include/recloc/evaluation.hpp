// SPDX-License-Identifier: Apache-2.0
//
// Spatio-temporal detection evaluation: greedy ST-IoU matching, precision
// envelope AP, mAP over classes and IoU thresholds, and the
// correctness-assumption diagnostic.
#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "recloc/errors.hpp"
#include "recloc/localization.hpp"
#include "recloc/track_model.hpp"

namespace recloc {

struct EvalConfig {
  std::vector<double> iou_thresholds = {0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.75};
  std::optional<std::vector<int>> class_subset;
  // Classes 1..num_classes are evaluated; 0 infers the range from the data.
  int num_classes = 0;

  void validate() const {
    if (iou_thresholds.empty()) throw ConfigError("at least one IoU threshold is required");
    for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
      const double t = iou_thresholds[i];
      if (!(t > 0.0 && t <= 1.0)) throw ConfigError("IoU thresholds must lie in (0,1]");
      if (i > 0 && !(t > iou_thresholds[i - 1])) {
        throw ConfigError("IoU thresholds must be strictly increasing");
      }
    }
  }
};

// Idealized components for the correctness analysis.
struct Assumptions {
  bool classification = false;
  bool spatial = false;
  bool temporal = false;

  StIouOptions st_options() const { return {.snap_spatial = spatial, .snap_temporal = temporal}; }
  std::string label() const {
    std::string s;
    auto add = [&s](const char* n) { s += s.empty() ? n : std::string("+") + n; };
    if (temporal) add("temporal");
    if (spatial) add("spatial");
    if (classification) add("class");
    return s.empty() ? "none" : s;
  }
};

struct MatchEntry {
  std::size_t det_index = 0;  // index into the detection list given to the matcher
  double score = 0.0;
  int gt_index = -1;          // index into the GT list, -1 for false positives
  bool tp = false;
};

struct MatchResult {
  int class_id = 0;
  double iou_threshold = 0.0;
  std::vector<MatchEntry> entries;  // ranked order
  int n_gt = 0;
};

// Greedy matching in ranking order. A detection is a true positive when
// its best ST-IoU against a still-unmatched GT of the same video and class
// reaches iou_threshold; that GT is then claimed. Everything else,
// including duplicates of an already matched GT, is a false positive.
inline MatchResult match_detections(const std::vector<Detection>& dets,
                                    const std::vector<GroundTruthInstance>& gts, int class_id,
                                    double iou_threshold, const StIouOptions& opts = {}) {
  MatchResult res;
  res.class_id = class_id;
  res.iou_threshold = iou_threshold;

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].class_id == class_id) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detection_before(dets[a], dets[b]);
  });

  std::map<std::string, std::vector<std::size_t>> gt_by_video;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gts[g].class_id != class_id) continue;
    gt_by_video[gts[g].video_id].push_back(g);
    ++res.n_gt;
  }
  std::vector<bool> claimed(gts.size(), false);

  for (std::size_t i : order) {
    const Detection& d = dets[i];
    MatchEntry e{i, d.score, -1, false};
    const auto it = gt_by_video.find(d.video_id);
    if (it != gt_by_video.end()) {
      double best = -1.0;
      for (std::size_t g : it->second) {
        if (claimed[g]) continue;
        const double iou = st_iou(d, gts[g], opts);
        if (iou > best) {
          best = iou;
          e.gt_index = static_cast<int>(g);
        }
      }
      if (e.gt_index >= 0 && best > 0.0 && best >= iou_threshold) {
        e.tp = true;
        claimed[static_cast<std::size_t>(e.gt_index)] = true;
      } else {
        e.gt_index = -1;
      }
    }
    res.entries.push_back(e);
  }
  return res;
}

// Sets the score of every false positive to 0 and re-ranks (stable), so
// AP reduces to recall.
inline void zero_false_positive_scores(MatchResult& m) {
  for (auto& e : m.entries) {
    if (!e.tp) e.score = 0.0;
  }
  std::stable_sort(m.entries.begin(), m.entries.end(),
                   [](const MatchEntry& a, const MatchEntry& b) { return a.score > b.score; });
}

// Area under the precision-recall curve with the precision envelope
// (precision at each rank replaced by the max precision at any later rank).
// nullopt when the class has no ground truth.
inline std::optional<double> average_precision(const MatchResult& m) {
  if (m.n_gt == 0) return std::nullopt;
  std::vector<MatchEntry> ranked = m.entries;
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const MatchEntry& a, const MatchEntry& b) { return a.score > b.score; });
  // Every true positive raises recall by exactly 1/n_gt, so the area is the
  // sum of envelope precisions at true-positive ranks over n_gt. Summing in
  // extended precision keeps small rational cases correctly rounded.
  const std::size_t n = ranked.size();
  std::vector<long double> precision(n);
  int tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ranked[i].tp;
    precision[i] = static_cast<long double>(tp) / static_cast<long double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  long double sum = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    if (ranked[i].tp) sum += precision[i];
  }
  const double ap = static_cast<double>(sum / static_cast<long double>(m.n_gt));
  return std::clamp(ap, 0.0, 1.0);
}

struct ClassAp {
  int class_id = 0;
  std::optional<double> ap;  // nullopt: no GT, excluded from the mean
  int n_gt = 0;
  int n_det = 0;
};

struct ThresholdResult {
  double iou_threshold = 0.0;
  std::vector<ClassAp> classes;
  std::optional<double> map;
  std::optional<double> subset_map;
};

struct EvalReport {
  std::vector<ThresholdResult> thresholds;
  std::vector<int> excluded_classes;  // classes without ground truth

  const ThresholdResult& at(double iou) const {
    for (const auto& t : thresholds) {
      if (t.iou_threshold == iou) return t;
    }
    throw InputError("no evaluation at IoU " + std::to_string(iou));
  }
};

namespace detail {

inline int infer_num_classes(const std::vector<Detection>& dets,
                             const std::vector<GroundTruthInstance>& gts) {
  int c = 0;
  for (const auto& d : dets) c = std::max(c, d.class_id);
  for (const auto& g : gts) c = std::max(c, g.class_id);
  return c;
}

inline std::optional<double> mean_of(const std::vector<ClassAp>& classes,
                                     const std::optional<std::vector<int>>& subset) {
  double sum = 0.0;
  int n = 0;
  for (const auto& c : classes) {
    if (!c.ap) continue;
    if (subset && std::find(subset->begin(), subset->end(), c.class_id) == subset->end()) continue;
    sum += *c.ap;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace detail

// Per-class AP and mAP at every configured threshold, optionally under
// idealizing assumptions.
inline EvalReport evaluate(const std::vector<Detection>& dets,
                           const std::vector<GroundTruthInstance>& gts, const EvalConfig& cfg,
                           const Assumptions& assume = {}) {
  cfg.validate();
  const int C = cfg.num_classes > 0 ? cfg.num_classes : detail::infer_num_classes(dets, gts);
  EvalReport report;
  for (double iou : cfg.iou_thresholds) {
    ThresholdResult tr;
    tr.iou_threshold = iou;
    for (int c = 1; c <= C; ++c) {
      MatchResult m = match_detections(dets, gts, c, iou, assume.st_options());
      if (assume.classification) zero_false_positive_scores(m);
      ClassAp ca{c, average_precision(m), m.n_gt, static_cast<int>(m.entries.size())};
      tr.classes.push_back(ca);
    }
    tr.map = detail::mean_of(tr.classes, std::nullopt);
    if (cfg.class_subset) tr.subset_map = detail::mean_of(tr.classes, cfg.class_subset);
    report.thresholds.push_back(std::move(tr));
  }
  for (int c = 1; c <= C; ++c) {
    if (!report.thresholds.front().classes[static_cast<std::size_t>(c - 1)].ap) {
      report.excluded_classes.push_back(c);
    }
  }
  return report;
}

inline EvalReport mean_ap(const std::vector<Detection>& dets,
                          const std::vector<GroundTruthInstance>& gts, const EvalConfig& cfg) {
  return evaluate(dets, gts, cfg);
}

// mAP at a single threshold under the given assumptions (0 if no class has
// ground truth).
inline double correctness_analysis(const std::vector<Detection>& dets,
                                   const std::vector<GroundTruthInstance>& gts,
                                   const Assumptions& assume, double iou_threshold,
                                   int num_classes = 0,
                                   const std::optional<std::vector<int>>& subset = std::nullopt) {
  EvalConfig cfg;
  cfg.iou_thresholds = {iou_threshold};
  cfg.num_classes = num_classes;
  cfg.class_subset = subset;
  const auto r = evaluate(dets, gts, cfg, assume);
  const auto& t = r.thresholds.front();
  return (subset ? t.subset_map : t.map).value_or(0.0);
}

// Classes whose instances last on average less than half of their video.
inline std::vector<int> short_class_split(const std::vector<GroundTruthInstance>& gts,
                                          const std::map<std::string, int>& video_lengths) {
  std::map<int, std::pair<double, int>> acc;
  for (const auto& g : gts) {
    const auto it = video_lengths.find(g.video_id);
    if (it == video_lengths.end() || it->second <= 0) {
      throw InputError("short_class_split: unknown length for video " + g.video_id);
    }
    auto& [sum, n] = acc[g.class_id];
    sum += static_cast<double>(g.length()) / it->second;
    ++n;
  }
  std::vector<int> out;
  for (const auto& [c, sn] : acc) {
    if (sn.first / sn.second < 0.5) out.push_back(c);
  }
  return out;
}

// CSV: iou_threshold,class_id,ap,n_gt,n_det with summary rows whose
// class_id is "mAP" / "mAP-subset" (and "mAP[<assumptions>]" for extra
// reports). Classes without GT carry ap = "excluded".
inline std::string results_csv(const EvalReport& report,
                               const std::vector<std::pair<Assumptions, EvalReport>>& extra = {}) {
  std::string out = "iou_threshold,class_id,ap,n_gt,n_det\n";
  char buf[160];
  auto fmt_ap = [](const std::optional<double>& v) {
    if (!v) return std::string("excluded");
    char b[32];
    std::snprintf(b, sizeof b, "%.6f", *v);
    return std::string(b);
  };
  auto summary = [&](const ThresholdResult& t, const std::string& name,
                     const std::optional<double>& v) {
    int gt = 0, det = 0;
    for (const auto& c : t.classes) {
      gt += c.n_gt;
      det += c.n_det;
    }
    std::snprintf(buf, sizeof buf, "%g,%s,%s,%d,%d\n", t.iou_threshold, name.c_str(),
                  fmt_ap(v).c_str(), gt, det);
    out += buf;
  };
  for (const auto& t : report.thresholds) {
    for (const auto& c : t.classes) {
      std::snprintf(buf, sizeof buf, "%g,%d,%s,%d,%d\n", t.iou_threshold, c.class_id,
                    fmt_ap(c.ap).c_str(), c.n_gt, c.n_det);
      out += buf;
    }
    summary(t, "mAP", t.map);
    if (t.subset_map) summary(t, "mAP-subset", t.subset_map);
  }
  for (const auto& [assume, r] : extra) {
    for (const auto& t : r.thresholds) {
      summary(t, "mAP[" + assume.label() + "]", t.map);
      if (t.subset_map) summary(t, "mAP-subset[" + assume.label() + "]", t.subset_map);
    }
  }
  return out;
}

}  // namespace recloc
