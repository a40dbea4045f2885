// SPDX-License-Identifier: Apache-2.0
//
// Boxes, person tracks, ground-truth tubes and detections, plus the IoU family
// used for label assignment, NMS and evaluation.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "recloc/errors.hpp"

namespace recloc {

struct BoundingBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 1.0;
  double y2 = 1.0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }
  bool valid() const noexcept {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
           std::isfinite(y2) && x2 > x1 && y2 > y1;
  }
  bool operator==(const BoundingBox&) const = default;
};

// Throws InputError for boxes with non-positive extent.
inline BoundingBox make_box(double x1, double y1, double x2, double y2) {
  BoundingBox b{x1, y1, x2, y2};
  if (!b.valid()) {
    throw InputError("bounding box must have positive width and height");
  }
  return b;
}

// Inclusive frame range.
struct FrameInterval {
  int start = 0;
  int end = 0;

  int length() const noexcept { return end - start + 1; }
  bool valid() const noexcept { return end >= start; }
  bool contains(int frame) const noexcept {
    return frame >= start && frame <= end;
  }
  friend bool operator==(const FrameInterval&, const FrameInterval&) = default;
};

// A contiguous run of per-frame boxes. Base of tracks, GT tubes and
// detections; boxes[i] belongs to frame start_frame + i.
struct Tube {
  int start_frame = 0;
  std::vector<BoundingBox> boxes;

  int length() const noexcept { return static_cast<int>(boxes.size()); }
  int end_frame() const noexcept { return start_frame + length() - 1; }
  FrameInterval interval() const noexcept { return {start_frame, end_frame()}; }
  const BoundingBox& box_at(int frame) const {
    return boxes[static_cast<std::size_t>(frame - start_frame)];
  }
};

enum class Stream : int { kAppearance = 0, kFlow = 1 };
inline constexpr int kNumStreams = 2;

inline const char* stream_name(Stream s) {
  return s == Stream::kAppearance ? "appearance" : "flow";
}

struct PersonTrack : Tube {
  std::string video_id;
  std::string track_id;
  // T x D per stream when present.
  std::array<std::optional<Eigen::MatrixXd>, kNumStreams> features;

  const std::optional<Eigen::MatrixXd>& stream_features(Stream s) const {
    return features[static_cast<std::size_t>(s)];
  }
};

struct GroundTruthInstance : Tube {
  std::string video_id;
  int class_id = 1;
};

struct Detection : Tube {
  std::string video_id;
  std::string track_id;
  int class_id = 1;
  double score = 0.0;
};

template <typename T>
concept TubeLike = requires(const T& t) {
  { t.start_frame } -> std::convertible_to<int>;
  { t.boxes } -> std::convertible_to<const std::vector<BoundingBox>&>;
};

// Throws InputError unless the tube is non-empty and all boxes are valid.
inline void validate_tube(const Tube& t) {
  if (t.boxes.empty()) throw InputError("tube has no boxes");
  for (const auto& b : t.boxes) {
    if (!b.valid()) throw InputError("tube contains an invalid box");
  }
}

// Throws InputError when a feature matrix does not have one row per frame.
inline void validate_track(const PersonTrack& t) {
  validate_tube(t);
  for (const auto& f : t.features) {
    if (f && f->rows() != t.length()) {
      throw InputError("feature matrix rows do not match track length for " +
                       t.track_id);
    }
  }
}

inline double spatial_iou(const BoundingBox& a, const BoundingBox& b) {
  if (!a.valid() || !b.valid()) {
    throw InputError("spatial_iou: invalid box");
  }
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

inline std::optional<FrameInterval> intersect(const FrameInterval& a,
                                              const FrameInterval& b) {
  FrameInterval r{std::max(a.start, b.start), std::min(a.end, b.end)};
  if (!r.valid()) return std::nullopt;
  return r;
}

// Frame-count IoU of two inclusive intervals.
inline double temporal_iou(const FrameInterval& a, const FrameInterval& b) {
  if (!a.valid() || !b.valid()) {
    throw InputError("temporal_iou: interval end precedes start");
  }
  const auto common = intersect(a, b);
  if (!common) return 0.0;
  const int inter = common->length();
  const int uni = a.length() + b.length() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Overrides used by the correctness-assumption diagnostic: when enabled, an
// overlap strictly above snap_threshold is replaced by 1.
struct StIouOptions {
  bool snap_spatial = false;
  bool snap_temporal = false;
  double snap_threshold = 0.3;
};

struct StIouParts {
  double temporal = 0.0;
  double spatial = 0.0;  // mean over common frames, 0 when there are none
  double value = 0.0;
};

template <TubeLike A, TubeLike B>
StIouParts st_iou_parts(const A& a, const B& b, const StIouOptions& opts = {}) {
  const FrameInterval ia{a.start_frame,
                         a.start_frame + static_cast<int>(a.boxes.size()) - 1};
  const FrameInterval ib{b.start_frame,
                         b.start_frame + static_cast<int>(b.boxes.size()) - 1};
  StIouParts parts;
  const auto common = intersect(ia, ib);
  if (!common) return parts;
  parts.temporal = temporal_iou(ia, ib);
  double sum = 0.0;
  for (int f = common->start; f <= common->end; ++f) {
    sum += spatial_iou(a.boxes[static_cast<std::size_t>(f - a.start_frame)],
                       b.boxes[static_cast<std::size_t>(f - b.start_frame)]);
  }
  parts.spatial = sum / common->length();
  double ot = parts.temporal;
  double os = parts.spatial;
  if (opts.snap_temporal && ot > opts.snap_threshold) ot = 1.0;
  if (opts.snap_spatial && os > opts.snap_threshold) os = 1.0;
  parts.value = ot * os;
  return parts;
}

// Temporal IoU times mean spatial IoU over the shared frames; 0 when the
// tubes share no frame.
template <TubeLike A, TubeLike B>
double st_iou(const A& a, const B& b, const StIouOptions& opts = {}) {
  return st_iou_parts(a, b, opts).value;
}

// Per-frame labels for a track: frame t gets the class of the GT box that
// overlaps it by more than iou_thresh (largest IoU wins, then smaller class
// id); 0 is background. GTs from other videos are ignored.
inline std::vector<int> assign_frame_labels(
    const PersonTrack& track, const std::vector<GroundTruthInstance>& gts,
    double iou_thresh = 0.3) {
  std::vector<int> labels(track.boxes.size(), 0);
  std::vector<double> best(track.boxes.size(), -1.0);
  for (const auto& gt : gts) {
    if (gt.video_id != track.video_id) continue;
    const auto common = intersect(track.interval(), gt.interval());
    if (!common) continue;
    for (int f = common->start; f <= common->end; ++f) {
      const auto i = static_cast<std::size_t>(f - track.start_frame);
      const double iou = spatial_iou(track.boxes[i], gt.box_at(f));
      if (iou <= iou_thresh) continue;
      if (iou > best[i] || (iou == best[i] && gt.class_id < labels[i])) {
        best[i] = iou;
        labels[i] = gt.class_id;
      }
    }
  }
  return labels;
}

}  // namespace recloc
