// SPDX-License-Identifier: Apache-2.0
//
// File formats: JSON-lines tracks / ground truth / detections, and the "TFV1"
// little-endian float matrix used for per-frame features and score files.
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "recloc/errors.hpp"
#include "recloc/track_model.hpp"

namespace recloc::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr std::array<char, 4> kFeatureMagic = {'T', 'F', 'V', '1'};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace detail

// Values are narrowed to float32.
inline std::string encode_matrix(const Eigen::MatrixXd& m) {
  std::string out(kFeatureMagic.begin(), kFeatureMagic.end());
  detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  out.reserve(out.size() + static_cast<std::size_t>(m.size()) * 4);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c)));
      detail::put_u32(out, bits);
    }
  }
  return out;
}

inline Eigen::MatrixXd decode_matrix(const std::string& bytes,
                                     const std::string& origin = "<memory>") {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kFeatureMagic.data(), 4) != 0) {
    throw DataError(origin + ": missing TFV1 header");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t rows = detail::get_u32(p + 4);
  const std::uint32_t cols = detail::get_u32(p + 8);
  const std::uint64_t expected = 12 + 4ull * rows * cols;
  if (bytes.size() != expected) {
    throw DataError(origin + ": TFV1 payload size does not match header");
  }
  Eigen::MatrixXd m(rows, cols);
  const unsigned char* q = p + 12;
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c, q += 4) {
      m(r, c) = std::bit_cast<float>(detail::get_u32(q));
    }
  }
  return m;
}

inline void write_matrix(const fs::path& path, const Eigen::MatrixXd& m) {
  detail::write_file(path, encode_matrix(m));
}

inline Eigen::MatrixXd read_matrix(const fs::path& path) {
  return decode_matrix(detail::read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// JSON lines

inline json boxes_to_json(const std::vector<BoundingBox>& boxes) {
  json arr = json::array();
  for (const auto& b : boxes) arr.push_back({b.x1, b.y1, b.x2, b.y2});
  return arr;
}

inline std::vector<BoundingBox> boxes_from_json(const json& arr) {
  if (!arr.is_array() || arr.empty()) throw DataError("\"boxes\" must be a non-empty array");
  std::vector<BoundingBox> boxes;
  boxes.reserve(arr.size());
  for (const auto& b : arr) {
    if (!b.is_array() || b.size() != 4) throw DataError("box must have 4 coordinates");
    BoundingBox box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                    b[3].get<double>()};
    if (!box.valid()) throw DataError("degenerate box (non-positive extent)");
    boxes.push_back(box);
  }
  return boxes;
}

template <typename F>
void for_each_json_line(const fs::path& path, F&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void write_json_lines(const fs::path& path, const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  detail::write_file(path, out);
}

// Optional "appearance"/"flow" keys hold feature file paths relative to
// the track file's directory.
inline json track_to_json(const PersonTrack& t,
                          const std::array<std::string, kNumStreams>& feature_paths = {}) {
  json j = {{"video", t.video_id},
            {"track", t.track_id},
            {"start", t.start_frame},
            {"boxes", boxes_to_json(t.boxes)}};
  for (int s = 0; s < kNumStreams; ++s) {
    if (!feature_paths[s].empty()) j[stream_name(static_cast<Stream>(s))] = feature_paths[s];
  }
  return j;
}

struct TrackRecord {
  PersonTrack track;
  std::array<std::string, kNumStreams> feature_paths;
};

inline TrackRecord track_from_json(const json& j) {
  TrackRecord rec;
  rec.track.video_id = j.at("video").get<std::string>();
  rec.track.track_id = j.at("track").get<std::string>();
  rec.track.start_frame = j.at("start").get<int>();
  rec.track.boxes = boxes_from_json(j.at("boxes"));
  for (int s = 0; s < kNumStreams; ++s) {
    const char* key = stream_name(static_cast<Stream>(s));
    if (j.contains(key)) rec.feature_paths[s] = j.at(key).get<std::string>();
  }
  return rec;
}

// Reads tracks and, when load_features is set, their sidecar feature files.
inline std::vector<PersonTrack> read_tracks(const fs::path& path, bool load_features = true) {
  std::vector<PersonTrack> tracks;
  const fs::path base = path.parent_path();
  for_each_json_line(path, [&](const json& j) {
    auto rec = track_from_json(j);
    if (load_features) {
      for (int s = 0; s < kNumStreams; ++s) {
        if (rec.feature_paths[s].empty()) continue;
        auto m = read_matrix(base / rec.feature_paths[s]);
        if (m.rows() != rec.track.length()) {
          throw DataError("feature rows do not match track length for " +
                          rec.track.track_id);
        }
        rec.track.features[s] = std::move(m);
      }
    }
    tracks.push_back(std::move(rec.track));
  });
  return tracks;
}

inline json gt_to_json(const GroundTruthInstance& g) {
  return {{"video", g.video_id},
          {"class", g.class_id},
          {"start", g.start_frame},
          {"boxes", boxes_to_json(g.boxes)}};
}

inline GroundTruthInstance gt_from_json(const json& j) {
  GroundTruthInstance g;
  g.video_id = j.at("video").get<std::string>();
  g.class_id = j.at("class").get<int>();
  g.start_frame = j.at("start").get<int>();
  g.boxes = boxes_from_json(j.at("boxes"));
  if (g.class_id < 1) throw DataError("ground-truth class must be >= 1");
  return g;
}

inline std::vector<GroundTruthInstance> read_ground_truth(const fs::path& path) {
  std::vector<GroundTruthInstance> gts;
  for_each_json_line(path, [&](const json& j) { gts.push_back(gt_from_json(j)); });
  return gts;
}

inline json detection_to_json(const Detection& d) {
  json j = {{"video", d.video_id},       {"class", d.class_id},
            {"start", d.start_frame},    {"end", d.end_frame()},
            {"score", d.score},          {"boxes", boxes_to_json(d.boxes)}};
  if (!d.track_id.empty()) j["track"] = d.track_id;
  return j;
}

inline Detection detection_from_json(const json& j) {
  Detection d;
  d.video_id = j.at("video").get<std::string>();
  d.class_id = j.at("class").get<int>();
  d.start_frame = j.at("start").get<int>();
  d.score = j.at("score").get<double>();
  d.boxes = boxes_from_json(j.at("boxes"));
  if (j.contains("track")) d.track_id = j.at("track").get<std::string>();
  if (j.contains("end") && j.at("end").get<int>() != d.end_frame()) {
    throw DataError("detection \"end\" inconsistent with number of boxes");
  }
  if (!std::isfinite(d.score)) throw DataError("detection score must be finite");
  return d;
}

inline std::vector<Detection> read_detections(const fs::path& path) {
  std::vector<Detection> dets;
  for_each_json_line(path, [&](const json& j) { dets.push_back(detection_from_json(j)); });
  return dets;
}

inline void write_detections(const fs::path& path, const std::vector<Detection>& dets) {
  std::vector<json> rows;
  rows.reserve(dets.size());
  for (const auto& d : dets) rows.push_back(detection_to_json(d));
  write_json_lines(path, rows);
}

// videos.jsonl: {"video": str, "frames": int}
inline std::map<std::string, int> read_video_lengths(const fs::path& path) {
  std::map<std::string, int> lengths;
  for_each_json_line(path, [&](const json& j) {
    lengths[j.at("video").get<std::string>()] = j.at("frames").get<int>();
  });
  return lengths;
}

// 64-bit FNV-1a, hex encoded. Used for manifest digests.
inline std::string digest(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string file_digest(const fs::path& path) {
  return digest(detail::read_file(path));
}

}  // namespace recloc::io
