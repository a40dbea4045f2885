// SPDX-License-Identifier: Apache-2.0
//
// Two-stream stacked recurrent scorer. Every weight lives in one flat vector
// (ModelParams::values); ModelLayout maps named blocks onto it, which keeps
// the optimizer, gradient checks and checkpoints trivial.
//
// Per stream:   n_t = tanh(W_in x_t + b_in)
//               h1_t = cell1(n_t, h1_{t-1}),  h2_t = cell2(h1_t, h2_{t-1})
//               s_t = [h1_t; h2_t]            (2H)
//               head logits = W_head s_t + b_head
// Fusion:       single        softmax(head logits of the only stream)
//               average       mean of the two per-stream softmaxes
//               gating        softmax(sum_s g[c,s] * head_logit[c,s])
//               fusion_layer  softmax(W_fuse [s_app; s_flow] + b_fuse)
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "recloc/cells.hpp"
#include "recloc/errors.hpp"
#include "recloc/track_model.hpp"

namespace recloc {

enum class FusionMode : int { kSingle = 0, kAverage = 1, kGating = 2, kFusionLayer = 3 };

inline const char* fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::kSingle: return "single";
    case FusionMode::kAverage: return "average";
    case FusionMode::kGating: return "gating";
    case FusionMode::kFusionLayer: return "fusion_layer";
  }
  return "?";
}

inline FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "single") return FusionMode::kSingle;
  if (s == "average") return FusionMode::kAverage;
  if (s == "gating") return FusionMode::kGating;
  if (s == "fusion_layer" || s == "fusion") return FusionMode::kFusionLayer;
  throw ConfigError("unknown fusion mode '" + s + "'");
}

enum class NormActivation : int { kTanh = 0, kIdentity = 1 };

struct ModelShape {
  CellType cell = CellType::kGru;
  FusionMode fusion = FusionMode::kSingle;
  // Bit 0: appearance, bit 1: flow.
  unsigned stream_mask = 1;
  int input_dim = 0;
  int norm_dim = 0;
  int hidden = 0;
  int num_classes = 0;
  NormActivation norm_activation = NormActivation::kTanh;

  int outputs() const { return num_classes + 1; }

  std::vector<Stream> streams() const {
    std::vector<Stream> s;
    if (stream_mask & 1u) s.push_back(Stream::kAppearance);
    if (stream_mask & 2u) s.push_back(Stream::kFlow);
    return s;
  }

  void validate() const {
    const auto n = streams().size();
    if (stream_mask == 0 || stream_mask > 3) throw ConfigError("stream mask must be 1, 2 or 3");
    if (fusion == FusionMode::kSingle && n != 1) {
      throw ConfigError("single fusion mode needs exactly one stream");
    }
    if (fusion != FusionMode::kSingle && n != 2) {
      throw ConfigError(std::string(fusion_mode_name(fusion)) + " fusion needs both streams");
    }
    if (input_dim < 1 || norm_dim < 1 || hidden < 1 || num_classes < 1) {
      throw ConfigError("model dimensions must be positive");
    }
  }
};

struct Block {
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 1;
  Eigen::Index size() const { return rows * cols; }
};

struct CellLayout {
  CellType type = CellType::kGru;
  std::vector<Block> w, u, b;
};

struct StreamLayout {
  Stream tag = Stream::kAppearance;
  Block in_w, in_b;
  std::array<CellLayout, 2> cells;
  Block head_w, head_b;
};

// Blocks are laid out in checkpoint order: for each stream (appearance
// first) in_w, in_b, cell1, cell2, head_w, head_b; each gated cell stores
// W, U, b per gate in gate order. Then fuse_w, fuse_b (fusion_layer) or
// gate (gating). Matrices are column-major.
struct ModelLayout {
  ModelShape shape;
  std::vector<StreamLayout> streams;
  std::optional<Block> fuse_w, fuse_b, gate;
  Eigen::Index total = 0;

  explicit ModelLayout(const ModelShape& s) : shape(s) {
    s.validate();
    auto take = [this](Eigen::Index rows, Eigen::Index cols) {
      Block b{total, rows, cols};
      total += rows * cols;
      return b;
    };
    const Eigen::Index H = s.hidden;
    for (Stream tag : s.streams()) {
      StreamLayout sl;
      sl.tag = tag;
      sl.in_w = take(s.norm_dim, s.input_dim);
      sl.in_b = take(s.norm_dim, 1);
      for (int layer = 0; layer < 2; ++layer) {
        const Eigen::Index in = layer == 0 ? s.norm_dim : H;
        CellLayout& cl = sl.cells[layer];
        cl.type = s.cell;
        if (s.cell == CellType::kFc) {
          cl.w.push_back(take(3 * H, in));
          cl.b.push_back(take(3 * H, 1));
          cl.w.push_back(take(H, 3 * H));
        } else {
          for (int g = 0; g < gate_count(s.cell); ++g) {
            cl.w.push_back(take(H, in));
            cl.u.push_back(take(H, H));
            cl.b.push_back(take(H, 1));
          }
        }
      }
      sl.head_w = take(s.outputs(), 2 * H);
      sl.head_b = take(s.outputs(), 1);
      streams.push_back(sl);
    }
    if (s.fusion == FusionMode::kFusionLayer) {
      fuse_w = take(s.outputs(), 4 * H);
      fuse_b = take(s.outputs(), 1);
    } else if (s.fusion == FusionMode::kGating) {
      gate = take(s.outputs(), 2);
    }
  }

  const StreamLayout* find_stream(Stream tag) const {
    for (const auto& sl : streams) {
      if (sl.tag == tag) return &sl;
    }
    return nullptr;
  }
};

namespace detail {

inline Eigen::Map<const Eigen::MatrixXd> view(const Eigen::VectorXd& v, const Block& b) {
  return {v.data() + b.offset, b.rows, b.cols};
}
inline Eigen::Map<Eigen::MatrixXd> view(Eigen::VectorXd& v, const Block& b) {
  return {v.data() + b.offset, b.rows, b.cols};
}
inline Eigen::Map<const Eigen::VectorXd> vview(const Eigen::VectorXd& v, const Block& b) {
  return {v.data() + b.offset, b.size()};
}
inline Eigen::Map<Eigen::VectorXd> vview(Eigen::VectorXd& v, const Block& b) {
  return {v.data() + b.offset, b.size()};
}

template <typename VecT>
auto cell_view(VecT& v, const CellLayout& cl) {
  using MatMap = decltype(view(v, Block{}));
  using VecMap = decltype(vview(v, Block{}));
  CellWeights<MatMap, VecMap> cw;
  cw.type = cl.type;
  for (const auto& b : cl.w) cw.w.push_back(view(v, b));
  for (const auto& b : cl.u) cw.u.push_back(view(v, b));
  for (const auto& b : cl.b) cw.b.push_back(vview(v, b));
  return cw;
}

inline void fill_uniform(Eigen::Map<Eigen::MatrixXd> m, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(m.cols()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  }
}

}  // namespace detail

// Gradients share the layout of the parameters they belong to.
using Gradients = Eigen::VectorXd;

struct ModelParams {
  ModelLayout layout;
  Eigen::VectorXd values;

  explicit ModelParams(const ModelShape& s)
      : layout(s), values(Eigen::VectorXd::Zero(layout.total)) {}

  const ModelShape& shape() const { return layout.shape; }
  Eigen::Index size() const { return values.size(); }

  Eigen::Map<Eigen::MatrixXd> block(const Block& b) { return detail::view(values, b); }
  Eigen::Map<const Eigen::MatrixXd> block(const Block& b) const { return detail::view(values, b); }
};

// Weights uniform in +-1/sqrt(fan_in), biases zero, gating weights 0.5.
inline ModelParams init_params(const ModelShape& s, std::uint64_t seed) {
  ModelParams p(s);
  std::mt19937_64 rng(seed);
  for (const auto& sl : p.layout.streams) {
    detail::fill_uniform(p.block(sl.in_w), rng);
    for (const auto& cl : sl.cells) {
      for (const auto& b : cl.w) detail::fill_uniform(p.block(b), rng);
      for (const auto& b : cl.u) detail::fill_uniform(p.block(b), rng);
    }
    detail::fill_uniform(p.block(sl.head_w), rng);
  }
  if (p.layout.fuse_w) detail::fill_uniform(p.block(*p.layout.fuse_w), rng);
  if (p.layout.gate) p.block(*p.layout.gate).setConstant(0.5);
  return p;
}

// 0/1 per parameter: 1 for the blocks fusion training updates on top of
// frozen streams (fusion layer or gating weights).
inline Eigen::VectorXd fusion_only_mask(const ModelLayout& layout) {
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(layout.total);
  for (const auto& b : {layout.fuse_w, layout.fuse_b, layout.gate}) {
    if (b) mask.segment(b->offset, b->size()).setOnes();
  }
  return mask;
}

// T x (C+1); column 0 is background. Rows are probability distributions.
struct ScoreSequence {
  std::string track_id;
  Eigen::MatrixXd rows;

  Eigen::Index length() const { return rows.rows(); }
  Eigen::VectorXd class_scores(int class_id) const { return rows.col(class_id); }
};

using FeatureSet = std::array<std::optional<Eigen::MatrixXd>, kNumStreams>;

struct StreamCache {
  Eigen::MatrixXd x;       // D x T raw input
  Eigen::MatrixXd norm;    // Dn x T
  std::array<LayerCache, 2> layers;
  Eigen::MatrixXd memory;  // 2H x T, [h1; h2]
  Eigen::MatrixXd logits;  // (C+1) x T head output
  Eigen::MatrixXd probs;   // softmax(logits), average mode only
};

struct ForwardCache {
  std::vector<StreamCache> streams;
  Eigen::MatrixXd logits;  // combined logits (not used by average mode)
  Eigen::MatrixXd probs;   // (C+1) x T final probabilities
};

namespace detail {

inline Eigen::MatrixXd softmax_cols(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.cols(); ++t) {
    const double mx = logits.col(t).maxCoeff();
    p.col(t) = (logits.col(t).array() - mx).exp().matrix();
    p.col(t) /= p.col(t).sum();
  }
  return p;
}

inline void run_stream(const ModelParams& m, const StreamLayout& sl, const Eigen::MatrixXd& feats,
                       StreamCache& sc) {
  const auto& shape = m.shape();
  if (feats.cols() != shape.input_dim) {
    throw InputError(std::string(stream_name(sl.tag)) + " features have " +
                     std::to_string(feats.cols()) + " columns, model expects " +
                     std::to_string(shape.input_dim));
  }
  sc.x = feats.transpose();
  sc.norm = m.block(sl.in_w) * sc.x;
  sc.norm.colwise() += vview(m.values, sl.in_b);
  if (shape.norm_activation == NormActivation::kTanh) sc.norm = sc.norm.array().tanh().matrix();
  const auto c1 = cell_view(m.values, sl.cells[0]);
  const auto c2 = cell_view(m.values, sl.cells[1]);
  layer_forward(c1, sc.norm, sc.layers[0]);
  layer_forward(c2, sc.layers[0].out, sc.layers[1]);
  const Eigen::Index H = shape.hidden;
  sc.memory.resize(2 * H, sc.x.cols());
  sc.memory.topRows(H) = sc.layers[0].out;
  sc.memory.bottomRows(H) = sc.layers[1].out;
  sc.logits = m.block(sl.head_w) * sc.memory;
  sc.logits.colwise() += vview(m.values, sl.head_b);
}

}  // namespace detail

// Scores every frame of a feature sequence. Hidden states start at zero.
inline ScoreSequence forward(const ModelParams& m, const FeatureSet& features,
                             ForwardCache* cache_out = nullptr) {
  const auto& shape = m.shape();
  ForwardCache cache;
  Eigen::Index T = -1;
  for (const auto& sl : m.layout.streams) {
    const auto& f = features[static_cast<std::size_t>(sl.tag)];
    if (!f) {
      throw InputError(std::string("missing ") + stream_name(sl.tag) + " features for " +
                       fusion_mode_name(shape.fusion) + " model");
    }
    if (T >= 0 && f->rows() != T) throw InputError("stream feature lengths differ");
    T = f->rows();
    cache.streams.emplace_back();
    detail::run_stream(m, sl, *f, cache.streams.back());
  }

  switch (shape.fusion) {
    case FusionMode::kSingle:
      cache.logits = cache.streams[0].logits;
      cache.probs = detail::softmax_cols(cache.logits);
      break;
    case FusionMode::kAverage:
      for (auto& sc : cache.streams) sc.probs = detail::softmax_cols(sc.logits);
      cache.probs = 0.5 * (cache.streams[0].probs + cache.streams[1].probs);
      break;
    case FusionMode::kGating: {
      const auto g = m.block(*m.layout.gate);
      cache.logits = cache.streams[0].logits.array().colwise() * g.col(0).array();
      cache.logits.array() += cache.streams[1].logits.array().colwise() * g.col(1).array();
      cache.probs = detail::softmax_cols(cache.logits);
      break;
    }
    case FusionMode::kFusionLayer: {
      Eigen::MatrixXd cat(4 * shape.hidden, T);
      cat << cache.streams[0].memory, cache.streams[1].memory;
      cache.logits = m.block(*m.layout.fuse_w) * cat;
      cache.logits.colwise() += detail::vview(m.values, *m.layout.fuse_b);
      cache.probs = detail::softmax_cols(cache.logits);
      break;
    }
  }

  ScoreSequence out;
  out.rows = cache.probs.transpose();
  if (cache_out) *cache_out = std::move(cache);
  return out;
}

// Same contract as forward(); requires a model built with CellType::kFc.
inline ScoreSequence fc_baseline_forward(const ModelParams& m, const FeatureSet& features) {
  if (m.shape().cell != CellType::kFc) throw InputError("fc_baseline_forward needs an fc model");
  return forward(m, features);
}

inline constexpr double kLogProbFloor = -50.0;
inline constexpr int kIgnoreLabel = -1;

// -sum_t log P(y_t); log-probabilities are clamped at -50, frames labelled
// kIgnoreLabel are skipped.
inline double nll_loss(const Eigen::MatrixXd& score_rows, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != score_rows.rows()) {
    throw InputError("nll_loss: label count does not match number of frames");
  }
  double loss = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const int y = labels[t];
    if (y == kIgnoreLabel) continue;
    if (y < 0 || y >= score_rows.cols()) throw InputError("nll_loss: label out of range");
    const double p = score_rows(static_cast<Eigen::Index>(t), y);
    if (std::isnan(p)) return p;
    loss -= p > 0.0 ? std::max(std::log(p), kLogProbFloor) : kLogProbFloor;
  }
  return loss;
}

inline double nll_loss(const ScoreSequence& s, const std::vector<int>& labels) {
  return nll_loss(s.rows, labels);
}

struct BackwardOptions {
  // Truncation length for BPTT; 0 or >= T means untruncated.
  int bptt = 0;
  // Multiplies the loss (e.g. 1/N for a per-frame mean).
  double loss_scale = 1.0;
  // When false only the fusion/gating blocks receive gradients.
  bool into_streams = true;
};

// Adds d(loss_scale * nll_loss)/d(params) to `grad`.
inline void backward(const ModelParams& m, const ForwardCache& cache,
                     const std::vector<int>& labels, Gradients& grad,
                     const BackwardOptions& opts = {}) {
  const auto& shape = m.shape();
  const Eigen::Index T = cache.probs.cols();
  const Eigen::Index K = shape.outputs();
  if (static_cast<Eigen::Index>(labels.size()) != T) {
    throw InputError("backward: label count does not match forward cache");
  }
  if (grad.size() != m.size()) grad = Eigen::VectorXd::Zero(m.size());

  auto active = [&](Eigen::Index t) {
    const int y = labels[static_cast<std::size_t>(t)];
    if (y == kIgnoreLabel) return false;
    const double p = cache.probs(y, t);
    return p > 0.0 && std::log(p) > kLogProbFloor;
  };

  // Gradient w.r.t. each stream's head logits.
  std::vector<Eigen::MatrixXd> d_head(cache.streams.size());
  Eigen::MatrixXd d_logits;
  if (shape.fusion == FusionMode::kAverage) {
    for (std::size_t s = 0; s < cache.streams.size(); ++s) {
      const auto& ps = cache.streams[s].probs;
      d_head[s] = Eigen::MatrixXd::Zero(K, T);
      for (Eigen::Index t = 0; t < T; ++t) {
        if (!active(t)) continue;
        const int y = labels[static_cast<std::size_t>(t)];
        const double w = opts.loss_scale * 0.5 * ps(y, t) / cache.probs(y, t);
        d_head[s].col(t) = w * ps.col(t);
        d_head[s](y, t) -= w;
      }
    }
  } else {
    d_logits = Eigen::MatrixXd::Zero(K, T);
    for (Eigen::Index t = 0; t < T; ++t) {
      if (!active(t)) continue;
      d_logits.col(t) = opts.loss_scale * cache.probs.col(t);
      d_logits(labels[static_cast<std::size_t>(t)], t) -= opts.loss_scale;
    }
  }

  std::vector<Eigen::MatrixXd> d_memory(cache.streams.size());
  switch (shape.fusion) {
    case FusionMode::kSingle:
      d_head[0] = d_logits;
      break;
    case FusionMode::kAverage:
      break;
    case FusionMode::kGating: {
      const auto g = m.block(*m.layout.gate);
      auto gg = detail::view(grad, *m.layout.gate);
      for (int s = 0; s < 2; ++s) {
        gg.col(s) += (d_logits.array() * cache.streams[s].logits.array()).rowwise().sum().matrix();
        d_head[s] = (d_logits.array().colwise() * g.col(s).array()).matrix();
      }
      break;
    }
    case FusionMode::kFusionLayer: {
      const Eigen::Index H2 = 2 * shape.hidden;
      Eigen::MatrixXd cat(2 * H2, T);
      cat << cache.streams[0].memory, cache.streams[1].memory;
      detail::view(grad, *m.layout.fuse_w).noalias() += d_logits * cat.transpose();
      detail::vview(grad, *m.layout.fuse_b) += d_logits.rowwise().sum();
      const Eigen::MatrixXd d_cat = m.block(*m.layout.fuse_w).transpose() * d_logits;
      d_memory[0] = d_cat.topRows(H2);
      d_memory[1] = d_cat.bottomRows(H2);
      break;
    }
  }
  if (!opts.into_streams) return;

  const Eigen::Index H = shape.hidden;
  for (std::size_t s = 0; s < cache.streams.size(); ++s) {
    const auto& sl = m.layout.streams[s];
    const auto& sc = cache.streams[s];
    if (d_memory[s].size() == 0) d_memory[s] = Eigen::MatrixXd::Zero(2 * H, T);
    if (d_head[s].size() != 0) {
      detail::view(grad, sl.head_w).noalias() += d_head[s] * sc.memory.transpose();
      detail::vview(grad, sl.head_b) += d_head[s].rowwise().sum();
      d_memory[s].noalias() += m.block(sl.head_w).transpose() * d_head[s];
    }
    const auto c1 = detail::cell_view(m.values, sl.cells[0]);
    const auto c2 = detail::cell_view(m.values, sl.cells[1]);
    auto g1 = detail::cell_view(grad, sl.cells[0]);
    auto g2 = detail::cell_view(grad, sl.cells[1]);

    Eigen::MatrixXd d_h1 = d_memory[s].topRows(H);
    const Eigen::MatrixXd d_h2 = d_memory[s].bottomRows(H);
    Eigen::MatrixXd d_x2(H, T);
    layer_backward(c2, g2, sc.layers[0].out, sc.layers[1], d_h2, opts.bptt, d_x2);
    d_h1 += d_x2;
    Eigen::MatrixXd d_norm(shape.norm_dim, T);
    layer_backward(c1, g1, sc.norm, sc.layers[0], d_h1, opts.bptt, d_norm);

    if (shape.norm_activation == NormActivation::kTanh) {
      d_norm.array() *= 1.0 - sc.norm.array().square();
    }
    detail::view(grad, sl.in_w).noalias() += d_norm * sc.x.transpose();
    detail::vview(grad, sl.in_b) += d_norm.rowwise().sum();
  }
}

// ---------------------------------------------------------------------------
// Checkpoint: "RLN1", eight little-endian uint32 header fields (cell,
// fusion, stream mask, input dim, norm dim, hidden, classes, norm
// activation), uint64 parameter count, then the parameters as little-endian
// float64 in layout order.

inline constexpr std::array<char, 4> kCheckpointMagic = {'R', 'L', 'N', '1'};

inline std::string encode_checkpoint(const ModelParams& m) {
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  auto put = [&out](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  };
  const auto& s = m.shape();
  put(static_cast<std::uint32_t>(s.cell), 4);
  put(static_cast<std::uint32_t>(s.fusion), 4);
  put(s.stream_mask, 4);
  put(static_cast<std::uint32_t>(s.input_dim), 4);
  put(static_cast<std::uint32_t>(s.norm_dim), 4);
  put(static_cast<std::uint32_t>(s.hidden), 4);
  put(static_cast<std::uint32_t>(s.num_classes), 4);
  put(static_cast<std::uint32_t>(s.norm_activation), 4);
  put(static_cast<std::uint64_t>(m.size()), 8);
  for (Eigen::Index i = 0; i < m.size(); ++i) put(std::bit_cast<std::uint64_t>(m.values[i]), 8);
  return out;
}

inline ModelParams decode_checkpoint(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  std::size_t pos = 4;
  auto get = [&](int n) {
    if (pos + static_cast<std::size_t>(n) > bytes.size()) throw DataError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[pos + i]) << (8 * i);
    pos += static_cast<std::size_t>(n);
    return v;
  };
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic.data(), 4) != 0) {
    throw DataError("not an RLN1 checkpoint");
  }
  ModelShape s;
  const auto cell = get(4);
  const auto fusion = get(4);
  if (cell > 2 || fusion > 3) throw DataError("checkpoint has unknown cell or fusion code");
  s.cell = static_cast<CellType>(cell);
  s.fusion = static_cast<FusionMode>(fusion);
  s.stream_mask = static_cast<unsigned>(get(4));
  s.input_dim = static_cast<int>(get(4));
  s.norm_dim = static_cast<int>(get(4));
  s.hidden = static_cast<int>(get(4));
  s.num_classes = static_cast<int>(get(4));
  const auto norm_act = get(4);
  if (norm_act > 1) throw DataError("checkpoint has unknown normalization activation");
  s.norm_activation = static_cast<NormActivation>(norm_act);
  const auto count = get(8);
  ModelParams m = [&] {
    try {
      return ModelParams(s);
    } catch (const ConfigError& e) {
      throw DataError(std::string("checkpoint header invalid: ") + e.what());
    }
  }();
  if (count != static_cast<std::uint64_t>(m.size()) || bytes.size() != pos + 8 * count) {
    throw DataError("checkpoint parameter count does not match its header");
  }
  for (Eigen::Index i = 0; i < m.size(); ++i) m.values[i] = std::bit_cast<double>(get(8));
  return m;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelParams& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  const auto bytes = encode_checkpoint(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace recloc
