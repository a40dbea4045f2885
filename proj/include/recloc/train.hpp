// SPDX-License-Identifier: Apache-2.0
//
// Minibatch training: B random tracks per step, one random window of L
// frames from each, per-frame mean NLL, truncated BPTT, Adam.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "recloc/adam.hpp"
#include "recloc/errors.hpp"
#include "recloc/model.hpp"
#include "recloc/parallel.hpp"

namespace recloc {

struct TrainConfig {
  int batch_tracks = 100;
  int window = 20;
  int bptt = 20;
  int steps = 300;
  // Steps for the fusion/gating stage of two-stream models; <0 uses `steps`.
  int fusion_steps = -1;
  double learning_rate = 1e-3;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct TrainingExample {
  std::string id;
  FeatureSet features;
  std::vector<int> labels;  // per frame, 0 = background, kIgnoreLabel = masked

  Eigen::Index length() const { return static_cast<Eigen::Index>(labels.size()); }
};

struct LossRecord {
  std::string phase;
  int step = 0;
  double loss = 0.0;  // per-frame mean NLL of the batch
};

struct TrainResult {
  ModelParams params;
  std::vector<LossRecord> curve;
};

namespace detail {

inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

inline TrainingExample slice_window(const TrainingExample& ex, Eigen::Index start, Eigen::Index len) {
  TrainingExample w;
  w.id = ex.id;
  for (std::size_t s = 0; s < ex.features.size(); ++s) {
    if (ex.features[s]) w.features[s] = ex.features[s]->middleRows(start, len);
  }
  w.labels.assign(ex.labels.begin() + start, ex.labels.begin() + start + len);
  return w;
}

}  // namespace detail

struct TrainOptions {
  // Non-empty: 0/1 per parameter, 0 = frozen.
  Eigen::VectorXd mask;
  bool into_streams = true;
  std::string phase = "train";
};

// Windows shorter than `window` (short tracks) are used whole; since the
// model is causal this is the same as zero-padding with masked labels.
inline TrainResult train(const TrainConfig& cfg, ModelParams params,
                         const std::vector<TrainingExample>& data, const TrainOptions& opts = {}) {
  if (data.empty()) throw InputError("train: empty dataset");
  if (cfg.batch_tracks < 1 || cfg.window < 1 || cfg.steps < 0) {
    throw ConfigError("train: batch_tracks and window must be >= 1, steps >= 0");
  }
  for (const auto& ex : data) {
    if (ex.labels.empty()) throw InputError("train: example " + ex.id + " has no frames");
  }

  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  adam.weight_decay = cfg.weight_decay;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.epsilon = cfg.epsilon;

  std::mt19937_64 rng(cfg.seed);
  TrainResult result{params, {}};
  const auto B = static_cast<std::size_t>(cfg.batch_tracks);
  std::vector<TrainingExample> batch(B);
  std::vector<Gradients> grads(B);
  std::vector<double> losses(B);
  double last_finite = NAN;

  for (int step = 0; step < cfg.steps; ++step) {
    std::size_t frames = 0;
    for (std::size_t b = 0; b < B; ++b) {
      const auto& ex = data[detail::uniform_index(rng, data.size())];
      const Eigen::Index len = std::min<Eigen::Index>(cfg.window, ex.length());
      const auto slack = static_cast<std::uint64_t>(ex.length() - len);
      const auto start = static_cast<Eigen::Index>(detail::uniform_index(rng, slack + 1));
      batch[b] = detail::slice_window(ex, start, len);
      for (int y : batch[b].labels) frames += y != kIgnoreLabel;
    }
    const double scale = frames > 0 ? 1.0 / static_cast<double>(frames) : 0.0;

    const ModelParams& current = result.params;
    parallel_for(B, cfg.jobs, [&](std::size_t b) {
      ForwardCache cache;
      const auto scores = forward(current, batch[b].features, &cache);
      losses[b] = nll_loss(scores, batch[b].labels);
      grads[b] = Eigen::VectorXd::Zero(current.size());
      backward(current, cache, batch[b].labels, grads[b],
               {.bptt = cfg.bptt, .loss_scale = scale, .into_streams = opts.into_streams});
    });

    double loss = 0.0;
    Gradients total = Eigen::VectorXd::Zero(result.params.size());
    for (std::size_t b = 0; b < B; ++b) {
      loss += losses[b];
      total += grads[b];
    }
    loss *= scale;
    if (!std::isfinite(loss) || !total.allFinite()) {
      throw DivergenceError(opts.phase + ": non-finite loss at step " + std::to_string(step),
                            last_finite);
    }
    last_finite = loss;
    result.curve.push_back({opts.phase, step, loss});
    adam_step(adam, result.params.values, total, opts.mask);
  }
  return result;
}

// Trains a model of the given shape. Two-stream models first train each
// stream as a standalone single-stream network; gating and fusion_layer
// then train only their fusion weights on top of the frozen streams.
inline TrainResult train_model(const TrainConfig& cfg, const ModelShape& shape,
                               const std::vector<TrainingExample>& data) {
  shape.validate();
  if (shape.fusion == FusionMode::kSingle) {
    auto r = train(cfg, init_params(shape, cfg.seed), data, {.mask = {}, .phase = "single"});
    return r;
  }

  ModelParams combined = init_params(shape, cfg.seed);
  std::vector<LossRecord> curve;
  for (std::size_t k = 0; k < combined.layout.streams.size(); ++k) {
    const auto& sl = combined.layout.streams[k];
    ModelShape single = shape;
    single.fusion = FusionMode::kSingle;
    single.stream_mask = sl.tag == Stream::kAppearance ? 1u : 2u;
    TrainConfig scfg = cfg;
    scfg.seed = cfg.seed + 1 + k;
    auto r = train(scfg, init_params(single, scfg.seed), data, {.mask = {}, .phase = stream_name(sl.tag)});
    const Eigen::Index begin = sl.in_w.offset;
    const Eigen::Index end = sl.head_b.offset + sl.head_b.size();
    combined.values.segment(begin, end - begin) = r.params.values.head(end - begin);
    curve.insert(curve.end(), r.curve.begin(), r.curve.end());
  }

  if (shape.fusion == FusionMode::kAverage) return {combined, curve};

  TrainConfig fcfg = cfg;
  fcfg.seed = cfg.seed + 3;
  if (cfg.fusion_steps >= 0) fcfg.steps = cfg.fusion_steps;
  auto r = train(fcfg, combined, data,
                 {.mask = fusion_only_mask(combined.layout),
                  .into_streams = false,
                  .phase = fusion_mode_name(shape.fusion)});
  curve.insert(curve.end(), r.curve.begin(), r.curve.end());
  return {r.params, curve};
}

}  // namespace recloc
