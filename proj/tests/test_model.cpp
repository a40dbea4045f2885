// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "recloc/model.hpp"

using namespace recloc;

namespace {

ModelShape shape_of(CellType cell, FusionMode fusion, int D, int Dn, int H, int C) {
  ModelShape s;
  s.cell = cell;
  s.fusion = fusion;
  s.stream_mask = fusion == FusionMode::kSingle ? 1u : 3u;
  s.input_dim = D;
  s.norm_dim = Dn;
  s.hidden = H;
  s.num_classes = C;
  return s;
}

constexpr FusionMode kAllFusions[] = {FusionMode::kSingle, FusionMode::kAverage,
                                      FusionMode::kGating, FusionMode::kFusionLayer};
constexpr CellType kAllCells[] = {CellType::kGru, CellType::kLstm, CellType::kFc};

void expect_rows_are_distributions(const Eigen::MatrixXd& rows) {
  for (Eigen::Index t = 0; t < rows.rows(); ++t) {
    EXPECT_NEAR(rows.row(t).sum(), 1.0, 1e-9);
    EXPECT_GE(rows.row(t).minCoeff(), 0.0);
    EXPECT_LE(rows.row(t).maxCoeff(), 1.0);
  }
}

}  // namespace

TEST(Forward, ZeroParametersGiveUniformRows) {
  std::mt19937_64 rng(1);
  for (auto cell : kAllCells) {
    for (auto fusion : kAllFusions) {
      const auto shape = shape_of(cell, fusion, 5, 4, 3, 4);
      ModelParams m(shape);
      const auto s = forward(m, oracle::random_features(rng, shape, 6));
      ASSERT_EQ(s.rows.rows(), 6);
      ASSERT_EQ(s.rows.cols(), 5);
      // Gating at zero weights multiplies zero logits; still uniform.
      EXPECT_LE((s.rows.array() - 0.2).abs().maxCoeff(), 1e-15);
    }
  }
}

TEST(Forward, RowsAreDistributions) {
  std::mt19937_64 rng(2);
  for (auto cell : kAllCells) {
    for (auto fusion : kAllFusions) {
      const auto shape = shape_of(cell, fusion, 3, 4, 5, 3);
      const auto m = oracle::random_model(rng, shape, 2.0);
      expect_rows_are_distributions(forward(m, oracle::random_features(rng, shape, 9)).rows);
    }
  }
}

TEST(Forward, MatchesUnrolledOracleOnTinyModel) {
  std::mt19937_64 rng(3);
  for (auto cell : kAllCells) {
    for (auto fusion : kAllFusions) {
      for (auto act : {NormActivation::kTanh, NormActivation::kIdentity}) {
        auto shape = shape_of(cell, fusion, 4, 5, 3, 2);
        shape.norm_activation = act;
        const auto m = oracle::random_model(rng, shape, 0.8);
        const auto feats = oracle::random_features(rng, shape, 4);
        const auto got = forward(m, feats).rows;
        const auto want = oracle::unrolled_forward(m, feats);
        EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-12)
            << cell_type_name(cell) << "/" << fusion_mode_name(fusion);
      }
    }
  }
}

TEST(Forward, SingleFrameEqualsOneStep) {
  std::mt19937_64 rng(4);
  const auto shape = shape_of(CellType::kGru, FusionMode::kFusionLayer, 3, 3, 4, 2);
  const auto m = oracle::random_model(rng, shape);
  const auto feats = oracle::random_features(rng, shape, 5);
  FeatureSet first;
  for (std::size_t s = 0; s < first.size(); ++s) first[s] = feats[s]->topRows(1);
  const auto full = forward(m, feats).rows;
  const auto one = forward(m, first).rows;
  ASSERT_EQ(one.rows(), 1);
  // Zero initial state: the first frame of a longer sequence is the same.
  EXPECT_LE((full.row(0) - one.row(0)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((one - oracle::unrolled_forward(m, first)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, MissingStreamThrows) {
  const auto shape = shape_of(CellType::kGru, FusionMode::kAverage, 3, 3, 2, 2);
  ModelParams m(shape);
  FeatureSet f;
  f[0] = Eigen::MatrixXd::Zero(4, 3);
  EXPECT_THROW(forward(m, f), InputError);
  f[1] = Eigen::MatrixXd::Zero(5, 3);
  EXPECT_THROW(forward(m, f), InputError);
  f[1] = Eigen::MatrixXd::Zero(4, 2);
  EXPECT_THROW(forward(m, f), InputError);
}

TEST(Forward, AverageFusionIsMeanOfSingleStreams) {
  std::mt19937_64 rng(5);
  for (auto cell : {CellType::kGru, CellType::kLstm}) {
    const auto shape = shape_of(cell, FusionMode::kAverage, 4, 4, 3, 3);
    const auto m = oracle::random_model(rng, shape, 1.0);
    const auto feats = oracle::random_features(rng, shape, 8);
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(8, 4);
    for (const auto& sl : m.layout.streams) {
      auto single_shape = shape;
      single_shape.fusion = FusionMode::kSingle;
      single_shape.stream_mask = sl.tag == Stream::kAppearance ? 1u : 2u;
      ModelParams single(single_shape);
      const Eigen::Index len = sl.head_b.offset + sl.head_b.size() - sl.in_w.offset;
      single.values = m.values.segment(sl.in_w.offset, len);
      mean += 0.5 * forward(single, feats).rows;
    }
    EXPECT_LE((forward(m, feats).rows - mean).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(FcBaseline, FramePermutationEquivariant) {
  std::mt19937_64 rng(6);
  const auto shape = shape_of(CellType::kFc, FusionMode::kFusionLayer, 4, 5, 3, 3);
  const auto m = oracle::random_model(rng, shape, 1.0);
  const auto feats = oracle::random_features(rng, shape, 10);
  std::vector<int> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  FeatureSet shuffled;
  for (std::size_t s = 0; s < feats.size(); ++s) {
    shuffled[s] = Eigen::MatrixXd(10, 4);
    for (int t = 0; t < 10; ++t) shuffled[s]->row(t) = feats[s]->row(perm[static_cast<std::size_t>(t)]);
  }
  const auto a = fc_baseline_forward(m, feats).rows;
  const auto b = fc_baseline_forward(m, shuffled).rows;
  for (int t = 0; t < 10; ++t) {
    // Blocked matrix products may round the last bit differently per column.
    EXPECT_LE((b.row(t) - a.row(perm[static_cast<std::size_t>(t)])).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(FcBaseline, GruIsNotPermutationEquivariant) {
  std::mt19937_64 rng(7);
  const auto shape = shape_of(CellType::kGru, FusionMode::kSingle, 4, 5, 3, 3);
  const auto m = oracle::random_model(rng, shape, 1.0);
  const auto feats = oracle::random_features(rng, shape, 6);
  FeatureSet reversed;
  reversed[0] = feats[0]->colwise().reverse();
  const auto a = forward(m, feats).rows;
  const auto b = forward(m, reversed).rows;
  EXPECT_GT((b.colwise().reverse() - a).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FcBaseline, RequiresFcModel) {
  ModelParams m(shape_of(CellType::kGru, FusionMode::kSingle, 2, 2, 2, 1));
  FeatureSet f;
  f[0] = Eigen::MatrixXd::Zero(3, 2);
  EXPECT_THROW(fc_baseline_forward(m, f), InputError);
}

TEST(FcBaseline, ParameterCountMatchesGruModel) {
  for (auto fusion : kAllFusions) {
    for (int H : {1, 4, 16}) {
      const ModelParams gru(shape_of(CellType::kGru, fusion, 7, 9, H, 3));
      const ModelParams fc(shape_of(CellType::kFc, fusion, 7, 9, H, 3));
      EXPECT_EQ(gru.size(), fc.size());
    }
  }
}

TEST(Layout, ClassifierWidthFollowsFusionMode) {
  const int H = 6;
  const ModelLayout fused(shape_of(CellType::kGru, FusionMode::kFusionLayer, 4, 4, H, 3));
  EXPECT_EQ(fused.fuse_w->cols, 2 * 2 * H);
  EXPECT_EQ(fused.fuse_w->rows, 4);
  const ModelLayout single(shape_of(CellType::kGru, FusionMode::kSingle, 4, 4, H, 3));
  EXPECT_EQ(single.streams.at(0).head_w.cols, 2 * H);
  EXPECT_FALSE(single.fuse_w);
  const ModelLayout gated(shape_of(CellType::kLstm, FusionMode::kGating, 4, 4, H, 3));
  EXPECT_EQ(gated.gate->rows, 4);
  EXPECT_EQ(gated.gate->cols, 2);
  // Blocks tile the parameter vector without gaps.
  EXPECT_EQ(fused.total, fused.fuse_b->offset + fused.fuse_b->size());
}

TEST(Layout, InvalidShapesRejected) {
  auto s = shape_of(CellType::kGru, FusionMode::kSingle, 4, 4, 4, 2);
  s.stream_mask = 3;
  EXPECT_THROW(ModelLayout{s}, ConfigError);
  s = shape_of(CellType::kGru, FusionMode::kAverage, 4, 4, 4, 2);
  s.stream_mask = 1;
  EXPECT_THROW(ModelLayout{s}, ConfigError);
  s = shape_of(CellType::kGru, FusionMode::kSingle, 4, 4, 0, 2);
  EXPECT_THROW(ModelLayout{s}, ConfigError);
}

TEST(Init, BoundedWeightsZeroBiases) {
  const auto shape = shape_of(CellType::kGru, FusionMode::kGating, 9, 16, 4, 2);
  const auto m = init_params(shape, 42);
  const auto& sl = m.layout.streams[0];
  EXPECT_LE(m.block(sl.in_w).cwiseAbs().maxCoeff(), 1.0 / 3.0);
  EXPECT_EQ(m.block(sl.in_b).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LE(m.block(sl.cells[1].u[0]).cwiseAbs().maxCoeff(), 0.5);
  EXPECT_EQ(m.block(*m.layout.gate), Eigen::MatrixXd::Constant(3, 2, 0.5));
  EXPECT_EQ(init_params(shape, 42).values, m.values);
  EXPECT_NE(init_params(shape, 43).values, m.values);
}

TEST(NllLoss, PerfectPredictionsGiveZero) {
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(3, 3);
  rows(0, 2) = rows(1, 0) = rows(2, 1) = 1.0;
  EXPECT_EQ(nll_loss(rows, {2, 0, 1}), 0.0);
}

TEST(NllLoss, UniformPredictions) {
  const Eigen::MatrixXd rows = Eigen::MatrixXd::Constant(7, 4, 0.25);
  EXPECT_NEAR(nll_loss(rows, {0, 1, 2, 3, 0, 1, 2}), 7.0 * std::log(4.0), 1e-12);
}

TEST(NllLoss, MatchesDirectSum) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    Eigen::MatrixXd rows = oracle::random_matrix(rng, 6, 4).array().exp().matrix();
    for (int t = 0; t < 6; ++t) rows.row(t) /= rows.row(t).sum();
    const auto y = oracle::random_labels(rng, 6, 3);
    double want = 0.0;
    for (int t = 0; t < 6; ++t) {
      if (y[static_cast<std::size_t>(t)] >= 0) want -= std::log(rows(t, y[static_cast<std::size_t>(t)]));
    }
    EXPECT_NEAR(nll_loss(rows, y), want, 1e-12);
  }
}

TEST(NllLoss, ZeroProbabilityIsClamped) {
  Eigen::MatrixXd rows(1, 2);
  rows << 1.0, 0.0;
  EXPECT_EQ(nll_loss(rows, {1}), 50.0);
  EXPECT_THROW(nll_loss(rows, {2}), InputError);
  EXPECT_THROW(nll_loss(rows, {0, 0}), InputError);
}

TEST(Backward, MatchesFiniteDifferencesForEveryCellAndFusion) {
  std::mt19937_64 rng(9);
  for (auto cell : kAllCells) {
    for (auto fusion : kAllFusions) {
      const auto shape = shape_of(cell, fusion, 3, 4, 3, 2);
      const auto m = oracle::random_model(rng, shape, 0.7);
      const auto feats = oracle::random_features(rng, shape, 7);
      const auto y = oracle::random_labels(rng, 7, 2);
      const auto check = oracle::finite_difference_check(m, feats, y);
      EXPECT_LT(check.max_rel_error, 1e-4)
          << cell_type_name(cell) << "/" << fusion_mode_name(fusion) << " worst " << check.worst;
    }
  }
}

TEST(Backward, ZeroAtOneParameterMinimum) {
  // Zero parameters, two frames labelled with different classes: the
  // uniform prediction is optimal and every gradient component vanishes.
  ModelShape s = shape_of(CellType::kGru, FusionMode::kSingle, 1, 1, 1, 1);
  ModelParams m(s);
  FeatureSet f;
  f[0] = Eigen::MatrixXd::Zero(2, 1);
  ForwardCache cache;
  forward(m, f, &cache);
  Gradients g = Eigen::VectorXd::Zero(m.size());
  backward(m, cache, {0, 1}, g);
  EXPECT_LE(g.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Backward, TruncationAtSequenceLengthIsNoOp) {
  std::mt19937_64 rng(10);
  for (auto cell : {CellType::kGru, CellType::kLstm}) {
    const auto shape = shape_of(cell, FusionMode::kFusionLayer, 3, 3, 4, 2);
    const auto m = oracle::random_model(rng, shape);
    const auto feats = oracle::random_features(rng, shape, 9);
    const auto y = oracle::random_labels(rng, 9, 2);
    ForwardCache cache;
    forward(m, feats, &cache);
    Gradients full = Eigen::VectorXd::Zero(m.size()), cut_t = full, cut_long = full, cut_3 = full;
    backward(m, cache, y, full, {.bptt = 0});
    backward(m, cache, y, cut_t, {.bptt = 9});
    backward(m, cache, y, cut_long, {.bptt = 50});
    backward(m, cache, y, cut_3, {.bptt = 3});
    EXPECT_EQ(full, cut_t);
    EXPECT_EQ(full, cut_long);
    EXPECT_GT((full - cut_3).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Backward, LossScaleScalesGradient) {
  std::mt19937_64 rng(11);
  const auto shape = shape_of(CellType::kGru, FusionMode::kGating, 3, 3, 2, 2);
  const auto m = oracle::random_model(rng, shape);
  const auto feats = oracle::random_features(rng, shape, 5);
  const auto y = oracle::random_labels(rng, 5, 2);
  ForwardCache cache;
  forward(m, feats, &cache);
  Gradients a = Eigen::VectorXd::Zero(m.size()), b = a;
  backward(m, cache, y, a, {.loss_scale = 1.0});
  backward(m, cache, y, b, {.loss_scale = 0.25});
  EXPECT_LE((0.25 * a - b).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Backward, FusionOnlyLeavesStreamsUntouched) {
  std::mt19937_64 rng(12);
  for (auto fusion : {FusionMode::kGating, FusionMode::kFusionLayer}) {
    const auto shape = shape_of(CellType::kGru, fusion, 3, 3, 2, 2);
    const auto m = oracle::random_model(rng, shape);
    const auto feats = oracle::random_features(rng, shape, 5);
    const auto y = oracle::random_labels(rng, 5, 2);
    ForwardCache cache;
    forward(m, feats, &cache);
    Gradients full = Eigen::VectorXd::Zero(m.size()), head = full;
    backward(m, cache, y, full, {.into_streams = true});
    backward(m, cache, y, head, {.into_streams = false});
    const Eigen::VectorXd mask = fusion_only_mask(m.layout);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (mask[i] == 0.0) {
        EXPECT_EQ(head[i], 0.0);
      } else {
        EXPECT_EQ(head[i], full[i]);
      }
    }
  }
}

TEST(Checkpoint, RoundTripsBitExactly) {
  std::mt19937_64 rng(13);
  for (auto cell : kAllCells) {
    for (auto fusion : kAllFusions) {
      auto shape = shape_of(cell, fusion, 5, 6, 3, 4);
      shape.norm_activation = NormActivation::kIdentity;
      const auto m = oracle::random_model(rng, shape);
      const auto back = decode_checkpoint(encode_checkpoint(m));
      EXPECT_EQ(back.shape().cell, cell);
      EXPECT_EQ(back.shape().fusion, fusion);
      EXPECT_EQ(back.shape().norm_activation, NormActivation::kIdentity);
      EXPECT_EQ(back.values, m.values);
    }
  }
}

TEST(Checkpoint, HeaderLayout) {
  const auto m = init_params(shape_of(CellType::kGru, FusionMode::kSingle, 2, 3, 4, 5), 1);
  const auto bytes = encode_checkpoint(m);
  EXPECT_EQ(bytes.substr(0, 4), "RLN1");
  EXPECT_EQ(bytes.size(), 4u + 8u * 4u + 8u + 8u * static_cast<std::size_t>(m.size()));
  EXPECT_EQ(static_cast<unsigned char>(bytes[4 + 5 * 4]), 4u);  // hidden
}

TEST(Checkpoint, CorruptInputRejected) {
  const auto m = init_params(shape_of(CellType::kLstm, FusionMode::kSingle, 2, 3, 4, 5), 1);
  auto bytes = encode_checkpoint(m);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), DataError);
  EXPECT_THROW(decode_checkpoint(""), DataError);
  bytes[4] = 9;
  EXPECT_THROW(decode_checkpoint(bytes), DataError);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "recloc_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto m = init_params(shape_of(CellType::kGru, FusionMode::kFusionLayer, 2, 3, 4, 2), 7);
  save_checkpoint(dir / "m.rln", m);
  EXPECT_EQ(load_checkpoint(dir / "m.rln").values, m.values);
  EXPECT_THROW(load_checkpoint(dir / "missing.rln"), DataError);
  std::filesystem::remove_all(dir);
}
