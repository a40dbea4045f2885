// SPDX-License-Identifier: Apache-2.0
//
// Integration tests that drive the recloc executable end to end.

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "recloc/io.hpp"
#include "recloc/localization.hpp"

using namespace recloc;
namespace fs = std::filesystem;

namespace {

const char* const kTinyConfig =
    "seed = 5\n"
    "synthetic.n_videos = 4\n"
    "synthetic.frames_per_video = 70\n"
    "synthetic.min_segment_length = 10\n"
    "synthetic.max_segment_length = 20\n"
    "synthetic.min_gap = 5\n"
    "synthetic.feature_dim = 4\n"
    "model.hidden = 4\n"
    "model.norm_dim = 4\n"
    "train.batch_tracks = 4\n"
    "train.window = 10\n"
    "train.steps = 15\n"
    "train.fusion_steps = 5\n"
    "train.learning_rate = 0.01\n"
    "localize.median_window = 5\n"
    "localize.top_k = 5\n"
    "eval.iou_thresholds = 0.1, 0.3, 0.5\n"
    "eval.correctness = true\n";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

fs::path fresh_dir(const std::string& tag) {
  static int counter = 0;
  const fs::path p = fs::temp_directory_path() /
                     ("recloc_cli_" + std::to_string(::getpid()) + "_" + tag + "_" +
                      std::to_string(counter++));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct RunOutput {
  int code = -1;
  std::string stderr_text;
};

RunOutput run_cli(const std::string& args, const fs::path& workdir) {
  const fs::path err = workdir / "stderr.txt";
  const std::string cmd = std::string("\"") + RECLOC_CLI_PATH + "\" " + args + " >" +
                          (workdir / "stdout.txt").string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  RunOutput out;
  out.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  out.stderr_text = slurp(err);
  return out;
}

// Writes the tiny config to <dir>/run.cfg with out = <dir>/run.
fs::path write_config(const fs::path& dir, const std::string& extra = "") {
  const fs::path cfg = dir / "run.cfg";
  spit(cfg, std::string(kTinyConfig) + "out = " + (dir / "run").string() + "\n" + extra);
  return cfg;
}

int run_step(const std::string& cmd, const fs::path& dir, const std::string& extra_args = "") {
  return run_cli(cmd + " --config " + (dir / "run.cfg").string() + " " + extra_args, dir).code;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fresh_dir("pipeline");
    write_config(dir_);
    for (const char* cmd : {"generate", "train", "score", "localize", "evaluate", "export-curves"}) {
      codes_[cmd] = run_step(cmd, dir_);
    }
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static fs::path run() { return dir_ / "run"; }

  static inline fs::path dir_;
  static inline std::map<std::string, int> codes_;
};

}  // namespace

TEST_F(Pipeline, EverySubcommandSucceeds) {
  for (const auto& [cmd, code] : codes_) EXPECT_EQ(code, 0) << cmd;
}

TEST_F(Pipeline, ManifestListsEveryEmittedFile) {
  const auto manifest = nlohmann::json::parse(slurp(run() / "data" / "manifest.json"));
  EXPECT_EQ(manifest.at("seed").get<int>(), 5);
  std::set<std::string> listed;
  for (const auto& f : manifest.at("files")) {
    const std::string rel = f.at("path").get<std::string>();
    listed.insert(rel);
    EXPECT_EQ(f.at("digest").get<std::string>(), io::file_digest(run() / "data" / rel)) << rel;
  }
  for (const char* split : {"train", "test"}) {
    for (const char* name : {"tracks.jsonl", "gt.jsonl", "videos.jsonl"}) {
      EXPECT_TRUE(listed.count(std::string(split) + "/" + name)) << split << "/" << name;
    }
  }
  const auto tracks = io::read_tracks(run() / "data" / "test" / "tracks.jsonl", false);
  EXPECT_EQ(tracks.size(), 8u);
  for (const auto& t : tracks) {
    EXPECT_TRUE(listed.count("test/features/" + t.track_id + "_app.tfv"));
    EXPECT_TRUE(listed.count("test/features/" + t.track_id + "_flow.tfv"));
  }
}

TEST_F(Pipeline, SameSeedGivesIdenticalManifest) {
  const fs::path other = fresh_dir("manifest");
  write_config(other);
  ASSERT_EQ(run_step("generate", other), 0);
  const auto a = nlohmann::json::parse(slurp(run() / "data" / "manifest.json"));
  const auto b = nlohmann::json::parse(slurp(other / "run" / "data" / "manifest.json"));
  EXPECT_EQ(a, b);
  ASSERT_EQ(run_step("generate", other, "--seed 6"), 0);
  const auto c = nlohmann::json::parse(slurp(other / "run" / "data" / "manifest.json"));
  EXPECT_NE(a.at("files"), c.at("files"));
  fs::remove_all(other);
}

TEST_F(Pipeline, LossLogHasOneRowPerStep) {
  const auto rows = read_csv(run() / "loss.csv");
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0], (std::vector<std::string>{"step", "phase", "loss"}));
  // Two stream phases and one fusion phase.
  EXPECT_EQ(rows.size(), 1u + 15u + 15u + 5u);
}

TEST_F(Pipeline, ScoreRowsAreDistributions) {
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(run() / "scores")) {
    const auto m = io::read_matrix(e.path());
    ASSERT_EQ(m.cols(), 4);  // background + 3 classes
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      EXPECT_NEAR(m.row(r).sum(), 1.0, 1e-6);
      EXPECT_GE(m.row(r).minCoeff(), 0.0);
    }
    ++files;
  }
  EXPECT_EQ(files, 8u);
}

TEST_F(Pipeline, RescoringIsIdempotent) {
  std::map<std::string, std::string> before;
  for (const auto& e : fs::directory_iterator(run() / "scores")) {
    before[e.path().filename().string()] = slurp(e.path());
  }
  ASSERT_EQ(run_step("score", dir_, "--jobs 2"), 0);
  for (const auto& [name, bytes] : before) EXPECT_EQ(slurp(run() / "scores" / name), bytes) << name;
}

TEST_F(Pipeline, SingleFrameTrackGetsOneRow) {
  const fs::path split = run() / "data" / "single";
  fs::create_directories(split / "features");
  PersonTrack t;
  t.video_id = "solo";
  t.track_id = "solo_t0";
  t.start_frame = 3;
  t.boxes = {{10, 10, 50, 90}};
  io::write_matrix(split / "features" / "a.tfv", Eigen::MatrixXd::Constant(1, 4, 0.25));
  io::write_matrix(split / "features" / "f.tfv", Eigen::MatrixXd::Constant(1, 4, -0.5));
  io::write_json_lines(split / "tracks.jsonl",
                       {io::track_to_json(t, {"features/a.tfv", "features/f.tfv"})});
  const fs::path scores = dir_ / "single_scores";
  ASSERT_EQ(run_step("score", dir_,
                     "--set paths.eval_split=single paths.scores_dir=" + scores.string()),
            0);
  const auto m = io::read_matrix(scores / "solo_t0.tfv");
  EXPECT_EQ(m.rows(), 1);
  EXPECT_EQ(m.cols(), 4);
}

TEST_F(Pipeline, FeatureWidthMismatchIsDataError) {
  const fs::path split = run() / "data" / "wide";
  fs::create_directories(split);
  PersonTrack t;
  t.video_id = "w";
  t.track_id = "w_t0";
  t.boxes = {{10, 10, 50, 90}, {10, 10, 50, 90}};
  io::write_matrix(split / "a.tfv", Eigen::MatrixXd::Zero(2, 7));
  io::write_matrix(split / "f.tfv", Eigen::MatrixXd::Zero(2, 7));
  io::write_json_lines(split / "tracks.jsonl", {io::track_to_json(t, {"a.tfv", "f.tfv"})});
  EXPECT_EQ(run_step("score", dir_,
                     "--set paths.eval_split=wide paths.scores_dir=" + (dir_ / "wide_scores").string()),
            3);
}

TEST_F(Pipeline, EmptyScoresGiveEmptyDetections) {
  const fs::path empty = dir_ / "no_scores";
  fs::create_directories(empty);
  const fs::path out = dir_ / "empty_dets.jsonl";
  ASSERT_EQ(run_step("localize", dir_,
                     "--set paths.scores_dir=" + empty.string() + " paths.detections=" + out.string()),
            0);
  ASSERT_TRUE(fs::exists(out));
  EXPECT_EQ(fs::file_size(out), 0u);
}

TEST_F(Pipeline, DetectionsFormAnNmsAntichain) {
  const auto dets = io::read_detections(run() / "detections.jsonl");
  ASSERT_FALSE(dets.empty());
  for (std::size_t a = 0; a < dets.size(); ++a) {
    for (std::size_t b = a + 1; b < dets.size(); ++b) {
      if (dets[a].video_id != dets[b].video_id || dets[a].class_id != dets[b].class_id) continue;
      EXPECT_LE(st_iou(dets[a], dets[b]), 0.2);
    }
  }
}

TEST_F(Pipeline, DetectionsMatchKernelComposition) {
  // Recompute one track's class-1 candidates from its score file.
  const auto tracks = io::read_tracks(run() / "data" / "test" / "tracks.jsonl", false);
  const auto dets = io::read_detections(run() / "detections.jsonl");
  for (const auto& tr : tracks) {
    const auto m = io::read_matrix(run() / "scores" / (tr.track_id + ".tfv"));
    for (int c = 1; c < m.cols(); ++c) {
      std::vector<double> raw(static_cast<std::size_t>(m.rows()));
      for (Eigen::Index t = 0; t < m.rows(); ++t) raw[static_cast<std::size_t>(t)] = m(t, c);
      const auto runs = oracle::runs_at_least(oracle::median(raw, 5), 0.1);
      // Every emitted detection of this track and class is one of the runs.
      for (const auto& d : dets) {
        if (d.track_id != tr.track_id || d.class_id != c) continue;
        const FrameInterval local{d.start_frame - tr.start_frame, d.end_frame() - tr.start_frame};
        EXPECT_NE(std::find(runs.begin(), runs.end(), local), runs.end()) << tr.track_id;
        const std::vector<double> inside(raw.begin() + local.start, raw.begin() + local.end + 1);
        EXPECT_NEAR(d.score, oracle::top_k_mean(inside, 5), 1e-12);
      }
    }
  }
}

TEST_F(Pipeline, ResultsCsvHasMapAndCorrectnessRows) {
  const auto rows = read_csv(run() / "results.csv");
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0], (std::vector<std::string>{"iou_threshold", "class_id", "ap", "n_gt", "n_det"}));
  int map_rows = 0, correctness_rows = 0;
  std::vector<double> maps;
  for (const auto& r : rows) {
    ASSERT_EQ(r.size(), 5u);
    if (r[1] == "mAP") {
      ++map_rows;
      maps.push_back(std::stod(r[2]));
    }
    if (r[1].rfind("mAP[", 0) == 0) ++correctness_rows;
  }
  EXPECT_EQ(map_rows, 3);
  EXPECT_EQ(correctness_rows, 8);
  for (std::size_t k = 1; k < maps.size(); ++k) EXPECT_LE(maps[k], maps[k - 1]);
}

TEST_F(Pipeline, PerfectDetectionsScoreOne) {
  const auto gts = io::read_ground_truth(run() / "data" / "test" / "gt.jsonl");
  std::vector<Detection> dets;
  for (const auto& g : gts) {
    Detection d;
    static_cast<Tube&>(d) = g;
    d.video_id = g.video_id;
    d.class_id = g.class_id;
    d.score = 1.0;
    dets.push_back(d);
  }
  const fs::path dpath = dir_ / "perfect.jsonl";
  const fs::path rpath = dir_ / "perfect.csv";
  io::write_detections(dpath, dets);
  ASSERT_EQ(run_step("evaluate", dir_,
                     "--set paths.detections=" + dpath.string() + " paths.results=" + rpath.string()),
            0);
  for (const auto& r : read_csv(rpath)) {
    if (r[1] == "mAP") {
      EXPECT_EQ(r[2], "1.000000");
    }
  }
}

TEST_F(Pipeline, CurvesReplayTheLocalizationKernels) {
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(run() / "curves")) {
    ++files;
    const auto rows = read_csv(e.path());
    ASSERT_GE(rows.size(), 2u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"frame", "class", "raw_score", "filtered_score",
                                                 "label", "segment"}));
    std::map<int, std::vector<std::vector<std::string>>> by_class;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      ASSERT_EQ(rows[i].size(), 6u);
      by_class[std::stoi(rows[i][1])].push_back(rows[i]);
    }
    EXPECT_EQ(by_class.size(), 3u);
    for (const auto& [c, rs] : by_class) {
      std::vector<double> raw, filtered;
      std::vector<int> seg;
      for (const auto& r : rs) {
        raw.push_back(std::stod(r[2]));
        filtered.push_back(std::stod(r[3]));
        seg.push_back(std::stoi(r[5]));
      }
      EXPECT_EQ(filtered, oracle::median(raw, 5));
      const auto runs = oracle::runs_at_least(filtered, 0.1);
      std::vector<int> want(raw.size(), -1);
      for (std::size_t k = 0; k < runs.size(); ++k) {
        for (int f = runs[k].start; f <= runs[k].end; ++f) want[static_cast<std::size_t>(f)] = static_cast<int>(k);
      }
      EXPECT_EQ(seg, want);
    }
  }
  EXPECT_EQ(files, 8u);
}

TEST(CliErrors, ConfigErrorsExitWithTwo) {
  const fs::path dir = fresh_dir("config");
  write_config(dir, "train.stpes = 3\n");
  EXPECT_EQ(run_step("generate", dir), 2);
  spit(dir / "run.cfg", "synthetic.n_videos = 2\n");
  const auto r = run_step("generate", dir);
  EXPECT_EQ(r, 2);
  EXPECT_EQ(run_cli("generate --config " + (dir / "missing.cfg").string(), dir).code, 2);
  EXPECT_EQ(run_cli("frobnicate", dir).code, 2);
  EXPECT_EQ(run_cli("", dir).code, 2);
  EXPECT_EQ(run_cli("--help", dir).code, 0);
  fs::remove_all(dir);
}

TEST(CliErrors, UnwritableOutputExitsWithThree) {
  const fs::path dir = fresh_dir("unwritable");
  // A regular file where the output directory should go.
  spit(dir / "blocked", "not a directory");
  spit(dir / "run.cfg", std::string(kTinyConfig) + "out = " + (dir / "blocked" / "run").string() + "\n");
  EXPECT_EQ(run_step("generate", dir), 3);
  fs::remove_all(dir);
}

TEST(CliErrors, ReadOnlyOutputExitsWithThree) {
  if (::geteuid() == 0) GTEST_SKIP() << "permission bits do not bind the superuser";
  const fs::path dir = fresh_dir("readonly");
  fs::create_directories(dir / "ro");
  fs::permissions(dir / "ro", fs::perms::owner_read | fs::perms::owner_exec);
  spit(dir / "run.cfg", std::string(kTinyConfig) + "out = " + (dir / "ro" / "run").string() + "\n");
  EXPECT_EQ(run_step("generate", dir), 3);
  fs::permissions(dir / "ro", fs::perms::owner_all);
  fs::remove_all(dir);
}

TEST(CliErrors, MissingInputsExitWithThree) {
  const fs::path dir = fresh_dir("missing");
  write_config(dir);
  EXPECT_EQ(run_step("train", dir), 3);
  EXPECT_EQ(run_step("score", dir), 3);
  EXPECT_EQ(run_step("evaluate", dir), 3);
  fs::create_directories(dir / "run");
  spit(dir / "run" / "model.rln", "garbage");
  ASSERT_EQ(run_step("generate", dir), 0);
  EXPECT_EQ(run_step("score", dir), 3);
  fs::remove_all(dir);
}

TEST(CliErrors, DivergenceExitsWithFourAndReportsLoss) {
  const fs::path dir = fresh_dir("diverge");
  write_config(dir, "train.learning_rate = 1e308\ntrain.weight_decay = 0\n");
  ASSERT_EQ(run_step("generate", dir), 0);
  const auto r = run_cli("train --config " + (dir / "run.cfg").string(), dir);
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.stderr_text.find("last finite loss"), std::string::npos) << r.stderr_text;
  fs::remove_all(dir);
}
