// SPDX-License-Identifier: Apache-2.0
//
// recloc: generate | train | score | localize | evaluate | export-curves

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "recloc/commands.hpp"

namespace {

using namespace recloc;

int run(const std::string& command, const RunConfig& rc) {
  if (command == "generate") {
    const auto manifest = cli::cmd_generate(rc);
    std::printf("wrote %zu files to %s\n", manifest["files"].size(), rc.paths.data_dir.c_str());
  } else if (command == "train") {
    const auto r = cli::cmd_train(rc);
    std::printf("trained %s/%s model (%lld parameters), final loss %.6f -> %s\n",
                cell_type_name(r.params.shape().cell), fusion_mode_name(r.params.shape().fusion),
                static_cast<long long>(r.params.size()),
                r.curve.empty() ? 0.0 : r.curve.back().loss, rc.paths.model.c_str());
  } else if (command == "score") {
    std::printf("scored %zu tracks -> %s\n", cli::cmd_score(rc), rc.paths.scores_dir.c_str());
  } else if (command == "localize") {
    std::printf("%zu detections -> %s\n", cli::cmd_localize(rc).size(), rc.paths.detections.c_str());
  } else if (command == "evaluate") {
    const auto report = cli::cmd_evaluate(rc);
    for (const auto& t : report.thresholds) {
      std::printf("mAP@%g = %.4f\n", t.iou_threshold, t.map.value_or(0.0));
    }
  } else if (command == "export-curves") {
    std::printf("exported %zu curves -> %s\n", cli::cmd_export_curves(rc), rc.paths.curves_dir.c_str());
  }
  return cli::kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent track-level action localization on person tracks"};
  app.require_subcommand(1);

  std::string config_path;
  std::string seed, out, jobs;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "Key-value run configuration file");
  app.add_option("--seed", seed, "Random seed (overrides the config file)");
  app.add_option("--out", out, "Run directory (overrides the config file)");
  app.add_option("--jobs", jobs, "Worker threads (overrides the config file)");
  app.add_option("--set", overrides, "Extra key=value overrides")->take_all();

  for (const char* name : {"generate", "train", "score", "localize", "evaluate", "export-curves"}) {
    app.add_subcommand(name)->fallthrough();
  }
  app.fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kConfigError;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  RunConfig rc;
  try {
    KeyValues kv;
    if (!config_path.empty()) kv = read_key_values(config_path);
    if (!seed.empty()) kv["seed"] = seed;
    if (!out.empty()) kv["out"] = out;
    if (!jobs.empty()) kv["jobs"] = jobs;
    for (const auto& o : overrides) apply_override(kv, o);
    rc = make_run_config(kv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return cli::kConfigError;
  }

  try {
    return run(command, rc);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return cli::kConfigError;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "training diverged: %s (last finite loss %.6g)\n", e.what(),
                 e.last_finite_loss());
    return cli::kDivergence;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return cli::kDataError;
  } catch (const InputError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return cli::kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return cli::kDataError;
  }
}
