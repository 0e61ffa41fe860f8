#include <algorithm>
#include <cctype>
#include <cstdio>
#include <exception>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "graphalign/graphalign.hpp"

namespace {

using graphalign::RunConfig;

int exit_code_for(graphalign::ErrorKind kind) {
  switch (kind) {
    case graphalign::ErrorKind::config: return 2;
    case graphalign::ErrorKind::invalid_input: return 3;
    case graphalign::ErrorKind::io: return 4;
    case graphalign::ErrorKind::format: return 5;
    case graphalign::ErrorKind::numeric: return 6;
  }
  return 1;
}

constexpr const char* kExitCodeHelp =
    "Exit codes: 0 success, 1 oracle check failed, 2 bad configuration,\n"
    "3 invalid input data, 4 I/O failure, 5 malformed file, 6 numeric failure.";

std::string trimmed(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

/// Reads a flat key=value config file ('#' comments, blank lines allowed).
/// A key repeated later in the file replaces the earlier value.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f.good())
    graphalign::fail(graphalign::ErrorKind::io, path + ": cannot open config file");
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const std::string text = trimmed(line);
    if (text.empty() || text[0] == '#') continue;
    const std::size_t eq = text.find('=');
    graphalign::require(eq != std::string::npos && eq > 0, graphalign::ErrorKind::config,
                        path + ":" + std::to_string(line_no) + ": expected key=value");
    std::string key = trimmed(text.substr(0, eq));
    std::string value = trimmed(text.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
        value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    graphalign::require(!key.empty(), graphalign::ErrorKind::config,
                        path + ":" + std::to_string(line_no) + ": empty key");
    // The scan-order flag pair targets one option; only the last line counts.
    const std::string group = key == "no-scan-order" ? "scan-order" : key;
    const auto dup = std::find_if(entries.begin(), entries.end(), [&](const auto& kv) {
      return (kv.first == "no-scan-order" ? "scan-order" : kv.first) == group;
    });
    if (dup != entries.end()) entries.erase(dup);
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

/// Pulls --config out of the raw arguments and splices the file's options in
/// right after the subcommand name, so explicit command-line flags (which
/// come later) override the file.
std::vector<std::string> args_with_config(int argc, char** argv) {
  std::vector<std::string> args;
  std::string config_path;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) {
      config_path = argv[++i];
      continue;
    }
    if (a.rfind("--config=", 0) == 0) {
      config_path = a.substr(9);
      continue;
    }
    args.push_back(a);
  }
  if (config_path.empty()) return args;

  static const char* kSubcommands[] = {"generate", "align", "sweep", "oracle-check"};
  const auto sub = std::find_if(args.begin(), args.end(), [](const std::string& a) {
    return std::find(std::begin(kSubcommands), std::end(kSubcommands), a) !=
           std::end(kSubcommands);
  });
  graphalign::require(sub != args.end(), graphalign::ErrorKind::config,
                      "--config requires a subcommand");

  const auto has_explicit = [&](const std::string& key) {
    const std::string flag = "--" + key;
    for (auto it = std::next(sub); it != args.end(); ++it)
      if (*it == flag || it->rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> inject;
  for (const auto& [key, value] : read_config_file(config_path)) {
    bool overridden = has_explicit(key);
    if (key == "scan-order" || key == "no-scan-order")
      overridden = has_explicit("scan-order") || has_explicit("no-scan-order");
    if (!overridden) inject.push_back("--" + key + "=" + value);
  }
  args.insert(std::next(sub), inject.begin(), inject.end());
  return args;
}

// Shared flags. Every flag has a config-file equivalent (same name, no
// leading dashes) via --config; command-line values override the file.
void add_common_options(CLI::App& cmd, RunConfig& cfg, std::string& method,
                        std::string& pad_mode, std::string& attention_mode) {
  static std::string config_path_unused;
  cmd.add_option("--config", config_path_unused,
                 "Flat key=value file of these options; explicit flags win");

  cmd.add_option("--seed", cfg.scene.seed, "Scene seed")->capture_default_str();
  cmd.add_option("--objects", cfg.scene.n_objects, "Number of labeled boxes")
      ->capture_default_str();
  cmd.add_option("--classes", cfg.scene.classes, "Number of object classes")
      ->capture_default_str();
  cmd.add_option("--range-max", cfg.scene.range_max, "Scene radius in meters")
      ->capture_default_str();
  cmd.add_option("--points-per-object", cfg.scene.points_per_object,
                 "Surface point budget at 20 m")
      ->capture_default_str();
  cmd.add_option("--ground-points", cfg.scene.ground_points, "Ground plane point count")
      ->capture_default_str();
  cmd.add_option("--image-width", cfg.scene.image_width, "Feature map width")
      ->capture_default_str();
  cmd.add_option("--image-height", cfg.scene.image_height, "Feature map height")
      ->capture_default_str();
  cmd.add_option("--channels", cfg.scene.channels, "Feature channels")->capture_default_str();
  cmd.add_flag("--scan-order,!--no-scan-order", cfg.scene.scan_order,
               "Emit points in azimuth scan order")
      ->capture_default_str();

  cmd.add_option("--translation-sigma", cfg.perturb.translation_sigma,
                 "Calibration translation noise, meters per axis")
      ->capture_default_str();
  cmd.add_option("--rotation-sigma", cfg.perturb.rotation_sigma,
                 "Calibration rotation noise, radians")
      ->capture_default_str();
  cmd.add_option("--timing-skew", cfg.perturb.timing_skew,
                 "Lateral offset emulating time-sync error, meters")
      ->capture_default_str();
  cmd.add_option("--perturb-seed", cfg.perturb.seed, "Perturbation seed")
      ->capture_default_str();

  cmd.add_option("--k", cfg.graph.k, "Neighbors per point (<= 64)")->capture_default_str();
  cmd.add_option("--chunk", cfg.graph.chunk_size, "Points per KNN subspace chunk")
      ->capture_default_str();
  cmd.add_option("--pad-mode", pad_mode, "Padding for short chunks: self_index or literal_zero")
      ->capture_default_str();

  cmd.add_option("--heads", cfg.heads, "Attention heads (must divide channels)")
      ->capture_default_str();
  cmd.add_option("--attention-mode", attention_mode, "literal or standard")
      ->capture_default_str();
  cmd.add_option("--attention-seed", cfg.attention_seed, "Seed for attention params init")
      ->capture_default_str();
  cmd.add_option("--params", cfg.params_path, "Load attention params from a GASA file");

  cmd.add_option("--method", method,
                 "Pipeline: projection_only, graph_max, or graph_safa_max")
      ->capture_default_str();
  cmd.add_option("--workers", cfg.workers, "Worker threads (0 = hardware concurrency)")
      ->capture_default_str();

  cmd.add_option("--cloud", cfg.cloud_path, "Point cloud file (GAPC)")->capture_default_str();
  cmd.add_option("--features", cfg.features_path, "Feature map file (GAFM)")
      ->capture_default_str();
  cmd.add_option("--calibration", cfg.calibration_path, "Calibration text file")
      ->capture_default_str();
  cmd.add_option("--ground-truth", cfg.ground_truth_path, "Ground truth CSV")
      ->capture_default_str();
}

void finalize_enums(RunConfig& cfg, const std::string& method, const std::string& pad_mode,
                    const std::string& attention_mode) {
  cfg.method = graphalign::parse_method(method);
  cfg.graph.pad_mode = graphalign::parse_pad_mode(pad_mode);
  cfg.mode = graphalign::parse_attention_mode(attention_mode);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "graphalign: cross-modal point/image feature alignment via calibrated projection,\n"
      "chunked KNN graphs, one-to-many fusion, and self-attention neighbor selection."};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);

  RunConfig cfg;
  std::string method = graphalign::method_name(cfg.method);
  std::string pad_mode = graphalign::pad_mode_name(cfg.graph.pad_mode);
  std::string attention_mode = graphalign::attention_mode_name(cfg.mode);

  CLI::App* gen = app.add_subcommand(
      "generate", "Generate a synthetic scene: point cloud, feature map, calibration, truth");
  add_common_options(*gen, cfg, method, pad_mode, attention_mode);

  CLI::App* align = app.add_subcommand(
      "align", "Run an alignment pipeline against generated scene files and write a report");
  add_common_options(*align, cfg, method, pad_mode, attention_mode);
  align->add_option("--report", cfg.report_path, "Report output path")->capture_default_str();
  align->add_option("--fused-out", cfg.fused_dump_path,
                    "Optional fused-feature dump path (GAFM, one column)");

  CLI::App* sweep = app.add_subcommand(
      "sweep", "Evaluate and time a hyperparameter grid, writing a CSV");
  add_common_options(*sweep, cfg, method, pad_mode, attention_mode);
  std::vector<std::string> sweep_methods;
  sweep->add_option("--grid-k", cfg.sweep_k, "K grid values")->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--grid-chunk", cfg.sweep_chunk, "Chunk grid values")->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--grid-heads", cfg.sweep_heads, "Head grid values")->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--methods", sweep_methods,
                    "Methods to sweep (default: all three pipelines)")
      ->delimiter(',');
  sweep->add_option("--timing-reps", cfg.timing_reps, "Timed repetitions per cell (>= 3)")
      ->capture_default_str();
  sweep->add_option("--out", cfg.sweep_csv_path, "CSV output path")->capture_default_str();

  CLI::App* oracle = app.add_subcommand(
      "oracle-check", "Compare fast implementations against brute-force references");
  (void)oracle;

  std::vector<std::string> args;
  try {
    args = args_with_config(argc, argv);
  } catch (const graphalign::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.kind());
  }

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    finalize_enums(cfg, method, pad_mode, attention_mode);
    if (gen->parsed()) {
      graphalign::run_generate(cfg);
      std::printf("wrote %s, %s, %s, %s\n", cfg.cloud_path.c_str(), cfg.features_path.c_str(),
                  cfg.calibration_path.c_str(), cfg.ground_truth_path.c_str());
    } else if (align->parsed()) {
      const graphalign::AlignmentReport report = graphalign::run_align(cfg);
      std::printf("method %s: surviving %d", graphalign::method_name(report.method),
                  report.surviving);
      for (int b = 0; b < graphalign::kBucketCount; ++b)
        std::printf(", %s acc %.4f", graphalign::kBucketNames[b], report.buckets[b].accuracy);
      std::printf("; report -> %s\n", cfg.report_path.c_str());
    } else if (sweep->parsed()) {
      if (!sweep_methods.empty()) {
        cfg.sweep_methods.clear();
        for (const std::string& m : sweep_methods)
          cfg.sweep_methods.push_back(graphalign::parse_method(m));
      }
      const auto rows = graphalign::run_sweep(cfg);
      std::printf("%zu rows -> %s\n", rows.size(), cfg.sweep_csv_path.c_str());
    } else {
      bool all_ok = true;
      for (const auto& [name, ok] : graphalign::oracle_checks()) {
        std::printf("%s - %s\n", ok ? "ok" : "FAIL", name.c_str());
        all_ok = all_ok && ok;
      }
      if (!all_ok) return 1;
    }
  } catch (const graphalign::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
