#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "graphalign/cli.hpp"

using namespace graphalign;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "graphalign_cli_tests";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path_for(const std::string& name) { return (scratch() / name).string(); }

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f.good()) return {};
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

RunConfig small_cfg(const std::string& prefix, std::uint64_t seed) {
  RunConfig cfg;
  cfg.scene.seed = seed;
  cfg.scene.n_objects = 3;
  cfg.scene.classes = 3;
  cfg.scene.points_per_object = 40;
  cfg.scene.ground_points = 300;
  cfg.scene.image_width = 128;
  cfg.scene.image_height = 96;
  cfg.graph.k = 8;
  cfg.graph.chunk_size = 500;
  cfg.workers = 1;
  cfg.cloud_path = path_for(prefix + "_cloud.gapc");
  cfg.features_path = path_for(prefix + "_features.gafm");
  cfg.calibration_path = path_for(prefix + "_calib.txt");
  cfg.ground_truth_path = path_for(prefix + "_gt.csv");
  cfg.report_path = path_for(prefix + "_report.txt");
  cfg.sweep_csv_path = path_for(prefix + "_sweep.csv");
  return cfg;
}

struct CliResult {
  int code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args, const std::string& tag) {
  const std::string out_path = path_for("cli_" + tag + ".log");
  const std::string cmd =
      std::string(GRAPHALIGN_CLI_PATH) + " " + args + " > " + out_path + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CliResult res;
  if (WIFEXITED(raw)) res.code = WEXITSTATUS(raw);
  res.output = slurp(out_path);
  return res;
}

struct EnvSeedGuard {
  ~EnvSeedGuard() { unsetenv("GRAPHALIGN_SEED"); }
};

std::string without_timing(const std::string& report_text) {
  const auto pos = report_text.find("\n[timing]");
  return pos == std::string::npos ? report_text : report_text.substr(0, pos);
}

}  // namespace

TEST_CASE("generate writes artifacts that read back to the same scene", "[cli]") {
  const RunConfig cfg = small_cfg("gen", 201);
  const Scene scene = run_generate(cfg);

  const PointSet cloud = read_point_cloud(cfg.cloud_path);
  REQUIRE(cloud.size() == scene.points.size());
  REQUIRE(cloud.labels == scene.points.labels);
  for (int i = 0; i < cloud.size(); ++i)
    for (int a = 0; a < 3; ++a)
      REQUIRE(cloud.coords(i, a) == double(float(scene.points.coords(i, a))));

  const ImageFeatureMap fmap = read_feature_map(cfg.features_path);
  REQUIRE(fmap.width == cfg.scene.image_width);
  REQUIRE(fmap.height == cfg.scene.image_height);

  const CalibrationRig rig = read_calibration(cfg.calibration_path);
  REQUIRE(rig.intrinsics == scene.rig.intrinsics);
  REQUIRE(rig.rotation == scene.rig.rotation);
  REQUIRE(rig.translation == scene.rig.translation);
  REQUIRE(rig.image_width == scene.rig.image_width);

  const std::vector<GroundTruthRow> gt = read_ground_truth(cfg.ground_truth_path);
  REQUIRE(gt.size() == scene.ground_truth.size());
}

TEST_CASE("align reproduces the generated scene's channel and class counts", "[cli]") {
  RunConfig cfg = small_cfg("align", 202);
  run_generate(cfg);

  cfg.method = Method::graph_max;
  const AlignmentReport report = run_align(cfg);
  REQUIRE(report.surviving > 0);
  const std::string text = slurp(cfg.report_path);
  REQUIRE(text.rfind("report_version: 1\n", 0) == 0);
  REQUIRE(text.find("method = graph_max") != std::string::npos);
  REQUIRE(text.find("graph.k = 8") != std::string::npos);

  // A clean rig on a clean scene aligns essentially everything.
  int labeled = 0;
  double acc = 0.0;
  for (int b = 0; b < kBucketCount; ++b) {
    labeled += report.buckets[b].labeled;
    acc += report.buckets[b].accuracy * report.buckets[b].labeled;
  }
  REQUIRE(labeled > 0);
  REQUIRE(acc / labeled >= 0.99);
}

TEST_CASE("align accepts attention params from a file", "[cli]") {
  RunConfig cfg = small_cfg("params", 203);
  run_generate(cfg);

  const std::string params_path = path_for("params.gasa");
  write_attention_params(params_path, init_params(cfg.scene.channels, 2, 55));
  cfg.method = Method::graph_safa_max;
  cfg.params_path = params_path;
  cfg.fused_dump_path = path_for("params_fused.gafm");
  const AlignmentReport report = run_align(cfg);
  REQUIRE(report.safa_macs_instrumented > 0);
  REQUIRE(slurp(cfg.report_path).find("attention.params_source = file") != std::string::npos);

  const ImageFeatureMap dump = read_feature_map(cfg.fused_dump_path);
  REQUIRE(dump.height == report.surviving);
  REQUIRE(dump.width == 1);
  REQUIRE(dump.channels == cfg.scene.channels);

  // A params file with the wrong channel count is rejected.
  write_attention_params(params_path, init_params(cfg.scene.channels * 2, 2, 55));
  REQUIRE_THROWS_AS(run_align(cfg), Error);
}

TEST_CASE("reports are identical across worker counts outside the timing block", "[cli]") {
  RunConfig cfg = small_cfg("workers", 204);
  run_generate(cfg);
  cfg.method = Method::graph_safa_max;
  cfg.perturb.translation_sigma = 0.2;
  cfg.perturb.timing_skew = 0.1;
  cfg.perturb.seed = 11;

  cfg.workers = 1;
  cfg.report_path = path_for("workers_report_1.txt");
  run_align(cfg);
  cfg.workers = 4;
  cfg.report_path = path_for("workers_report_4.txt");
  run_align(cfg);

  const std::string a = slurp(path_for("workers_report_1.txt"));
  const std::string b = slurp(path_for("workers_report_4.txt"));
  REQUIRE(!a.empty());
  REQUIRE(without_timing(a) == without_timing(b));
  REQUIRE(a.find("workers = 1") != std::string::npos);
  REQUIRE(b.find("workers = 4") != std::string::npos);
}

TEST_CASE("the environment seed overrides every configured seed", "[cli]") {
  EnvSeedGuard guard;
  setenv("GRAPHALIGN_SEED", "777", 1);
  RunConfig cfg = small_cfg("envseed", 1);
  const Scene via_env = run_generate(cfg);
  unsetenv("GRAPHALIGN_SEED");

  RunConfig direct = small_cfg("envseed2", 777);
  const Scene via_cfg = run_generate(direct);
  REQUIRE(via_env.points.coords == via_cfg.points.coords);
  REQUIRE(via_env.points.labels == via_cfg.points.labels);

  setenv("GRAPHALIGN_SEED", "not-a-number", 1);
  try {
    run_generate(small_cfg("envseed3", 1));
    FAIL("expected a config error");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::config);
  }
}

TEST_CASE("sweep emits the full grid and a readable csv", "[cli]") {
  RunConfig cfg = small_cfg("sweep", 205);
  cfg.sweep_methods = {Method::projection_only, Method::graph_max};
  cfg.sweep_k = {6, 8};
  cfg.sweep_chunk = {300};
  cfg.sweep_heads = {1};
  cfg.timing_reps = 3;
  const std::vector<SweepRow> rows = run_sweep(cfg);
  REQUIRE(rows.size() == 2 * 2 * 1 * 1 * 3);

  const SweepCsv csv = read_sweep_csv(cfg.sweep_csv_path);
  REQUIRE(csv.rows.size() == rows.size());
  bool has_seed = false, has_methods = false;
  for (const std::string& c : csv.comments) {
    if (c.find("scene.seed = 205") != std::string::npos) has_seed = true;
    if (c.find("sweep.methods = projection_only graph_max") != std::string::npos)
      has_methods = true;
  }
  REQUIRE(has_seed);
  REQUIRE(has_methods);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    REQUIRE(csv.rows[i].method == rows[i].method);
    REQUIRE(csv.rows[i].accuracy == rows[i].accuracy);
  }
}

TEST_CASE("oracle checks all pass", "[cli]") {
  const auto results = oracle_checks();
  REQUIRE(results.size() >= 8);
  for (const auto& [name, ok] : results) {
    INFO(name);
    REQUIRE(ok);
  }
}

TEST_CASE("config validation catches bad values", "[cli]") {
  RunConfig cfg = small_cfg("badcfg", 206);
  cfg.graph.k = 65;
  REQUIRE_THROWS_AS(validate_config(cfg), Error);
  cfg = small_cfg("badcfg", 206);
  cfg.heads = 3;  // does not divide 8
  REQUIRE_THROWS_AS(validate_config(cfg), Error);
  cfg = small_cfg("badcfg", 206);
  cfg.timing_reps = 2;
  REQUIRE_THROWS_AS(validate_config(cfg), Error);
  cfg = small_cfg("badcfg", 206);
  cfg.sweep_k = {0};
  REQUIRE_THROWS_AS(validate_config(cfg), Error);
}

TEST_CASE("mode and pad names round-trip", "[cli]") {
  REQUIRE(parse_pad_mode("literal_zero") == PadMode::literal_zero);
  REQUIRE(parse_pad_mode("self_index") == PadMode::self_index);
  REQUIRE_THROWS_AS(parse_pad_mode("edge"), Error);
  REQUIRE(parse_attention_mode("literal") == AttentionMode::literal);
  REQUIRE(parse_attention_mode("standard") == AttentionMode::standard);
  REQUIRE_THROWS_AS(parse_attention_mode("fused"), Error);
}

TEST_CASE("the binary documents exit codes and fails with them", "[cli-binary]") {
  const CliResult help = run_cli("--help", "help");
  REQUIRE(help.code == 0);
  REQUIRE(help.output.find("Exit codes:") != std::string::npos);
  REQUIRE(help.output.find("generate") != std::string::npos);
  REQUIRE(help.output.find("align") != std::string::npos);
  REQUIRE(help.output.find("sweep") != std::string::npos);
  REQUIRE(help.output.find("oracle-check") != std::string::npos);

  const CliResult bad_flag = run_cli("align --no-such-flag", "badflag");
  REQUIRE(bad_flag.code == 2);

  const CliResult bad_value = run_cli("align --method fastest", "badvalue");
  REQUIRE(bad_value.code == 2);

  const std::string missing = path_for("missing_cloud.gapc");
  const CliResult no_cloud = run_cli("align --cloud " + missing, "nocloud");
  REQUIRE(no_cloud.code == 4);
  REQUIRE(no_cloud.output.find(missing) != std::string::npos);
}

TEST_CASE("the binary runs the full generate-align-sweep flow", "[cli-binary]") {
  const std::string cloud = path_for("bin_cloud.gapc");
  const std::string feats = path_for("bin_features.gafm");
  const std::string calib = path_for("bin_calib.txt");
  const std::string gt = path_for("bin_gt.csv");
  const std::string report = path_for("bin_report.txt");
  const std::string csv = path_for("bin_sweep.csv");
  const std::string files = " --cloud " + cloud + " --features " + feats + " --calibration " +
                            calib + " --ground-truth " + gt;
  const std::string scene =
      "--seed 210 --objects 3 --classes 3 --points-per-object 40 --ground-points 250 "
      "--image-width 128 --image-height 96";

  const CliResult gen = run_cli("generate " + scene + files, "gen");
  REQUIRE(gen.code == 0);
  REQUIRE(fs::exists(cloud));
  REQUIRE(fs::exists(feats));
  REQUIRE(fs::exists(calib));
  REQUIRE(fs::exists(gt));

  const CliResult align = run_cli(
      "align " + scene + files + " --method graph_safa_max --k 8 --chunk 400 --heads 2 "
      "--translation-sigma 0.1 --timing-skew 0.1 --workers 1 --report " + report, "align");
  REQUIRE(align.code == 0);
  const std::string report_text = slurp(report);
  REQUIRE(report_text.find("method = graph_safa_max") != std::string::npos);
  REQUIRE(report_text.find("attention.heads = 2") != std::string::npos);

  const CliResult swp = run_cli(
      "sweep " + scene + files + " --grid-k 6,8 --grid-chunk 300 --grid-heads 1 "
      "--methods projection_only,graph_max --timing-reps 3 --workers 1 --out " + csv, "sweep");
  REQUIRE(swp.code == 0);
  REQUIRE(read_sweep_csv(csv).rows.size() == 12);

  const CliResult oracle = run_cli("oracle-check", "oracle");
  REQUIRE(oracle.code == 0);
  REQUIRE(oracle.output.find("ok - ") != std::string::npos);
  REQUIRE(oracle.output.find("FAIL") == std::string::npos);
}

TEST_CASE("a config file seeds options and flags override it", "[cli-binary]") {
  const std::string cloud = path_for("cfg_cloud.gapc");
  const std::string feats = path_for("cfg_features.gafm");
  const std::string calib = path_for("cfg_calib.txt");
  const std::string gt = path_for("cfg_gt.csv");
  const std::string report = path_for("cfg_report.txt");
  const std::string files = " --cloud " + cloud + " --features " + feats + " --calibration " +
                            calib + " --ground-truth " + gt;

  const std::string cfg_path = path_for("run.ini");
  {
    std::ofstream f(cfg_path, std::ios::trunc);
    f << "seed=211\nobjects=3\nclasses=3\npoints-per-object=40\nground-points=250\n"
      << "image-width=128\nimage-height=96\nk=6\nmethod=graph_max\nworkers=1\n";
  }

  REQUIRE(run_cli("generate --config " + cfg_path + files, "cfggen").code == 0);

  const CliResult from_file =
      run_cli("align --config " + cfg_path + files + " --report " + report, "cfgalign");
  REQUIRE(from_file.code == 0);
  REQUIRE(slurp(report).find("graph.k = 6") != std::string::npos);

  const CliResult overridden = run_cli(
      "align --config " + cfg_path + files + " --k 12 --report " + report, "cfgoverride");
  REQUIRE(overridden.code == 0);
  REQUIRE(slurp(report).find("graph.k = 12") != std::string::npos);
}
