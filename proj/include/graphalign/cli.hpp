#pragma once

#include <charconv>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include "graphalign/bench.hpp"
#include "graphalign/core.hpp"
#include "graphalign/io.hpp"
#include "graphalign/oracles.hpp"
#include "graphalign/rng.hpp"
#include "graphalign/scene.hpp"

namespace graphalign {

inline const char* pad_mode_name(PadMode m) {
  return m == PadMode::literal_zero ? "literal_zero" : "self_index";
}

inline PadMode parse_pad_mode(const std::string& s) {
  if (s == "literal_zero") return PadMode::literal_zero;
  if (s == "self_index") return PadMode::self_index;
  fail(ErrorKind::config, "unknown pad mode '" + s + "' (literal_zero or self_index)");
}

inline const char* attention_mode_name(AttentionMode m) {
  return m == AttentionMode::literal ? "literal" : "standard";
}

inline AttentionMode parse_attention_mode(const std::string& s) {
  if (s == "literal") return AttentionMode::literal;
  if (s == "standard") return AttentionMode::standard;
  fail(ErrorKind::config, "unknown attention mode '" + s + "' (literal or standard)");
}

struct RunConfig {
  SceneSpec scene;
  PerturbationSpec perturb;
  GraphConfig graph{16, 1000, PadMode::self_index};
  int heads = 1;
  AttentionMode mode = AttentionMode::literal;
  std::uint64_t attention_seed = 7;
  std::string params_path;  // optional GASA file; empty means seeded init
  Method method = Method::graph_safa_max;
  int workers = 0;  // 0 = hardware concurrency

  // generate outputs / align inputs
  std::string cloud_path = "cloud.gapc";
  std::string features_path = "features.gafm";
  std::string calibration_path = "calib.txt";
  std::string ground_truth_path = "ground_truth.csv";

  // align outputs
  std::string report_path = "report.txt";
  std::string fused_dump_path;  // optional

  // sweep grid (ablation anchors) and output
  std::vector<int> sweep_k{9, 16, 25, 36, 48};
  std::vector<int> sweep_chunk{500, 1000, 3000, 5000, 8000, 10000};
  std::vector<int> sweep_heads{1, 2, 3, 4};
  std::vector<Method> sweep_methods{Method::projection_only, Method::graph_max,
                                    Method::graph_safa_max};
  int timing_reps = 3;
  std::string sweep_csv_path = "sweep.csv";
};

/// GRAPHALIGN_SEED overrides every seed in the config, for reproducible CI
/// runs of otherwise differently-seeded commands.
inline void apply_env_seed(RunConfig& cfg) {
  const char* env = std::getenv("GRAPHALIGN_SEED");
  if (env == nullptr || *env == '\0') return;
  std::uint64_t seed = 0;
  const char* end = env;
  while (*end != '\0') ++end;
  auto res = std::from_chars(env, end, seed);
  require(res.ec == std::errc() && res.ptr == end, ErrorKind::config,
          "GRAPHALIGN_SEED must be an unsigned integer, got '" + std::string(env) + "'");
  cfg.scene.seed = seed;
  cfg.perturb.seed = seed;
  cfg.attention_seed = seed;
}

inline void validate_config(const RunConfig& cfg) {
  cfg.scene.validate();
  cfg.perturb.validate();
  cfg.graph.validate();
  require(cfg.graph.k <= 64, ErrorKind::config, "k must be at most 64");
  require(cfg.heads >= 1 && cfg.scene.channels % cfg.heads == 0, ErrorKind::config,
          "heads must divide the channel count");
  require(cfg.workers >= 0, ErrorKind::config, "workers must be >= 0");
  require(cfg.timing_reps >= 3, ErrorKind::config, "timing repetitions must be >= 3");
  for (int k : cfg.sweep_k)
    require(k >= 1 && k <= 64, ErrorKind::config, "sweep k values must lie in [1, 64]");
  for (int chunk : cfg.sweep_chunk)
    require(chunk >= 1, ErrorKind::config, "sweep chunk values must be >= 1");
  // Head values that do not divide the channel count are allowed here; the
  // sweep skips the attention cells it cannot run.
  for (int h : cfg.sweep_heads)
    require(h >= 1, ErrorKind::config, "sweep head values must be >= 1");
}

namespace detail {

inline std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("scene.seed", std::to_string(cfg.scene.seed));
  kv.emplace_back("scene.objects", std::to_string(cfg.scene.n_objects));
  kv.emplace_back("scene.classes", std::to_string(cfg.scene.classes));
  kv.emplace_back("scene.range_max", format_double(cfg.scene.range_max));
  kv.emplace_back("scene.points_per_object", std::to_string(cfg.scene.points_per_object));
  kv.emplace_back("scene.ground_points", std::to_string(cfg.scene.ground_points));
  kv.emplace_back("scene.image_width", std::to_string(cfg.scene.image_width));
  kv.emplace_back("scene.image_height", std::to_string(cfg.scene.image_height));
  kv.emplace_back("scene.channels", std::to_string(cfg.scene.channels));
  kv.emplace_back("scene.scan_order", cfg.scene.scan_order ? "true" : "false");
  kv.emplace_back("perturb.translation_sigma", format_double(cfg.perturb.translation_sigma));
  kv.emplace_back("perturb.rotation_sigma", format_double(cfg.perturb.rotation_sigma));
  kv.emplace_back("perturb.timing_skew", format_double(cfg.perturb.timing_skew));
  kv.emplace_back("perturb.seed", std::to_string(cfg.perturb.seed));
  kv.emplace_back("graph.k", std::to_string(cfg.graph.k));
  kv.emplace_back("graph.chunk", std::to_string(cfg.graph.chunk_size));
  kv.emplace_back("graph.pad_mode", pad_mode_name(cfg.graph.pad_mode));
  kv.emplace_back("attention.heads", std::to_string(cfg.heads));
  kv.emplace_back("attention.mode", attention_mode_name(cfg.mode));
  kv.emplace_back("attention.seed", std::to_string(cfg.attention_seed));
  kv.emplace_back("attention.params_source", cfg.params_path.empty() ? "seed" : "file");
  return kv;
}

}  // namespace detail

/// generate: build the seeded scene and write its four artifacts.
inline Scene run_generate(RunConfig cfg) {
  apply_env_seed(cfg);
  validate_config(cfg);
  Scene scene = generate(cfg.scene);
  write_point_cloud(cfg.cloud_path, scene.points);
  write_feature_map(cfg.features_path, scene.feature_map);
  write_calibration(cfg.calibration_path, scene.rig);
  write_ground_truth(cfg.ground_truth_path, scene.ground_truth);
  return scene;
}

/// align: load the scene artifacts, perturb the rig, run the configured
/// pipeline, and write the report (plus an optional fused-feature dump as a
/// single-column feature map).
inline AlignmentReport run_align(RunConfig cfg) {
  apply_env_seed(cfg);
  validate_config(cfg);

  Scene scene;
  scene.points = read_point_cloud(cfg.cloud_path);
  scene.feature_map = read_feature_map(cfg.features_path);
  scene.rig = read_calibration(cfg.calibration_path);
  scene.ground_truth = read_ground_truth(cfg.ground_truth_path);
  scene.spec = cfg.scene;
  scene.spec.channels = scene.points.channels();
  require(scene.feature_map.channels == scene.spec.channels, ErrorKind::invalid_input,
          "feature map channels do not match the point cloud");
  int classes = 1;
  for (int label : scene.points.labels) classes = std::max(classes, label + 1);
  scene.spec.classes = std::min(classes, scene.spec.channels);

  AttentionParams params;
  const bool needs_params = cfg.method == Method::graph_safa_max;
  if (needs_params) {
    if (!cfg.params_path.empty()) {
      params = read_attention_params(cfg.params_path);
      require(params.channels() == scene.spec.channels, ErrorKind::invalid_input,
              cfg.params_path + ": channel count does not match the point cloud");
    } else {
      require(scene.spec.channels % cfg.heads == 0, ErrorKind::config,
              "heads must divide the channel count");
      params = init_params(scene.spec.channels, cfg.heads, cfg.attention_seed);
    }
  }

  const int workers = resolve_workers(cfg.workers);
  const CalibrationRig run_rig = perturb(scene.rig, cfg.perturb);
  RowMatrixXd fused;
  const AlignmentReport report =
      evaluate(scene, run_rig, cfg.method, cfg.graph, needs_params ? &params : nullptr, cfg.mode,
               workers, cfg.fused_dump_path.empty() ? nullptr : &fused);

  if (!cfg.report_path.empty())
    write_alignment_report(cfg.report_path, report, detail::config_echo(cfg), workers);
  if (!cfg.fused_dump_path.empty()) {
    ImageFeatureMap dump(int(fused.rows()) > 0 ? int(fused.rows()) : 1, 1,
                         scene.spec.channels);
    for (int i = 0; i < int(fused.rows()); ++i)
      for (int ch = 0; ch < scene.spec.channels; ++ch) dump.at(i, 0, ch) = fused(i, ch);
    write_feature_map(cfg.fused_dump_path, dump);
  }
  return report;
}

/// sweep: generate the scene in memory, sweep the hyperparameter grid, and
/// write the CSV.
inline std::vector<SweepRow> run_sweep(RunConfig cfg) {
  apply_env_seed(cfg);
  validate_config(cfg);
  require(!cfg.sweep_methods.empty() && !cfg.sweep_k.empty() && !cfg.sweep_chunk.empty() &&
              !cfg.sweep_heads.empty(),
          ErrorKind::config, "sweep grid must not be empty");

  const Scene scene = generate(cfg.scene);
  const CalibrationRig run_rig = perturb(scene.rig, cfg.perturb);
  SweepGrid grid;
  grid.methods = cfg.sweep_methods;
  grid.k_values = cfg.sweep_k;
  grid.chunk_values = cfg.sweep_chunk;
  grid.head_values = cfg.sweep_heads;
  grid.mode = cfg.mode;
  grid.attention_seed = cfg.attention_seed;
  grid.timing_reps = cfg.timing_reps;
  const std::vector<SweepRow> rows = sweep(scene, run_rig, grid, resolve_workers(cfg.workers));

  if (!cfg.sweep_csv_path.empty()) {
    SweepCsv csv;
    for (const auto& [key, value] : detail::config_echo(cfg))
      csv.comments.push_back("# " + key + " = " + value);
    std::string methods = "#";
    for (Method m : cfg.sweep_methods) methods += std::string(" ") + method_name(m);
    csv.comments.push_back("# sweep.methods =" + methods.substr(1));
    csv.rows = rows;
    write_sweep_csv(cfg.sweep_csv_path, csv);
  }
  return rows;
}

/// oracle-check: reference-implementation comparisons on seeded data.
/// Returns (name, passed) per check.
inline std::vector<std::pair<std::string, bool>> oracle_checks() {
  std::vector<std::pair<std::string, bool>> results;
  auto record = [&results](const std::string& name, bool ok) {
    results.emplace_back(name, ok);
  };
  Rng rng(20240817);

  auto random_points = [&rng](int n, int c) {
    PointSet points;
    points.coords.resize(n, 3);
    points.features.resize(n, c);
    points.labels.assign(std::size_t(n), -1);
    for (int i = 0; i < n; ++i) {
      for (int a = 0; a < 3; ++a) points.coords(i, a) = rng.uniform(-40.0, 40.0);
      for (int ch = 0; ch < c; ++ch) points.features(i, ch) = rng.normal();
    }
    return points;
  };

  {
    bool ok = true;
    for (int trial = 0; trial < 10 && ok; ++trial) {
      AugmentationRecord rec;
      rec.flipped_y = rng.uniform() < 0.5;
      rec.yaw = rng.uniform(-kPi, kPi);
      rec.scale_factor = rng.uniform(0.5, 2.0);
      const PointSet points = random_points(50, 4);
      const PointSet mine = invert_augmentation(points, rec);
      const PointSet ref = oracle::invert_augmentation_reference(points, rec);
      ok = (mine.coords - ref.coords).cwiseAbs().maxCoeff() < 1e-9;
      const PointSet round = invert_augmentation(oracle::apply_augmentation(points, rec), rec);
      ok = ok && (round.coords - points.coords).cwiseAbs().maxCoeff() < 1e-9;
    }
    record("augmentation inverse matches compose-then-invert reference", ok);
  }

  {
    bool ok = true;
    const CalibrationRig rig = make_scene_rig(640, 480);
    for (int trial = 0; trial < 5 && ok; ++trial) {
      const PointSet points = random_points(200, 2);
      const ProjectedCoords mine = project(points, rig);
      const ProjectedCoords ref = oracle::project_reference(points, rig);
      ok = mine.source_index == ref.source_index && mine.size() == ref.size();
      for (int r = 0; ok && r < mine.size(); ++r)
        ok = std::abs(mine.pixel(r, 0) - ref.pixel(r, 0)) < 1e-9 &&
             std::abs(mine.pixel(r, 1) - ref.pixel(r, 1)) < 1e-9 &&
             std::abs(mine.depth[std::size_t(r)] - ref.depth[std::size_t(r)]) < 1e-9;
    }
    record("projection matches 3x4 matrix reference", ok);
  }

  {
    const PointSet points = random_points(400, 2);
    const NeighborGraph mine = knn_bruteforce(points, 16);
    const NeighborGraph ref = oracle::knn_full_reference(points, 16);
    record("full-space KNN matches full-sort reference",
           mine.indices.v == ref.indices.v && mine.valid.v == ref.valid.v);
  }

  {
    const PointSet points = random_points(1037, 2);
    const GraphConfig gcfg{12, 250, PadMode::self_index};
    const NeighborGraph mine = build_graph(points, gcfg, 4);
    const NeighborGraph ref = oracle::knn_chunked_reference(points, gcfg);
    record("chunked graph matches chunk-restricted reference",
           mine.indices.v == ref.indices.v && mine.valid.v == ref.valid.v);
  }

  {
    ImageFeatureMap fmap(24, 32, 3);
    for (double& v : fmap.data) v = rng.normal();
    PointSet points = random_points(300, 3);
    for (int i = 0; i < points.size(); ++i) {
      points.coords(i, 0) = rng.uniform(5.0, 40.0);
      points.coords(i, 1) = rng.uniform(-3.0, 3.0);
      points.coords(i, 2) = rng.uniform(-2.0, 2.0);
    }
    const CalibrationRig rig = make_scene_rig(32, 24);
    const ProjectedCoords proj = project(points, rig);
    ChannelAdapter adapter;
    adapter.weight.resize(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) adapter.weight(i, j) = rng.normal();
    adapter.bias = Eigen::VectorXd::Zero(3);
    for (int i = 0; i < 3; ++i) adapter.bias[i] = rng.normal();
    const RowMatrixXd mine = gather_image_features(fmap, proj, adapter);
    const RowMatrixXd ref = oracle::gather_reference(fmap, proj, adapter);
    bool ok = proj.size() > 0 && (mine - ref).cwiseAbs().maxCoeff() < 1e-12;

    const NeighborGraph graph = build_graph(points, GraphConfig{6, 100, PadMode::self_index});
    const auto [block, mask] = assemble_neighbor_block(mine, graph, proj);
    const auto [rblock, rmask] = oracle::neighbor_block_reference(mine, graph, proj);
    ok = ok && block.v == rblock.v && mask.v == rmask.v;
    const FusedBlock fused = fuse(points.features, block, mask);
    const FusedBlock rfused = oracle::fuse_reference(points.features, rblock, rmask);
    ok = ok && fused.data.v == rfused.data.v;
    record("gather/assemble/fuse match per-slot references", ok);
  }

  {
    bool ok = true;
    for (int trial = 0; trial < 20 && ok; ++trial) {
      const int k = 2 + int(rng.uniform_int(6));
      const int c = 4;
      FusedBlock block;
      block.data = Tensor3(5, k, c);
      block.valid = BoolMask(5, k);
      for (auto& x : block.data.v) x = rng.normal();
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < k; ++j) block.valid(i, j) = rng.uniform() < 0.8 ? 1 : 0;
      const AttentionParams params = init_params(c, trial % 2 ? 2 : 1, rng.next_u64());
      for (AttentionMode mode : {AttentionMode::literal, AttentionMode::standard}) {
        const AttentionOutput mine = self_attention(block, params, mode);
        const AttentionOutput ref = oracle::attention_reference(block, params, mode);
        for (std::size_t t = 0; t < mine.features.v.size() && ok; ++t)
          ok = std::abs(mine.features.v[t] - ref.features.v[t]) < 1e-9;
        for (std::size_t t = 0; t < mine.weights.v.size() && ok; ++t)
          ok = std::abs(mine.weights.v[t] - ref.weights.v[t]) < 1e-9;
        ok = ok && mine.score_macs == ref.score_macs;
      }
    }
    record("attention (both modes) matches loop reference", ok);
  }

  {
    Tensor3 t(40, 7, 5);
    BoolMask mask(40, 7);
    for (auto& x : t.v) x = rng.normal();
    for (int i = 0; i < 40; ++i)
      for (int j = 0; j < 7; ++j) mask(i, j) = rng.uniform() < 0.7 ? 1 : 0;
    const RowMatrixXd mine = channelwise_max(t, mask);
    const RowMatrixXd ref = oracle::channelwise_max_reference(t, mask);
    record("channelwise max matches elementwise reference", mine == ref);
  }

  {
    bool ok = true;
    for (int trial = 0; trial < 50 && ok; ++trial) {
      const int w = 1 + int(rng.uniform_int(2000));
      const int h = 1 + int(rng.uniform_int(2000));
      const int k = 1 + int(rng.uniform_int(64));
      ok = std::abs(complexity_ratio(w, h, k) - double(w) * double(h) / (double(k) * double(k))) <
           1e-12;
    }
    record("complexity ratio matches direct arithmetic", ok);
  }

  return results;
}

}  // namespace graphalign
