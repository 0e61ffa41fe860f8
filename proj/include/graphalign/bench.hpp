#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "graphalign/core.hpp"
#include "graphalign/fusion.hpp"
#include "graphalign/geometry.hpp"
#include "graphalign/graph.hpp"
#include "graphalign/parallel.hpp"
#include "graphalign/safa.hpp"
#include "graphalign/scene.hpp"

namespace graphalign {

enum class Method { projection_only, graph_max, graph_safa_max };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::projection_only: return "projection_only";
    case Method::graph_max: return "graph_max";
    case Method::graph_safa_max: return "graph_safa_max";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "projection_only") return Method::projection_only;
  if (s == "graph_max") return Method::graph_max;
  if (s == "graph_safa_max") return Method::graph_safa_max;
  fail(ErrorKind::config, "unknown method '" + s + "'");
}

inline constexpr int kBucketCount = 3;
inline const char* const kBucketNames[kBucketCount] = {"0-20m", "20-40m", "40m-inf"};

inline int range_bucket(double range) { return range < 20.0 ? 0 : range < 40.0 ? 1 : 2; }

struct BucketMetrics {
  int points = 0;    // surviving points in this bucket
  int labeled = 0;   // the subset with a ground-truth class
  double accuracy = 0.0;
  double cosine = 0.0;
};

struct StageTimings {
  double project_ms = 0.0;
  double graph_ms = 0.0;
  double fuse_ms = 0.0;
  double attention_ms = 0.0;
  double max_ms = 0.0;

  double total_ms() const { return project_ms + graph_ms + fuse_ms + attention_ms + max_ms; }
};

struct AlignmentReport {
  Method method = Method::projection_only;
  int surviving = 0;
  BucketMetrics buckets[kBucketCount];
  StageTimings timings;
  std::int64_t safa_macs_estimated = 0;
  std::int64_t safa_macs_instrumented = 0;
  std::int64_t cross_attention_macs = 0;
  double mac_ratio = 0.0;
  int bypassed_points = 0;
};

/// Per-point, per-channel cost ratio of attending to the whole W x H image
/// versus attending to K neighbors: (W * H) / K^2.
inline double complexity_ratio(int image_w, int image_h, int k) {
  require(image_w > 0 && image_h > 0 && k > 0, ErrorKind::invalid_input,
          "complexity_ratio: inputs must be positive");
  return (double(image_w) * double(image_h)) / (double(k) * double(k));
}

inline std::int64_t safa_mac_estimate(std::int64_t n, int k, int c) {
  return n * std::int64_t(k) * std::int64_t(k) * std::int64_t(c);
}

inline std::int64_t cross_attention_mac_estimate(std::int64_t n, int w, int h, int c) {
  return n * std::int64_t(w) * std::int64_t(h) * std::int64_t(c);
}

namespace detail {

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Runs one pipeline variant end to end against a scene and reports
/// distance-bucketed alignment metrics. The run rig is typically a
/// perturbed copy of the scene's clean rig; the feature map and ground
/// truth always come from the clean one. Accuracy asks whether the argmax
/// over class channels of the isolated image contribution (fused feature
/// minus the replicated point feature) recovers the point's class.
inline AlignmentReport evaluate(const Scene& scene, const CalibrationRig& run_rig, Method method,
                                const GraphConfig& gcfg, const AttentionParams* params = nullptr,
                                AttentionMode mode = AttentionMode::literal, int workers = 1,
                                RowMatrixXd* fused_out = nullptr) {
  gcfg.validate();
  const int c = scene.spec.channels;
  if (method == Method::graph_safa_max) {
    require(params != nullptr, ErrorKind::invalid_input,
            "graph_safa_max requires attention params");
    params->validate();
    require(params->channels() == c, ErrorKind::invalid_input,
            "attention params channel count does not match the scene");
  }

  AlignmentReport report;
  report.method = method;

  auto t0 = std::chrono::steady_clock::now();
  const ProjectedCoords proj = project(scene.points, run_rig);
  report.timings.project_ms = detail::ms_since(t0);
  const int m = proj.size();
  report.surviving = m;

  // Point features restricted to surviving rows, in projection order.
  RowMatrixXd point_f(m, c);
  for (int r = 0; r < m; ++r)
    point_f.row(r) = scene.points.features.row(proj.source_index[std::size_t(r)]);

  const ChannelAdapter adapter = ChannelAdapter::identity(c);
  RowMatrixXd v;  // m x c isolated image contribution
  if (method == Method::projection_only) {
    t0 = std::chrono::steady_clock::now();
    const RowMatrixXd gathered = gather_image_features(scene.feature_map, proj, adapter);
    const RowMatrixXd fused_rows = point_f + gathered;
    v = fused_rows - point_f;
    report.timings.fuse_ms = detail::ms_since(t0);
    if (fused_out) *fused_out = fused_rows;
  } else {
    t0 = std::chrono::steady_clock::now();
    const NeighborGraph graph = build_graph(scene.points, gcfg, workers);
    report.timings.graph_ms = detail::ms_since(t0);

    t0 = std::chrono::steady_clock::now();
    const RowMatrixXd gathered = gather_image_features(scene.feature_map, proj, adapter);
    auto [block_full, mask_full] = assemble_neighbor_block(gathered, graph, proj);
    Tensor3 block(m, gcfg.k, c);
    BoolMask mask(m, gcfg.k);
    for (int r = 0; r < m; ++r) {
      const int i = proj.source_index[std::size_t(r)];
      std::copy(block_full.slot(i, 0), block_full.slot(i, 0) + std::size_t(gcfg.k) * c,
                block.slot(r, 0));
      for (int j = 0; j < gcfg.k; ++j) mask(r, j) = mask_full(i, j) ? 1 : 0;
    }
    const FusedBlock fused = fuse(point_f, block, mask, workers);
    report.timings.fuse_ms = detail::ms_since(t0);

    RowMatrixXd selected;
    if (method == Method::graph_safa_max) {
      t0 = std::chrono::steady_clock::now();
      const AttentionOutput att = self_attention(fused, *params, mode, workers);
      report.timings.attention_ms = detail::ms_since(t0);
      report.safa_macs_instrumented = att.score_macs;
      report.bypassed_points = att.bypassed_points;
      t0 = std::chrono::steady_clock::now();
      selected = max_select(att, fused.valid);
      report.timings.max_ms = detail::ms_since(t0);
    } else {
      t0 = std::chrono::steady_clock::now();
      selected = channelwise_max(fused.data, fused.valid);
      report.timings.max_ms = detail::ms_since(t0);
    }
    v = selected - point_f;
    if (fused_out) *fused_out = std::move(selected);
  }

  report.safa_macs_estimated = safa_mac_estimate(m, gcfg.k, c);
  report.cross_attention_macs =
      cross_attention_mac_estimate(m, scene.feature_map.width, scene.feature_map.height, c);
  report.mac_ratio = complexity_ratio(scene.feature_map.width, scene.feature_map.height, gcfg.k);

  int correct[kBucketCount] = {0, 0, 0};
  double cos_sum[kBucketCount] = {0.0, 0.0, 0.0};
  const int classes = scene.spec.classes;
  for (int r = 0; r < m; ++r) {
    const int i = proj.source_index[std::size_t(r)];
    const int b = range_bucket(scene.points.coords.row(i).norm());
    report.buckets[b].points += 1;
    const int label = scene.points.labels[std::size_t(i)];
    if (label < 0) continue;
    report.buckets[b].labeled += 1;
    const auto row = v.row(r);
    int pred = 0;
    for (int ch = 1; ch < classes; ++ch)
      if (row[ch] > row[pred]) pred = ch;
    if (pred == label) correct[b] += 1;
    const double norm = row.norm();
    if (norm > 0.0) cos_sum[b] += row[label] / norm;
  }
  for (int b = 0; b < kBucketCount; ++b) {
    if (report.buckets[b].labeled > 0) {
      report.buckets[b].accuracy = double(correct[b]) / double(report.buckets[b].labeled);
      report.buckets[b].cosine = cos_sum[b] / double(report.buckets[b].labeled);
    }
  }
  return report;
}

struct StageStats {
  double median_ms = 0.0;
  double spread_ms = 0.0;  // max - min over the timed repetitions
};

struct TimingSummary {
  StageStats project, graph, fuse, attention, max;
  int repetitions = 0;
};

namespace detail {

inline StageStats summarize(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  StageStats s;
  s.median_ms = n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  s.spread_ms = samples.back() - samples.front();
  return s;
}

}  // namespace detail

/// Times the pipeline stage by stage: one discarded warm-up run, then
/// `repetitions` measured runs, reduced to median and spread. Runs on a
/// single worker to keep the numbers comparable.
inline TimingSummary time_pipeline(const Scene& scene, const CalibrationRig& run_rig,
                                   Method method, const GraphConfig& gcfg,
                                   const AttentionParams* params = nullptr,
                                   AttentionMode mode = AttentionMode::literal,
                                   int repetitions = 5) {
  require(repetitions >= 3, ErrorKind::invalid_input,
          "time_pipeline: need at least 3 repetitions");
  std::vector<double> project, graph, fuse, attention, max;
  for (int rep = 0; rep <= repetitions; ++rep) {
    const AlignmentReport r = evaluate(scene, run_rig, method, gcfg, params, mode, 1);
    if (rep == 0) continue;  // warm-up
    project.push_back(r.timings.project_ms);
    graph.push_back(r.timings.graph_ms);
    fuse.push_back(r.timings.fuse_ms);
    attention.push_back(r.timings.attention_ms);
    max.push_back(r.timings.max_ms);
  }
  TimingSummary out;
  out.project = detail::summarize(std::move(project));
  out.graph = detail::summarize(std::move(graph));
  out.fuse = detail::summarize(std::move(fuse));
  out.attention = detail::summarize(std::move(attention));
  out.max = detail::summarize(std::move(max));
  out.repetitions = repetitions;
  return out;
}

struct SweepGrid {
  std::vector<Method> methods;
  std::vector<int> k_values;
  std::vector<int> chunk_values;
  std::vector<int> head_values;
  AttentionMode mode = AttentionMode::literal;
  std::uint64_t attention_seed = 7;
  int timing_reps = 3;
};

struct SweepRow {
  Method method = Method::projection_only;
  int k = 0;
  int chunk = 0;
  int heads = 0;
  int bucket = 0;  // index into kBucketNames
  int n = 0;
  int n_labeled = 0;
  double accuracy = 0.0;
  double cosine = 0.0;
  double project_ms = 0.0;
  double graph_ms = 0.0;
  double fuse_ms = 0.0;
  double attention_ms = 0.0;
  double max_ms = 0.0;
};

/// Evaluates every (method, k, chunk, heads) cell of the grid and emits one
/// row per distance bucket. Metrics cells run in parallel (each on one
/// inner worker, so results are worker-count independent); the timing pass
/// re-runs each cell serially through time_pipeline.
inline std::vector<SweepRow> sweep(const Scene& scene, const CalibrationRig& run_rig,
                                   const SweepGrid& grid, int workers = 1) {
  require(!grid.methods.empty() && !grid.k_values.empty() && !grid.chunk_values.empty() &&
              !grid.head_values.empty(),
          ErrorKind::invalid_input, "sweep: empty grid");
  for (int h : grid.head_values)
    require(h >= 1, ErrorKind::invalid_input, "sweep: head counts must be >= 1");

  struct Cell {
    Method method;
    int k, chunk, heads;
  };
  // Attention cells whose head count does not divide the channel count are
  // not runnable and are skipped; head values only annotate the other methods.
  std::vector<Cell> cells;
  for (Method method : grid.methods)
    for (int k : grid.k_values)
      for (int chunk : grid.chunk_values)
        for (int heads : grid.head_values) {
          if (method == Method::graph_safa_max && scene.spec.channels % heads != 0) continue;
          cells.push_back({method, k, chunk, heads});
        }
  require(!cells.empty(), ErrorKind::invalid_input,
          "sweep: no runnable cells (no head value divides the channel count)");

  std::vector<AlignmentReport> reports(cells.size());
  parallel_for(std::int64_t(cells.size()), workers, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      const Cell& cell = cells[std::size_t(idx)];
      const GraphConfig gcfg{cell.k, cell.chunk, PadMode::self_index};
      AttentionParams params;
      if (cell.method == Method::graph_safa_max)
        params = init_params(scene.spec.channels, cell.heads, grid.attention_seed);
      reports[std::size_t(idx)] =
          evaluate(scene, run_rig, cell.method, gcfg,
                   cell.method == Method::graph_safa_max ? &params : nullptr, grid.mode, 1);
    }
  });

  std::vector<TimingSummary> timings(cells.size());
  for (std::size_t idx = 0; idx < cells.size(); ++idx) {
    const Cell& cell = cells[idx];
    const GraphConfig gcfg{cell.k, cell.chunk, PadMode::self_index};
    AttentionParams params;
    if (cell.method == Method::graph_safa_max)
      params = init_params(scene.spec.channels, cell.heads, grid.attention_seed);
    timings[idx] = time_pipeline(scene, run_rig, cell.method, gcfg,
                                 cell.method == Method::graph_safa_max ? &params : nullptr,
                                 grid.mode, grid.timing_reps);
  }

  std::vector<SweepRow> rows;
  rows.reserve(cells.size() * kBucketCount);
  for (std::size_t idx = 0; idx < cells.size(); ++idx) {
    const Cell& cell = cells[idx];
    const AlignmentReport& rep = reports[idx];
    const TimingSummary& tim = timings[idx];
    for (int b = 0; b < kBucketCount; ++b) {
      SweepRow row;
      row.method = cell.method;
      row.k = cell.k;
      row.chunk = cell.chunk;
      row.heads = cell.heads;
      row.bucket = b;
      row.n = rep.buckets[b].points;
      row.n_labeled = rep.buckets[b].labeled;
      row.accuracy = rep.buckets[b].accuracy;
      row.cosine = rep.buckets[b].cosine;
      row.project_ms = tim.project.median_ms;
      row.graph_ms = tim.graph.median_ms;
      row.fuse_ms = tim.fuse.median_ms;
      row.attention_ms = tim.attention.median_ms;
      row.max_ms = tim.max.median_ms;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace graphalign
