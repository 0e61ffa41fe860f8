#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "graphalign/bench.hpp"
#include "graphalign/rng.hpp"

using namespace graphalign;

namespace {

SceneSpec small_spec(std::uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  spec.n_objects = 6;
  spec.classes = 6;
  spec.points_per_object = 120;
  spec.ground_points = 800;
  spec.image_width = 192;
  spec.image_height = 144;
  spec.channels = 8;
  return spec;
}

}  // namespace

TEST_CASE("complexity ratio arithmetic", "[bench]") {
  REQUIRE(complexity_ratio(1272, 375, 36) == Catch::Approx(477000.0 / 1296.0).margin(1e-12));
  REQUIRE(std::abs(complexity_ratio(1272, 375, 36) - 368.06) < 0.01);
  REQUIRE(complexity_ratio(16, 16, 16) == 1.0);

  Rng rng(70);
  for (int t = 0; t < 50; ++t) {
    const int w = 1 + int(rng.uniform_int(2000));
    const int h = 1 + int(rng.uniform_int(2000));
    const int k = 1 + int(rng.uniform_int(64));
    REQUIRE(complexity_ratio(w, h, k) ==
            Catch::Approx(double(w) * double(h) / (double(k) * double(k))).margin(1e-9));
  }
  REQUIRE_THROWS_AS(complexity_ratio(0, 10, 4), Error);
  REQUIRE_THROWS_AS(complexity_ratio(10, 10, 0), Error);
}

TEST_CASE("mac estimates are plain products", "[bench]") {
  REQUIRE(safa_mac_estimate(1000, 16, 8) == std::int64_t(1000) * 16 * 16 * 8);
  REQUIRE(cross_attention_mac_estimate(1000, 384, 288, 8) ==
          std::int64_t(1000) * 384 * 288 * 8);
  // Large inputs stay in range.
  REQUIRE(safa_mac_estimate(5000000, 64, 64) == std::int64_t(5000000) * 64 * 64 * 64);
}

TEST_CASE("range buckets split at 20 and 40 meters", "[bench]") {
  REQUIRE(range_bucket(0.0) == 0);
  REQUIRE(range_bucket(19.999) == 0);
  REQUIRE(range_bucket(20.0) == 1);
  REQUIRE(range_bucket(39.999) == 1);
  REQUIRE(range_bucket(40.0) == 2);
  REQUIRE(range_bucket(1e9) == 2);
}

TEST_CASE("clean-rig evaluation aligns almost every labeled point", "[bench]") {
  const Scene scene = generate(small_spec(71));
  GraphConfig gcfg;
  gcfg.k = 8;
  gcfg.chunk_size = 1000;
  const AlignmentReport rep = evaluate(scene, scene.rig, Method::projection_only, gcfg);

  int bucket_sum = 0;
  int labeled_sum = 0;
  for (int b = 0; b < kBucketCount; ++b) {
    bucket_sum += rep.buckets[b].points;
    labeled_sum += rep.buckets[b].labeled;
    REQUIRE(rep.buckets[b].labeled <= rep.buckets[b].points);
    REQUIRE(rep.buckets[b].accuracy >= 0.0);
    REQUIRE(rep.buckets[b].accuracy <= 1.0);
    REQUIRE(rep.buckets[b].cosine <= 1.0 + 1e-12);
  }
  REQUIRE(bucket_sum == rep.surviving);
  REQUIRE(labeled_sum > 0);
  REQUIRE(rep.buckets[2].labeled > 0);  // the far band is populated
  REQUIRE(rep.buckets[2].accuracy >= 0.99);
}

TEST_CASE("all methods see the same surviving points", "[bench]") {
  const Scene scene = generate(small_spec(72));
  PerturbationSpec pspec;
  pspec.translation_sigma = 0.1;
  pspec.timing_skew = 0.1;
  pspec.seed = 3;
  const CalibrationRig run_rig = perturb(scene.rig, pspec);

  GraphConfig gcfg;
  gcfg.k = 8;
  gcfg.chunk_size = 500;
  const AttentionParams params = init_params(scene.spec.channels, 2, 7);

  const AlignmentReport a = evaluate(scene, run_rig, Method::projection_only, gcfg);
  const AlignmentReport b = evaluate(scene, run_rig, Method::graph_max, gcfg);
  const AlignmentReport c = evaluate(scene, run_rig, Method::graph_safa_max, gcfg, &params);
  REQUIRE(a.surviving == b.surviving);
  REQUIRE(b.surviving == c.surviving);
  REQUIRE(a.surviving == project(scene.points, run_rig).size());
  for (int bkt = 0; bkt < kBucketCount; ++bkt) {
    REQUIRE(a.buckets[bkt].points == b.buckets[bkt].points);
    REQUIRE(b.buckets[bkt].points == c.buckets[bkt].points);
    REQUIRE(a.buckets[bkt].labeled == c.buckets[bkt].labeled);
  }
}

TEST_CASE("the instrumented MAC counter matches the closed form", "[bench]") {
  const Scene scene = generate(small_spec(73));
  GraphConfig gcfg;
  gcfg.k = 9;
  gcfg.chunk_size = 700;
  const AttentionParams params = init_params(scene.spec.channels, 1, 11);
  const AlignmentReport rep =
      evaluate(scene, scene.rig, Method::graph_safa_max, gcfg, &params);
  REQUIRE(rep.bypassed_points == 0);  // a surviving point always has its own valid slot
  REQUIRE(rep.safa_macs_estimated ==
          safa_mac_estimate(rep.surviving, gcfg.k, scene.spec.channels));
  REQUIRE(rep.safa_macs_instrumented == rep.safa_macs_estimated);
  REQUIRE(rep.cross_attention_macs ==
          cross_attention_mac_estimate(rep.surviving, scene.spec.image_width,
                                       scene.spec.image_height, scene.spec.channels));
  REQUIRE(rep.mac_ratio ==
          complexity_ratio(scene.spec.image_width, scene.spec.image_height, gcfg.k));
}

TEST_CASE("attention params are required and checked for the safa method", "[bench]") {
  const Scene scene = generate(small_spec(74));
  GraphConfig gcfg;
  REQUIRE_THROWS_AS(evaluate(scene, scene.rig, Method::graph_safa_max, gcfg), Error);
  const AttentionParams wrong = init_params(scene.spec.channels * 2, 1, 5);
  REQUIRE_THROWS_AS(evaluate(scene, scene.rig, Method::graph_safa_max, gcfg, &wrong), Error);
}

TEST_CASE("method names round-trip and reject junk", "[bench]") {
  for (Method m : {Method::projection_only, Method::graph_max, Method::graph_safa_max})
    REQUIRE(parse_method(method_name(m)) == m);
  REQUIRE_THROWS_AS(parse_method("fastest"), Error);
}

TEST_CASE("timing needs three repetitions and skips unused stages", "[bench]") {
  const Scene scene = generate(small_spec(75));
  GraphConfig gcfg;
  gcfg.k = 6;
  gcfg.chunk_size = 400;
  REQUIRE_THROWS_AS(
      time_pipeline(scene, scene.rig, Method::graph_max, gcfg, nullptr,
                    AttentionMode::literal, 2),
      Error);
  const TimingSummary t =
      time_pipeline(scene, scene.rig, Method::graph_max, gcfg, nullptr,
                    AttentionMode::literal, 3);
  REQUIRE(t.repetitions == 3);
  REQUIRE(t.attention.median_ms == 0.0);
  REQUIRE(t.graph.median_ms >= 0.0);
  REQUIRE(t.project.median_ms >= 0.0);
}

TEST_CASE("a single sweep cell emits one row per distance bucket", "[bench]") {
  const Scene scene = generate(small_spec(76));
  SweepGrid grid;
  grid.methods = {Method::graph_max};
  grid.k_values = {8};
  grid.chunk_values = {500};
  grid.head_values = {1};
  const std::vector<SweepRow> rows = sweep(scene, scene.rig, grid);
  REQUIRE(rows.size() == 3);
  int n_sum = 0;
  for (int b = 0; b < 3; ++b) {
    REQUIRE(rows[std::size_t(b)].bucket == b);
    REQUIRE(rows[std::size_t(b)].method == Method::graph_max);
    REQUIRE(rows[std::size_t(b)].k == 8);
    n_sum += rows[std::size_t(b)].n;
  }
  GraphConfig gcfg;
  gcfg.k = 8;
  gcfg.chunk_size = 500;
  REQUIRE(n_sum == evaluate(scene, scene.rig, Method::graph_max, gcfg).surviving);
}

TEST_CASE("sweep row count is cells times buckets", "[bench]") {
  const Scene scene = generate(small_spec(77));
  SweepGrid grid;
  grid.methods = {Method::projection_only, Method::graph_safa_max};
  grid.k_values = {6, 10};
  grid.chunk_values = {600};
  grid.head_values = {2};
  const std::vector<SweepRow> rows = sweep(scene, scene.rig, grid);
  REQUIRE(rows.size() == 2 * 2 * 1 * 1 * 3);
}

TEST_CASE("sweep validates its grid", "[bench]") {
  const Scene scene = generate(small_spec(78));
  SweepGrid grid;
  grid.methods = {};
  grid.k_values = {8};
  grid.chunk_values = {500};
  grid.head_values = {1};
  REQUIRE_THROWS_AS(sweep(scene, scene.rig, grid), Error);
  grid.methods = {Method::graph_safa_max};
  grid.head_values = {0};
  REQUIRE_THROWS_AS(sweep(scene, scene.rig, grid), Error);
  grid.head_values = {3, 5};  // neither divides 8 channels: no runnable cell
  REQUIRE_THROWS_AS(sweep(scene, scene.rig, grid), Error);
}

TEST_CASE("sweep skips attention cells whose heads do not divide channels", "[bench]") {
  const Scene scene = generate(small_spec(79));
  SweepGrid grid;
  grid.methods = {Method::graph_max, Method::graph_safa_max};
  grid.k_values = {8};
  grid.chunk_values = {500};
  grid.head_values = {2, 3};
  const std::vector<SweepRow> rows = sweep(scene, scene.rig, grid);
  // graph_max keeps both head annotations; graph_safa_max only runs heads=2.
  REQUIRE(rows.size() == std::size_t(3 * kBucketCount));
  int safa_rows = 0;
  for (const SweepRow& row : rows)
    if (row.method == Method::graph_safa_max) {
      REQUIRE(row.heads == 2);
      ++safa_rows;
    }
  REQUIRE(safa_rows == kBucketCount);
}

TEST_CASE("sweep metrics are identical across worker counts", "[bench]") {
  const Scene scene = generate(small_spec(79));
  PerturbationSpec pspec;
  pspec.translation_sigma = 0.15;
  pspec.timing_skew = 0.1;
  pspec.seed = 4;
  const CalibrationRig run_rig = perturb(scene.rig, pspec);

  SweepGrid grid;
  grid.methods = {Method::graph_max, Method::graph_safa_max};
  grid.k_values = {8};
  grid.chunk_values = {400};
  grid.head_values = {2};
  const std::vector<SweepRow> a = sweep(scene, run_rig, grid, 1);
  const std::vector<SweepRow> b = sweep(scene, run_rig, grid, 4);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].method == b[i].method);
    REQUIRE(a[i].k == b[i].k);
    REQUIRE(a[i].chunk == b[i].chunk);
    REQUIRE(a[i].heads == b[i].heads);
    REQUIRE(a[i].bucket == b[i].bucket);
    REQUIRE(a[i].n == b[i].n);
    REQUIRE(a[i].n_labeled == b[i].n_labeled);
    REQUIRE(a[i].accuracy == b[i].accuracy);
    REQUIRE(a[i].cosine == b[i].cosine);
  }
}

TEST_CASE("evaluation worker count does not change metrics", "[bench]") {
  const Scene scene = generate(small_spec(80));
  PerturbationSpec pspec;
  pspec.translation_sigma = 0.2;
  pspec.rotation_sigma = 0.002;
  pspec.timing_skew = 0.1;
  pspec.seed = 6;
  const CalibrationRig run_rig = perturb(scene.rig, pspec);
  GraphConfig gcfg;
  gcfg.k = 10;
  gcfg.chunk_size = 512;
  const AttentionParams params = init_params(scene.spec.channels, 4, 13);

  RowMatrixXd fused1, fused4;
  const AlignmentReport a = evaluate(scene, run_rig, Method::graph_safa_max, gcfg, &params,
                                     AttentionMode::standard, 1, &fused1);
  const AlignmentReport b = evaluate(scene, run_rig, Method::graph_safa_max, gcfg, &params,
                                     AttentionMode::standard, 4, &fused4);
  REQUIRE(a.surviving == b.surviving);
  REQUIRE(fused1 == fused4);
  for (int bkt = 0; bkt < kBucketCount; ++bkt) {
    REQUIRE(a.buckets[bkt].accuracy == b.buckets[bkt].accuracy);
    REQUIRE(a.buckets[bkt].cosine == b.buckets[bkt].cosine);
  }
  REQUIRE(a.safa_macs_instrumented == b.safa_macs_instrumented);
}
