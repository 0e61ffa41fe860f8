#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "graphalign/fusion.hpp"
#include "graphalign/oracles.hpp"
#include "graphalign/scene.hpp"

using namespace graphalign;

TEST_CASE("an object-free scene is all unlabeled ground", "[scene]") {
  SceneSpec spec;
  spec.seed = 60;
  spec.n_objects = 0;
  spec.ground_points = 800;
  const Scene scene = generate(spec);
  REQUIRE(scene.points.size() == 800);
  for (int label : scene.points.labels) REQUIRE(label == -1);
  for (const GroundTruthRow& row : scene.ground_truth) REQUIRE(row.cls == -1);
  for (double x : scene.feature_map.data) REQUIRE(x == 0.0);
  REQUIRE(scene.objects.empty());
}

TEST_CASE("generation is deterministic in the seed", "[scene]") {
  SceneSpec spec;
  spec.seed = 61;
  spec.n_objects = 4;
  spec.points_per_object = 80;
  spec.ground_points = 500;
  const Scene a = generate(spec);
  const Scene b = generate(spec);
  REQUIRE(a.points.coords == b.points.coords);
  REQUIRE(a.points.features == b.points.features);
  REQUIRE(a.points.labels == b.points.labels);
  REQUIRE(a.feature_map.data == b.feature_map.data);
  REQUIRE(a.ground_truth.size() == b.ground_truth.size());
  for (std::size_t i = 0; i < a.ground_truth.size(); ++i) {
    REQUIRE(a.ground_truth[i].index == b.ground_truth[i].index);
    REQUIRE(a.ground_truth[i].cls == b.ground_truth[i].cls);
    REQUIRE(a.ground_truth[i].px == b.ground_truth[i].px);
    REQUIRE(a.ground_truth[i].py == b.ground_truth[i].py);
  }

  spec.seed = 62;
  const Scene c = generate(spec);
  REQUIRE(a.points.coords != c.points.coords);
}

TEST_CASE("labeled points sit on their object's box", "[scene]") {
  SceneSpec spec;
  spec.seed = 63;
  spec.n_objects = 6;
  spec.classes = 3;
  spec.points_per_object = 60;
  spec.ground_points = 200;
  const Scene scene = generate(spec);
  REQUIRE(scene.objects.size() == 6);

  std::vector<int> per_class(std::size_t(spec.classes), 0);
  for (int i = 0; i < scene.points.size(); ++i) {
    const int label = scene.points.labels[std::size_t(i)];
    if (label < 0) continue;
    REQUIRE(label < spec.classes);
    ++per_class[std::size_t(label)];
    const Eigen::Vector3d p = scene.points.coords.row(i).transpose();
    bool on_some_box = false;
    for (const ObjectBox& box : scene.objects) {
      if (box.cls != label) continue;
      const Eigen::Vector3d d = (p - box.center).cwiseAbs() - box.half;
      if (d.maxCoeff() < 1e-9) on_some_box = true;
    }
    REQUIRE(on_some_box);
  }
  for (int count : per_class) REQUIRE(count > 0);
}

TEST_CASE("rendered pixels hold exactly one class embedding or nothing", "[scene]") {
  SceneSpec spec;
  spec.seed = 64;
  spec.n_objects = 5;
  spec.classes = 4;
  spec.points_per_object = 20;
  spec.ground_points = 0;
  spec.image_width = 160;
  spec.image_height = 120;
  const Scene scene = generate(spec);

  int painted = 0;
  for (int r = 0; r < spec.image_height; ++r)
    for (int col = 0; col < spec.image_width; ++col) {
      const double* px = scene.feature_map.pixel(r, col);
      double sum = 0.0;
      for (int ch = 0; ch < spec.channels; ++ch) {
        REQUIRE((px[ch] == 0.0 || px[ch] == 1.0));
        sum += px[ch];
      }
      REQUIRE((sum == 0.0 || sum == 1.0));
      if (sum == 1.0) {
        ++painted;
        // Only class channels are ever painted.
        for (int ch = spec.classes; ch < spec.channels; ++ch) REQUIRE(px[ch] == 0.0);
      }
    }
  REQUIRE(painted > 0);
}

TEST_CASE("ground truth mirrors the clean projection", "[scene]") {
  SceneSpec spec;
  spec.seed = 65;
  spec.n_objects = 4;
  spec.points_per_object = 50;
  spec.ground_points = 300;
  const Scene scene = generate(spec);

  REQUIRE(int(scene.ground_truth.size()) == scene.points.size());
  const ProjectedCoords proj = project(scene.points, scene.rig);
  std::vector<char> survived(std::size_t(scene.points.size()), 0);
  std::vector<int> row_of(std::size_t(scene.points.size()), -1);
  for (int r = 0; r < proj.size(); ++r) {
    survived[std::size_t(proj.source_index[std::size_t(r)])] = 1;
    row_of[std::size_t(proj.source_index[std::size_t(r)])] = r;
  }

  for (int i = 0; i < scene.points.size(); ++i) {
    const GroundTruthRow& row = scene.ground_truth[std::size_t(i)];
    REQUIRE(row.index == i);
    REQUIRE(row.cls == scene.points.labels[std::size_t(i)]);
    if (survived[std::size_t(i)]) {
      REQUIRE(row.px == proj.pixel(row_of[std::size_t(i)], 0));
      REQUIRE(row.py == proj.pixel(row_of[std::size_t(i)], 1));
    } else {
      REQUIRE(row.px == -1.0);
      REQUIRE(row.py == -1.0);
    }
  }
}

TEST_CASE("a clean single-object scene gathers its own class almost everywhere", "[scene]") {
  SceneSpec spec;
  spec.seed = 66;
  spec.n_objects = 1;
  spec.classes = 1;
  spec.points_per_object = 400;
  spec.ground_points = 0;
  const Scene scene = generate(spec);
  REQUIRE(scene.points.size() >= 8);

  const ProjectedCoords proj = project(scene.points, scene.rig);
  REQUIRE(proj.size() > 0);
  const RowMatrixXd gathered = gather_image_features(
      scene.feature_map, proj, ChannelAdapter::identity(spec.channels));
  int hits = 0;
  for (int r = 0; r < proj.size(); ++r)
    if (gathered(r, 0) == 1.0) ++hits;
  REQUIRE(double(hits) / double(proj.size()) >= 0.99);
}

TEST_CASE("scan order tightens chunk diameters", "[scene]") {
  SceneSpec spec;
  spec.seed = 67;
  spec.n_objects = 6;
  spec.points_per_object = 150;
  spec.ground_points = 4000;
  spec.scan_order = true;
  const Scene ordered = generate(spec);
  spec.scan_order = false;
  const Scene shuffled = generate(spec);
  REQUIRE(ordered.points.size() == shuffled.points.size());

  // Azimuth must be non-decreasing when scan order is on.
  double prev = -10.0;
  for (int i = 0; i < ordered.points.size(); ++i) {
    const double az = std::atan2(ordered.points.coords(i, 1), ordered.points.coords(i, 0));
    REQUIRE(az >= prev);
    prev = az;
  }

  const double tight = oracle::mean_chunk_diameter(ordered.points, 500);
  const double loose = oracle::mean_chunk_diameter(shuffled.points, 500);
  REQUIRE(tight < loose);
}

TEST_CASE("perturbing with zero magnitudes returns the same rig", "[scene]") {
  const CalibrationRig rig = make_scene_rig(64, 48);
  PerturbationSpec spec;
  spec.seed = 5;
  const CalibrationRig same = perturb(rig, spec);
  REQUIRE(same.rotation == rig.rotation);
  REQUIRE(same.translation == rig.translation);
  REQUIRE(same.intrinsics == rig.intrinsics);
}

TEST_CASE("timing skew shifts only the lateral offset", "[scene]") {
  const CalibrationRig rig = make_scene_rig(64, 48);
  PerturbationSpec spec;
  spec.timing_skew = 0.3;
  spec.seed = 5;
  const CalibrationRig moved = perturb(rig, spec);
  REQUIRE(moved.rotation == rig.rotation);
  REQUIRE(moved.translation.x() == rig.translation.x() + 0.3);
  REQUIRE(moved.translation.y() == rig.translation.y());
  REQUIRE(moved.translation.z() == rig.translation.z());
}

TEST_CASE("rotation-only perturbation keeps the translation and stays orthonormal", "[scene]") {
  const CalibrationRig rig = make_scene_rig(64, 48);
  PerturbationSpec spec;
  spec.rotation_sigma = 0.05;
  spec.seed = 17;
  const CalibrationRig moved = perturb(rig, spec);
  REQUIRE(moved.translation == rig.translation);
  REQUIRE(moved.rotation != rig.rotation);
  const double err = (moved.rotation.transpose() * moved.rotation -
                      Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  REQUIRE(err < 1e-9);
}

TEST_CASE("perturbation is deterministic and statistically calibrated", "[scene]") {
  const CalibrationRig rig = make_scene_rig(64, 48);
  PerturbationSpec spec;
  spec.translation_sigma = 0.01;

  spec.seed = 9;
  const CalibrationRig a = perturb(rig, spec);
  const CalibrationRig b = perturb(rig, spec);
  REQUIRE(a.translation == b.translation);

  // |t_x - t_x0| averages sigma * sqrt(2/pi) over many seeds.
  double mean_abs = 0.0;
  const int trials = 1000;
  for (int s = 0; s < trials; ++s) {
    spec.seed = std::uint64_t(s) + 1;
    const CalibrationRig p = perturb(rig, spec);
    mean_abs += std::abs(p.translation.x() - rig.translation.x());
  }
  mean_abs /= trials;
  const double sigma = 0.01;
  const double expected = sigma * std::sqrt(2.0 / kPi);
  const double se = sigma * std::sqrt(1.0 - 2.0 / kPi) / std::sqrt(double(trials));
  REQUIRE(std::abs(mean_abs - expected) < 3.0 * se);
}

TEST_CASE("scene and perturbation validation", "[scene]") {
  SceneSpec spec;
  spec.classes = 9;
  spec.channels = 8;
  REQUIRE_THROWS_AS(generate(spec), Error);
  spec.classes = 2;
  spec.range_max = 0.0;
  REQUIRE_THROWS_AS(generate(spec), Error);

  PerturbationSpec bad;
  bad.translation_sigma = -1.0;
  REQUIRE_THROWS_AS(bad.validate(), Error);

  REQUIRE_THROWS_AS(class_embedding(8, 8), Error);
}
