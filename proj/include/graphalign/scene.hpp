#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "graphalign/core.hpp"
#include "graphalign/fusion.hpp"
#include "graphalign/geometry.hpp"
#include "graphalign/rng.hpp"

namespace graphalign {

constexpr double kPi = 3.14159265358979323846;

struct SceneSpec {
  std::uint64_t seed = 1;
  int n_objects = 8;
  int classes = 6;
  double range_max = 60.0;     // meters
  int points_per_object = 400; // budget at 20 m; actual count falls off as 1/r^2
  int ground_points = 6000;
  int image_width = 384;
  int image_height = 288;
  int channels = 8;
  bool scan_order = true;

  void validate() const {
    require(std::isfinite(range_max) && range_max > 0.0, ErrorKind::invalid_input,
            "range_max must be positive");
    require(n_objects >= 0 && points_per_object >= 0 && ground_points >= 0,
            ErrorKind::invalid_input, "scene counts must be non-negative");
    require(classes >= 1, ErrorKind::invalid_input, "need at least one object class");
    require(channels >= classes, ErrorKind::invalid_input,
            "channels must be >= classes so every class embedding fits");
    require(image_width > 0 && image_height > 0, ErrorKind::invalid_input,
            "image dimensions must be positive");
  }
};

struct PerturbationSpec {
  double translation_sigma = 0.0;  // meters, per axis
  double rotation_sigma = 0.0;     // radians
  double timing_skew = 0.0;        // meters, lateral camera-frame offset
  std::uint64_t seed = 1;

  void validate() const {
    require(std::isfinite(translation_sigma) && std::isfinite(rotation_sigma) &&
                std::isfinite(timing_skew),
            ErrorKind::invalid_input, "perturbation entries must be finite");
    require(translation_sigma >= 0.0 && rotation_sigma >= 0.0, ErrorKind::invalid_input,
            "sigmas must be non-negative");
  }
};

struct GroundTruthRow {
  int index = 0;   // row into the PointSet
  int cls = -1;    // -1 for unlabeled (ground) points
  double px = -1;  // error-free continuous pixel, (-1, -1) if the clean
  double py = -1;  // projection drops the point
};

struct ObjectBox {
  Eigen::Vector3d center;
  Eigen::Vector3d half;
  int cls = 0;
  double range = 0.0;
};

struct Scene {
  SceneSpec spec;
  PointSet points;
  ImageFeatureMap feature_map;
  CalibrationRig rig;  // the clean rig; rendering and ground truth use this
  std::vector<GroundTruthRow> ground_truth;
  std::vector<ObjectBox> objects;
};

/// Orthogonal unit embedding for a class: one-hot padded to `channels`.
inline Eigen::VectorXd class_embedding(int cls, int channels) {
  require(cls >= 0 && cls < channels, ErrorKind::invalid_input,
          "class id does not fit the channel count");
  Eigen::VectorXd e = Eigen::VectorXd::Zero(channels);
  e[cls] = 1.0;
  return e;
}

/// Forward-looking camera: sensor x is the optical axis, y left, z up.
inline CalibrationRig make_scene_rig(int width, int height) {
  Eigen::Matrix3d k;
  k << 0.6 * width, 0.0, width / 2.0,
       0.0, 0.6 * width, height / 2.0,
       0.0, 0.0, 1.0;
  Eigen::Matrix3d r;
  r << 0.0, -1.0, 0.0,
       0.0, 0.0, -1.0,
       1.0, 0.0, 0.0;
  return CalibrationRig::make(k, r, Eigen::Vector3d(0.05, -0.1, 0.0), 1.0, width, height);
}

namespace detail {

/// Does the open segment from the origin to p pass through the box before
/// reaching t_max (fraction of the way to p)? Slab test.
inline bool segment_hits_box(const Eigen::Vector3d& p, const ObjectBox& box, double t_max) {
  double t0 = 0.0, t1 = t_max;
  for (int a = 0; a < 3; ++a) {
    const double lo = box.center[a] - box.half[a];
    const double hi = box.center[a] + box.half[a];
    const double d = p[a];
    if (std::abs(d) < 1e-12) {
      if (0.0 < lo || 0.0 > hi) return false;  // ray parallel to slab, outside it
      continue;
    }
    double ta = lo / d, tb = hi / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

inline bool visible_from_origin(const Eigen::Vector3d& p, const std::vector<ObjectBox>& boxes) {
  for (const auto& b : boxes)
    if (segment_hits_box(p, b, 1.0 - 1e-6)) return false;
  return true;
}

inline double cross2(const Eigen::Vector2d& o, const Eigen::Vector2d& a,
                     const Eigen::Vector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

/// Andrew monotone chain. Collinear points are dropped; fewer than three
/// input points come back as-is.
inline std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
                          return a.x() == b.x() && a.y() == b.y();
                        }),
            pts.end());
  const int n = int(pts.size());
  if (n < 3) return pts;
  std::vector<Eigen::Vector2d> hull(std::size_t(2) * n);
  int h = 0;
  for (int i = 0; i < n; ++i) {
    while (h >= 2 && cross2(hull[h - 2], hull[h - 1], pts[i]) <= 0.0) --h;
    hull[std::size_t(h++)] = pts[i];
  }
  for (int i = n - 2, base = h + 1; i >= 0; --i) {
    while (h >= base && cross2(hull[h - 2], hull[h - 1], pts[i]) <= 0.0) --h;
    hull[std::size_t(h++)] = pts[i];
  }
  hull.resize(std::size_t(h - 1));
  return hull;
}

/// Clip a polygon against y <= yc (keep_below) or y >= yc.
inline std::vector<Eigen::Vector2d> clip_y(const std::vector<Eigen::Vector2d>& poly, double yc,
                                           bool keep_below) {
  std::vector<Eigen::Vector2d> out;
  const int n = int(poly.size());
  out.reserve(std::size_t(n) + 2);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d& a = poly[std::size_t(i)];
    const Eigen::Vector2d& b = poly[std::size_t((i + 1) % n)];
    const bool ina = keep_below ? a.y() <= yc : a.y() >= yc;
    const bool inb = keep_below ? b.y() <= yc : b.y() >= yc;
    if (ina) out.push_back(a);
    if (ina != inb) {
      const double t = (yc - a.y()) / (b.y() - a.y());
      out.push_back(a + t * (b - a));
    }
  }
  return out;
}

/// Write the embedding to every pixel cell the polygon touches. A cell is
/// painted whenever the polygon intersects it, so any point inside the
/// polygon looks up a painted pixel after floor().
inline void paint_polygon(ImageFeatureMap& fmap, const std::vector<Eigen::Vector2d>& poly,
                          const Eigen::VectorXd& embedding) {
  if (poly.empty()) return;
  if (poly.size() == 1) {
    const int cc = std::clamp(int(std::floor(poly[0].x())), 0, fmap.width - 1);
    const int rr = std::clamp(int(std::floor(poly[0].y())), 0, fmap.height - 1);
    for (int ch = 0; ch < fmap.channels; ++ch) fmap.at(rr, cc, ch) = embedding[ch];
    return;
  }
  double min_v = poly[0].y(), max_v = poly[0].y();
  for (const auto& p : poly) {
    min_v = std::min(min_v, p.y());
    max_v = std::max(max_v, p.y());
  }
  const int r0 = std::max(0, int(std::floor(min_v)));
  const int r1 = std::min(fmap.height - 1, int(std::floor(max_v)));
  for (int rr = r0; rr <= r1; ++rr) {
    auto band = clip_y(poly, double(rr), false);
    band = clip_y(band, double(rr) + 1.0, true);
    if (band.empty()) continue;
    double x_lo = band[0].x(), x_hi = band[0].x();
    for (const auto& p : band) {
      x_lo = std::min(x_lo, p.x());
      x_hi = std::max(x_hi, p.x());
    }
    const int c0 = std::max(0, int(std::floor(x_lo)));
    const int c1 = std::min(fmap.width - 1, int(std::floor(x_hi)));
    for (int cc = c0; cc <= c1; ++cc)
      for (int ch = 0; ch < fmap.channels; ++ch) fmap.at(rr, cc, ch) = embedding[ch];
  }
}

struct PointRec {
  Eigen::Vector3d p;
  std::vector<double> f;
  int label = -1;
};

}  // namespace detail

/// Builds a deterministic synthetic world: labeled boxes spread over
/// azimuth sectors in front of the camera at near / mid / far ranges,
/// surface-sampled with density falling off as 1/range^2, over a ground
/// plane. Points hidden from the sensor origin by a box are culled. The
/// feature map is rendered through the clean rig by painting each box's
/// projected silhouette with its class embedding, far to near.
inline Scene generate(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  Scene scene;
  scene.spec = spec;
  scene.rig = make_scene_rig(spec.image_width, spec.image_height);

  // Azimuth sectors keep object silhouettes disjoint in the image; the
  // near / mid / far bands guarantee every distance bucket is populated.
  const double span_lo = -0.55, span_hi = 0.55;
  const double bands[3][2] = {{0.25, 0.40}, {0.45, 0.62}, {0.70, 0.95}};
  for (int o = 0; o < spec.n_objects; ++o) {
    const double width = (span_hi - span_lo) / double(spec.n_objects);
    const double az = span_lo + (o + 0.5) * width + rng.uniform(-1.0, 1.0) * 0.1 * width;
    const auto& band = bands[o % 3];
    const double r = spec.range_max * rng.uniform(band[0], band[1]);
    ObjectBox box;
    box.half = Eigen::Vector3d(rng.uniform(0.5, 0.9), rng.uniform(0.5, 0.9),
                               rng.uniform(0.5, 0.9));
    box.center = Eigen::Vector3d(r * std::cos(az), r * std::sin(az),
                                 -1.7 + box.half.z() + rng.uniform(0.0, 0.2));
    box.cls = o % spec.classes;
    box.range = r;
    scene.objects.push_back(box);
  }

  std::vector<detail::PointRec> recs;
  auto add_point = [&](const Eigen::Vector3d& p, int label) {
    detail::PointRec rec;
    rec.p = p;
    rec.label = label;
    const double r = p.norm();
    const double az = std::atan2(p.y(), p.x());
    rec.f.resize(std::size_t(spec.channels));
    for (int ch = 0; ch < spec.channels; ++ch) {
      double base = 0.0;
      if (ch == 0) base = r / spec.range_max;
      else if (ch == 1) base = 0.25 * p.z();
      else if (ch == 2) base = 0.5 * az;
      rec.f[std::size_t(ch)] = base + 0.05 * rng.normal();
    }
    recs.push_back(std::move(rec));
  };

  for (const auto& box : scene.objects) {
    int budget = 0;
    if (spec.points_per_object > 0) {
      const double scaled = spec.points_per_object * (20.0 / box.range) * (20.0 / box.range);
      budget = std::clamp(int(std::lround(scaled)), 8, 4 * spec.points_per_object);
    }
    // Face areas: sampling proportional to area gives a uniform surface density.
    double area[6], cum = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double s = 4.0 * box.half[(a + 1) % 3] * box.half[(a + 2) % 3];
      area[2 * a] = s;
      area[2 * a + 1] = s;
    }
    for (double s : area) cum += s;

    int made = 0;
    for (int attempt = 0; attempt < 16 * budget && made < budget; ++attempt) {
      double pick = rng.uniform(0.0, cum);
      int face = 0;
      while (face < 5 && pick >= area[face]) pick -= area[face], ++face;
      const int axis = face / 2;
      const double sign = face % 2 == 0 ? 1.0 : -1.0;
      Eigen::Vector3d p = box.center;
      p[axis] += sign * box.half[axis];
      const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
      p[a1] += rng.uniform(-box.half[a1], box.half[a1]);
      p[a2] += rng.uniform(-box.half[a2], box.half[a2]);
      if (!detail::visible_from_origin(p, scene.objects)) continue;
      add_point(p, box.cls);
      ++made;
    }
  }

  int ground_made = 0;
  for (int attempt = 0; attempt < 4 * spec.ground_points && ground_made < spec.ground_points;
       ++attempt) {
    const double r = std::exp(rng.uniform(std::log(2.0), std::log(spec.range_max)));
    const double az = rng.uniform(-kPi, kPi);
    const Eigen::Vector3d p(r * std::cos(az), r * std::sin(az), -1.7 + 0.02 * rng.normal());
    if (!detail::visible_from_origin(p, scene.objects)) continue;
    add_point(p, -1);
    ++ground_made;
  }

  // Emission order: a LiDAR-like azimuth sweep (index locality approximates
  // spatial locality), or a seeded shuffle as the unordered baseline.
  std::vector<int> order(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) order[i] = int(i);
  if (spec.scan_order) {
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const auto& pa = recs[std::size_t(a)].p;
      const auto& pb = recs[std::size_t(b)].p;
      const double aza = std::atan2(pa.y(), pa.x());
      const double azb = std::atan2(pb.y(), pb.x());
      if (aza != azb) return aza < azb;
      const double ela = std::atan2(pa.z(), std::hypot(pa.x(), pa.y()));
      const double elb = std::atan2(pb.z(), std::hypot(pb.x(), pb.y()));
      return ela < elb;
    });
  } else {
    rng.shuffle(order);
  }

  const int n = int(recs.size());
  scene.points.coords.resize(n, 3);
  scene.points.features.resize(n, spec.channels);
  scene.points.labels.resize(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    const auto& rec = recs[std::size_t(order[std::size_t(i)])];
    scene.points.coords.row(i) = rec.p.transpose();
    for (int ch = 0; ch < spec.channels; ++ch) scene.points.features(i, ch) = rec.f[std::size_t(ch)];
    scene.points.labels[std::size_t(i)] = rec.label;
  }

  // Render far to near so closer silhouettes overwrite farther ones.
  scene.feature_map = ImageFeatureMap(spec.image_height, spec.image_width, spec.channels);
  std::vector<int> draw_order(scene.objects.size());
  for (std::size_t i = 0; i < draw_order.size(); ++i) draw_order[i] = int(i);
  std::stable_sort(draw_order.begin(), draw_order.end(),
                   [&](int a, int b) { return scene.objects[std::size_t(a)].range >
                                              scene.objects[std::size_t(b)].range; });
  const Eigen::Matrix<double, 3, 4> pm = scene.rig.projection_matrix();
  for (int oi : draw_order) {
    const auto& box = scene.objects[std::size_t(oi)];
    std::vector<Eigen::Vector2d> corners;
    for (int m = 0; m < 8; ++m) {
      Eigen::Vector4d c;
      c << box.center.x() + (m & 1 ? box.half.x() : -box.half.x()),
          box.center.y() + (m & 2 ? box.half.y() : -box.half.y()),
          box.center.z() + (m & 4 ? box.half.z() : -box.half.z()), 1.0;
      const Eigen::Vector3d q = pm * c;
      if (q[2] <= 0.0) continue;
      corners.emplace_back(q[0] / q[2], q[1] / q[2]);
    }
    if (corners.empty()) continue;
    detail::paint_polygon(scene.feature_map, detail::convex_hull(std::move(corners)),
                          class_embedding(box.cls, spec.channels));
  }

  // Error-free pixels through the clean rig; dropped points get (-1, -1).
  scene.ground_truth.assign(std::size_t(n), GroundTruthRow{});
  for (int i = 0; i < n; ++i) {
    scene.ground_truth[std::size_t(i)].index = i;
    scene.ground_truth[std::size_t(i)].cls = scene.points.labels[std::size_t(i)];
  }
  if (n > 0) {
    const ProjectedCoords proj = project(scene.points, scene.rig);
    for (int r = 0; r < proj.size(); ++r) {
      auto& row = scene.ground_truth[std::size_t(proj.source_index[std::size_t(r)])];
      row.px = proj.pixel(r, 0);
      row.py = proj.pixel(r, 1);
    }
  }
  return scene;
}

/// Injects sensor error into a rig: Gaussian translation noise per axis, a
/// small random rotation with angle |N(0, rotation_sigma)|, and a
/// deterministic lateral shift emulating time-sync error. Zero-sigma terms
/// leave their component bit-identically unchanged.
inline CalibrationRig perturb(const CalibrationRig& rig, const PerturbationSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Eigen::Vector3d t = rig.translation;
  if (spec.translation_sigma > 0.0)
    for (int a = 0; a < 3; ++a) t[a] += spec.translation_sigma * rng.normal();
  Eigen::Matrix3d r = rig.rotation;
  if (spec.rotation_sigma > 0.0) {
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    const double nrm = axis.norm();
    axis = nrm > 1e-12 ? Eigen::Vector3d(axis / nrm) : Eigen::Vector3d::UnitX();
    const double angle = std::abs(rng.normal(0.0, spec.rotation_sigma));
    r = Eigen::AngleAxisd(angle, axis).toRotationMatrix() * r;
  }
  t.x() += spec.timing_skew;
  return CalibrationRig::make(rig.intrinsics, r, t, rig.scale, rig.image_width,
                              rig.image_height);
}

}  // namespace graphalign
