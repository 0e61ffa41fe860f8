#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "graphalign/core.hpp"

namespace graphalign {

/// Camera model: pixel = h * K * (R * p + T), followed by the perspective
/// divide. `scale` is the feature-map down-sampling factor h; image_width
/// and image_height describe the stored feature map the projection targets.
struct CalibrationRig {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double scale = 1.0;
  int image_width = 0;
  int image_height = 0;

  /// Validates invariants. A rotation that is orthonormal to 1e-6 but not to
  /// 1e-9 is snapped to the nearest orthonormal matrix; anything worse is
  /// rejected. Values already within 1e-9 are stored untouched so that
  /// parse -> make -> write round-trips are byte-identical.
  static CalibrationRig make(const Eigen::Matrix3d& intrinsics, const Eigen::Matrix3d& rotation,
                             const Eigen::Vector3d& translation, double scale, int image_width,
                             int image_height) {
    require(intrinsics.allFinite() && rotation.allFinite() && translation.allFinite() &&
                std::isfinite(scale),
            ErrorKind::invalid_input, "calibration entries must be finite");
    require(image_width > 0 && image_height > 0, ErrorKind::invalid_input,
            "image dimensions must be positive");
    require(scale > 0.0, ErrorKind::invalid_input, "scale must be positive");
    require(intrinsics(0, 0) > 0.0 && intrinsics(1, 1) > 0.0, ErrorKind::invalid_input,
            "focal lengths must be positive");
    require(std::abs(intrinsics(2, 2) - 1.0) <= 1e-9, ErrorKind::invalid_input,
            "intrinsics[2][2] must be 1");

    const double ortho_err =
        (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    const double det = rotation.determinant();
    require(ortho_err <= 1e-6, ErrorKind::invalid_input, "rotation is not orthonormal");
    require(det > 0.0, ErrorKind::invalid_input, "rotation must not be a reflection");

    CalibrationRig rig;
    rig.intrinsics = intrinsics;
    rig.translation = translation;
    rig.scale = scale;
    rig.image_width = image_width;
    rig.image_height = image_height;
    if (ortho_err <= 1e-9 && std::abs(det - 1.0) <= 1e-9) {
      rig.rotation = rotation;
    } else {
      Eigen::JacobiSVD<Eigen::Matrix3d> svd(rotation,
                                            Eigen::ComputeFullU | Eigen::ComputeFullV);
      Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
      if (r.determinant() < 0.0) {
        Eigen::Matrix3d u = svd.matrixU();
        u.col(2) *= -1.0;
        r = u * svd.matrixV().transpose();
      }
      rig.rotation = r;
    }
    return rig;
  }

  /// The composed 3x4 matrix h * K * [R | T].
  Eigen::Matrix<double, 3, 4> projection_matrix() const {
    Eigen::Matrix<double, 3, 4> rt;
    rt.leftCols<3>() = rotation;
    rt.col(3) = translation;
    return scale * (intrinsics * rt);
  }
};

struct PointSet {
  RowMatrixXd coords;    // N x 3, meters, sensor frame
  RowMatrixXd features;  // N x C
  std::vector<int> labels;  // N, -1 marks unlabeled

  int size() const { return int(coords.rows()); }
  int channels() const { return int(features.cols()); }

  void validate() const {
    require(coords.cols() == 3, ErrorKind::invalid_input, "coords must be N x 3");
    require(coords.rows() == features.rows() && std::size_t(coords.rows()) == labels.size(),
            ErrorKind::invalid_input, "coords, features, and labels must agree on N");
    require(coords.allFinite(), ErrorKind::invalid_input, "coordinates must be finite");
  }
};

/// What was done to the cloud, in application order: scale, then yaw about
/// +z, then (optionally) a flip that negates y.
struct AugmentationRecord {
  bool flipped_y = false;
  double yaw = 0.0;
  double scale_factor = 1.0;

  void validate() const {
    require(std::isfinite(yaw) && std::isfinite(scale_factor), ErrorKind::invalid_input,
            "augmentation record must be finite");
    require(scale_factor > 0.0, ErrorKind::invalid_input, "scale_factor must be positive");
    constexpr double pi = 3.14159265358979323846;
    require(yaw > -pi - 1e-12 && yaw <= pi + 1e-12, ErrorKind::invalid_input,
            "yaw must lie in (-pi, pi]");
  }
};

struct ProjectedCoords {
  RowMatrixXd pixel;              // M x 2, continuous (x, y)
  std::vector<double> depth;      // M, z_c > 0
  std::vector<int> source_index;  // M, strictly increasing row ids into the source PointSet

  int size() const { return int(pixel.rows()); }
};

inline Eigen::Matrix3d yaw_rotation(double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Eigen::Matrix3d r;
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return r;
}

/// Undoes the recorded augmentation: un-flip, rotate by -yaw, divide by the
/// scale factor (reverse of the application order). Features and labels pass
/// through untouched.
inline PointSet invert_augmentation(const PointSet& points, const AugmentationRecord& record) {
  record.validate();
  points.validate();

  PointSet out;
  out.features = points.features;
  out.labels = points.labels;
  out.coords = points.coords;
  if (record.flipped_y) out.coords.col(1) *= -1.0;
  if (record.yaw != 0.0) {
    const Eigen::Matrix3d r_inv = yaw_rotation(-record.yaw);
    out.coords = out.coords * r_inv.transpose();
  }
  if (record.scale_factor != 1.0) out.coords /= record.scale_factor;
  return out;
}

/// Projects every point through the rig and keeps the rows that land in
/// front of the camera and inside the closed pixel box
/// [0, image_width] x [0, image_height]. Coordinates stay continuous;
/// rounding to integer pixels is the feature gather's job.
inline ProjectedCoords project(const PointSet& points, const CalibrationRig& rig) {
  points.validate();
  const Eigen::Matrix<double, 3, 4> pm = rig.projection_matrix();
  const int n = points.size();
  const double w = double(rig.image_width);
  const double h = double(rig.image_height);

  RowMatrixXd pixel(n, 2);
  std::vector<double> depth;
  std::vector<int> source_index;
  depth.reserve(std::size_t(n));
  source_index.reserve(std::size_t(n));

  int m = 0;
  for (int i = 0; i < n; ++i) {
    Eigen::Vector4d p;
    p << points.coords(i, 0), points.coords(i, 1), points.coords(i, 2), 1.0;
    const Eigen::Vector3d q = pm * p;
    const double z_c = q[2];
    if (z_c <= 0.0) continue;
    const double u = q[0] / z_c;
    const double v = q[1] / z_c;
    if (u < 0.0 || u > w || v < 0.0 || v > h) continue;
    pixel(m, 0) = u;
    pixel(m, 1) = v;
    depth.push_back(z_c);
    source_index.push_back(i);
    ++m;
  }

  ProjectedCoords out;
  out.pixel = pixel.topRows(m);
  out.depth = std::move(depth);
  out.source_index = std::move(source_index);
  return out;
}

}  // namespace graphalign
