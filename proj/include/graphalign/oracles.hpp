#pragma once

// Reference implementations kept deliberately naive and structurally
// independent of the production code: straight loops, full sorts, numeric
// matrix inversion. Tests and the `oracle-check` command compare the fast
// paths against these.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "graphalign/core.hpp"
#include "graphalign/fusion.hpp"
#include "graphalign/geometry.hpp"
#include "graphalign/graph.hpp"
#include "graphalign/safa.hpp"

namespace graphalign {
namespace oracle {

/// Forward augmentation in application order: scale, yaw about +z, then the
/// y flip. Test-only helper; the library only ever inverts.
inline PointSet apply_augmentation(const PointSet& points, const AugmentationRecord& record) {
  PointSet out = points;
  const double c = std::cos(record.yaw), s = std::sin(record.yaw);
  for (int i = 0; i < out.size(); ++i) {
    double x = points.coords(i, 0) * record.scale_factor;
    double y = points.coords(i, 1) * record.scale_factor;
    double z = points.coords(i, 2) * record.scale_factor;
    const double rx = c * x - s * y;
    const double ry = s * x + c * y;
    x = rx;
    y = record.flipped_y ? -ry : ry;
    out.coords(i, 0) = x;
    out.coords(i, 1) = y;
    out.coords(i, 2) = z;
  }
  return out;
}

/// Inverse by composing the forward transform as one matrix and numerically
/// inverting it.
inline PointSet invert_augmentation_reference(const PointSet& points,
                                              const AugmentationRecord& record) {
  Eigen::Matrix3d scale = Eigen::Matrix3d::Identity() * record.scale_factor;
  Eigen::Matrix3d rot;
  rot << std::cos(record.yaw), -std::sin(record.yaw), 0.0,
         std::sin(record.yaw), std::cos(record.yaw), 0.0,
         0.0, 0.0, 1.0;
  Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
  if (record.flipped_y) flip(1, 1) = -1.0;
  const Eigen::Matrix3d forward = flip * rot * scale;
  const Eigen::Matrix3d inverse = forward.inverse();
  PointSet out = points;
  out.coords = points.coords * inverse.transpose();
  return out;
}

/// Plain 3x4 multiply-then-divide projection with the same correction rule.
inline ProjectedCoords project_reference(const PointSet& points, const CalibrationRig& rig) {
  double pm[3][4];
  for (int r = 0; r < 3; ++r) {
    for (int cc = 0; cc < 3; ++cc) {
      double acc = 0.0;
      for (int t = 0; t < 3; ++t) acc += rig.intrinsics(r, t) * rig.rotation(t, cc);
      pm[r][cc] = rig.scale * acc;
    }
    double acc = 0.0;
    for (int t = 0; t < 3; ++t) acc += rig.intrinsics(r, t) * rig.translation(t);
    pm[r][3] = rig.scale * acc;
  }

  std::vector<double> us, vs, zs;
  std::vector<int> idx;
  for (int i = 0; i < points.size(); ++i) {
    double q[3];
    for (int r = 0; r < 3; ++r)
      q[r] = pm[r][0] * points.coords(i, 0) + pm[r][1] * points.coords(i, 1) +
             pm[r][2] * points.coords(i, 2) + pm[r][3];
    if (q[2] <= 0.0) continue;
    const double u = q[0] / q[2], v = q[1] / q[2];
    if (u < 0.0 || u > rig.image_width || v < 0.0 || v > rig.image_height) continue;
    us.push_back(u);
    vs.push_back(v);
    zs.push_back(q[2]);
    idx.push_back(i);
  }
  ProjectedCoords out;
  out.pixel.resize(Eigen::Index(us.size()), 2);
  for (std::size_t r = 0; r < us.size(); ++r) {
    out.pixel(Eigen::Index(r), 0) = us[r];
    out.pixel(Eigen::Index(r), 1) = vs[r];
  }
  out.depth = std::move(zs);
  out.source_index = std::move(idx);
  return out;
}

/// Full-sort KNN over an index window [begin, end) of the cloud, with the
/// shared ordering rule: ascending squared distance, ties to lower index.
inline void knn_window_reference(const PointSet& points, int begin, int end, int k,
                                 PadMode pad_mode, NeighborGraph& graph) {
  const int m = end - begin;
  std::vector<std::pair<double, int>> order(static_cast<std::size_t>(m));
  for (int i = begin; i < end; ++i) {
    for (int j = begin; j < end; ++j) {
      double d2 = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double d = points.coords(j, a) - points.coords(i, a);
        d2 += d * d;
      }
      order[std::size_t(j - begin)] = {d2, j};
    }
    std::sort(order.begin(), order.end());
    const int kk = std::min(m, k);
    for (int j = 0; j < kk; ++j) {
      graph.indices(i, j) = order[std::size_t(j)].second;
      graph.valid(i, j) = 1;
    }
    for (int j = kk; j < k; ++j) {
      graph.indices(i, j) = pad_mode == PadMode::self_index ? i : 0;
      graph.valid(i, j) = 0;
    }
  }
}

inline NeighborGraph knn_full_reference(const PointSet& points, int k) {
  require(k <= points.size(), ErrorKind::invalid_input, "knn reference: k exceeds point count");
  NeighborGraph graph;
  graph.indices = IndexMatrix(points.size(), k);
  graph.valid = BoolMask(points.size(), k);
  knn_window_reference(points, 0, points.size(), k, PadMode::self_index, graph);
  return graph;
}

inline NeighborGraph knn_chunked_reference(const PointSet& points, const GraphConfig& config) {
  NeighborGraph graph;
  graph.indices = IndexMatrix(points.size(), config.k);
  graph.valid = BoolMask(points.size(), config.k);
  for (int lo = 0; lo < points.size(); lo += config.chunk_size)
    knn_window_reference(points, lo, std::min(points.size(), lo + config.chunk_size), config.k,
                         config.pad_mode, graph);
  return graph;
}

/// Direct-indexing gather: floor, clamp, then the adapter via plain loops.
inline RowMatrixXd gather_reference(const ImageFeatureMap& fmap, const ProjectedCoords& proj,
                                    const ChannelAdapter& adapter) {
  const int c_out = int(adapter.weight.cols());
  RowMatrixXd out(proj.size(), c_out);
  for (int i = 0; i < proj.size(); ++i) {
    int col = int(std::floor(proj.pixel(i, 0)));
    int row = int(std::floor(proj.pixel(i, 1)));
    col = std::clamp(col, 0, fmap.width - 1);
    row = std::clamp(row, 0, fmap.height - 1);
    for (int ch = 0; ch < c_out; ++ch) {
      double acc = adapter.bias[ch];
      for (int t = 0; t < fmap.channels; ++t) acc += fmap.at(row, col, t) * adapter.weight(t, ch);
      out(i, ch) = acc;
    }
  }
  return out;
}

/// Per-slot recomputation: graph lookup, then a linear scan of
/// proj.source_index, then the gathered row.
inline std::pair<Tensor3, BoolMask> neighbor_block_reference(const RowMatrixXd& gathered,
                                                             const NeighborGraph& graph,
                                                             const ProjectedCoords& proj) {
  Tensor3 block(graph.n(), graph.k(), int(gathered.cols()));
  BoolMask mask(graph.n(), graph.k());
  auto find_row = [&proj](int source) {
    for (std::size_t r = 0; r < proj.source_index.size(); ++r)
      if (proj.source_index[r] == source) return int(r);
    return -1;
  };
  for (int i = 0; i < graph.n(); ++i) {
    if (find_row(i) < 0) continue;
    for (int j = 0; j < graph.k(); ++j) {
      if (!graph.valid(i, j)) continue;
      const int r = find_row(graph.indices(i, j));
      if (r < 0) continue;
      for (int ch = 0; ch < block.c; ++ch) block(i, j, ch) = gathered(r, ch);
      mask(i, j) = 1;
    }
  }
  return {std::move(block), std::move(mask)};
}

inline FusedBlock fuse_reference(const RowMatrixXd& point_features, const Tensor3& neighbor_block,
                                 const BoolMask& mask) {
  FusedBlock out;
  out.data = Tensor3(neighbor_block.n, neighbor_block.k, neighbor_block.c);
  out.valid = mask;
  for (int i = 0; i < neighbor_block.n; ++i)
    for (int j = 0; j < neighbor_block.k; ++j)
      for (int ch = 0; ch < neighbor_block.c; ++ch)
        out.data(i, j, ch) = point_features(i, ch) +
                             (mask(i, j) ? neighbor_block(i, j, ch) : 0.0);
  return out;
}

/// Explicit per-head attention: nested loops only, plain softmax without
/// the max-subtraction trick.
inline AttentionOutput attention_reference(const FusedBlock& block,
                                           const AttentionParams& params, AttentionMode mode) {
  const int n = block.data.n, k = block.data.k, c = block.data.c;
  const int h = params.heads, dh = c / h;
  AttentionOutput out;
  out.features = Tensor3(n, k, c);
  out.weights = Tensor4(n, h, k, k);

  std::vector<std::vector<double>> q(static_cast<std::size_t>(k),
                                      std::vector<double>(static_cast<std::size_t>(c)));
  auto kt = q, v = q;
  for (int i = 0; i < n; ++i) {
    bool any = false;
    for (int j = 0; j < k; ++j)
      if (block.valid(i, j)) any = true;
    if (!any) {
      for (int j = 0; j < k; ++j)
        for (int ch = 0; ch < c; ++ch) out.features(i, j, ch) = block.data(i, j, ch);
      for (int hh = 0; hh < h; ++hh)
        for (int a = 0; a < k; ++a) out.weights(i, hh, a, a) = 1.0;
      out.bypassed_points += 1;
      continue;
    }

    for (int j = 0; j < k; ++j)
      for (int ch = 0; ch < c; ++ch) {
        double aq = 0.0, ak = 0.0, av = 0.0;
        for (int t = 0; t < c; ++t) {
          const double f = block.data(i, j, t);
          aq += f * params.w_q(t, ch);
          ak += f * params.w_k(t, ch);
          av += f * params.w_v(t, ch);
        }
        q[std::size_t(j)][std::size_t(ch)] = aq;
        kt[std::size_t(j)][std::size_t(ch)] = ak;
        v[std::size_t(j)][std::size_t(ch)] = av;
      }

    for (int hh = 0; hh < h; ++hh) {
      for (int a = 0; a < k; ++a) {
        std::vector<double> row(std::size_t(k), 0.0);
        double denom = 0.0;
        for (int b = 0; b < k; ++b) {
          if (!block.valid(i, b)) continue;
          double score = 0.0;
          for (int d = 0; d < dh; ++d)
            score += q[std::size_t(a)][std::size_t(hh * dh + d)] *
                     kt[std::size_t(b)][std::size_t(hh * dh + d)];
          if (mode == AttentionMode::standard) score /= std::sqrt(double(dh));
          row[std::size_t(b)] = std::exp(score);
          denom += row[std::size_t(b)];
        }
        for (int b = 0; b < k; ++b) {
          const double w = block.valid(i, b) ? row[std::size_t(b)] / denom : 0.0;
          out.weights(i, hh, a, b) = w;
        }
        for (int d = 0; d < dh; ++d) {
          double acc = 0.0;
          for (int b = 0; b < k; ++b) {
            const double x = mode == AttentionMode::standard
                                 ? v[std::size_t(b)][std::size_t(hh * dh + d)]
                                 : block.data(i, b, hh * dh + d);
            acc += out.weights(i, hh, a, b) * x;
          }
          out.features(i, a, hh * dh + d) = acc;
        }
        out.score_macs += std::int64_t(k) * dh;  // one K x dh score row
      }
    }
  }
  return out;
}

inline RowMatrixXd channelwise_max_reference(const Tensor3& t, const BoolMask& mask) {
  RowMatrixXd out(t.n, t.c);
  for (int i = 0; i < t.n; ++i)
    for (int ch = 0; ch < t.c; ++ch) {
      bool any = false;
      double best = 0.0;
      for (int j = 0; j < t.k; ++j) {
        if (!mask(i, j)) continue;
        if (!any || t(i, j, ch) > best) best = t(i, j, ch);
        any = true;
      }
      out(i, ch) = any ? best : t(i, 0, ch);
    }
  return out;
}

/// Mean over chunks of the maximum pairwise distance inside each chunk.
/// Measures how spatially coherent index-contiguous chunks are.
inline double mean_chunk_diameter(const PointSet& points, int chunk_size) {
  double total = 0.0;
  int chunks = 0;
  for (int lo = 0; lo < points.size(); lo += chunk_size) {
    const int hi = std::min(points.size(), lo + chunk_size);
    double diam = 0.0;
    for (int i = lo; i < hi; ++i)
      for (int j = i + 1; j < hi; ++j) {
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) {
          const double d = points.coords(j, a) - points.coords(i, a);
          d2 += d * d;
        }
        diam = std::max(diam, d2);
      }
    total += std::sqrt(diam);
    chunks += 1;
  }
  return chunks > 0 ? total / chunks : 0.0;
}

/// Least-squares slope of log(y) against log(x).
inline double fit_power_law_exponent(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::invalid_input,
          "power-law fit needs at least two samples");
  double mx = 0.0, my = 0.0;
  const double n = double(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    num += dx * (std::log(y[i]) - my);
    den += dx * dx;
  }
  return num / den;
}

}  // namespace oracle
}  // namespace graphalign
