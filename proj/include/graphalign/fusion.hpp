#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "graphalign/core.hpp"
#include "graphalign/geometry.hpp"
#include "graphalign/graph.hpp"
#include "graphalign/parallel.hpp"

namespace graphalign {

/// Rendered image feature grid, (row, col, channel) row-major.
struct ImageFeatureMap {
  int height = 0, width = 0, channels = 0;
  std::vector<double> data;

  ImageFeatureMap() = default;
  ImageFeatureMap(int h, int w, int c)
      : height(h), width(w), channels(c), data(std::size_t(h) * w * c, 0.0) {}

  double& at(int row, int col, int ch) {
    return data[(std::size_t(row) * width + col) * channels + ch];
  }
  double at(int row, int col, int ch) const {
    return data[(std::size_t(row) * width + col) * channels + ch];
  }
  const double* pixel(int row, int col) const {
    return data.data() + (std::size_t(row) * width + col) * channels;
  }

  void validate() const {
    require(height > 0 && width > 0 && channels > 0, ErrorKind::invalid_input,
            "feature map dimensions must be positive");
    require(data.size() == std::size_t(height) * width * channels, ErrorKind::invalid_input,
            "feature map buffer size mismatch");
    for (double x : data)
      require(std::isfinite(x), ErrorKind::invalid_input, "feature map entries must be finite");
  }
};

/// Maps C'-channel image features onto the point feature space:
/// out = in * weight + bias.
struct ChannelAdapter {
  RowMatrixXd weight;           // C' x C
  Eigen::VectorXd bias;         // C

  static ChannelAdapter identity(int channels) {
    ChannelAdapter a;
    a.weight = RowMatrixXd::Identity(channels, channels);
    a.bias = Eigen::VectorXd::Zero(channels);
    return a;
  }

  bool is_identity() const {
    return weight.rows() == weight.cols() &&
           weight == RowMatrixXd::Identity(weight.rows(), weight.cols()) && bias.isZero(0.0);
  }

  void validate() const {
    require(weight.rows() >= 1 && weight.cols() >= 1, ErrorKind::invalid_input,
            "adapter weight must be non-empty");
    require(weight.cols() == bias.size(), ErrorKind::invalid_input,
            "adapter bias length must match output channels");
    require(weight.allFinite() && bias.allFinite(), ErrorKind::invalid_input,
            "adapter entries must be finite");
  }
};

/// N x K x C fused tensor plus the validity mask inherited from the graph.
/// Invalid slots hold the replicated point feature with no image term.
struct FusedBlock {
  Tensor3 data;
  BoolMask valid;
};

/// Reads the feature map at each projected location (floor, clamped to the
/// last row/column so the closed-interval boundary x = width still has a
/// defined pixel) and pushes the result through the adapter.
inline RowMatrixXd gather_image_features(const ImageFeatureMap& fmap, const ProjectedCoords& proj,
                                         const ChannelAdapter& adapter) {
  adapter.validate();
  require(int(adapter.weight.rows()) == fmap.channels, ErrorKind::invalid_input,
          "adapter input channels do not match the feature map");
  const int m = proj.size();
  const int c_in = fmap.channels;
  const int c_out = int(adapter.weight.cols());
  const bool identity = adapter.is_identity();

  RowMatrixXd out(m, c_out);
  for (int i = 0; i < m; ++i) {
    int col = int(std::floor(proj.pixel(i, 0)));
    int row = int(std::floor(proj.pixel(i, 1)));
    col = std::min(std::max(col, 0), fmap.width - 1);
    row = std::min(std::max(row, 0), fmap.height - 1);
    const double* px = fmap.pixel(row, col);
    if (identity) {
      for (int ch = 0; ch < c_out; ++ch) out(i, ch) = px[ch];
    } else {
      Eigen::Map<const Eigen::RowVectorXd> f(px, c_in);
      out.row(i) = f * adapter.weight + adapter.bias.transpose();
    }
  }
  return out;
}

/// Expands gathered features along the neighbor graph: slot (i, j) receives
/// the image feature of neighbor indices[i][j]. Neighbors the projection
/// dropped contribute zero with valid=false; a row whose own point was
/// dropped is fully masked.
inline std::pair<Tensor3, BoolMask> assemble_neighbor_block(const RowMatrixXd& gathered,
                                                            const NeighborGraph& graph,
                                                            const ProjectedCoords& proj) {
  require(gathered.rows() == proj.size(), ErrorKind::invalid_input,
          "gathered rows must match projected point count");
  const int n = graph.n();
  const int k = graph.k();
  const int c = int(gathered.cols());

  // proj.source_index is strictly increasing; invert it into a dense lookup.
  std::vector<int> proj_row(std::size_t(n), -1);
  for (int r = 0; r < proj.size(); ++r) {
    const int src = proj.source_index[std::size_t(r)];
    require(src >= 0 && src < n, ErrorKind::invalid_input,
            "projection source index out of range for this graph");
    proj_row[std::size_t(src)] = r;
  }

  Tensor3 block(n, k, c);
  BoolMask mask(n, k);
  for (int i = 0; i < n; ++i) {
    if (proj_row[std::size_t(i)] < 0) continue;  // own point dropped: row stays masked
    for (int j = 0; j < k; ++j) {
      if (!graph.valid(i, j)) continue;
      const int nb = graph.indices(i, j);
      const int r = proj_row[std::size_t(nb)];
      if (r < 0) continue;  // neighbor dropped by the correction rule
      const double* src = gathered.row(r).data();
      std::memcpy(block.slot(i, j), src, std::size_t(c) * sizeof(double));
      mask(i, j) = 1;
    }
  }
  return {std::move(block), std::move(mask)};
}

/// data[i][j] = point_features[i] + neighbor_block[i][j] on valid slots and
/// the bare point feature elsewhere: the point feature replicated K times
/// plus the per-neighbor image term.
inline FusedBlock fuse(const RowMatrixXd& point_features, const Tensor3& neighbor_block,
                       const BoolMask& mask, int workers = 1) {
  const int n = neighbor_block.n;
  const int k = neighbor_block.k;
  const int c = neighbor_block.c;
  require(int(point_features.rows()) == n && int(point_features.cols()) == c,
          ErrorKind::invalid_input, "point features do not match the neighbor block shape");
  require(mask.rows == n && mask.cols == k, ErrorKind::invalid_input,
          "mask does not match the neighbor block shape");

  FusedBlock out;
  out.data = Tensor3(n, k, c);
  out.valid = mask;
  parallel_for(n, workers, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      const double* pf = point_features.row(Eigen::Index(i)).data();
      for (int j = 0; j < k; ++j) {
        double* dst = out.data.slot(int(i), j);
        if (mask(int(i), j)) {
          const double* nb = neighbor_block.slot(int(i), j);
          for (int ch = 0; ch < c; ++ch) dst[ch] = pf[ch] + nb[ch];
        } else {
          for (int ch = 0; ch < c; ++ch) dst[ch] = pf[ch];
        }
      }
    }
  });
  return out;
}

}  // namespace graphalign
