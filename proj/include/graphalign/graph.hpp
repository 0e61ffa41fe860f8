#pragma once

#include <algorithm>
#include <numeric>
#include <utility>
#include <vector>

#include "graphalign/core.hpp"
#include "graphalign/geometry.hpp"
#include "graphalign/parallel.hpp"

namespace graphalign {

enum class PadMode {
  literal_zero,  // pad slots carry global index 0, masked invalid
  self_index,    // pad slots carry the point's own index, masked invalid
};

struct GraphConfig {
  int k = 16;
  int chunk_size = 1000;
  PadMode pad_mode = PadMode::self_index;

  void validate() const {
    require(k >= 1, ErrorKind::invalid_input, "k must be >= 1");
    require(chunk_size >= 1, ErrorKind::invalid_input, "chunk_size must be >= 1");
  }
};

/// N x K neighbor table in global indices. Padded slots (chunk smaller than
/// K) are marked invalid; every consumer must honor the mask.
struct NeighborGraph {
  IndexMatrix indices;
  BoolMask valid;

  int n() const { return indices.rows; }
  int k() const { return indices.cols; }
};

struct IndexRange {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
};

/// Contiguous ranges [0,c), [c,2c), ...; the last holds the remainder.
inline std::vector<IndexRange> partition(int n_points, int chunk_size) {
  require(n_points >= 1, ErrorKind::invalid_input, "partition: need at least one point");
  require(chunk_size >= 1, ErrorKind::invalid_input, "partition: chunk_size must be >= 1");
  std::vector<IndexRange> ranges;
  ranges.reserve(std::size_t((n_points + chunk_size - 1) / chunk_size));
  for (int lo = 0; lo < n_points; lo += chunk_size)
    ranges.push_back({lo, std::min(n_points, lo + chunk_size)});
  return ranges;
}

struct ChunkKnn {
  IndexMatrix indices;
  BoolMask valid;
};

/// KNN among the M rows of `coords` (one chunk). Neighbors are sorted by
/// ascending squared Euclidean distance, ties broken by lower index; the
/// point itself (distance 0) is always a candidate. When M < k the trailing
/// slots are padded per pad_mode and masked invalid. Output indices are
/// global: chunk-local positions shifted by `global_offset`.
inline ChunkKnn knn_chunk(const Eigen::Ref<const RowMatrixXd>& coords, int k, PadMode pad_mode,
                          int global_offset = 0) {
  const int m = int(coords.rows());
  require(m >= 1, ErrorKind::invalid_input, "knn_chunk: need at least one point");
  require(k >= 1, ErrorKind::invalid_input, "knn_chunk: k must be >= 1");

  ChunkKnn out;
  out.indices = IndexMatrix(m, k);
  out.valid = BoolMask(m, k);
  const int kk = std::min(m, k);

  std::vector<std::pair<double, int>> cand(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double xi = coords(i, 0), yi = coords(i, 1), zi = coords(i, 2);
    for (int j = 0; j < m; ++j) {
      const double dx = coords(j, 0) - xi;
      const double dy = coords(j, 1) - yi;
      const double dz = coords(j, 2) - zi;
      cand[std::size_t(j)] = {dx * dx + dy * dy + dz * dz, j};
    }
    std::partial_sort(cand.begin(), cand.begin() + kk, cand.end());
    for (int j = 0; j < kk; ++j) {
      out.indices(i, j) = global_offset + cand[std::size_t(j)].second;
      out.valid(i, j) = 1;
    }
    const int pad = pad_mode == PadMode::self_index ? global_offset + i : 0;
    for (int j = kk; j < k; ++j) {
      out.indices(i, j) = pad;
      out.valid(i, j) = 0;
    }
  }
  return out;
}

/// Chunked KNN over the whole cloud: partition by index order, solve each
/// chunk independently, concatenate rows. Chunks run in parallel; each
/// writes only its own rows, so the result is identical for any worker
/// count.
inline NeighborGraph build_graph(const PointSet& points, const GraphConfig& config,
                                 int workers = 1) {
  config.validate();
  points.validate();
  const int n = points.size();
  require(n >= 1, ErrorKind::invalid_input, "build_graph: empty point set");

  const auto ranges = partition(n, config.chunk_size);
  NeighborGraph graph;
  graph.indices = IndexMatrix(n, config.k);
  graph.valid = BoolMask(n, config.k);

  parallel_for(std::int64_t(ranges.size()), workers, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t r = lo; r < hi; ++r) {
      const IndexRange range = ranges[std::size_t(r)];
      const ChunkKnn chunk = knn_chunk(points.coords.middleRows(range.begin, range.size()),
                                       config.k, config.pad_mode, range.begin);
      std::copy(chunk.indices.v.begin(), chunk.indices.v.end(),
                graph.indices.v.begin() + std::size_t(range.begin) * config.k);
      std::copy(chunk.valid.v.begin(), chunk.valid.v.end(),
                graph.valid.v.begin() + std::size_t(range.begin) * config.k);
    }
  });
  return graph;
}

/// Exact full-space KNN with the same ordering rules. Single-threaded; this
/// is the reference the chunked builder is measured against.
inline NeighborGraph knn_bruteforce(const PointSet& points, int k) {
  points.validate();
  const int n = points.size();
  require(n >= 1, ErrorKind::invalid_input, "knn_bruteforce: empty point set");
  require(k >= 1, ErrorKind::invalid_input, "knn_bruteforce: k must be >= 1");
  require(k <= n, ErrorKind::invalid_input, "knn_bruteforce: k exceeds point count");

  ChunkKnn all = knn_chunk(points.coords, k, PadMode::self_index, 0);
  NeighborGraph graph;
  graph.indices = std::move(all.indices);
  graph.valid = std::move(all.valid);
  return graph;
}

/// Mean per-row overlap |A ∩ B| / k between two graphs' valid neighbor
/// sets. Quantifies how well chunked KNN approximates the full-space graph.
inline double mean_neighbor_overlap(const NeighborGraph& a, const NeighborGraph& b) {
  require(a.n() == b.n() && a.k() == b.k(), ErrorKind::invalid_input,
          "neighbor overlap: shape mismatch");
  double total = 0.0;
  std::vector<int> sa, sb;
  for (int i = 0; i < a.n(); ++i) {
    sa.clear();
    sb.clear();
    for (int j = 0; j < a.k(); ++j) {
      if (a.valid(i, j)) sa.push_back(a.indices(i, j));
      if (b.valid(i, j)) sb.push_back(b.indices(i, j));
    }
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    std::vector<int> both;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(both));
    total += double(both.size()) / double(a.k());
  }
  return total / double(a.n());
}

}  // namespace graphalign
