#pragma once

#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "graphalign/core.hpp"
#include "graphalign/fusion.hpp"
#include "graphalign/parallel.hpp"
#include "graphalign/rng.hpp"

namespace graphalign {

enum class AttentionMode {
  // Softmax(Q Kt) with no scale factor, applied to the raw fused slice.
  literal,
  // Scores divided by sqrt(C/H) before softmax, applied to V.
  standard,
};

struct AttentionParams {
  RowMatrixXd w_q, w_k, w_v;  // each C x C
  int heads = 1;

  int channels() const { return int(w_q.rows()); }

  void validate() const {
    const int c = channels();
    require(c >= 1, ErrorKind::invalid_input, "attention params must be non-empty");
    require(w_q.cols() == c && w_k.rows() == c && w_k.cols() == c && w_v.rows() == c &&
                w_v.cols() == c,
            ErrorKind::invalid_input, "w_q, w_k, w_v must all be C x C");
    require(w_q.allFinite() && w_k.allFinite() && w_v.allFinite(), ErrorKind::invalid_input,
            "attention params must be finite");
    require(heads >= 1, ErrorKind::invalid_input, "heads must be >= 1");
    require(c % heads == 0, ErrorKind::invalid_input, "head count must divide channels");
  }
};

struct AttentionOutput {
  Tensor3 features;  // N x K x C
  Tensor4 weights;   // N x H x K x K, rows sum to 1, masked columns exactly 0
  // Multiply-accumulates spent on the Q*Kt score stage: K*K*C per attended
  // point. This is the quantity the complexity model N*K^2*C predicts.
  std::int64_t score_macs = 0;
  // Points whose rows were entirely masked; attention was bypassed for them.
  int bypassed_points = 0;
};

/// Uniform entries in [-1/sqrt(C), +1/sqrt(C)] from a seeded generator.
/// Fill order: w_q, then w_k, then w_v, each row-major.
inline AttentionParams init_params(int channels, int heads, std::uint64_t seed) {
  require(channels >= 1, ErrorKind::invalid_input, "channels must be >= 1");
  require(heads >= 1, ErrorKind::invalid_input, "heads must be >= 1");
  require(channels % heads == 0, ErrorKind::invalid_input, "head count must divide channels");

  const double bound = 1.0 / std::sqrt(double(channels));
  Rng rng(seed);
  AttentionParams p;
  p.heads = heads;
  for (RowMatrixXd* m : {&p.w_q, &p.w_k, &p.w_v}) {
    m->resize(channels, channels);
    for (int i = 0; i < channels; ++i)
      for (int j = 0; j < channels; ++j) (*m)(i, j) = rng.uniform(-bound, bound);
  }
  return p;
}

/// Multi-head self-attention over each point's K fused neighbor slots,
/// independently per point. Invalid slots receive -inf logits so their
/// attention weight is exactly zero. A point with no valid slot at all is
/// passed through unchanged with identity weights and counted in
/// bypassed_points.
inline AttentionOutput self_attention(const FusedBlock& block, const AttentionParams& params,
                                      AttentionMode mode = AttentionMode::literal,
                                      int workers = 1) {
  params.validate();
  const int n = block.data.n;
  const int k = block.data.k;
  const int c = block.data.c;
  require(c == params.channels(), ErrorKind::invalid_input,
          "fused block channels do not match attention params");
  require(k >= 1, ErrorKind::invalid_input, "fused block must have K >= 1");
  require(block.valid.rows == n && block.valid.cols == k, ErrorKind::invalid_input,
          "fused block mask shape mismatch");

  const int h = params.heads;
  const int dh = c / h;
  const double scale = mode == AttentionMode::standard ? 1.0 / std::sqrt(double(dh)) : 1.0;

  AttentionOutput out;
  out.features = Tensor3(n, k, c);
  out.weights = Tensor4(n, h, k, k);
  std::atomic<std::int64_t> macs{0};
  std::atomic<int> bypassed{0};

  using MapRM = Eigen::Map<const RowMatrixXd>;
  parallel_for(n, workers, [&](std::int64_t lo, std::int64_t hi) {
    RowMatrixXd q, kt, v, scores, weights, head_out;
    std::int64_t local_macs = 0;
    int local_bypassed = 0;
    for (std::int64_t ii = lo; ii < hi; ++ii) {
      const int i = int(ii);
      MapRM f(block.data.slot(i, 0), k, c);

      bool any_valid = false;
      for (int j = 0; j < k; ++j)
        if (block.valid(i, j)) {
          any_valid = true;
          break;
        }
      if (!any_valid) {
        std::memcpy(out.features.slot(i, 0), block.data.slot(i, 0),
                    std::size_t(k) * c * sizeof(double));
        for (int hh = 0; hh < h; ++hh)
          for (int a = 0; a < k; ++a) out.weights(i, hh, a, a) = 1.0;
        ++local_bypassed;
        continue;
      }

      q.noalias() = f * params.w_q;
      kt.noalias() = f * params.w_k;
      if (mode == AttentionMode::standard) v.noalias() = f * params.w_v;

      for (int hh = 0; hh < h; ++hh) {
        const auto qh = q.middleCols(hh * dh, dh);
        const auto kh = kt.middleCols(hh * dh, dh);
        scores.noalias() = qh * kh.transpose();
        local_macs += std::int64_t(k) * k * dh;
        if (scale != 1.0) scores *= scale;

        weights.resize(k, k);
        for (int a = 0; a < k; ++a) {
          double mx = -std::numeric_limits<double>::infinity();
          for (int b = 0; b < k; ++b)
            if (block.valid(i, b)) mx = std::max(mx, scores(a, b));
          double sum = 0.0;
          for (int b = 0; b < k; ++b) {
            if (block.valid(i, b)) {
              const double e = std::exp(scores(a, b) - mx);
              weights(a, b) = e;
              sum += e;
            } else {
              weights(a, b) = 0.0;
            }
          }
          for (int b = 0; b < k; ++b) weights(a, b) /= sum;
        }

        if (mode == AttentionMode::standard) {
          head_out.noalias() = weights * v.middleCols(hh * dh, dh);
        } else {
          head_out.noalias() = weights * f.middleCols(hh * dh, dh);
        }

        for (int a = 0; a < k; ++a) {
          double* dst = out.features.slot(i, a) + hh * dh;
          for (int d = 0; d < dh; ++d) dst[d] = head_out(a, d);
          for (int b = 0; b < k; ++b) out.weights(i, hh, a, b) = weights(a, b);
        }
      }
    }
    macs.fetch_add(local_macs, std::memory_order_relaxed);
    bypassed.fetch_add(local_bypassed, std::memory_order_relaxed);
  });

  out.score_macs = macs.load();
  out.bypassed_points = bypassed.load();
  return out;
}

/// Channelwise max over valid slots. Rows with no valid slot fall back to
/// slot 0 and are counted in *fallback_rows when provided.
inline RowMatrixXd channelwise_max(const Tensor3& t, const BoolMask& mask,
                                   int* fallback_rows = nullptr) {
  require(mask.rows == t.n && mask.cols == t.k, ErrorKind::invalid_input,
          "channelwise_max: mask shape mismatch");
  RowMatrixXd out(t.n, t.c);
  int fallbacks = 0;
  for (int i = 0; i < t.n; ++i) {
    bool any = false;
    for (int j = 0; j < t.k; ++j) {
      if (!mask(i, j)) continue;
      const double* src = t.slot(i, j);
      if (!any) {
        for (int ch = 0; ch < t.c; ++ch) out(i, ch) = src[ch];
        any = true;
      } else {
        for (int ch = 0; ch < t.c; ++ch) out(i, ch) = std::max(out(i, ch), src[ch]);
      }
    }
    if (!any) {
      const double* src = t.slot(i, 0);
      for (int ch = 0; ch < t.c; ++ch) out(i, ch) = src[ch];
      ++fallbacks;
    }
  }
  if (fallback_rows) *fallback_rows = fallbacks;
  return out;
}

inline RowMatrixXd max_select(const AttentionOutput& att_out, const BoolMask& mask,
                              int* fallback_rows = nullptr) {
  return channelwise_max(att_out.features, mask, fallback_rows);
}

struct TrainingExample {
  FusedBlock block;     // fused features under the perturbed rig
  RowMatrixXd target;   // N x C, image feature at the error-free projection
};

struct TrainResult {
  AttentionParams params;
  std::vector<double> loss_trace;  // steps + 1 entries; [0] is the initial loss
};

namespace detail {

inline double selector_loss(const std::vector<TrainingExample>& examples,
                            const AttentionParams& params, AttentionMode mode) {
  double sq = 0.0;
  std::int64_t count = 0;
  for (const auto& ex : examples) {
    const AttentionOutput att = self_attention(ex.block, params, mode);
    const RowMatrixXd out = max_select(att, ex.block.valid);
    require(out.rows() == ex.target.rows() && out.cols() == ex.target.cols(),
            ErrorKind::invalid_input, "training target shape mismatch");
    sq += (out - ex.target).squaredNorm();
    count += out.size();
  }
  require(count > 0, ErrorKind::invalid_input, "train_selector: no training points");
  return sq / double(count);
}

}  // namespace detail

/// Gradient descent on mean squared error between max_select output and the
/// per-point target features. Gradients come from central finite differences
/// over all 3*C*C parameter entries; probes may run in parallel but the
/// update is applied in a fixed parameter order.
inline TrainResult train_selector(const std::vector<TrainingExample>& examples,
                                  const AttentionParams& params, int steps, double learning_rate,
                                  AttentionMode mode = AttentionMode::literal, int workers = 1) {
  params.validate();
  require(steps >= 0, ErrorKind::invalid_input, "steps must be >= 0");
  require(std::isfinite(learning_rate), ErrorKind::invalid_input,
          "learning_rate must be finite");
  require(!examples.empty(), ErrorKind::invalid_input, "train_selector: no examples");
  for (const auto& ex : examples)
    require(ex.block.data.c == params.channels(), ErrorKind::invalid_input,
            "training example channels do not match params");

  const int c = params.channels();
  const int per_matrix = c * c;
  const int n_params = 3 * per_matrix;
  constexpr double eps = 1e-5;

  TrainResult result;
  result.params = params;
  result.loss_trace.reserve(std::size_t(steps) + 1);

  double loss = detail::selector_loss(examples, result.params, mode);
  require(std::isfinite(loss), ErrorKind::numeric, "train_selector: non-finite initial loss");
  result.loss_trace.push_back(loss);

  std::vector<double> grad(static_cast<std::size_t>(n_params));
  for (int step = 0; step < steps; ++step) {
    parallel_for(n_params, workers, [&](std::int64_t lo, std::int64_t hi) {
      AttentionParams probe = result.params;
      RowMatrixXd* mats[3] = {&probe.w_q, &probe.w_k, &probe.w_v};
      for (std::int64_t m = lo; m < hi; ++m) {
        double* entry = mats[m / per_matrix]->data() + (m % per_matrix);
        const double saved = *entry;
        *entry = saved + eps;
        const double up = detail::selector_loss(examples, probe, mode);
        *entry = saved - eps;
        const double down = detail::selector_loss(examples, probe, mode);
        *entry = saved;
        grad[std::size_t(m)] = (up - down) / (2.0 * eps);
      }
    });

    RowMatrixXd* mats[3] = {&result.params.w_q, &result.params.w_k, &result.params.w_v};
    for (int m = 0; m < n_params; ++m)
      mats[m / per_matrix]->data()[m % per_matrix] -= learning_rate * grad[std::size_t(m)];

    loss = detail::selector_loss(examples, result.params, mode);
    require(std::isfinite(loss), ErrorKind::numeric,
            "train_selector: loss became non-finite at step " + std::to_string(step));
    result.loss_trace.push_back(loss);
  }
  return result;
}

}  // namespace graphalign
