#pragma once

// Independent brute-force implementations of the evaluation metrics, shared
// by the unit and acceptance suites. Everything here is scalar loops; no code
// is shared with the library implementations.

#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace octcast::testing {

inline double ade_oracle(const geom::HandTrajectory& pred, const geom::HandTrajectory& gt) {
  double sum = 0.0;
  int n = 0;
  for (int t = 0; t < gt.horizon; ++t) {
    if (gt.visible[static_cast<size_t>(t)][0]) {
      const double dx = pred.left[static_cast<size_t>(t)].x() - gt.left[static_cast<size_t>(t)].x();
      const double dy = pred.left[static_cast<size_t>(t)].y() - gt.left[static_cast<size_t>(t)].y();
      sum += std::sqrt(dx * dx + dy * dy);
      ++n;
    }
    if (gt.visible[static_cast<size_t>(t)][1]) {
      const double dx =
          pred.right[static_cast<size_t>(t)].x() - gt.right[static_cast<size_t>(t)].x();
      const double dy =
          pred.right[static_cast<size_t>(t)].y() - gt.right[static_cast<size_t>(t)].y();
      sum += std::sqrt(dx * dx + dy * dy);
      ++n;
    }
  }
  return sum / n;
}

inline double fde_oracle(const geom::HandTrajectory& pred, const geom::HandTrajectory& gt) {
  const int t = gt.horizon - 1;
  double sum = 0.0;
  int n = 0;
  if (gt.visible[static_cast<size_t>(t)][0]) {
    sum += (pred.left[static_cast<size_t>(t)] - gt.left[static_cast<size_t>(t)]).norm();
    ++n;
  }
  if (gt.visible[static_cast<size_t>(t)][1]) {
    sum += (pred.right[static_cast<size_t>(t)] - gt.right[static_cast<size_t>(t)]).norm();
    ++n;
  }
  return sum / n;
}

inline double sim_oracle(const metrics::AffordanceHeatmap& p, const metrics::AffordanceHeatmap& q) {
  double acc = 0.0;
  for (Eigen::Index r = 0; r < p.grid.rows(); ++r)
    for (Eigen::Index c = 0; c < p.grid.cols(); ++c) acc += std::min(p.grid(r, c), q.grid(r, c));
  return acc;
}

// Exhaustive sweep over the fixation-value thresholds with scalar counting.
inline double auc_judd_oracle(const metrics::AffordanceHeatmap& p,
                              const std::vector<metrics::Cell>& gt_points) {
  std::vector<metrics::Cell> cells = gt_points;
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());

  std::vector<double> values;
  for (const auto& c : cells) values.push_back(p.grid(c.row, c.col));
  std::sort(values.begin(), values.end(), std::greater<double>());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  const double total = static_cast<double>(p.grid.size());
  const double n_pos = static_cast<double>(cells.size());
  const double n_neg = total - n_pos;
  if (n_neg <= 0.0) return 1.0;

  std::vector<double> fprs = {0.0};
  std::vector<double> tprs = {0.0};
  for (double tau : values) {
    double tp = 0.0;
    for (const auto& c : cells)
      if (p.grid(c.row, c.col) >= tau) tp += 1.0;
    double above = 0.0;
    for (Eigen::Index r = 0; r < p.grid.rows(); ++r)
      for (Eigen::Index c = 0; c < p.grid.cols(); ++c)
        if (p.grid(r, c) >= tau) above += 1.0;
    fprs.push_back((above - tp) / n_neg);
    tprs.push_back(tp / n_pos);
  }
  fprs.push_back(1.0);
  tprs.push_back(1.0);

  double area = 0.0;
  for (size_t i = 1; i < fprs.size(); ++i)
    area += (fprs[i] - fprs[i - 1]) * (tprs[i] + tprs[i - 1]) / 2.0;
  return area;
}

inline double nss_oracle(const metrics::AffordanceHeatmap& p,
                         const std::vector<metrics::Cell>& gt_points) {
  std::vector<metrics::Cell> cells = gt_points;
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());

  double mean = 0.0;
  for (Eigen::Index r = 0; r < p.grid.rows(); ++r)
    for (Eigen::Index c = 0; c < p.grid.cols(); ++c) mean += p.grid(r, c);
  mean /= static_cast<double>(p.grid.size());
  double var = 0.0;
  for (Eigen::Index r = 0; r < p.grid.rows(); ++r)
    for (Eigen::Index c = 0; c < p.grid.cols(); ++c)
      var += (p.grid(r, c) - mean) * (p.grid(r, c) - mean);
  var /= static_cast<double>(p.grid.size());
  if (std::sqrt(var) < 1e-12) return 0.0;
  double acc = 0.0;
  for (const auto& c : cells) acc += (p.grid(c.row, c.col) - mean) / std::sqrt(var);
  return acc / static_cast<double>(cells.size());
}

// Block-mean pooling with edge padding, scalar loops.
inline metrics::AffordanceHeatmap normalize_oracle(const Eigen::MatrixXd& raw, int th, int tw) {
  const int bh = static_cast<int>((raw.rows() + th - 1) / th);
  const int bw = static_cast<int>((raw.cols() + tw - 1) / tw);
  metrics::AffordanceHeatmap out;
  out.grid = Eigen::MatrixXd::Zero(th, tw);
  for (int r = 0; r < th; ++r)
    for (int c = 0; c < tw; ++c) {
      double acc = 0.0;
      for (int i = 0; i < bh; ++i)
        for (int j = 0; j < bw; ++j) {
          const auto rr = std::min<Eigen::Index>(r * bh + i, raw.rows() - 1);
          const auto cc = std::min<Eigen::Index>(c * bw + j, raw.cols() - 1);
          acc += raw(rr, cc);
        }
      out.grid(r, c) = acc / (bh * bw);
    }
  out.grid /= out.grid.sum();
  return out;
}

// Per-cell Gaussian-sum rasterization, scalar loops.
inline metrics::AffordanceHeatmap rasterize_oracle(const std::vector<Eigen::Vector2d>& points,
                                                   double sigma, int gh, int gw) {
  metrics::AffordanceHeatmap out;
  out.grid = Eigen::MatrixXd::Zero(gh, gw);
  for (int r = 0; r < gh; ++r)
    for (int c = 0; c < gw; ++c) {
      const double cy = (r + 0.5) / gh;
      const double cx = (c + 0.5) / gw;
      double acc = 0.0;
      for (const auto& p : points) {
        const double d2 = (cx - p.x()) * (cx - p.x()) + (cy - p.y()) * (cy - p.y());
        acc += std::exp(-d2 / (2.0 * sigma * sigma));
      }
      out.grid(r, c) = acc;
    }
  out.grid /= out.grid.sum();
  return out;
}

inline geom::HandTrajectory random_trajectory(Rng& rng, int horizon, bool fully_visible = true) {
  geom::HandTrajectory t;
  t.horizon = horizon;
  for (int i = 0; i < horizon; ++i) {
    t.left.push_back({rng.uniform(), rng.uniform()});
    t.right.push_back({rng.uniform(), rng.uniform()});
    const bool lv = fully_visible || rng.uniform() < 0.8;
    const bool rv = fully_visible || rng.uniform() < 0.8;
    t.visible.push_back({lv, rv});
  }
  return t;
}

inline metrics::AffordanceHeatmap random_heatmap(Rng& rng, int h, int w) {
  metrics::AffordanceHeatmap m;
  m.grid = Eigen::MatrixXd::Zero(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) m.grid(r, c) = rng.uniform();
  m.grid /= m.grid.sum();
  return m;
}

}  // namespace octcast::testing
