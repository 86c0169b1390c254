#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace octcast::metrics {

namespace {

void check_same_horizon(const geom::HandTrajectory& pred, const geom::HandTrajectory& gt) {
  if (pred.horizon != gt.horizon || pred.left.size() != gt.left.size() ||
      pred.right.size() != gt.right.size())
    fail(ErrorKind::ShapeMismatch, "trajectories must share the horizon");
}

}  // namespace

double ade(const geom::HandTrajectory& pred, const geom::HandTrajectory& gt) {
  check_same_horizon(pred, gt);
  double sum = 0.0;
  int terms = 0;
  for (int t = 0; t < gt.horizon; ++t) {
    for (int side = 0; side < 2; ++side) {
      if (!gt.visible[static_cast<size_t>(t)][static_cast<size_t>(side)]) continue;
      const auto& p = side == 0 ? pred.left : pred.right;
      const auto& g = side == 0 ? gt.left : gt.right;
      sum += (p[static_cast<size_t>(t)] - g[static_cast<size_t>(t)]).norm();
      ++terms;
    }
  }
  if (terms == 0) fail(ErrorKind::NoVisibleGroundTruth, "no visible ground-truth hand");
  return sum / terms;
}

double fde(const geom::HandTrajectory& pred, const geom::HandTrajectory& gt) {
  check_same_horizon(pred, gt);
  if (gt.horizon < 1) fail(ErrorKind::ShapeMismatch, "empty trajectory");
  const int t = gt.horizon - 1;
  double sum = 0.0;
  int terms = 0;
  for (int side = 0; side < 2; ++side) {
    if (!gt.visible[static_cast<size_t>(t)][static_cast<size_t>(side)]) continue;
    const auto& p = side == 0 ? pred.left : pred.right;
    const auto& g = side == 0 ? gt.left : gt.right;
    sum += (p[static_cast<size_t>(t)] - g[static_cast<size_t>(t)]).norm();
    ++terms;
  }
  if (terms == 0) fail(ErrorKind::NoVisibleGroundTruth, "final step has no visible hand");
  return sum / terms;
}

double min_of_k(const std::vector<geom::HandTrajectory>& samples, const geom::HandTrajectory& gt,
                const TrajectoryMetric& metric) {
  if (samples.empty()) fail(ErrorKind::InvalidArgument, "need at least one sample");
  double best = metric(samples[0], gt);
  for (size_t k = 1; k < samples.size(); ++k) best = std::min(best, metric(samples[k], gt));
  return best;
}

AffordanceHeatmap normalize_heatmap(const Eigen::MatrixXd& raw, int target_h, int target_w) {
  if (raw.rows() < 1 || raw.cols() < 1 || target_h < 1 || target_w < 1)
    fail(ErrorKind::ShapeMismatch, "empty heatmap");
  if (raw.minCoeff() < 0.0) fail(ErrorKind::InvalidArgument, "heatmap entries must be >= 0");

  // pad to the next multiple by replicating edges, then block-mean pool
  const int bh = static_cast<int>((raw.rows() + target_h - 1) / target_h);
  const int bw = static_cast<int>((raw.cols() + target_w - 1) / target_w);
  const int ph = bh * target_h;
  const int pw = bw * target_w;
  Eigen::MatrixXd padded(ph, pw);
  for (int r = 0; r < ph; ++r)
    for (int c = 0; c < pw; ++c)
      padded(r, c) = raw(std::min<Eigen::Index>(r, raw.rows() - 1),
                         std::min<Eigen::Index>(c, raw.cols() - 1));

  AffordanceHeatmap out;
  out.grid = Eigen::MatrixXd::Zero(target_h, target_w);
  for (int r = 0; r < target_h; ++r)
    for (int c = 0; c < target_w; ++c)
      out.grid(r, c) = padded.block(r * bh, c * bw, bh, bw).mean();

  const double total = out.grid.sum();
  if (total <= 0.0) fail(ErrorKind::AllZero, "heatmap has no mass");
  out.grid /= total;
  return out;
}

double sim(const AffordanceHeatmap& p, const AffordanceHeatmap& q) {
  if (p.grid.rows() != q.grid.rows() || p.grid.cols() != q.grid.cols())
    fail(ErrorKind::ShapeMismatch, "heatmaps must share the grid shape");
  return p.grid.cwiseMin(q.grid).sum();
}

namespace {

std::set<Cell> unique_cells(const AffordanceHeatmap& p, const std::vector<Cell>& gt_points) {
  if (gt_points.empty()) fail(ErrorKind::EmptyGroundTruth, "no ground-truth cells");
  std::set<Cell> cells;
  for (const Cell& c : gt_points) {
    if (c.row < 0 || c.row >= p.height() || c.col < 0 || c.col >= p.width())
      fail(ErrorKind::InvalidArgument, "ground-truth cell outside the grid");
    cells.insert(c);
  }
  return cells;
}

}  // namespace

double auc_judd(const AffordanceHeatmap& p, const std::vector<Cell>& gt_points) {
  const std::set<Cell> cells = unique_cells(p, gt_points);
  const auto total = static_cast<double>(p.grid.size());
  const auto n_pos = static_cast<double>(cells.size());
  const double n_neg = total - n_pos;
  if (n_neg <= 0.0) return 1.0;

  std::vector<double> thresholds;
  for (const Cell& c : cells) thresholds.push_back(p.grid(c.row, c.col));
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  // curve points: (fpr, tpr) per threshold, swept high to low
  std::vector<std::pair<double, double>> curve;
  curve.emplace_back(0.0, 0.0);
  for (auto it = thresholds.rbegin(); it != thresholds.rend(); ++it) {
    const double tau = *it;
    int tp = 0;
    for (const Cell& c : cells) tp += p.grid(c.row, c.col) >= tau ? 1 : 0;
    int above = 0;
    for (Eigen::Index r = 0; r < p.grid.rows(); ++r)
      for (Eigen::Index c = 0; c < p.grid.cols(); ++c) above += p.grid(r, c) >= tau ? 1 : 0;
    const int fp = above - tp;
    curve.emplace_back(fp / n_neg, tp / n_pos);
  }
  curve.emplace_back(1.0, 1.0);

  double area = 0.0;
  for (size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].first - curve[i - 1].first) * (curve[i].second + curve[i - 1].second) / 2.0;
  }
  return area;
}

double nss(const AffordanceHeatmap& p, const std::vector<Cell>& gt_points) {
  const std::set<Cell> cells = unique_cells(p, gt_points);
  const double mean = p.grid.mean();
  const double var = (p.grid.array() - mean).square().mean();
  const double std_dev = std::sqrt(var);
  if (std_dev < 1e-12) return 0.0;
  double acc = 0.0;
  for (const Cell& c : cells) acc += (p.grid(c.row, c.col) - mean) / std_dev;
  return acc / static_cast<double>(cells.size());
}

Cell cell_of(const Eigen::Vector2d& normalized, int grid_h, int grid_w) {
  Cell c;
  c.row = std::clamp(static_cast<int>(normalized.y() * grid_h), 0, grid_h - 1);
  c.col = std::clamp(static_cast<int>(normalized.x() * grid_w), 0, grid_w - 1);
  return c;
}

}  // namespace octcast::metrics
