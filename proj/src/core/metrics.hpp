#pragma once

#include "core/geometry.hpp"

#include <functional>
#include <vector>

namespace octcast::metrics {

/// Nonnegative grid summing to 1 (rows = H, cols = W).
struct AffordanceHeatmap {
  Eigen::MatrixXd grid;

  int height() const { return static_cast<int>(grid.rows()); }
  int width() const { return static_cast<int>(grid.cols()); }
};

struct Cell {
  int row = 0;
  int col = 0;
  bool operator<(const Cell& o) const { return row != o.row ? row < o.row : col < o.col; }
  bool operator==(const Cell& o) const { return row == o.row && col == o.col; }
};

/// Mean L2 distance over gt-visible (step, hand) pairs, normalized coords.
double ade(const geom::HandTrajectory& pred, const geom::HandTrajectory& gt);

/// Mean L2 distance over gt-visible hands at the final step.
double fde(const geom::HandTrajectory& pred, const geom::HandTrajectory& gt);

using TrajectoryMetric =
    std::function<double(const geom::HandTrajectory&, const geom::HandTrajectory&)>;

double min_of_k(const std::vector<geom::HandTrajectory>& samples, const geom::HandTrajectory& gt,
                const TrajectoryMetric& metric);

/// Block-mean downsample to the target shape (edge-replicated padding when
/// the shapes do not divide evenly), then normalize to sum 1.
AffordanceHeatmap normalize_heatmap(const Eigen::MatrixXd& raw, int target_h, int target_w);

/// Histogram intersection: sum of elementwise minima.
double sim(const AffordanceHeatmap& p, const AffordanceHeatmap& q);

/// AUC with thresholds at the predicted values of the ground-truth cells
/// (Judd variant); duplicate cells are collapsed.
double auc_judd(const AffordanceHeatmap& p, const std::vector<Cell>& gt_points);

/// Mean z-scored saliency at the ground-truth cells (population std); maps
/// with (near) zero variance score 0.
double nss(const AffordanceHeatmap& p, const std::vector<Cell>& gt_points);

/// Grid cell containing a normalized point.
Cell cell_of(const Eigen::Vector2d& normalized, int grid_h, int grid_w);

}  // namespace octcast::metrics
