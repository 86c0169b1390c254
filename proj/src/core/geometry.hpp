#pragma once

#include "core/common.hpp"

#include <array>
#include <optional>
#include <utility>
#include <vector>

namespace octcast::geom {

/// 3x3 projective map, pixels -> pixels, normalized so m(2,2) == 1.
struct Homography {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();

  static Homography identity() { return {}; }
  static Homography translation(double dx, double dy);
  /// Rescales so m(2,2) == 1; rejects non-invertible maps.
  Homography normalized() const;
  Homography inverse() const;
};

struct Correspondences {
  std::vector<Eigen::Vector2d> src;
  std::vector<Eigen::Vector2d> dst;

  size_t size() const { return src.size(); }
};

struct HandBox {
  char side = 'L';  // 'L' or 'R'
  Eigen::Vector4d box = Eigen::Vector4d::Zero();  // x1, y1, x2, y2 in pixels
};

struct FrameDetections {
  int frame_index = 0;
  std::vector<HandBox> hand_boxes;                 // at most one per side
  std::vector<Eigen::Vector4d> object_boxes;       // up to 2
  std::vector<Eigen::Vector2d> contact_candidates; // contact frame only
};

/// Future left/right hand locations in last-observation-frame normalized
/// coordinates, with per-step per-side visibility.
struct HandTrajectory {
  int horizon = 0;
  std::vector<Eigen::Vector2d> left;
  std::vector<Eigen::Vector2d> right;
  std::vector<std::array<bool, 2>> visible;  // {left, right}

  static HandTrajectory invisible(int horizon);
};

struct ContactPointSet {
  std::vector<Eigen::Vector2d> points;  // normalized, last observation frame
};

struct LabelConfig {
  double dense_fps = 20.0;
  double label_fps = 4.0;
};

/// DLT least squares with Hartley normalization. Needs >= 4 correspondences;
/// throws DegenerateConfiguration when the design matrix is rank-deficient.
Homography estimate_homography(const Correspondences& c);

struct RansacResult {
  Homography h;
  std::vector<bool> inliers;
};

/// 4-point RANSAC; best model by inlier count, ties by lower mean inlier
/// reprojection error, then first found; refit on all inliers.
RansacResult ransac_homography(const Correspondences& c, double threshold_px, int iterations,
                               uint64_t seed);

/// hs[k] maps frame k+1 -> frame k; result maps frame n -> frame 0.
Homography compose_chain(const std::vector<Homography>& hs);

Eigen::Vector2d project_point(const Homography& h, const Eigen::Vector2d& p);

/// Cubic Hermite with Catmull-Rom tangents (one-sided at the ends). Keyed
/// times must be strictly increasing; queries outside [first, last] throw
/// OutOfRange.
std::vector<Eigen::Vector2d> interpolate_trajectory(
    const std::vector<std::pair<double, Eigen::Vector2d>>& keyed,
    const std::vector<double>& query_times);

/// Projects per-frame hand box centers into the last observation frame via
/// composed chains, fills gaps by Hermite interpolation on a dense_fps grid
/// subsampled at label_fps, and normalizes by frame size. A side with no
/// detections at all comes back fully invisible.
HandTrajectory generate_trajectory_labels(const std::vector<FrameDetections>& future,
                                          const std::vector<Homography>& chain,
                                          const Eigen::Vector2d& frame_size,
                                          const LabelConfig& cfg = {});

/// Projects contact candidates from the contact frame into the last
/// observation frame; when the active object moved, relocates each point by
/// the displacement back to the object's resting position (object_track[0] is
/// the resting position in last-observation pixels, object_track.back() the
/// contact-frame position in contact-frame pixels). Output normalized and
/// clipped to [0,1]^2.
ContactPointSet generate_contact_labels(const FrameDetections& contact_frame,
                                        const std::vector<Homography>& chain,
                                        const std::optional<std::vector<Eigen::Vector2d>>& object_track,
                                        const Eigen::Vector2d& frame_size);

}  // namespace octcast::geom
