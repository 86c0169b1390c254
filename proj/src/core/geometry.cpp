#include "core/geometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace octcast::geom {

namespace {

constexpr double kMinDepth = 1e-12;
constexpr double kMinDet = 1e-12;
constexpr double kCollinearAreaPx2 = 1e-6;

bool all_finite(const std::vector<Eigen::Vector2d>& pts) {
  for (const auto& p : pts) {
    if (!p.allFinite()) return false;
  }
  return true;
}

// Similarity moving the centroid to the origin and mean distance to sqrt(2).
Eigen::Matrix3d hartley_transform(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double scale = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 0) = scale;
  t(1, 1) = scale;
  t(0, 2) = -scale * centroid.x();
  t(1, 2) = -scale * centroid.y();
  return t;
}

Eigen::Vector2d apply(const Eigen::Matrix3d& m, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = m * Eigen::Vector3d(p.x(), p.y(), 1.0);
  return {q.x() / q.z(), q.y() / q.z()};
}

double triangle_area(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  return 0.5 * std::abs((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

bool has_collinear_triple(const std::vector<Eigen::Vector2d>& pts, const std::vector<int>& idx) {
  for (size_t i = 0; i < idx.size(); ++i)
    for (size_t j = i + 1; j < idx.size(); ++j)
      for (size_t k = j + 1; k < idx.size(); ++k) {
        if (triangle_area(pts[static_cast<size_t>(idx[i])], pts[static_cast<size_t>(idx[j])],
                          pts[static_cast<size_t>(idx[k])]) < kCollinearAreaPx2)
          return true;
      }
  return false;
}

Eigen::Vector2d box_center(const Eigen::Vector4d& box) {
  return {0.5 * (box(0) + box(2)), 0.5 * (box(1) + box(3))};
}

}  // namespace

Homography Homography::translation(double dx, double dy) {
  Homography h;
  h.m(0, 2) = dx;
  h.m(1, 2) = dy;
  return h;
}

Homography Homography::normalized() const {
  if (std::abs(m(2, 2)) < kMinDepth)
    fail(ErrorKind::DegenerateConfiguration, "homography scale entry is zero");
  Homography out;
  out.m = m / m(2, 2);
  if (std::abs(out.m.determinant()) < kMinDet || !out.m.allFinite())
    fail(ErrorKind::DegenerateConfiguration, "homography is not invertible");
  return out;
}

Homography Homography::inverse() const {
  Homography out;
  out.m = m.inverse();
  return out.normalized();
}

HandTrajectory HandTrajectory::invisible(int horizon) {
  HandTrajectory t;
  t.horizon = horizon;
  t.left.assign(static_cast<size_t>(horizon), Eigen::Vector2d::Zero());
  t.right.assign(static_cast<size_t>(horizon), Eigen::Vector2d::Zero());
  t.visible.assign(static_cast<size_t>(horizon), {false, false});
  return t;
}

Homography estimate_homography(const Correspondences& c) {
  const size_t n = c.size();
  if (n < 4 || c.dst.size() != n)
    fail(ErrorKind::DegenerateConfiguration, "need >= 4 correspondences of equal length");
  if (!all_finite(c.src) || !all_finite(c.dst))
    fail(ErrorKind::InvalidArgument, "non-finite correspondence point");

  const Eigen::Matrix3d t_src = hartley_transform(c.src);
  const Eigen::Matrix3d t_dst = hartley_transform(c.dst);

  Eigen::MatrixXd a(2 * static_cast<Eigen::Index>(n), 9);
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d s = apply(t_src, c.src[i]);
    const Eigen::Vector2d d = apply(t_dst, c.dst[i]);
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << -s.x(), -s.y(), -1, 0, 0, 0, d.x() * s.x(), d.x() * s.y(), d.x();
    a.row(r + 1) << 0, 0, 0, -s.x(), -s.y(), -1, d.y() * s.x(), d.y() * s.y(), d.y();
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A unique solution needs rank 8: the second-smallest singular value must
  // be well separated from zero.
  if (sv(7) < 1e-9 * std::max(sv(0), 1e-30))
    fail(ErrorKind::DegenerateConfiguration, "design matrix is rank-deficient");

  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);

  Homography out;
  out.m = t_dst.inverse() * hn * t_src;
  return out.normalized();
}

RansacResult ransac_homography(const Correspondences& c, double threshold_px, int iterations,
                               uint64_t seed) {
  const int n = static_cast<int>(c.size());
  if (n < 4 || c.dst.size() != c.src.size())
    fail(ErrorKind::DegenerateConfiguration, "need >= 4 correspondences");
  if (threshold_px <= 0.0) fail(ErrorKind::InvalidArgument, "threshold must be positive");

  Rng rng(mix_seed(seed, 0x4a5ac));
  bool found = false;
  int best_count = -1;
  double best_err = std::numeric_limits<double>::infinity();
  Homography best_model;
  std::vector<bool> best_mask;

  std::vector<double> residuals(static_cast<size_t>(n));
  for (int it = 0; it < iterations; ++it) {
    const std::vector<int> sample = rng.distinct_indices(n, 4);
    if (has_collinear_triple(c.src, sample) || has_collinear_triple(c.dst, sample)) continue;

    Correspondences minimal;
    for (int idx : sample) {
      minimal.src.push_back(c.src[static_cast<size_t>(idx)]);
      minimal.dst.push_back(c.dst[static_cast<size_t>(idx)]);
    }
    Homography model;
    try {
      model = estimate_homography(minimal);
    } catch (const Error&) {
      continue;
    }
    found = true;

    int count = 0;
    double err_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double r =
          (apply(model.m, c.src[static_cast<size_t>(i)]) - c.dst[static_cast<size_t>(i)]).norm();
      residuals[static_cast<size_t>(i)] = r;
      if (r <= threshold_px) {
        ++count;
        err_sum += r;
      }
    }
    const double mean_err = count > 0 ? err_sum / count : std::numeric_limits<double>::infinity();
    if (count > best_count || (count == best_count && mean_err < best_err)) {
      best_count = count;
      best_err = mean_err;
      best_model = model;
      best_mask.resize(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i)
        best_mask[static_cast<size_t>(i)] = residuals[static_cast<size_t>(i)] <= threshold_px;
    }
  }

  if (!found)
    fail(ErrorKind::DegenerateConfiguration, "no valid 4-point sample found");

  Correspondences inliers;
  for (int i = 0; i < n; ++i) {
    if (best_mask[static_cast<size_t>(i)]) {
      inliers.src.push_back(c.src[static_cast<size_t>(i)]);
      inliers.dst.push_back(c.dst[static_cast<size_t>(i)]);
    }
  }
  RansacResult result;
  result.inliers = best_mask;
  if (inliers.size() >= 4) {
    try {
      result.h = estimate_homography(inliers);
      return result;
    } catch (const Error&) {
      // fall back to the minimal-sample model
    }
  }
  result.h = best_model;
  return result;
}

Homography compose_chain(const std::vector<Homography>& hs) {
  if (hs.empty()) fail(ErrorKind::InvalidArgument, "compose_chain: empty chain");
  Eigen::Matrix3d acc = hs.front().m;
  for (size_t i = 1; i < hs.size(); ++i) acc = acc * hs[i].m;
  Homography out;
  out.m = acc;
  return out.normalized();
}

Eigen::Vector2d project_point(const Homography& h, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = h.m * Eigen::Vector3d(p.x(), p.y(), 1.0);
  if (std::abs(q.z()) < kMinDepth)
    fail(ErrorKind::PointAtInfinity, "projected point has near-zero homogeneous depth");
  return {q.x() / q.z(), q.y() / q.z()};
}

std::vector<Eigen::Vector2d> interpolate_trajectory(
    const std::vector<std::pair<double, Eigen::Vector2d>>& keyed,
    const std::vector<double>& query_times) {
  const size_t n = keyed.size();
  if (n < 2) fail(ErrorKind::InvalidArgument, "need >= 2 keyed points");
  for (size_t i = 1; i < n; ++i) {
    if (!(keyed[i].first > keyed[i - 1].first))
      fail(ErrorKind::InvalidArgument, "keyed times must be strictly increasing");
  }
  const double t0 = keyed.front().first;
  const double t1 = keyed.back().first;
  constexpr double kTimeEps = 1e-12;

  // Catmull-Rom tangents, one-sided differences at the ends.
  std::vector<Eigen::Vector2d> tangent(n);
  tangent[0] = (keyed[1].second - keyed[0].second) / (keyed[1].first - keyed[0].first);
  tangent[n - 1] =
      (keyed[n - 1].second - keyed[n - 2].second) / (keyed[n - 1].first - keyed[n - 2].first);
  for (size_t i = 1; i + 1 < n; ++i) {
    tangent[i] =
        (keyed[i + 1].second - keyed[i - 1].second) / (keyed[i + 1].first - keyed[i - 1].first);
  }

  std::vector<Eigen::Vector2d> out;
  out.reserve(query_times.size());
  for (double t : query_times) {
    if (t < t0 - kTimeEps || t > t1 + kTimeEps)
      fail(ErrorKind::OutOfRange, "query time outside the keyed range");
    const double tc = std::clamp(t, t0, t1);
    size_t seg = n - 2;
    for (size_t i = 0; i + 1 < n; ++i) {
      if (tc <= keyed[i + 1].first) {
        seg = i;
        break;
      }
    }
    const double ta = keyed[seg].first;
    const double tb = keyed[seg + 1].first;
    const double dt = tb - ta;
    const double s = (tc - ta) / dt;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    out.push_back(h00 * keyed[seg].second + h10 * dt * tangent[seg] +
                  h01 * keyed[seg + 1].second + h11 * dt * tangent[seg + 1]);
  }
  return out;
}

HandTrajectory generate_trajectory_labels(const std::vector<FrameDetections>& future,
                                          const std::vector<Homography>& chain,
                                          const Eigen::Vector2d& frame_size,
                                          const LabelConfig& cfg) {
  const int horizon = static_cast<int>(future.size());
  if (horizon < 1) fail(ErrorKind::InvalidArgument, "no future frames");
  if (chain.size() != future.size())
    fail(ErrorKind::ShapeMismatch, "chain length must equal the number of future frames");
  if (frame_size.x() <= 0 || frame_size.y() <= 0)
    fail(ErrorKind::InvalidArgument, "frame size must be positive");
  if (cfg.dense_fps < cfg.label_fps || cfg.label_fps <= 0)
    fail(ErrorKind::ConfigError, "dense_fps must be >= label_fps > 0");

  // Prefix products: prefix[j] maps future frame j (1-based step j+1) into
  // the last observation frame.
  std::vector<Homography> prefix(future.size());
  Eigen::Matrix3d acc = Eigen::Matrix3d::Identity();
  for (size_t j = 0; j < future.size(); ++j) {
    acc = acc * chain[j].m;
    prefix[j].m = acc;
    prefix[j] = prefix[j].normalized();
  }

  HandTrajectory traj = HandTrajectory::invisible(horizon);
  for (int side = 0; side < 2; ++side) {
    const char side_char = side == 0 ? 'L' : 'R';
    std::vector<std::pair<double, Eigen::Vector2d>> keys;
    std::vector<int> key_steps;
    for (int j = 0; j < horizon; ++j) {
      for (const auto& hb : future[static_cast<size_t>(j)].hand_boxes) {
        if (hb.side != side_char) continue;
        const Eigen::Vector2d projected =
            project_point(prefix[static_cast<size_t>(j)], box_center(hb.box));
        keys.emplace_back(static_cast<double>(j + 1) / cfg.label_fps, projected);
        key_steps.push_back(j);
        break;
      }
    }
    auto& points = side == 0 ? traj.left : traj.right;
    if (keys.empty()) continue;  // side stays fully invisible

    if (keys.size() == 1) {
      for (int j = 0; j < horizon; ++j) points[static_cast<size_t>(j)] = keys[0].second;
      traj.visible[static_cast<size_t>(key_steps[0])][static_cast<size_t>(side)] = true;
    } else {
      // Dense Hermite pass at dense_fps, then subsample at label steps.
      const double t_first = keys.front().first;
      const double t_last = keys.back().first;
      const int k_first = static_cast<int>(std::ceil(t_first * cfg.dense_fps - 1e-9));
      const int k_last = static_cast<int>(std::floor(t_last * cfg.dense_fps + 1e-9));
      std::vector<double> dense_times;
      dense_times.reserve(static_cast<size_t>(std::max(0, k_last - k_first + 1)));
      for (int k = k_first; k <= k_last; ++k)
        dense_times.push_back(static_cast<double>(k) / cfg.dense_fps);
      const std::vector<Eigen::Vector2d> dense = interpolate_trajectory(keys, dense_times);

      for (int j = 0; j < horizon; ++j) {
        const double t = static_cast<double>(j + 1) / cfg.label_fps;
        if (t < t_first - 1e-9 || t > t_last + 1e-9) {
          // outside the detected range: clamp, leave invisible
          points[static_cast<size_t>(j)] = t < t_first ? keys.front().second : keys.back().second;
          continue;
        }
        const int k = static_cast<int>(std::llround(t * cfg.dense_fps));
        const int di = std::clamp(k - k_first, 0, static_cast<int>(dense.size()) - 1);
        points[static_cast<size_t>(j)] = dense[static_cast<size_t>(di)];
        traj.visible[static_cast<size_t>(j)][static_cast<size_t>(side)] = true;
      }
      // detected steps keep the exact projected centers
      for (size_t k = 0; k < keys.size(); ++k)
        points[static_cast<size_t>(key_steps[k])] = keys[k].second;
    }
  }

  for (int j = 0; j < horizon; ++j) {
    traj.left[static_cast<size_t>(j)].x() /= frame_size.x();
    traj.left[static_cast<size_t>(j)].y() /= frame_size.y();
    traj.right[static_cast<size_t>(j)].x() /= frame_size.x();
    traj.right[static_cast<size_t>(j)].y() /= frame_size.y();
  }
  return traj;
}

ContactPointSet generate_contact_labels(const FrameDetections& contact_frame,
                                        const std::vector<Homography>& chain,
                                        const std::optional<std::vector<Eigen::Vector2d>>& object_track,
                                        const Eigen::Vector2d& frame_size) {
  if (contact_frame.contact_candidates.empty())
    fail(ErrorKind::NoCandidates, "contact frame has no contact candidates");
  if (chain.empty()) fail(ErrorKind::InvalidArgument, "empty homography chain");
  if (frame_size.x() <= 0 || frame_size.y() <= 0)
    fail(ErrorKind::InvalidArgument, "frame size must be positive");

  const Homography to_last = compose_chain(chain);
  Eigen::Vector2d relocation = Eigen::Vector2d::Zero();
  if (object_track.has_value()) {
    if (object_track->size() < 2)
      fail(ErrorKind::InvalidArgument, "object track needs rest and contact positions");
    const Eigen::Vector2d contact_pos_in_last = project_point(to_last, object_track->back());
    relocation = object_track->front() - contact_pos_in_last;
  }

  ContactPointSet out;
  for (const auto& cand : contact_frame.contact_candidates) {
    Eigen::Vector2d p = project_point(to_last, cand) + relocation;
    p.x() = std::clamp(p.x() / frame_size.x(), 0.0, 1.0);
    p.y() = std::clamp(p.y() / frame_size.y(), 0.0, 1.0);
    out.points.push_back(p);
  }
  return out;
}

}  // namespace octcast::geom
