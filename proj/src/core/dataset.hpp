#pragma once

#include "core/geometry.hpp"

#include <optional>
#include <string>
#include <vector>

namespace octcast::dataset {

/// One clip worth of observation features, detections and labels. Features
/// are stored as f32 (matching both file formats) in [T][d_feat] row-major
/// layout per slot; an invalid entity holds an all-zero feature block.
struct TrainingSample {
  std::string id;
  int T = 0;
  int F = 0;
  int d_feat = 1024;
  std::array<std::vector<float>, 2> feat_hand;    // L, R
  std::array<std::vector<float>, 2> feat_object;  // slot 0, 1
  std::vector<float> feat_global;
  std::array<std::vector<Eigen::Vector4d>, 2> box_hand;    // normalized corners
  std::array<std::vector<Eigen::Vector4d>, 2> box_object;
  std::array<std::vector<uint8_t>, 2> valid_hand;
  std::array<std::vector<uint8_t>, 2> valid_object;
  geom::HandTrajectory gt_trajectory;
  geom::ContactPointSet gt_contacts;
  bool has_action = false;
  int verb = 0;
  int noun = 0;
  geom::HandTrajectory oracle_trajectory;
  geom::ContactPointSet oracle_contacts;

  /// Shape and invariant checks (valid == false implies a zero feature).
  void validate() const;
};

/// Writes JSON-lines, or the binary `OCTD1` container when the path ends in
/// .octd. Reading sniffs the magic, so either format loads transparently.
void write_dataset(const std::string& path, const std::vector<TrainingSample>& samples);
std::vector<TrainingSample> read_dataset(const std::string& path);

/// Keeps only the last new_T observation frames (observation-length ablation).
TrainingSample truncate_observation(const TrainingSample& s, int new_T);

// ---- label-generation wire formats ----

struct LabelRequest {
  std::string clip_id;
  Eigen::Vector2d frame_size = {0, 0};
  std::vector<geom::FrameDetections> future_frames;
  struct PairCorrespondences {
    int from = 0;  // frame the src points live in
    int to = 0;    // frame the dst points live in (== from - 1 along the chain)
    geom::Correspondences points;
  };
  std::vector<PairCorrespondences> correspondences;
  std::optional<std::vector<Eigen::Vector2d>> object_track;
};

struct LabelRecord {
  std::string clip_id;
  geom::HandTrajectory trajectory;
  geom::ContactPointSet contacts;
};

/// JSON-lines reader; malformed records raise SchemaError naming the line.
std::vector<LabelRequest> read_label_requests(const std::string& path);
void write_label_requests(const std::string& path, const std::vector<LabelRequest>& requests);
void write_label_records(const std::string& path, const std::vector<LabelRecord>& records);
std::vector<LabelRecord> read_label_records(const std::string& path);

}  // namespace octcast::dataset
