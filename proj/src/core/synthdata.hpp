#pragma once

#include "core/dataset.hpp"

#include <json.hpp>

namespace octcast::synth {

struct SceneConfig {
  int T = 10;
  int F = 4;
  double frame_w = 454.0;
  double frame_h = 256.0;
  int n_bg = 40;              // background correspondences per frame pair
  double outlier_frac = 0.0;  // fraction of correspondences replaced by noise
  double detection_dropout = 0.0;
  double cam_translate = 5.0;  // per-step bounds of the camera similarity
  double cam_rotate = 0.01;
  double cam_scale = 0.01;
  int contact_points = 3;
  double object_motion = 0.0;  // total active-object displacement over the future (px)
  bool multimodal = false;     // identical observations, future branches left/right
  bool uniform_contacts = false;
  double absent_hand_prob = 0.0;
  double hand_box = 36.0;
  double object_box = 56.0;
  int n_verbs = 2;
  int n_nouns = 2;
  double dense_fps = 20.0;
  double label_fps = 4.0;
  double ransac_threshold = 3.0;
  int ransac_iterations = 2000;
  uint64_t feature_seed = 20820;  // fixed featurizer; independent of scene seeds
  int d_feat = 1024;

  void validate() const;
};

nlohmann::json to_json(const SceneConfig& c);
SceneConfig scene_config_from_json(const nlohmann::json& j);

struct ContactEvent {
  std::vector<Eigen::Vector2d> world_points;  // resting positions, world coords
  int object_id = 0;
};

/// Fully determines a scene: camera path, entity motion, detection dropout
/// and the contact event. Same (seed, config) gives a bit-identical script.
struct SceneScript {
  uint64_t seed = 0;
  SceneConfig cfg;
  std::vector<geom::Homography> camera;         // entry k maps frame k+1 -> frame k
  std::vector<Eigen::Matrix3d> world_to_frame;  // C_k, world == frame-0 pixels
  std::array<std::vector<Eigen::Vector2d>, 2> hand_world;  // T+F points per side
  std::array<bool, 2> hand_present = {true, true};
  std::array<std::vector<uint8_t>, 2> hand_detected;    // per frame, dropout applied
  std::array<std::vector<uint8_t>, 2> object_detected;  // per frame
  std::vector<Eigen::Vector4d> object_rect;             // world rest rects (2 slots)
  Eigen::Vector2d active_motion = {0.0, 0.0};           // total displacement over the future
  int active_object = 0;
  ContactEvent contact;
  int verb_id = 0;
  int noun_id = 0;

  int frames() const { return cfg.T + cfg.F; }
  /// World-space center of an object at a frame (active object ramps over
  /// the future, everything else rests).
  Eigen::Vector2d object_center_world(int object_id, int frame) const;
  /// Contact-time world position of a contact point.
  Eigen::Vector2d contact_point_at_contact(int index) const;
};

SceneScript simulate_scene(uint64_t seed, const SceneConfig& cfg);

struct Observations {
  std::vector<geom::FrameDetections> frames;  // T+F entries
  std::vector<geom::Correspondences> pairs;   // T+F-1; src in frame k+1, dst in frame k
};

Observations render_observations(const SceneScript& s);

struct FrameFeatures {
  std::array<std::vector<float>, 2> hand;
  std::array<std::vector<float>, 2> object;
  std::vector<float> global;
  std::array<bool, 2> hand_valid{};
  std::array<bool, 2> object_valid{};
};

/// Deterministic stand-in for the video backbone: a fixed seeded random
/// projection of the entity state under tanh. Invisible entities map to the
/// zero vector. t is a 0-based observation frame index.
FrameFeatures featurize(const SceneScript& s, int t);

/// Renders, featurizes and labels one scene: gt labels come from the
/// homography pipeline on rendered observations, oracle labels from the
/// script itself.
dataset::TrainingSample make_training_sample(const SceneScript& s, const std::string& id);

/// The cmd_labels input record for one scene (future frames, background
/// correspondences and the active-object track).
dataset::LabelRequest make_label_request(const SceneScript& s, const Observations& o,
                                         const std::string& clip_id);

struct BuildStats {
  int count = 0;
  double mean_trajectory_err = 0.0;  // pipeline labels vs generator truth
  double mean_contact_err = 0.0;
};

/// Writes n scenes to `path` (JSON-lines, or OCTD1 when the name ends in
/// .octd) and reports label fidelity. Optionally also writes the matching
/// label requests for the cmd_labels pipeline.
BuildStats build_dataset(int n, uint64_t seed, const SceneConfig& cfg, const std::string& path,
                         const std::string& detections_path = "");

}  // namespace octcast::synth
