#include "core/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

namespace octcast::synth {

using nlohmann::json;

namespace {

constexpr uint64_t kTagScene = 11;
constexpr uint64_t kTagDropout = 12;
constexpr uint64_t kTagRender = 13;
constexpr uint64_t kTagChain = 14;
constexpr uint64_t kMultimodalObservationSeed = 0x0b5e7aul;

enum FeatureTag : uint64_t { kFeatHand = 1, kFeatObject = 2, kFeatGlobal = 3 };

}  // namespace

void SceneConfig::validate() const {
  if (T < 2 || F < 1) fail(ErrorKind::ConfigError, "need T >= 2 and F >= 1");
  if (frame_w <= 0 || frame_h <= 0) fail(ErrorKind::ConfigError, "frame size must be positive");
  if (n_bg < 4) fail(ErrorKind::ConfigError, "need at least 4 background correspondences");
  if (outlier_frac < 0 || outlier_frac > 0.8)
    fail(ErrorKind::ConfigError, "outlier_frac must be in [0, 0.8]");
  if (detection_dropout < 0 || detection_dropout >= 1)
    fail(ErrorKind::ConfigError, "detection_dropout must be in [0, 1)");
  if (contact_points < 1 || contact_points > 5)
    fail(ErrorKind::ConfigError, "contact_points must be in [1, 5]");
  if (dense_fps < label_fps || label_fps <= 0)
    fail(ErrorKind::ConfigError, "dense_fps must be >= label_fps > 0");
  if (ransac_threshold <= 0 || ransac_iterations < 1)
    fail(ErrorKind::ConfigError, "bad RANSAC settings");
  if (d_feat < 1) fail(ErrorKind::ConfigError, "d_feat must be positive");
  if (absent_hand_prob < 0 || absent_hand_prob > 1)
    fail(ErrorKind::ConfigError, "absent_hand_prob must be in [0, 1]");
}

json to_json(const SceneConfig& c) {
  return json{{"T", c.T},
              {"F", c.F},
              {"frame_w", c.frame_w},
              {"frame_h", c.frame_h},
              {"n_bg", c.n_bg},
              {"outlier_frac", c.outlier_frac},
              {"detection_dropout", c.detection_dropout},
              {"cam_translate", c.cam_translate},
              {"cam_rotate", c.cam_rotate},
              {"cam_scale", c.cam_scale},
              {"contact_points", c.contact_points},
              {"object_motion", c.object_motion},
              {"multimodal", c.multimodal},
              {"uniform_contacts", c.uniform_contacts},
              {"absent_hand_prob", c.absent_hand_prob},
              {"hand_box", c.hand_box},
              {"object_box", c.object_box},
              {"n_verbs", c.n_verbs},
              {"n_nouns", c.n_nouns},
              {"dense_fps", c.dense_fps},
              {"label_fps", c.label_fps},
              {"ransac_threshold", c.ransac_threshold},
              {"ransac_iterations", c.ransac_iterations},
              {"feature_seed", c.feature_seed},
              {"d_feat", c.d_feat}};
}

SceneConfig scene_config_from_json(const json& j) {
  SceneConfig c;
  c.T = j.at("T").get<int>();
  c.F = j.at("F").get<int>();
  c.frame_w = j.at("frame_w").get<double>();
  c.frame_h = j.at("frame_h").get<double>();
  c.n_bg = j.at("n_bg").get<int>();
  c.outlier_frac = j.at("outlier_frac").get<double>();
  c.detection_dropout = j.at("detection_dropout").get<double>();
  c.cam_translate = j.at("cam_translate").get<double>();
  c.cam_rotate = j.at("cam_rotate").get<double>();
  c.cam_scale = j.at("cam_scale").get<double>();
  c.contact_points = j.at("contact_points").get<int>();
  c.object_motion = j.at("object_motion").get<double>();
  c.multimodal = j.at("multimodal").get<bool>();
  c.uniform_contacts = j.at("uniform_contacts").get<bool>();
  c.absent_hand_prob = j.at("absent_hand_prob").get<double>();
  c.hand_box = j.at("hand_box").get<double>();
  c.object_box = j.at("object_box").get<double>();
  c.n_verbs = j.at("n_verbs").get<int>();
  c.n_nouns = j.at("n_nouns").get<int>();
  c.dense_fps = j.at("dense_fps").get<double>();
  c.label_fps = j.at("label_fps").get<double>();
  c.ransac_threshold = j.at("ransac_threshold").get<double>();
  c.ransac_iterations = j.at("ransac_iterations").get<int>();
  c.feature_seed = j.at("feature_seed").get<uint64_t>();
  c.d_feat = j.at("d_feat").get<int>();
  c.validate();
  return c;
}

nlohmann::json default_scene_options_impl() { return to_json(SceneConfig{}); }

Eigen::Vector2d SceneScript::object_center_world(int object_id, int frame) const {
  const Eigen::Vector4d& r = object_rect[static_cast<size_t>(object_id)];
  Eigen::Vector2d c(0.5 * (r(0) + r(2)), 0.5 * (r(1) + r(3)));
  if (object_id == active_object && frame >= cfg.T) {
    const double ramp = static_cast<double>(frame - (cfg.T - 1)) / cfg.F;
    c += active_motion * ramp;
  }
  return c;
}

Eigen::Vector2d SceneScript::contact_point_at_contact(int index) const {
  return contact.world_points[static_cast<size_t>(index)] + active_motion;
}

namespace {

Eigen::Matrix3d similarity_about(const Eigen::Vector2d& center, double angle, double log_scale,
                                 const Eigen::Vector2d& translate) {
  const double s = std::exp(log_scale);
  const double c = std::cos(angle) * s;
  const double d = std::sin(angle) * s;
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = c;
  m(0, 1) = -d;
  m(1, 0) = d;
  m(1, 1) = c;
  // rotate/scale about the frame center, then translate
  const Eigen::Vector2d shift = center - Eigen::Vector2d(m(0, 0) * center.x() + m(0, 1) * center.y(),
                                                         m(1, 0) * center.x() + m(1, 1) * center.y());
  m(0, 2) = shift.x() + translate.x();
  m(1, 2) = shift.y() + translate.y();
  return m;
}

std::vector<Eigen::Vector2d> sample_spline(const std::vector<std::pair<double, Eigen::Vector2d>>& keys,
                                           const std::vector<double>& times) {
  return geom::interpolate_trajectory(keys, times);
}

Eigen::Vector2d project(const Eigen::Matrix3d& m, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = m * Eigen::Vector3d(p.x(), p.y(), 1.0);
  return {q.x() / q.z(), q.y() / q.z()};
}

}  // namespace

SceneScript simulate_scene(uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  SceneScript s;
  s.seed = seed;
  s.cfg = cfg;
  const int frames = cfg.T + cfg.F;
  const Eigen::Vector2d frame_center(cfg.frame_w / 2.0, cfg.frame_h / 2.0);

  Rng scene_rng(mix_seed(seed, kTagScene));
  // multimodal scenes share one observation phase; only the future branch and
  // its jitter come from the per-scene stream
  Rng shared_rng(mix_seed(kMultimodalObservationSeed, kTagScene));
  Rng& obs_rng = cfg.multimodal ? shared_rng : scene_rng;

  // camera path
  s.world_to_frame.resize(static_cast<size_t>(frames));
  s.world_to_frame[0] = Eigen::Matrix3d::Identity();
  for (int k = 0; k + 1 < frames; ++k) {
    const Eigen::Matrix3d step = similarity_about(
        frame_center, obs_rng.uniform(-cfg.cam_rotate, cfg.cam_rotate),
        obs_rng.uniform(-cfg.cam_scale, cfg.cam_scale),
        {obs_rng.uniform(-cfg.cam_translate, cfg.cam_translate),
         obs_rng.uniform(-cfg.cam_translate, cfg.cam_translate)});
    s.world_to_frame[static_cast<size_t>(k + 1)] = step * s.world_to_frame[static_cast<size_t>(k)];
    geom::Homography h;
    h.m = step.inverse();
    s.camera.push_back(h.normalized());
  }

  // objects: slot layout puts one in each half so multimodal branches differ
  const auto place_object = [&](double x_lo, double x_hi) -> Eigen::Vector4d {
    const double half = cfg.object_box / 2.0;
    const double cx = obs_rng.uniform(x_lo * cfg.frame_w + half, x_hi * cfg.frame_w - half);
    const double cy = obs_rng.uniform(0.22 * cfg.frame_h + half, 0.62 * cfg.frame_h - half);
    return {cx - half, cy - half, cx + half, cy + half};
  };
  s.object_rect.push_back(place_object(0.05, 0.48));
  s.object_rect.push_back(place_object(0.52, 0.95));
  if (cfg.uniform_contacts) {
    s.object_rect[0] = {0.0, 0.0, cfg.frame_w, cfg.frame_h};
  }

  // branch choice and contact event; a frame-covering stand-in object only
  // makes sense in slot 0
  s.active_object = cfg.uniform_contacts ? 0 : (scene_rng.uniform() < 0.5 ? 0 : 1);
  if (cfg.object_motion > 0.0) {
    const double angle = scene_rng.uniform(0.0, 2.0 * M_PI);
    s.active_motion = {cfg.object_motion * std::cos(angle), cfg.object_motion * std::sin(angle)};
  }
  const Eigen::Vector4d& active = s.object_rect[static_cast<size_t>(s.active_object)];
  for (int i = 0; i < cfg.contact_points; ++i) {
    const double margin = cfg.uniform_contacts ? 0.0 : 2.0;
    s.contact.world_points.emplace_back(
        scene_rng.uniform(active(0) + margin, active(2) - margin),
        scene_rng.uniform(active(1) + margin, active(3) - margin));
  }
  s.contact.object_id = s.active_object;

  // hands: smooth spline from a lower start toward a contact point
  const double absent_draw = scene_rng.uniform();
  if (absent_draw < cfg.absent_hand_prob) s.hand_present[0] = false;
  const int n_contacts = static_cast<int>(s.contact.world_points.size());
  for (int side = 0; side < 2; ++side) {
    auto& path = s.hand_world[static_cast<size_t>(side)];
    path.assign(static_cast<size_t>(frames), Eigen::Vector2d::Zero());
    if (!s.hand_present[static_cast<size_t>(side)]) continue;

    const Eigen::Vector2d start(
        obs_rng.uniform((side == 0 ? 0.08 : 0.55) * cfg.frame_w,
                        (side == 0 ? 0.45 : 0.92) * cfg.frame_w),
        obs_rng.uniform(0.70 * cfg.frame_h, 0.95 * cfg.frame_h));
    const int contact_index = side == 0 ? 0 : std::min(1, n_contacts - 1);
    const Eigen::Vector2d target =
        s.contact.world_points[static_cast<size_t>(contact_index)] + s.active_motion;

    if (!cfg.multimodal) {
      // one spline across the whole clip, curved by a perpendicular offset
      const Eigen::Vector2d dir = target - start;
      const Eigen::Vector2d perp(-dir.y(), dir.x());
      const double bend = scene_rng.uniform(-0.28, 0.28);
      const double bend2 = scene_rng.uniform(-0.20, 0.20);
      std::vector<std::pair<double, Eigen::Vector2d>> keys = {
          {0.0, start},
          {0.40, start + 0.40 * dir + bend * perp},
          {0.75, start + 0.75 * dir + bend2 * perp},
          {1.0, target}};
      std::vector<double> times(static_cast<size_t>(frames));
      for (int i = 0; i < frames; ++i)
        times[static_cast<size_t>(i)] = static_cast<double>(i) / (frames - 1);
      path = sample_spline(keys, times);
    } else {
      // fixed observation segment ending at a hover point, then a per-scene
      // branch segment to the chosen contact
      const Eigen::Vector2d hover(frame_center.x(), 0.62 * cfg.frame_h);
      std::vector<std::pair<double, Eigen::Vector2d>> obs_keys = {
          {0.0, start},
          {0.5, 0.5 * (start + hover) + Eigen::Vector2d(obs_rng.uniform(-8.0, 8.0),
                                                        obs_rng.uniform(-8.0, 8.0))},
          {1.0, hover}};
      std::vector<double> obs_times(static_cast<size_t>(cfg.T));
      for (int i = 0; i < cfg.T; ++i)
        obs_times[static_cast<size_t>(i)] = static_cast<double>(i) / (cfg.T - 1);
      const auto obs_path = sample_spline(obs_keys, obs_times);
      std::copy(obs_path.begin(), obs_path.end(), path.begin());

      std::vector<std::pair<double, Eigen::Vector2d>> fut_keys = {
          {0.0, hover},
          {0.5, 0.5 * (hover + target) + Eigen::Vector2d(scene_rng.uniform(-6.0, 6.0),
                                                         scene_rng.uniform(-6.0, 6.0))},
          {1.0, target}};
      std::vector<double> fut_times(static_cast<size_t>(cfg.F));
      for (int j = 0; j < cfg.F; ++j)
        fut_times[static_cast<size_t>(j)] = static_cast<double>(j + 1) / cfg.F;
      const auto fut_path = sample_spline(fut_keys, fut_times);
      for (int j = 0; j < cfg.F; ++j) path[static_cast<size_t>(cfg.T + j)] = fut_path[static_cast<size_t>(j)];
    }
  }

  // action labels: verb = reach direction, noun = active object identity
  const Eigen::Vector2d reach = s.contact_point_at_contact(0);
  s.verb_id = cfg.n_verbs >= 2 && reach.x() >= cfg.frame_w / 2.0 ? 1 : 0;
  s.noun_id = cfg.n_nouns >= 1 ? s.active_object % std::max(1, cfg.n_nouns) : 0;

  // detection dropout flags drawn last, from their own stream, so the same
  // scene geometry survives dropout-rate sweeps
  Rng drop_rng(mix_seed(seed, kTagDropout));
  for (int side = 0; side < 2; ++side) {
    s.hand_detected[static_cast<size_t>(side)].assign(static_cast<size_t>(frames), 0);
    s.object_detected[static_cast<size_t>(side)].assign(static_cast<size_t>(frames), 0);
    for (int k = 0; k < frames; ++k) {
      const bool hand_ok = s.hand_present[static_cast<size_t>(side)] &&
                           drop_rng.uniform() >= cfg.detection_dropout;
      const bool object_ok = drop_rng.uniform() >= cfg.detection_dropout;
      s.hand_detected[static_cast<size_t>(side)][static_cast<size_t>(k)] = hand_ok ? 1 : 0;
      s.object_detected[static_cast<size_t>(side)][static_cast<size_t>(k)] = object_ok ? 1 : 0;
    }
  }
  return s;
}

namespace {

bool inside_box(const Eigen::Vector2d& p, const Eigen::Vector4d& b) {
  return p.x() >= b(0) && p.x() <= b(2) && p.y() >= b(1) && p.y() <= b(3);
}

}  // namespace

Observations render_observations(const SceneScript& s) {
  const SceneConfig& cfg = s.cfg;
  const int frames = s.frames();
  Observations obs;
  obs.frames.resize(static_cast<size_t>(frames));

  for (int k = 0; k < frames; ++k) {
    geom::FrameDetections& f = obs.frames[static_cast<size_t>(k)];
    f.frame_index = k;
    const Eigen::Matrix3d& cam = s.world_to_frame[static_cast<size_t>(k)];
    for (int side = 0; side < 2; ++side) {
      if (!s.hand_detected[static_cast<size_t>(side)][static_cast<size_t>(k)]) continue;
      const Eigen::Vector2d c = project(cam, s.hand_world[static_cast<size_t>(side)][static_cast<size_t>(k)]);
      const double half = cfg.hand_box / 2.0;
      f.hand_boxes.push_back({side == 0 ? 'L' : 'R',
                              {c.x() - half, c.y() - half, c.x() + half, c.y() + half}});
    }
    for (int o = 0; o < 2; ++o) {
      if (!s.object_detected[static_cast<size_t>(o)][static_cast<size_t>(k)]) continue;
      const Eigen::Vector4d& rect = s.object_rect[static_cast<size_t>(o)];
      const Eigen::Vector2d c = project(cam, s.object_center_world(o, k));
      const double hw = (rect(2) - rect(0)) / 2.0;
      const double hh = (rect(3) - rect(1)) / 2.0;
      f.object_boxes.push_back({c.x() - hw, c.y() - hh, c.x() + hw, c.y() + hh});
    }
    if (k == frames - 1) {
      for (int i = 0; i < static_cast<int>(s.contact.world_points.size()); ++i)
        f.contact_candidates.push_back(project(cam, s.contact_point_at_contact(i)));
    }
  }

  // background correspondences per frame pair, avoiding entity boxes
  Rng rng(mix_seed(s.seed, kTagRender));
  const double frame_area = cfg.frame_w * cfg.frame_h;
  for (int k = 0; k + 1 < frames; ++k) {
    geom::Correspondences c;
    const Eigen::Matrix3d& cam_to = s.world_to_frame[static_cast<size_t>(k)];
    const Eigen::Matrix3d& cam_from = s.world_to_frame[static_cast<size_t>(k + 1)];
    const auto blocked = [&](const Eigen::Vector2d& px, const geom::FrameDetections& f) {
      for (const auto& hb : f.hand_boxes)
        if (inside_box(px, hb.box)) return true;
      for (const auto& ob : f.object_boxes) {
        const double area = (ob(2) - ob(0)) * (ob(3) - ob(1));
        if (area > 0.5 * frame_area) continue;  // frame-covering stand-in object
        if (inside_box(px, ob)) return true;
      }
      return false;
    };
    for (int i = 0; i < cfg.n_bg; ++i) {
      Eigen::Vector2d world;
      Eigen::Vector2d in_from;
      Eigen::Vector2d in_to;
      for (int attempt = 0; attempt < 50; ++attempt) {
        world = {rng.uniform(0.0, cfg.frame_w), rng.uniform(0.0, cfg.frame_h)};
        in_from = project(cam_from, world);
        in_to = project(cam_to, world);
        if (!blocked(in_from, obs.frames[static_cast<size_t>(k + 1)]) &&
            !blocked(in_to, obs.frames[static_cast<size_t>(k)]))
          break;
      }
      c.src.push_back(in_from);
      c.dst.push_back(in_to);
    }
    const int n_outliers = static_cast<int>(std::floor(cfg.outlier_frac * cfg.n_bg));
    if (n_outliers > 0) {
      const std::vector<int> picks = rng.distinct_indices(cfg.n_bg, n_outliers);
      for (int idx : picks)
        c.dst[static_cast<size_t>(idx)] = {rng.uniform(0.0, cfg.frame_w),
                                           rng.uniform(0.0, cfg.frame_h)};
    }
    obs.pairs.push_back(std::move(c));
  }
  return obs;
}

namespace {

struct FeatureMap {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
};

const FeatureMap& feature_map(uint64_t feature_seed, uint64_t tag, int d_feat, int state_dim) {
  static std::mutex mu;
  static std::map<std::tuple<uint64_t, uint64_t, int, int>, FeatureMap> cache;
  std::lock_guard<std::mutex> lock(mu);
  const auto key = std::make_tuple(feature_seed, tag, d_feat, state_dim);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  Rng rng(mix_seed(feature_seed, tag));
  FeatureMap fm;
  fm.a = rng.normal_matrix(d_feat, state_dim);
  fm.b.resize(d_feat);
  for (int i = 0; i < d_feat; ++i) fm.b(i) = rng.uniform(-1.0, 1.0);
  return cache.emplace(key, std::move(fm)).first->second;
}

std::vector<float> map_state(const FeatureMap& fm, const Eigen::VectorXd& state) {
  const Eigen::VectorXd out = ((fm.a * state + fm.b).array().tanh()).matrix();
  std::vector<float> f(static_cast<size_t>(out.size()));
  for (Eigen::Index i = 0; i < out.size(); ++i) f[static_cast<size_t>(i)] = static_cast<float>(out(i));
  return f;
}

}  // namespace

FrameFeatures featurize(const SceneScript& s, int t) {
  const SceneConfig& cfg = s.cfg;
  if (t < 0 || t >= cfg.T) fail(ErrorKind::InvalidArgument, "featurize: t outside observation");
  FrameFeatures out;
  const Eigen::Matrix3d& cam = s.world_to_frame[static_cast<size_t>(t)];

  for (int side = 0; side < 2; ++side) {
    out.hand_valid[static_cast<size_t>(side)] =
        s.hand_detected[static_cast<size_t>(side)][static_cast<size_t>(t)] != 0;
    if (!out.hand_valid[static_cast<size_t>(side)]) {
      out.hand[static_cast<size_t>(side)].assign(static_cast<size_t>(cfg.d_feat), 0.0f);
      continue;
    }
    const Eigen::Vector2d pos =
        project(cam, s.hand_world[static_cast<size_t>(side)][static_cast<size_t>(t)]);
    Eigen::Vector2d vel = Eigen::Vector2d::Zero();
    if (t > 0) {
      const Eigen::Vector2d prev =
          project(s.world_to_frame[static_cast<size_t>(t - 1)],
                  s.hand_world[static_cast<size_t>(side)][static_cast<size_t>(t - 1)]);
      vel = pos - prev;
    }
    Eigen::VectorXd state(5);
    state << pos.x() / cfg.frame_w, pos.y() / cfg.frame_h, vel.x() / cfg.frame_w,
        vel.y() / cfg.frame_h, side == 0 ? 0.0 : 1.0;
    out.hand[static_cast<size_t>(side)] =
        map_state(feature_map(cfg.feature_seed, kFeatHand, cfg.d_feat, 5), state);
  }

  for (int o = 0; o < 2; ++o) {
    out.object_valid[static_cast<size_t>(o)] =
        s.object_detected[static_cast<size_t>(o)][static_cast<size_t>(t)] != 0;
    if (!out.object_valid[static_cast<size_t>(o)]) {
      out.object[static_cast<size_t>(o)].assign(static_cast<size_t>(cfg.d_feat), 0.0f);
      continue;
    }
    const Eigen::Vector4d& rect = s.object_rect[static_cast<size_t>(o)];
    const Eigen::Vector2d pos = project(cam, s.object_center_world(o, t));
    Eigen::VectorXd state(5);
    state << pos.x() / cfg.frame_w, pos.y() / cfg.frame_h, (rect(2) - rect(0)) / cfg.frame_w,
        (rect(3) - rect(1)) / cfg.frame_h, o == 0 ? 0.0 : 1.0;
    out.object[static_cast<size_t>(o)] =
        map_state(feature_map(cfg.feature_seed, kFeatObject, cfg.d_feat, 5), state);
  }

  // the global token stands in for a pooled whole-frame feature: camera pose
  // plus a coarse summary of everything visible in the frame
  Eigen::VectorXd state = Eigen::VectorXd::Zero(20);
  const Eigen::Matrix3d cam_n = cam / cam(2, 2);
  state.head(8) << cam_n(0, 0), cam_n(0, 1), cam_n(0, 2) / cfg.frame_w, cam_n(1, 0), cam_n(1, 1),
      cam_n(1, 2) / cfg.frame_h, cam_n(2, 0) * cfg.frame_w, cam_n(2, 1) * cfg.frame_h;
  for (int side = 0; side < 2; ++side) {
    if (!s.hand_detected[static_cast<size_t>(side)][static_cast<size_t>(t)]) continue;
    const Eigen::Vector2d pos =
        project(cam, s.hand_world[static_cast<size_t>(side)][static_cast<size_t>(t)]);
    state(8 + 4 * side) = pos.x() / cfg.frame_w;
    state(9 + 4 * side) = pos.y() / cfg.frame_h;
    if (t > 0) {
      const Eigen::Vector2d prev =
          project(s.world_to_frame[static_cast<size_t>(t - 1)],
                  s.hand_world[static_cast<size_t>(side)][static_cast<size_t>(t - 1)]);
      state(10 + 4 * side) = (pos.x() - prev.x()) / cfg.frame_w;
      state(11 + 4 * side) = (pos.y() - prev.y()) / cfg.frame_h;
    }
  }
  for (int o = 0; o < 2; ++o) {
    if (!s.object_detected[static_cast<size_t>(o)][static_cast<size_t>(t)]) continue;
    const Eigen::Vector2d pos = project(cam, s.object_center_world(o, t));
    state(16 + 2 * o) = pos.x() / cfg.frame_w;
    state(17 + 2 * o) = pos.y() / cfg.frame_h;
  }
  out.global = map_state(feature_map(cfg.feature_seed, kFeatGlobal, cfg.d_feat, 20), state);
  return out;
}

namespace {

std::vector<geom::Homography> future_chain(const SceneScript& s, const Observations& obs) {
  const SceneConfig& cfg = s.cfg;
  std::vector<geom::Homography> chain;
  for (int j = 0; j < cfg.F; ++j) {
    const int pair_index = cfg.T - 1 + j;  // maps frame T+j -> frame T+j-1
    const geom::RansacResult r = geom::ransac_homography(
        obs.pairs[static_cast<size_t>(pair_index)], cfg.ransac_threshold, cfg.ransac_iterations,
        mix_seed(s.seed, kTagChain + static_cast<uint64_t>(j)));
    chain.push_back(r.h);
  }
  return chain;
}

std::optional<std::vector<Eigen::Vector2d>> object_track_pixels(const SceneScript& s) {
  if (s.active_motion.norm() == 0.0) return std::nullopt;
  std::vector<Eigen::Vector2d> track;
  const int last_obs = s.cfg.T - 1;
  track.push_back(project(s.world_to_frame[static_cast<size_t>(last_obs)],
                          s.object_center_world(s.active_object, last_obs)));
  for (int j = 1; j <= s.cfg.F; ++j) {
    const int frame = last_obs + j;
    track.push_back(project(s.world_to_frame[static_cast<size_t>(frame)],
                            s.object_center_world(s.active_object, frame)));
  }
  return track;
}

geom::HandTrajectory oracle_trajectory(const SceneScript& s) {
  const SceneConfig& cfg = s.cfg;
  geom::HandTrajectory t = geom::HandTrajectory::invisible(cfg.F);
  const Eigen::Matrix3d& last_obs_cam = s.world_to_frame[static_cast<size_t>(cfg.T - 1)];
  for (int j = 0; j < cfg.F; ++j) {
    for (int side = 0; side < 2; ++side) {
      if (!s.hand_present[static_cast<size_t>(side)]) continue;
      const Eigen::Vector2d px =
          project(last_obs_cam, s.hand_world[static_cast<size_t>(side)][static_cast<size_t>(cfg.T + j)]);
      auto& dst = side == 0 ? t.left : t.right;
      dst[static_cast<size_t>(j)] = {px.x() / cfg.frame_w, px.y() / cfg.frame_h};
      t.visible[static_cast<size_t>(j)][static_cast<size_t>(side)] = true;
    }
  }
  return t;
}

geom::ContactPointSet oracle_contacts(const SceneScript& s) {
  const Eigen::Matrix3d& last_obs_cam = s.world_to_frame[static_cast<size_t>(s.cfg.T - 1)];
  geom::ContactPointSet out;
  for (const auto& p : s.contact.world_points) {
    const Eigen::Vector2d px = project(last_obs_cam, p);
    out.points.emplace_back(std::clamp(px.x() / s.cfg.frame_w, 0.0, 1.0),
                            std::clamp(px.y() / s.cfg.frame_h, 0.0, 1.0));
  }
  return out;
}

}  // namespace

dataset::TrainingSample make_training_sample(const SceneScript& s, const std::string& id) {
  const SceneConfig& cfg = s.cfg;
  const Observations obs = render_observations(s);

  dataset::TrainingSample out;
  out.id = id;
  out.T = cfg.T;
  out.F = cfg.F;
  out.d_feat = cfg.d_feat;
  const size_t block = static_cast<size_t>(cfg.T) * cfg.d_feat;
  for (int slot = 0; slot < 2; ++slot) {
    out.feat_hand[slot].assign(block, 0.0f);
    out.feat_object[slot].assign(block, 0.0f);
    out.valid_hand[slot].assign(static_cast<size_t>(cfg.T), 0);
    out.valid_object[slot].assign(static_cast<size_t>(cfg.T), 0);
    out.box_hand[slot].assign(static_cast<size_t>(cfg.T), Eigen::Vector4d::Zero());
    out.box_object[slot].assign(static_cast<size_t>(cfg.T), Eigen::Vector4d::Zero());
  }
  out.feat_global.assign(block, 0.0f);

  for (int t = 0; t < cfg.T; ++t) {
    const FrameFeatures ff = featurize(s, t);
    for (int slot = 0; slot < 2; ++slot) {
      std::copy(ff.hand[static_cast<size_t>(slot)].begin(), ff.hand[static_cast<size_t>(slot)].end(),
                out.feat_hand[slot].begin() + static_cast<long>(static_cast<size_t>(t) * cfg.d_feat));
      std::copy(ff.object[static_cast<size_t>(slot)].begin(),
                ff.object[static_cast<size_t>(slot)].end(),
                out.feat_object[slot].begin() + static_cast<long>(static_cast<size_t>(t) * cfg.d_feat));
      out.valid_hand[slot][static_cast<size_t>(t)] = ff.hand_valid[static_cast<size_t>(slot)] ? 1 : 0;
      out.valid_object[slot][static_cast<size_t>(t)] =
          ff.object_valid[static_cast<size_t>(slot)] ? 1 : 0;
    }
    std::copy(ff.global.begin(), ff.global.end(),
              out.feat_global.begin() + static_cast<long>(static_cast<size_t>(t) * cfg.d_feat));

    // normalized boxes straight from the rendered detections
    const geom::FrameDetections& f = obs.frames[static_cast<size_t>(t)];
    for (const auto& hb : f.hand_boxes) {
      const int slot = hb.side == 'L' ? 0 : 1;
      out.box_hand[slot][static_cast<size_t>(t)] = {hb.box(0) / cfg.frame_w, hb.box(1) / cfg.frame_h,
                                                    hb.box(2) / cfg.frame_w, hb.box(3) / cfg.frame_h};
    }
    int obj_slot = 0;
    for (const auto& ob : f.object_boxes) {
      if (obj_slot >= 2) break;
      // rendered in slot order; skip slots whose detection dropped
      while (obj_slot < 2 && !s.object_detected[static_cast<size_t>(obj_slot)][static_cast<size_t>(t)])
        ++obj_slot;
      if (obj_slot >= 2) break;
      out.box_object[obj_slot][static_cast<size_t>(t)] = {ob(0) / cfg.frame_w, ob(1) / cfg.frame_h,
                                                          ob(2) / cfg.frame_w, ob(3) / cfg.frame_h};
      ++obj_slot;
    }
  }

  // labels through the homography pipeline
  const std::vector<geom::Homography> chain = future_chain(s, obs);
  const std::vector<geom::FrameDetections> future(
      obs.frames.begin() + cfg.T, obs.frames.end());
  out.gt_trajectory = geom::generate_trajectory_labels(
      future, chain, {cfg.frame_w, cfg.frame_h}, {cfg.dense_fps, cfg.label_fps});
  out.gt_contacts = geom::generate_contact_labels(obs.frames.back(), chain, object_track_pixels(s),
                                                  {cfg.frame_w, cfg.frame_h});
  out.oracle_trajectory = oracle_trajectory(s);
  out.oracle_contacts = oracle_contacts(s);
  if (cfg.n_verbs > 0 && cfg.n_nouns > 0) {
    out.has_action = true;
    out.verb = s.verb_id;
    out.noun = s.noun_id;
  }
  out.validate();
  return out;
}

dataset::LabelRequest make_label_request(const SceneScript& s, const Observations& o,
                                         const std::string& clip_id) {
  dataset::LabelRequest r;
  r.clip_id = clip_id;
  r.frame_size = {s.cfg.frame_w, s.cfg.frame_h};
  r.future_frames.assign(o.frames.begin() + s.cfg.T, o.frames.end());
  for (int j = 0; j < s.cfg.F; ++j) {
    dataset::LabelRequest::PairCorrespondences pc;
    pc.from = s.cfg.T + j;
    pc.to = s.cfg.T + j - 1;
    pc.points = o.pairs[static_cast<size_t>(s.cfg.T - 1 + j)];
    r.correspondences.push_back(std::move(pc));
  }
  r.object_track = object_track_pixels(s);
  return r;
}

BuildStats build_dataset(int n, uint64_t seed, const SceneConfig& cfg, const std::string& path,
                         const std::string& detections_path) {
  if (n < 1) fail(ErrorKind::ConfigError, "need n >= 1 samples");
  cfg.validate();
  std::vector<dataset::TrainingSample> samples(static_cast<size_t>(n));
  std::vector<dataset::LabelRequest> requests(static_cast<size_t>(n));
  const bool want_requests = !detections_path.empty();
  char idbuf[32];
  std::vector<std::string> ids(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::snprintf(idbuf, sizeof(idbuf), "clip_%06d", i);
    ids[static_cast<size_t>(i)] = idbuf;
  }
  parallel_for(n, [&](int i) {
    const SceneScript s = simulate_scene(mix_seed(seed, static_cast<uint64_t>(i)), cfg);
    samples[static_cast<size_t>(i)] = make_training_sample(s, ids[static_cast<size_t>(i)]);
    if (want_requests)
      requests[static_cast<size_t>(i)] =
          make_label_request(s, render_observations(s), ids[static_cast<size_t>(i)]);
  });

  BuildStats stats;
  stats.count = n;
  double traj_sum = 0.0;
  int traj_terms = 0;
  double contact_sum = 0.0;
  int contact_terms = 0;
  for (const auto& s : samples) {
    for (int j = 0; j < s.F; ++j) {
      for (int side = 0; side < 2; ++side) {
        if (!s.gt_trajectory.visible[static_cast<size_t>(j)][static_cast<size_t>(side)] ||
            !s.oracle_trajectory.visible[static_cast<size_t>(j)][static_cast<size_t>(side)])
          continue;
        const auto& a = side == 0 ? s.gt_trajectory.left : s.gt_trajectory.right;
        const auto& b = side == 0 ? s.oracle_trajectory.left : s.oracle_trajectory.right;
        traj_sum += (a[static_cast<size_t>(j)] - b[static_cast<size_t>(j)]).norm();
        ++traj_terms;
      }
    }
    const size_t m = std::min(s.gt_contacts.points.size(), s.oracle_contacts.points.size());
    for (size_t i = 0; i < m; ++i) {
      contact_sum += (s.gt_contacts.points[i] - s.oracle_contacts.points[i]).norm();
      ++contact_terms;
    }
  }
  stats.mean_trajectory_err = traj_terms > 0 ? traj_sum / traj_terms : 0.0;
  stats.mean_contact_err = contact_terms > 0 ? contact_sum / contact_terms : 0.0;

  dataset::write_dataset(path, samples);
  if (want_requests) dataset::write_label_requests(detections_path, requests);
  return stats;
}

}  // namespace octcast::synth

namespace octcast {

nlohmann::json default_scene_options() { return synth::default_scene_options_impl(); }

}  // namespace octcast
