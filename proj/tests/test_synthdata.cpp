#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/synthdata.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace octcast;
using namespace octcast::synth;

namespace {

SceneConfig small_config() {
  SceneConfig c;
  c.T = 6;
  c.F = 3;
  c.d_feat = 32;
  c.n_bg = 24;
  c.ransac_iterations = 200;
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("simulate_scene is deterministic and honors zero camera motion") {
  const SceneConfig cfg = small_config();
  const SceneScript a = simulate_scene(7, cfg);
  const SceneScript b = simulate_scene(7, cfg);
  REQUIRE(a.camera.size() == b.camera.size());
  for (size_t k = 0; k < a.camera.size(); ++k)
    CHECK((a.camera[k].m - b.camera[k].m).cwiseAbs().maxCoeff() == 0.0);
  for (int side = 0; side < 2; ++side)
    for (int t = 0; t < cfg.T + cfg.F; ++t)
      CHECK((a.hand_world[static_cast<size_t>(side)][static_cast<size_t>(t)] -
             b.hand_world[static_cast<size_t>(side)][static_cast<size_t>(t)])
                .norm() == 0.0);

  SceneConfig still = cfg;
  still.cam_translate = 0.0;
  still.cam_rotate = 0.0;
  still.cam_scale = 0.0;
  const SceneScript quiet = simulate_scene(9, still);
  for (const auto& h : quiet.camera)
    CHECK((h.m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("every present hand reaches a contact point at the contact frame") {
  const SceneConfig cfg = small_config();
  for (uint64_t seed : {1ull, 2ull, 3ull, 10ull, 99ull}) {
    const SceneScript s = simulate_scene(seed, cfg);
    for (int side = 0; side < 2; ++side) {
      if (!s.hand_present[static_cast<size_t>(side)]) continue;
      const Eigen::Vector2d end =
          s.hand_world[static_cast<size_t>(side)][static_cast<size_t>(cfg.T + cfg.F - 1)];
      double best = 1e300;
      for (int i = 0; i < static_cast<int>(s.contact.world_points.size()); ++i)
        best = std::min(best, (end - s.contact_point_at_contact(i)).norm());
      CHECK(best < 1e-6);
    }
  }
}

TEST_CASE("render_observations gives exact correspondences for a still camera") {
  SceneConfig cfg = small_config();
  cfg.cam_translate = 0.0;
  cfg.cam_rotate = 0.0;
  cfg.cam_scale = 0.0;
  const SceneScript s = simulate_scene(11, cfg);
  const Observations obs = render_observations(s);
  for (const auto& pair : obs.pairs)
    for (size_t i = 0; i < pair.size(); ++i)
      CHECK((pair.src[i] - pair.dst[i]).norm() < 1e-12);
}

TEST_CASE("ransac recovers the scripted camera homographies from clean renders") {
  const SceneConfig cfg = small_config();
  const SceneScript s = simulate_scene(13, cfg);
  const Observations obs = render_observations(s);
  Rng rng(14);
  for (size_t k = 0; k < obs.pairs.size(); ++k) {
    const geom::RansacResult r = geom::ransac_homography(obs.pairs[k], 3.0, 500, 15);
    // compare action on sample points instead of matrix entries
    for (int trial = 0; trial < 5; ++trial) {
      const Eigen::Vector2d p(rng.uniform(0.0, cfg.frame_w), rng.uniform(0.0, cfg.frame_h));
      CHECK((geom::project_point(r.h, p) - geom::project_point(s.camera[k], p)).norm() < 1e-6);
    }
  }
}

TEST_CASE("detection dropout hits the configured rate over many scenes") {
  SceneConfig cfg = small_config();
  cfg.detection_dropout = 0.3;
  int missing = 0;
  int total = 0;
  for (int i = 0; i < 100; ++i) {
    const SceneScript s = simulate_scene(mix_seed(1234, static_cast<uint64_t>(i)), cfg);
    for (int side = 0; side < 2; ++side) {
      if (!s.hand_present[static_cast<size_t>(side)]) continue;
      for (int k = 0; k < cfg.T + cfg.F; ++k) {
        ++total;
        missing += s.hand_detected[static_cast<size_t>(side)][static_cast<size_t>(k)] ? 0 : 1;
      }
    }
  }
  const double rate = static_cast<double>(missing) / total;
  CHECK(rate > 0.2);
  CHECK(rate < 0.4);
}

TEST_CASE("featurize zeroes invisible entities and is deterministic and injective") {
  SceneConfig cfg = small_config();
  cfg.detection_dropout = 0.4;
  const SceneScript s = simulate_scene(21, cfg);
  bool saw_invalid = false;
  for (int t = 0; t < cfg.T; ++t) {
    const FrameFeatures a = featurize(s, t);
    const FrameFeatures b = featurize(s, t);
    for (int side = 0; side < 2; ++side) {
      CHECK(a.hand[static_cast<size_t>(side)] == b.hand[static_cast<size_t>(side)]);
      if (!a.hand_valid[static_cast<size_t>(side)]) {
        saw_invalid = true;
        for (float v : a.hand[static_cast<size_t>(side)]) CHECK(v == 0.0f);
      }
    }
  }
  CHECK(saw_invalid);

  // states 0.1 apart in x land on measurably different directions
  SceneConfig clean = small_config();
  const SceneScript s1 = simulate_scene(31, clean);
  SceneScript s2 = s1;
  s2.hand_world[0][0].x() += 0.1 * clean.frame_w;
  const auto f1 = featurize(s1, 0).hand[0];
  const auto f2 = featurize(s2, 0).hand[0];
  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (size_t i = 0; i < f1.size(); ++i) {
    dot += double(f1[i]) * f2[i];
    n1 += double(f1[i]) * f1[i];
    n2 += double(f2[i]) * f2[i];
  }
  CHECK(dot / std::sqrt(n1 * n2) < 0.999);
}

TEST_CASE("pipeline labels match generator truth on clean scenes") {
  const SceneConfig cfg = small_config();
  double traj_err = 0.0;
  int terms = 0;
  double contact_err = 0.0;
  int contact_terms = 0;
  for (int i = 0; i < 10; ++i) {
    const SceneScript s = simulate_scene(mix_seed(77, static_cast<uint64_t>(i)), cfg);
    const dataset::TrainingSample sample = make_training_sample(s, "t");
    for (int j = 0; j < cfg.F; ++j)
      for (int side = 0; side < 2; ++side) {
        if (!sample.gt_trajectory.visible[static_cast<size_t>(j)][static_cast<size_t>(side)])
          continue;
        const auto& a = side == 0 ? sample.gt_trajectory.left : sample.gt_trajectory.right;
        const auto& b = side == 0 ? sample.oracle_trajectory.left : sample.oracle_trajectory.right;
        traj_err += (a[static_cast<size_t>(j)] - b[static_cast<size_t>(j)]).norm();
        ++terms;
      }
    for (size_t p = 0; p < sample.gt_contacts.points.size(); ++p) {
      contact_err += (sample.gt_contacts.points[p] - sample.oracle_contacts.points[p]).norm();
      ++contact_terms;
    }
  }
  CHECK(traj_err / terms < 2e-3);
  CHECK(contact_err / contact_terms < 1e-6);
}

TEST_CASE("moving active object relocates contacts onto the oracle") {
  SceneConfig cfg = small_config();
  cfg.object_motion = 24.0;
  for (uint64_t seed : {5ull, 6ull}) {
    const SceneScript s = simulate_scene(seed, cfg);
    const dataset::TrainingSample sample = make_training_sample(s, "t");
    REQUIRE(sample.gt_contacts.points.size() == sample.oracle_contacts.points.size());
    for (size_t p = 0; p < sample.gt_contacts.points.size(); ++p)
      CHECK((sample.gt_contacts.points[p] - sample.oracle_contacts.points[p]).norm() < 1e-6);
  }
}

TEST_CASE("multimodal scenes share observations and branch futures") {
  SceneConfig cfg = small_config();
  cfg.multimodal = true;
  SceneScript left_branch = simulate_scene(1000, cfg);
  int tries = 0;
  SceneScript other = simulate_scene(1001, cfg);
  while (other.active_object == left_branch.active_object && tries < 32)
    other = simulate_scene(1002 + static_cast<uint64_t>(tries++), cfg);
  REQUIRE(other.active_object != left_branch.active_object);

  for (int t = 0; t < cfg.T; ++t) {
    CHECK((left_branch.hand_world[0][static_cast<size_t>(t)] -
           other.hand_world[0][static_cast<size_t>(t)])
              .norm() < 1e-12);
    CHECK((left_branch.world_to_frame[static_cast<size_t>(t)] -
           other.world_to_frame[static_cast<size_t>(t)])
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
  const int last = cfg.T + cfg.F - 1;
  CHECK((left_branch.hand_world[1][static_cast<size_t>(last)] -
         other.hand_world[1][static_cast<size_t>(last)])
            .norm() > 1.0);
}

TEST_CASE("build_dataset writes schema-valid deterministic files with tight fidelity") {
  const SceneConfig cfg = small_config();
  const std::string p1 = temp_path("octcast_ds_a.jsonl");
  const std::string p2 = temp_path("octcast_ds_b.jsonl");

  const BuildStats one = build_dataset(1, 3, cfg, p1);
  CHECK(one.count == 1);
  const auto single = dataset::read_dataset(p1);
  REQUIRE(single.size() == 1);
  single[0].validate();

  const BuildStats a = build_dataset(6, 9, cfg, p1);
  const BuildStats b = build_dataset(6, 9, cfg, p2);
  CHECK(a.mean_trajectory_err < 2e-3);
  CHECK(file_bytes(p1) == file_bytes(p2));
  CHECK(b.count == 6);

  // binary container round-trip agrees with the JSONL reading
  const std::string pb = temp_path("octcast_ds_c.octd");
  build_dataset(6, 9, cfg, pb);
  const auto from_jsonl = dataset::read_dataset(p1);
  const auto from_binary = dataset::read_dataset(pb);
  REQUIRE(from_jsonl.size() == from_binary.size());
  for (size_t i = 0; i < from_jsonl.size(); ++i) {
    CHECK(from_jsonl[i].id == from_binary[i].id);
    CHECK(from_jsonl[i].feat_hand[0] == from_binary[i].feat_hand[0]);
    CHECK(from_jsonl[i].feat_global == from_binary[i].feat_global);
    for (int j = 0; j < from_jsonl[i].F; ++j) {
      CHECK((from_jsonl[i].gt_trajectory.left[static_cast<size_t>(j)] -
             from_binary[i].gt_trajectory.left[static_cast<size_t>(j)])
                .norm() == 0.0);
    }
  }
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
  std::filesystem::remove(pb);
}

TEST_CASE("label fidelity survives 30% correspondence outliers") {
  SceneConfig cfg = small_config();
  cfg.outlier_frac = 0.3;
  cfg.n_bg = 40;
  cfg.ransac_iterations = 2000;
  double err = 0.0;
  int terms = 0;
  for (int i = 0; i < 6; ++i) {
    const SceneScript s = simulate_scene(mix_seed(555, static_cast<uint64_t>(i)), cfg);
    const dataset::TrainingSample sample = make_training_sample(s, "t");
    for (int j = 0; j < cfg.F; ++j)
      for (int side = 0; side < 2; ++side) {
        if (!sample.gt_trajectory.visible[static_cast<size_t>(j)][static_cast<size_t>(side)])
          continue;
        const auto& a = side == 0 ? sample.gt_trajectory.left : sample.gt_trajectory.right;
        const auto& b = side == 0 ? sample.oracle_trajectory.left : sample.oracle_trajectory.right;
        err += (a[static_cast<size_t>(j)] - b[static_cast<size_t>(j)]).norm();
        ++terms;
      }
  }
  CHECK(err / terms < 1e-2);
}

TEST_CASE("label requests round-trip and feed the geometry pipeline") {
  const SceneConfig cfg = small_config();
  const SceneScript s = simulate_scene(17, cfg);
  const Observations obs = render_observations(s);
  const dataset::LabelRequest req = make_label_request(s, obs, "clip_x");
  const std::string path = temp_path("octcast_requests.jsonl");
  dataset::write_label_requests(path, {req});
  const auto loaded = dataset::read_label_requests(path);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].clip_id == "clip_x");
  REQUIRE(loaded[0].future_frames.size() == static_cast<size_t>(cfg.F));
  REQUIRE(loaded[0].correspondences.size() == static_cast<size_t>(cfg.F));
  CHECK(loaded[0].correspondences[0].from == cfg.T);
  CHECK(loaded[0].correspondences[0].to == cfg.T - 1);
  std::filesystem::remove(path);
}
