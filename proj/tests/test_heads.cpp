#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/heads.hpp"
#include "gradcheck.hpp"
#include "model_fixtures.hpp"

#include <cmath>

using namespace octcast;
using namespace octcast::model;
using octcast::testing::affine_oracle;
using octcast::testing::tiny_config;

namespace {

ParamStore head_only_store(const ModelConfig& cfg, uint64_t seed) {
  return init_model_weights(cfg, seed);
}

}  // namespace

TEST_CASE("cvae_encode with zero weights gives the standard latent") {
  ModelConfig cfg = tiny_config();
  ParamStore store = head_only_store(cfg, 1);
  store.at("hand.enc.w").setZero();
  store.at("hand.enc.b").setZero();
  ParamTape pt(store);
  Rng rng(2);
  const ad::Var x = pt.tape().constant(rng.normal_matrix(3, 4));
  const ad::Var c = pt.tape().constant(rng.normal_matrix(3, cfg.D));
  const LatentGaussian g = cvae_encode(pt, x, c, "hand", cfg.latent_dim);
  CHECK(g.mu.val().cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.log_var.val().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cvae_encode with an identity block passes x into mu") {
  ModelConfig cfg = tiny_config();
  REQUIRE(cfg.latent_dim == 4);
  ParamStore store = head_only_store(cfg, 3);
  store.at("hand.enc.w").setZero();
  store.at("hand.enc.b").setZero();
  for (int i = 0; i < 4; ++i) store.at("hand.enc.w")(i, i) = 1.0;  // x -> mu columns
  ParamTape pt(store);
  Rng rng(4);
  const ad::Mat x = rng.normal_matrix(2, 4);
  const LatentGaussian g = cvae_encode(pt, pt.tape().constant(x),
                                       pt.tape().constant(rng.normal_matrix(2, cfg.D)), "hand",
                                       cfg.latent_dim);
  CHECK((g.mu.val() - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cvae_encode matches the loop-based affine oracle") {
  ModelConfig cfg = tiny_config();
  const ParamStore store = head_only_store(cfg, 5);
  ParamTape pt(store);
  Rng rng(6);
  const ad::Mat x = rng.normal_matrix(3, 4);
  const ad::Mat c = rng.normal_matrix(3, cfg.D);
  const LatentGaussian g =
      cvae_encode(pt, pt.tape().constant(x), pt.tape().constant(c), "hand", cfg.latent_dim);
  ad::Mat joint(3, 4 + cfg.D);
  joint << x, c;
  const ad::Mat expect = affine_oracle(joint, store.at("hand.enc.w"), store.at("hand.enc.b"));
  CHECK((g.mu.val() - expect.middleCols(0, cfg.latent_dim)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((g.log_var.val() - expect.middleCols(cfg.latent_dim, cfg.latent_dim))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("reparameterize sample mean approaches mu") {
  Rng rng(7);
  const int n = 100000;
  const double mu = 0.37;
  const double log_var = -0.4;
  const double sigma = std::exp(0.5 * log_var);
  double sum = 0.0;
  ad::Tape tape;
  const ad::Var vmu = tape.constant(ad::Mat::Constant(1, 1, mu));
  const ad::Var vlv = tape.constant(ad::Mat::Constant(1, 1, log_var));
  for (int i = 0; i < n; ++i) {
    ad::Mat noise(1, 1);
    noise(0, 0) = rng.normal();
    sum += ad::reparameterize(vmu, vlv, noise).val()(0, 0);
  }
  const double mean = sum / n;
  CHECK(std::abs(mean - mu) < 3.0 * sigma / std::sqrt(double(n)));
}

TEST_CASE("hand head loss vanishes for perfect reconstruction with a standard latent") {
  ModelConfig cfg = tiny_config();
  ParamStore store = head_only_store(cfg, 8);
  store.at("hand.enc.w").setZero();  // mu = 0, log_var = 0
  store.at("hand.enc.b").setZero();
  store.at("hand.dec.w").setZero();
  store.at("hand.dec.b").setZero();
  // decoder copies the first 4 condition entries; condition rows carry gt there
  for (int i = 0; i < 4; ++i) store.at("hand.dec.w")(cfg.latent_dim + i, i) = 1.0;

  Rng rng(9);
  ad::Mat gt(cfg.F, 4);
  for (int i = 0; i < cfg.F; ++i)
    for (int j = 0; j < 4; ++j) gt(i, j) = rng.uniform();
  ad::Mat feats = ad::Mat::Zero(cfg.F, cfg.D);
  feats.middleCols(0, 4) = gt;

  ParamTape pt(store);
  const ad::Var loss =
      hand_head_loss(pt, gt, ad::Mat::Ones(cfg.F, 4), pt.tape().constant(feats),
                     rng.normal_matrix(cfg.F, cfg.latent_dim), cfg.latent_dim);
  CHECK(loss.val()(0, 0) == 0.0);
}

TEST_CASE("hand head loss reduces to the KL term when no hand is visible") {
  ModelConfig cfg = tiny_config();
  const ParamStore store = head_only_store(cfg, 10);
  Rng rng(11);
  ad::Mat gt(cfg.F, 4);
  for (int i = 0; i < cfg.F; ++i)
    for (int j = 0; j < 4; ++j) gt(i, j) = rng.uniform();
  const ad::Mat feats = rng.normal_matrix(cfg.F, cfg.D);
  const ad::Mat noise = rng.normal_matrix(cfg.F, cfg.latent_dim);

  ParamTape pt(store);
  const ad::Var loss = hand_head_loss(pt, gt, ad::Mat::Zero(cfg.F, 4),
                                      pt.tape().constant(feats), noise, cfg.latent_dim);

  ParamTape pt2(store);
  const LatentGaussian g = cvae_encode(pt2, pt2.tape().constant(gt),
                                       pt2.tape().constant(feats), "hand", cfg.latent_dim);
  CHECK(std::abs(loss.val()(0, 0) - kl_loss(g).val()(0, 0)) < 1e-14);
}

TEST_CASE("hand head loss equals the stagewise oracle") {
  ModelConfig cfg = tiny_config();
  const ParamStore store = head_only_store(cfg, 12);
  Rng rng(13);
  ad::Mat gt(cfg.F, 4);
  for (int i = 0; i < cfg.F; ++i)
    for (int j = 0; j < 4; ++j) gt(i, j) = rng.uniform();
  ad::Mat vis = ad::Mat::Ones(cfg.F, 4);
  vis.block(1, 0, 1, 2).setZero();  // left hand invisible at step 2
  const ad::Mat feats = rng.normal_matrix(cfg.F, cfg.D);
  const ad::Mat noise = rng.normal_matrix(cfg.F, cfg.latent_dim);

  ParamTape pt(store);
  const ad::Var loss =
      hand_head_loss(pt, gt, vis, pt.tape().constant(feats), noise, cfg.latent_dim);

  // oracle: explicit affine/reparameterize/affine composition
  ad::Mat joint(cfg.F, 4 + cfg.D);
  joint << gt, feats;
  const ad::Mat enc = affine_oracle(joint, store.at("hand.enc.w"), store.at("hand.enc.b"));
  const ad::Mat mu = enc.middleCols(0, cfg.latent_dim);
  const ad::Mat lv = enc.middleCols(cfg.latent_dim, cfg.latent_dim);
  const ad::Mat z = mu + ((lv.array() * 0.5).exp() * noise.array()).matrix();
  ad::Mat dec_in(cfg.F, cfg.latent_dim + cfg.D);
  dec_in << z, feats;
  const ad::Mat pred = affine_oracle(dec_in, store.at("hand.dec.w"), store.at("hand.dec.b"));
  double recon = 0.0;
  for (int i = 0; i < cfg.F; ++i)
    for (int j = 0; j < 4; ++j)
      recon += vis(i, j) * (pred(i, j) - gt(i, j)) * (pred(i, j) - gt(i, j));
  recon /= vis.sum() / 2.0;
  double kl = 0.0;
  for (int i = 0; i < cfg.F; ++i)
    for (int j = 0; j < cfg.latent_dim; ++j)
      kl += 0.5 * (mu(i, j) * mu(i, j) + std::exp(lv(i, j)) - 1.0 - lv(i, j));
  kl /= cfg.F;
  CHECK(std::abs(loss.val()(0, 0) - (recon + kl)) < 1e-9);
}

TEST_CASE("object head loss vanishes for perfect reconstruction") {
  ModelConfig cfg = tiny_config();
  cfg.conditioning = "none";
  ParamStore store = init_model_weights(cfg, 14);
  store.at("obj.enc.w").setZero();
  store.at("obj.enc.b").setZero();
  store.at("obj.dec.w").setZero();
  store.at("obj.dec.b").setZero();
  for (int i = 0; i < 2; ++i) store.at("obj.dec.w")(cfg.latent_dim + i, i) = 1.0;

  Rng rng(15);
  const Eigen::Vector2d contact(0.4, 0.6);
  ad::Mat z_gT = ad::Mat::Zero(1, cfg.D);
  z_gT(0, 0) = contact.x();
  z_gT(0, 1) = contact.y();
  ParamTape pt(store);
  const ad::Var cond = object_condition(pt, pt.tape().constant(z_gT), ad::Mat(),
                                        ConditioningMode::None);
  const ad::Var loss = object_head_loss(pt, contact, cond,
                                        rng.normal_matrix(1, cfg.latent_dim), cfg.latent_dim);
  CHECK(loss.val()(0, 0) == 0.0);
}

TEST_CASE("conditioning on a zero trajectory projection collapses to the unconditioned loss") {
  ModelConfig ogh = tiny_config();
  ogh.conditioning = "o_given_h";
  ParamStore store_ogh = init_model_weights(ogh, 16);
  store_ogh.at("obj.traj.w").setZero();
  store_ogh.at("obj.traj.b").setZero();

  // unconditioned weights = the OGH rows that multiply [o ; Z_gT]
  ModelConfig none = ogh;
  none.conditioning = "none";
  ParamStore store_none = init_model_weights(none, 17);
  store_none.at("obj.enc.w") = store_ogh.at("obj.enc.w").topRows(2 + ogh.D);
  store_none.at("obj.enc.b") = store_ogh.at("obj.enc.b");
  store_none.at("obj.dec.w") = store_ogh.at("obj.dec.w").topRows(ogh.latent_dim + ogh.D);
  store_none.at("obj.dec.b") = store_ogh.at("obj.dec.b");

  Rng rng(18);
  const Eigen::Vector2d contact(0.3, 0.8);
  const ad::Mat z_gT = rng.normal_matrix(1, ogh.D);
  const ad::Mat traj = rng.normal_matrix(1, 4 * ogh.F);
  const ad::Mat noise = rng.normal_matrix(1, ogh.latent_dim);

  ParamTape pt1(store_ogh);
  const ad::Var c1 =
      object_condition(pt1, pt1.tape().constant(z_gT), traj, ConditioningMode::OGivenH);
  const double l1 = object_head_loss(pt1, contact, c1, noise, ogh.latent_dim).val()(0, 0);

  ParamTape pt2(store_none);
  const ad::Var c2 =
      object_condition(pt2, pt2.tape().constant(z_gT), ad::Mat(), ConditioningMode::None);
  const double l2 = object_head_loss(pt2, contact, c2, noise, ogh.latent_dim).val()(0, 0);
  CHECK(std::abs(l1 - l2) < 1e-12);
}

TEST_CASE("object head loss matches the stagewise oracle") {
  ModelConfig cfg = tiny_config();
  const ParamStore store = init_model_weights(cfg, 19);
  Rng rng(20);
  const Eigen::Vector2d contact(0.25, 0.65);
  const ad::Mat z_gT = rng.normal_matrix(1, cfg.D);
  const ad::Mat traj = rng.normal_matrix(1, 4 * cfg.F);
  const ad::Mat noise = rng.normal_matrix(1, cfg.latent_dim);

  ParamTape pt(store);
  const ad::Var cond =
      object_condition(pt, pt.tape().constant(z_gT), traj, ConditioningMode::OGivenH);
  const double loss = object_head_loss(pt, contact, cond, noise, cfg.latent_dim).val()(0, 0);

  const ad::Mat proj = affine_oracle(traj, store.at("obj.traj.w"), store.at("obj.traj.b"));
  ad::Mat c(1, 2 * cfg.D);
  c << z_gT, proj;
  ad::Mat x(1, 2);
  x << contact.x(), contact.y();
  ad::Mat joint(1, 2 + 2 * cfg.D);
  joint << x, c;
  const ad::Mat enc = affine_oracle(joint, store.at("obj.enc.w"), store.at("obj.enc.b"));
  const ad::Mat mu = enc.middleCols(0, cfg.latent_dim);
  const ad::Mat lv = enc.middleCols(cfg.latent_dim, cfg.latent_dim);
  const ad::Mat z = mu + ((lv.array() * 0.5).exp() * noise.array()).matrix();
  ad::Mat dec_in(1, cfg.latent_dim + 2 * cfg.D);
  dec_in << z, c;
  const ad::Mat pred = affine_oracle(dec_in, store.at("obj.dec.w"), store.at("obj.dec.b"));
  double expect = (pred - x).squaredNorm();
  for (int j = 0; j < cfg.latent_dim; ++j)
    expect += 0.5 * (mu(0, j) * mu(0, j) + std::exp(lv(0, j)) - 1.0 - lv(0, j));
  CHECK(std::abs(loss - expect) < 1e-9);
}

TEST_CASE("h_given_o conditioning is rejected as unsupported") {
  ModelConfig cfg = tiny_config();
  const ParamStore store = init_model_weights(cfg, 21);
  ParamTape pt(store);
  Rng rng(22);
  const ad::Var z_gT = pt.tape().constant(rng.normal_matrix(1, cfg.D));
  CHECK_THROWS_AS(object_condition(pt, z_gT, ad::Mat(), ConditioningMode::HGivenO), Error);
}

TEST_CASE("sampling heads are deterministic in z, diverse across z, bias at zero weights") {
  ModelConfig cfg = tiny_config();
  ParamStore store = init_model_weights(cfg, 23);
  Rng rng(24);
  const ad::Mat feat = rng.normal_matrix(1, cfg.D);
  const ad::Mat z1 = rng.normal_matrix(1, cfg.latent_dim);
  const ad::Mat z2 = rng.normal_matrix(1, cfg.latent_dim);

  ParamTape pt(store);
  const ad::Var feat_var = pt.tape().constant(feat);
  const ad::Mat a = sample_hand(pt, feat_var, z1).val();
  const ad::Mat b = sample_hand(pt, feat_var, z1).val();
  const ad::Mat c = sample_hand(pt, feat_var, z2).val();
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a - c).cwiseAbs().maxCoeff() > 1e-9);

  store.at("hand.dec.w").setZero();
  store.at("hand.dec.b").setConstant(0.77);
  ParamTape pt2(store);
  const ad::Mat d = sample_hand(pt2, pt2.tape().constant(feat), z1).val();
  CHECK((d.array() - 0.77).abs().maxCoeff() == 0.0);

  // contact sampling follows the same contract
  ModelConfig none = cfg;
  none.conditioning = "none";
  ParamStore store2 = init_model_weights(none, 25);
  ParamTape pt3(store2);
  const ad::Var cond = pt3.tape().constant(feat);
  const ad::Mat ca = sample_contact(pt3, cond, z1).val();
  const ad::Mat cb = sample_contact(pt3, cond, z1).val();
  const ad::Mat cc = sample_contact(pt3, cond, z2).val();
  CHECK((ca - cb).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ca - cc).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("marginalize conserves probability mass") {
  SUBCASE("two actions sharing the only verb") {
    Eigen::VectorXd logits = Eigen::VectorXd::Zero(2);
    const auto [verbs, nouns] = marginalize(logits, {0, 0}, {0, 1}, 1, 2);
    CHECK(std::abs(verbs(0) - 1.0) < 1e-12);
    CHECK(std::abs(nouns(0) - 0.5) < 1e-12);
    CHECK(std::abs(nouns(1) - 0.5) < 1e-12);
  }
  SUBCASE("a near one-hot action distribution") {
    Eigen::VectorXd logits(4);
    logits << 100.0, 0.0, 0.0, 0.0;
    const auto [verbs, nouns] = marginalize(logits, {0, 0, 1, 1}, {0, 1, 0, 1}, 2, 2);
    CHECK(verbs(0) > 1.0 - 1e-12);
    CHECK(nouns(0) > 1.0 - 1e-12);
  }
  SUBCASE("random logits match the loop oracle and sum to one") {
    Rng rng(26);
    const int actions = 12;
    Eigen::VectorXd logits(actions);
    std::vector<int> verb_map, noun_map;
    for (int a = 0; a < actions; ++a) {
      logits(a) = rng.normal();
      verb_map.push_back(a / 4);
      noun_map.push_back(a % 4);
    }
    const auto [verbs, nouns] = marginalize(logits, verb_map, noun_map, 3, 4);
    CHECK(std::abs(verbs.sum() - 1.0) < 1e-6);
    CHECK(std::abs(nouns.sum() - 1.0) < 1e-6);
    const Eigen::VectorXd p = softmax_vector(logits);
    for (int v = 0; v < 3; ++v) {
      double acc = 0.0;
      for (int a = 0; a < actions; ++a)
        if (verb_map[static_cast<size_t>(a)] == v) acc += p(a);
      CHECK(std::abs(verbs(v) - acc) < 1e-12);
    }
  }
  SUBCASE("unmapped actions are rejected") {
    Eigen::VectorXd logits = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(marginalize(logits, {0, 1}, {0, 0, 0}, 2, 1), Error);
    CHECK_THROWS_AS(marginalize(logits, {0, 1, 5}, {0, 0, 0}, 2, 1), Error);
  }
}

TEST_CASE("gradients of the head losses match finite differences") {
  ModelConfig cfg = tiny_config();
  const ParamStore store = init_model_weights(cfg, 27);
  Rng rng(28);
  ad::Mat gt(cfg.F, 4);
  for (int i = 0; i < cfg.F; ++i)
    for (int j = 0; j < 4; ++j) gt(i, j) = rng.uniform();
  const ad::Mat feats = rng.normal_matrix(cfg.F, cfg.D);
  const ad::Mat hand_noise = rng.normal_matrix(cfg.F, cfg.latent_dim);
  const ad::Mat z_gT = rng.normal_matrix(1, cfg.D);
  const ad::Mat traj = rng.normal_matrix(1, 4 * cfg.F);
  const ad::Mat obj_noise = rng.normal_matrix(1, cfg.latent_dim);
  const Eigen::Vector2d contact(0.45, 0.55);

  const double err_h = octcast::testing::model_gradcheck_max_rel_error(
      store, {"hand.enc.w", "hand.enc.b", "hand.dec.w", "hand.dec.b"},
      [&](ParamTape& pt, const ParamStore&) {
        return hand_head_loss(pt, gt, ad::Mat::Ones(cfg.F, 4), pt.tape().constant(feats),
                              hand_noise, cfg.latent_dim);
      });
  CHECK(err_h < 1e-3);

  const double err_o = octcast::testing::model_gradcheck_max_rel_error(
      store, {"obj.enc.w", "obj.dec.w", "obj.traj.w", "obj.traj.b"},
      [&](ParamTape& pt, const ParamStore&) {
        const ad::Var cond = object_condition(pt, pt.tape().constant(z_gT), traj,
                                              ConditioningMode::OGivenH);
        return object_head_loss(pt, contact, cond, obj_noise, cfg.latent_dim);
      });
  CHECK(err_o < 1e-3);
}

TEST_CASE("kl closed form agrees with a Monte-Carlo estimate") {
  Rng rng(29);
  for (int trial = 0; trial < 2; ++trial) {
    const ad::Mat mu = rng.normal_matrix(1, 4) * 0.8;
    const ad::Mat lv = rng.normal_matrix(1, 4) * 0.5;
    ad::Tape tape;
    const double closed = ad::kl_gaussian(tape.constant(mu), tape.constant(lv)).val()(0, 0);

    // MC: E_q[log q(z) - log p(z)] with z ~ q
    const int n = 1000000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < 4; ++d) {
        const double sigma = std::exp(0.5 * lv(0, d));
        const double z = mu(0, d) + sigma * rng.normal();
        const double log_q = -0.5 * ((z - mu(0, d)) * (z - mu(0, d)) / (sigma * sigma)) -
                             0.5 * lv(0, d) - 0.5 * std::log(2.0 * M_PI);
        const double log_p = -0.5 * z * z - 0.5 * std::log(2.0 * M_PI);
        acc += log_q - log_p;
      }
    }
    CHECK(std::abs(acc / n - closed) < 1e-2);
  }
}
