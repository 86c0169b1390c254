#include "core/heads.hpp"

#include <cmath>

namespace octcast::model {

ConditioningMode conditioning_mode(const std::string& name) {
  if (name == "none") return ConditioningMode::None;
  if (name == "h_given_o") return ConditioningMode::HGivenO;
  if (name == "o_given_h") return ConditioningMode::OGivenH;
  fail(ErrorKind::ConfigError, "unknown conditioning mode '" + name + "'");
}

LatentGaussian cvae_encode(ParamTape& pt, ad::Var x, ad::Var c, const std::string& prefix,
                           int latent_dim) {
  const ad::Var joint = ad::concat_cols({x, c});
  const ad::Var out = ad::add_row_broadcast(ad::matmul(joint, pt.p(prefix + ".enc.w")),
                                            pt.p(prefix + ".enc.b"));
  if (out.cols() != 2 * latent_dim)
    fail(ErrorKind::ShapeMismatch, "cvae encoder output must be 2 x latent_dim wide");
  return {ad::slice_cols(out, 0, latent_dim), ad::slice_cols(out, latent_dim, latent_dim)};
}

ad::Var cvae_decode(ParamTape& pt, ad::Var z, ad::Var c, const std::string& prefix) {
  const ad::Var joint = ad::concat_cols({z, c});
  return ad::add_row_broadcast(ad::matmul(joint, pt.p(prefix + ".dec.w")),
                               pt.p(prefix + ".dec.b"));
}

ad::Var hand_head_loss(ParamTape& pt, const ad::Mat& gt, const ad::Mat& vis_weight,
                       ad::Var decoder_feats, const ad::Mat& noise, int latent_dim) {
  const int F = static_cast<int>(gt.rows());
  if (gt.cols() != 4 || vis_weight.rows() != F || vis_weight.cols() != 4)
    fail(ErrorKind::ShapeMismatch, "hand loss expects F x 4 targets and weights");
  if (decoder_feats.rows() != F) fail(ErrorKind::ShapeMismatch, "decoder features must be F rows");
  if (noise.rows() != F || noise.cols() != latent_dim)
    fail(ErrorKind::ShapeMismatch, "noise must be F x latent_dim");

  ad::Tape& tape = pt.tape();
  const ad::Var gt_var = tape.constant(gt);
  const LatentGaussian latent = cvae_encode(pt, gt_var, decoder_feats, "hand", latent_dim);
  const ad::Var z = ad::reparameterize(latent.mu, latent.log_var, noise);
  const ad::Var pred = cvae_decode(pt, z, decoder_feats, "hand");

  // one entry per visible (step, side) pair
  const double visible_pairs = vis_weight.sum() / 2.0;
  const ad::Var kl = kl_loss(latent);
  if (visible_pairs < 0.5) return kl;
  const ad::Var recon = ad::weighted_sse(pred, gt, vis_weight, visible_pairs);
  return ad::add(recon, kl);
}

ad::Var object_condition(ParamTape& pt, ad::Var z_gT, const ad::Mat& trajectory_flat,
                         ConditioningMode mode) {
  switch (mode) {
    case ConditioningMode::None:
      return z_gT;
    case ConditioningMode::HGivenO:
      fail(ErrorKind::UnsupportedMode, "h_given_o decoding order is not supported");
    case ConditioningMode::OGivenH: {
      if (trajectory_flat.rows() != 1)
        fail(ErrorKind::ShapeMismatch, "trajectory must be a single flattened row");
      ad::Tape& tape = pt.tape();
      const ad::Var projected =
          ad::add_row_broadcast(ad::matmul(tape.constant(trajectory_flat), pt.p("obj.traj.w")),
                                pt.p("obj.traj.b"));
      return ad::concat_cols({z_gT, projected});
    }
  }
  fail(ErrorKind::UnsupportedMode, "unhandled conditioning mode");
}

ad::Var object_head_loss(ParamTape& pt, const Eigen::Vector2d& contact, ad::Var condition,
                         const ad::Mat& noise, int latent_dim) {
  if (noise.rows() != 1 || noise.cols() != latent_dim)
    fail(ErrorKind::ShapeMismatch, "noise must be 1 x latent_dim");
  ad::Tape& tape = pt.tape();
  ad::Mat target(1, 2);
  target << contact.x(), contact.y();
  const ad::Var x = tape.constant(target);
  const LatentGaussian latent = cvae_encode(pt, x, condition, "obj", latent_dim);
  const ad::Var z = ad::reparameterize(latent.mu, latent.log_var, noise);
  const ad::Var pred = cvae_decode(pt, z, condition, "obj");
  const ad::Var recon = ad::weighted_sse(pred, target, ad::Mat::Ones(1, 2), 1.0);
  return ad::add(recon, kl_loss(latent));
}

ad::Var sample_hand(ParamTape& pt, ad::Var decoder_feat, const ad::Mat& z) {
  if (decoder_feat.rows() != 1) fail(ErrorKind::ShapeMismatch, "decoder feature must be one row");
  return cvae_decode(pt, pt.tape().constant(z), decoder_feat, "hand");
}

ad::Var sample_contact(ParamTape& pt, ad::Var condition, const ad::Mat& z) {
  if (condition.rows() != 1) fail(ErrorKind::ShapeMismatch, "condition must be one row");
  return cvae_decode(pt, pt.tape().constant(z), condition, "obj");
}

ad::Var anticipation_logits(ParamTape& pt, ad::Var z_gT) {
  const ad::Var hidden = ad::relu(
      ad::add_row_broadcast(ad::matmul(z_gT, pt.p("ant.w1")), pt.p("ant.b1")));
  return ad::add_row_broadcast(ad::matmul(hidden, pt.p("ant.w2")), pt.p("ant.b2"));
}

Eigen::VectorXd softmax_vector(const Eigen::VectorXd& scores) {
  const double m = scores.maxCoeff();
  Eigen::VectorXd e = (scores.array() - m).exp();
  return e / e.sum();
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> marginalize(const Eigen::VectorXd& action_scores,
                                                        const std::vector<int>& verb_map,
                                                        const std::vector<int>& noun_map,
                                                        int n_verbs, int n_nouns) {
  const auto n = static_cast<size_t>(action_scores.size());
  if (verb_map.size() != n || noun_map.size() != n)
    fail(ErrorKind::UnmappedAction, "every action id needs a (verb, noun) mapping");
  const Eigen::VectorXd p = softmax_vector(action_scores);
  Eigen::VectorXd verbs = Eigen::VectorXd::Zero(n_verbs);
  Eigen::VectorXd nouns = Eigen::VectorXd::Zero(n_nouns);
  for (size_t a = 0; a < n; ++a) {
    const int v = verb_map[a];
    const int o = noun_map[a];
    if (v < 0 || v >= n_verbs || o < 0 || o >= n_nouns)
      fail(ErrorKind::UnmappedAction, "action id maps outside the verb/noun vocabulary");
    verbs(v) += p(static_cast<Eigen::Index>(a));
    nouns(o) += p(static_cast<Eigen::Index>(a));
  }
  return {verbs, nouns};
}

}  // namespace octcast::model
