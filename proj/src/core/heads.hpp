#pragma once

#include "core/oct.hpp"

namespace octcast::model {

enum class ConditioningMode { None, HGivenO, OGivenH };

ConditioningMode conditioning_mode(const std::string& name);

struct LatentGaussian {
  ad::Var mu;
  ad::Var log_var;
};

/// Single-layer map of [x ; c] to latent mean and log variance, both
/// latent_dim wide. `prefix` selects hand.* or obj.* weights.
LatentGaussian cvae_encode(ParamTape& pt, ad::Var x, ad::Var c, const std::string& prefix,
                           int latent_dim);

/// Single-layer map of [z ; c] back to the target (4 hand values or one
/// contact point).
ad::Var cvae_decode(ParamTape& pt, ad::Var z, ad::Var c, const std::string& prefix);

inline ad::Var kl_loss(const LatentGaussian& g) { return ad::kl_gaussian(g.mu, g.log_var); }

/// Teacher-forced hand C-VAE loss over all future steps: reconstruction over
/// visible (step, hand) entries plus KL averaged over steps. `gt` rows are
/// [lx, ly, rx, ry]; vis_weight carries 0/1 per component.
ad::Var hand_head_loss(ParamTape& pt, const ad::Mat& gt, const ad::Mat& vis_weight,
                       ad::Var decoder_feats, const ad::Mat& noise, int latent_dim);

/// Object condition vector: Z_gT alone (None) or [Z_gT ; linear(trajectory)]
/// (OGivenH). HGivenO is reserved and rejected.
ad::Var object_condition(ParamTape& pt, ad::Var z_gT, const ad::Mat& trajectory_flat,
                         ConditioningMode mode);

ad::Var object_head_loss(ParamTape& pt, const Eigen::Vector2d& contact, ad::Var condition,
                         const ad::Mat& noise, int latent_dim);

/// Prior-draw decoders used at inference; z comes from N(0, I).
ad::Var sample_hand(ParamTape& pt, ad::Var decoder_feat, const ad::Mat& z);
ad::Var sample_contact(ParamTape& pt, ad::Var condition, const ad::Mat& z);

/// Frozen-encoder action scores: one MLP on the last-frame global token.
ad::Var anticipation_logits(ParamTape& pt, ad::Var z_gT);

Eigen::VectorXd softmax_vector(const Eigen::VectorXd& scores);

/// Softmaxes action scores and sums the probability mass per verb and per
/// noun. Maps give the verb/noun id of each action id; both outputs sum to 1.
std::pair<Eigen::VectorXd, Eigen::VectorXd> marginalize(const Eigen::VectorXd& action_scores,
                                                        const std::vector<int>& verb_map,
                                                        const std::vector<int>& noun_map,
                                                        int n_verbs, int n_nouns);

}  // namespace octcast::model
