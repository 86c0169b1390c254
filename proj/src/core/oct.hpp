#pragma once

#include "core/tokens.hpp"

namespace octcast::model {

struct EncoderOutput {
  ad::Var z;     // (5T) x D
  ad::Var z_T;   // 5 x D, last-observation-frame tokens in category order
  ad::Var z_gT;  // 1 x D
  std::array<uint8_t, kCategories> frame_T_pad{};  // padding of the 5 decoder keys
  int T = 0;
  int D = 0;
};

/// Multi-head scaled dot-product attention with an additive key mask
/// (entries 0 or -1e9, applied before scaling). Queries whose keys are all
/// masked return zero rows.
ad::Var attention(ad::Var q, ad::Var k, ad::Var v, const ad::Mat& mask, int heads);

/// One block: shared QKV projection, masked attention with a residual, then
/// the pre-norm MLP branch on top of a second residual. Queries come from
/// q_in, keys/values from kv_in (== q_in in the encoder).
ad::Var block(ParamTape& pt, ad::Var q_in, ad::Var kv_in, const ad::Mat& mask,
              const std::string& prefix, const ModelConfig& cfg, Rng* dropout_rng);

/// Key mask over the flattened token sequence: column j is -1e9 when pad[j].
ad::Mat key_mask(const std::vector<uint8_t>& pad, int query_rows);

/// Self-attention over all space-time tokens through enc_blocks blocks.
EncoderOutput encode(ParamTape& pt, const TokenSet& ts, const ModelConfig& cfg,
                     Rng* dropout_rng = nullptr);

/// Embeds a history of hand locations (rows of [lx, ly, rx, ry], h_T first)
/// with position sinusoids and cross-attends against the 5 frame-T tokens;
/// returns one feature row per history position.
ad::Var decode(ParamTape& pt, const ad::Mat& history, const EncoderOutput& enc,
               const ModelConfig& cfg, Rng* dropout_rng = nullptr);

/// Final-position decoder feature X_{T+t} for a history (h_T ... h_{T+t-1}).
ad::Var decode_step(ParamTape& pt, const ad::Mat& history, const EncoderOutput& enc,
                    const ModelConfig& cfg, Rng* dropout_rng = nullptr);

}  // namespace octcast::model
