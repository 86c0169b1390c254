#pragma once

#include "core/dataset.hpp"
#include "core/weights.hpp"

namespace octcast::model {

// Token row layout: category * T + t, categories in this order.
inline constexpr int kHandL = 0;
inline constexpr int kHandR = 1;
inline constexpr int kObj1 = 2;
inline constexpr int kObj2 = 3;
inline constexpr int kGlobal = 4;
inline constexpr int kCategories = 5;

struct TokenSet {
  ad::Var tokens;            // (5T) x D
  std::vector<uint8_t> pad;  // 5T entries, 1 = padded
  int T = 0;
  int D = 0;
};

/// Interleaved sin/cos positional embedding, wavelength base 10000.
Eigen::RowVectorXd sinusoidal_embedding(int t, int D);

/// Per-frame tokens from boxes and features: hand/object rows are affine maps
/// of [center, size, feature]; the global row maps the frame feature alone.
/// Invalid (or ablated) entities become zero rows with pad set.
TokenSet build_tokens(ParamTape& pt, const dataset::TrainingSample& s, const ModelConfig& cfg);

/// Adds the category (spatial) embedding and the temporal sinusoid in place.
void apply_embeddings(ParamTape& pt, TokenSet& ts);

}  // namespace octcast::model
