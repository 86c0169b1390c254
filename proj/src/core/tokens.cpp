#include "core/tokens.hpp"

#include <cmath>

namespace octcast::model {

Eigen::RowVectorXd sinusoidal_embedding(int t, int D) {
  if (t < 0) fail(ErrorKind::InvalidArgument, "time index must be >= 0");
  if (D <= 0 || D % 2 != 0) fail(ErrorKind::OddDimension, "embedding width must be even");
  Eigen::RowVectorXd e(D);
  for (int i = 0; i < D / 2; ++i) {
    const double wavelength = std::pow(10000.0, 2.0 * i / static_cast<double>(D));
    e(2 * i) = std::sin(t / wavelength);
    e(2 * i + 1) = std::cos(t / wavelength);
  }
  return e;
}

namespace {

Eigen::Vector4d center_size(const Eigen::Vector4d& box) {
  return {0.5 * (box(0) + box(2)), 0.5 * (box(1) + box(3)), box(2) - box(0), box(3) - box(1)};
}

}  // namespace

TokenSet build_tokens(ParamTape& pt, const dataset::TrainingSample& s, const ModelConfig& cfg) {
  const int T = s.T;
  const int D = cfg.D;
  const int d_feat = cfg.d_feat;
  if (s.d_feat != d_feat) fail(ErrorKind::ShapeMismatch, "feature width differs from config");
  if (cfg.ablate.size() >= 3)
    fail(ErrorKind::AllTokensAblated, "all token categories ablated");
  for (int slot = 0; slot < 2; ++slot) {
    if (s.feat_hand[slot].size() != static_cast<size_t>(T) * d_feat ||
        s.feat_object[slot].size() != static_cast<size_t>(T) * d_feat ||
        s.valid_hand[slot].size() != static_cast<size_t>(T) ||
        s.valid_object[slot].size() != static_cast<size_t>(T) ||
        s.box_hand[slot].size() != static_cast<size_t>(T) ||
        s.box_object[slot].size() != static_cast<size_t>(T))
      fail(ErrorKind::ShapeMismatch, "sample arrays do not match T");
  }
  if (s.feat_global.size() != static_cast<size_t>(T) * d_feat)
    fail(ErrorKind::ShapeMismatch, "global features do not match T");

  const bool ablate_hand = cfg.ablate.count("hand") != 0;
  const bool ablate_object = cfg.ablate.count("object") != 0;
  const bool ablate_global = cfg.ablate.count("global") != 0;

  TokenSet ts;
  ts.T = T;
  ts.D = D;
  ts.pad.assign(static_cast<size_t>(kCategories) * T, 1);

  ad::Tape& tape = pt.tape();

  const auto entity_rows = [&](int category_base, const std::array<std::vector<float>, 2>& feats,
                               const std::array<std::vector<Eigen::Vector4d>, 2>& boxes,
                               const std::array<std::vector<uint8_t>, 2>& valid, bool ablated,
                               const char* w_name, const char* b_name) -> std::optional<ad::Var> {
    std::vector<int> rows;
    std::vector<Eigen::RowVectorXd> inputs;
    for (int slot = 0; slot < 2; ++slot) {
      for (int t = 0; t < T; ++t) {
        if (ablated || !valid[slot][static_cast<size_t>(t)]) continue;
        Eigen::RowVectorXd in(4 + d_feat);
        in.head(4) = center_size(boxes[slot][static_cast<size_t>(t)]).transpose();
        for (int k = 0; k < d_feat; ++k)
          in(4 + k) = static_cast<double>(feats[slot][static_cast<size_t>(t) * d_feat + k]);
        inputs.push_back(std::move(in));
        rows.push_back((category_base + slot) * T + t);
      }
    }
    if (rows.empty()) return std::nullopt;
    ad::Mat stacked(static_cast<Eigen::Index>(inputs.size()), 4 + d_feat);
    for (size_t i = 0; i < inputs.size(); ++i) stacked.row(static_cast<Eigen::Index>(i)) = inputs[i];
    ad::Var mapped = ad::matmul(tape.constant(std::move(stacked)), pt.p(w_name));
    mapped = ad::add_row_broadcast(mapped, pt.p(b_name));
    for (int r : rows) ts.pad[static_cast<size_t>(r)] = 0;
    return ad::scatter_rows(mapped, rows, kCategories * T);
  };

  std::vector<ad::Var> parts;
  if (auto h = entity_rows(kHandL, s.feat_hand, s.box_hand, s.valid_hand, ablate_hand, "tok.w_h",
                           "tok.b_h"))
    parts.push_back(*h);
  if (auto o = entity_rows(kObj1, s.feat_object, s.box_object, s.valid_object, ablate_object,
                           "tok.w_o", "tok.b_o"))
    parts.push_back(*o);

  if (!ablate_global) {
    ad::Mat g(T, d_feat);
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < d_feat; ++k)
        g(t, k) = static_cast<double>(s.feat_global[static_cast<size_t>(t) * d_feat + k]);
    ad::Var mapped = ad::add_row_broadcast(ad::matmul(tape.constant(std::move(g)), pt.p("tok.w_g")),
                                           pt.p("tok.b_g"));
    std::vector<int> rows(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
      rows[static_cast<size_t>(t)] = kGlobal * T + t;
      ts.pad[static_cast<size_t>(kGlobal * T + t)] = 0;
    }
    parts.push_back(ad::scatter_rows(mapped, rows, kCategories * T));
  }

  if (parts.empty()) fail(ErrorKind::AllTokensAblated, "no valid tokens in sample");
  ad::Var tokens = parts[0];
  for (size_t i = 1; i < parts.size(); ++i) tokens = ad::add(tokens, parts[i]);
  ts.tokens = tokens;
  return ts;
}

void apply_embeddings(ParamTape& pt, TokenSet& ts) {
  if (!ts.tokens.valid()) fail(ErrorKind::InvalidArgument, "empty token set");
  const int T = ts.T;
  const int D = ts.D;
  ad::Tape& tape = pt.tape();

  ad::Mat selector = ad::Mat::Zero(kCategories * T, 3);
  ad::Mat positional(kCategories * T, D);
  for (int c = 0; c < kCategories; ++c) {
    const int group = c == kGlobal ? 2 : (c >= kObj1 ? 1 : 0);
    for (int t = 0; t < T; ++t) {
      selector(c * T + t, group) = 1.0;
      positional.row(c * T + t) = sinusoidal_embedding(t, D);
    }
  }
  const ad::Var spatial = ad::matmul(tape.constant(std::move(selector)), pt.p("tok.spatial"));
  ts.tokens = ad::add(ad::add(ts.tokens, spatial), tape.constant(std::move(positional)));
}

}  // namespace octcast::model
