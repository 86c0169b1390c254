#include "core/oct.hpp"

#include <cmath>

namespace octcast::model {

namespace {

constexpr double kMaskedOut = -1e9;

}  // namespace

ad::Var attention(ad::Var q, ad::Var k, ad::Var v, const ad::Mat& mask, int heads) {
  const int D = q.cols();
  if (k.cols() != D || v.cols() != D) fail(ErrorKind::ShapeMismatch, "attention: widths differ");
  if (k.rows() != v.rows()) fail(ErrorKind::ShapeMismatch, "attention: key/value rows differ");
  if (mask.rows() != q.rows() || mask.cols() != k.rows())
    fail(ErrorKind::ShapeMismatch, "attention: mask must be queries x keys");
  if (heads < 1 || D % heads != 0)
    fail(ErrorKind::ShapeMismatch, "attention: width not divisible by heads");

  const int dh = D / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ad::Var> outputs;
  outputs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const ad::Var qh = ad::slice_cols(q, h * dh, dh);
    const ad::Var kh = ad::slice_cols(k, h * dh, dh);
    const ad::Var vh = ad::slice_cols(v, h * dh, dh);
    const ad::Var weights = ad::masked_softmax_rows(ad::matmul_nt(qh, kh), mask, inv_scale);
    outputs.push_back(ad::matmul(weights, vh));
  }
  return heads == 1 ? outputs[0] : ad::concat_cols(outputs);
}

ad::Var block(ParamTape& pt, ad::Var q_in, ad::Var kv_in, const ad::Mat& mask,
              const std::string& prefix, const ModelConfig& cfg, Rng* dropout_rng) {
  const int D = cfg.D;
  const ad::Var w_qkv = pt.p(prefix + ".qkv.w");
  const ad::Var b_qkv = pt.p(prefix + ".qkv.b");
  const ad::Var q_proj = ad::add_row_broadcast(ad::matmul(q_in, w_qkv), b_qkv);
  const ad::Var q = ad::slice_cols(q_proj, 0, D);
  ad::Var k, v;
  if (q_in.id == kv_in.id) {
    k = ad::slice_cols(q_proj, D, D);
    v = ad::slice_cols(q_proj, 2 * D, D);
  } else {
    const ad::Var kv_proj = ad::add_row_broadcast(ad::matmul(kv_in, w_qkv), b_qkv);
    k = ad::slice_cols(kv_proj, D, D);
    v = ad::slice_cols(kv_proj, 2 * D, D);
  }
  ad::Var att = attention(q, k, v, mask, cfg.heads);
  if (dropout_rng != nullptr) att = ad::dropout(att, cfg.dropout, *dropout_rng);
  const ad::Var after_attention = ad::add(q_in, att);

  const ad::Var normed =
      ad::layer_norm_rows(after_attention, pt.p(prefix + ".ln.g"), pt.p(prefix + ".ln.b"));
  const ad::Var hidden = ad::relu(
      ad::add_row_broadcast(ad::matmul(normed, pt.p(prefix + ".mlp.w1")), pt.p(prefix + ".mlp.b1")));
  ad::Var mlp =
      ad::add_row_broadcast(ad::matmul(hidden, pt.p(prefix + ".mlp.w2")), pt.p(prefix + ".mlp.b2"));
  if (dropout_rng != nullptr) mlp = ad::dropout(mlp, cfg.dropout, *dropout_rng);
  return ad::add(after_attention, mlp);
}

ad::Mat key_mask(const std::vector<uint8_t>& pad, int query_rows) {
  ad::Mat m = ad::Mat::Zero(query_rows, static_cast<Eigen::Index>(pad.size()));
  for (size_t j = 0; j < pad.size(); ++j) {
    if (pad[j]) m.col(static_cast<Eigen::Index>(j)).setConstant(kMaskedOut);
  }
  return m;
}

EncoderOutput encode(ParamTape& pt, const TokenSet& ts, const ModelConfig& cfg,
                     Rng* dropout_rng) {
  if (!ts.tokens.valid()) fail(ErrorKind::InvalidArgument, "empty token set");
  const int T = ts.T;
  const int n = kCategories * T;
  if (ts.tokens.rows() != n || ts.tokens.cols() != cfg.D)
    fail(ErrorKind::ShapeMismatch, "token tensor must be (5T) x D");

  const ad::Mat mask = key_mask(ts.pad, n);
  ad::Var x = ts.tokens;
  for (int i = 0; i < cfg.enc_blocks; ++i)
    x = block(pt, x, x, mask, "enc" + std::to_string(i), cfg, dropout_rng);

  EncoderOutput out;
  out.T = T;
  out.D = cfg.D;
  out.z = x;
  std::vector<int> last_frame(kCategories);
  for (int c = 0; c < kCategories; ++c) {
    last_frame[static_cast<size_t>(c)] = c * T + (T - 1);
    out.frame_T_pad[static_cast<size_t>(c)] = ts.pad[static_cast<size_t>(c * T + (T - 1))];
  }
  out.z_T = ad::select_rows(x, last_frame);
  out.z_gT = ad::select_rows(x, {kGlobal * T + (T - 1)});
  return out;
}

ad::Var decode(ParamTape& pt, const ad::Mat& history, const EncoderOutput& enc,
               const ModelConfig& cfg, Rng* dropout_rng) {
  if (history.rows() < 1) fail(ErrorKind::EmptyHistory, "decoder history is empty");
  if (history.cols() != 4) fail(ErrorKind::ShapeMismatch, "history rows must hold 4 values");
  const int n = static_cast<int>(history.rows());

  ad::Tape& tape = pt.tape();
  ad::Var x = ad::add_row_broadcast(ad::matmul(tape.constant(history), pt.p("dec.embed.w")),
                                    pt.p("dec.embed.b"));
  ad::Mat positional(n, cfg.D);
  for (int i = 0; i < n; ++i) positional.row(i) = sinusoidal_embedding(i, cfg.D);
  x = ad::add(x, tape.constant(std::move(positional)));

  const std::vector<uint8_t> pad(enc.frame_T_pad.begin(), enc.frame_T_pad.end());
  const ad::Mat mask = key_mask(pad, n);
  for (int i = 0; i < cfg.dec_blocks; ++i)
    x = block(pt, x, enc.z_T, mask, "dec" + std::to_string(i), cfg, dropout_rng);
  return x;
}

ad::Var decode_step(ParamTape& pt, const ad::Mat& history, const EncoderOutput& enc,
                    const ModelConfig& cfg, Rng* dropout_rng) {
  const ad::Var all = decode(pt, history, enc, cfg, dropout_rng);
  return ad::select_rows(all, {static_cast<int>(history.rows()) - 1});
}

}  // namespace octcast::model
