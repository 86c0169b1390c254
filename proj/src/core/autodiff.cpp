#include "core/autodiff.hpp"

#include <cmath>
#include <utility>

namespace octcast::ad {

namespace {

constexpr double kDeadMaskLevel = -1e8;
constexpr double kLayerNormEps = 1e-5;

void require(bool ok, const char* msg) {
  if (!ok) fail(ErrorKind::ShapeMismatch, msg);
}

}  // namespace

const Mat& Var::val() const {
  if (!valid()) fail(ErrorKind::InvalidArgument, "empty var");
  return tape->value_of(id);
}

int Tape::push(Mat value, bool requires_grad, std::function<void(Tape&, int)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::constant(Mat v) { return {this, push(std::move(v), false, nullptr)}; }

Var Tape::param(Mat v) { return {this, push(std::move(v), true, nullptr)}; }

void Tape::accumulate(int id, const Mat& g) {
  Node& n = node(id);
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& loss) {
  require(loss.valid() && loss.tape == this, "loss var must live on this tape");
  require(loss.val().rows() == 1 && loss.val().cols() == 1, "loss must be scalar");
  Node& top = node(loss.id);
  if (!top.requires_grad) return;  // nothing on the tape depends on parameters
  top.grad = Mat::Ones(1, 1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = node(id);
    if (n.grad.size() == 0 || !n.backprop) continue;
    n.backprop(*this, id);
  }
}

const Mat& Tape::grad(const Var& v) const {
  require(v.valid() && v.tape == this, "var must live on this tape");
  return grad_of(v.id);
}

bool Tape::has_grad(const Var& v) const {
  return v.valid() && v.tape == this && grad_of(v.id).size() != 0;
}

namespace {

Var make_op(Tape& t, Mat value, const std::vector<Var>& parents,
            std::function<void(Tape&, int)> back) {
  bool rg = false;
  for (const Var& p : parents) {
    require(p.valid() && p.tape == &t, "op inputs must live on one tape");
    rg = rg || t.node_requires_grad(p.id);
  }
  return {&t, t.push(std::move(value), rg, std::move(back))};
}

}  // namespace

Var add(Var a, Var b) {
  require(a.val().rows() == b.val().rows() && a.val().cols() == b.val().cols(), "add: shapes");
  const int ia = a.id, ib = b.id;
  return make_op(*a.tape, a.val() + b.val(), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  require(a.val().rows() == b.val().rows() && a.val().cols() == b.val().cols(), "sub: shapes");
  const int ia = a.id, ib = b.id;
  return make_op(*a.tape, a.val() - b.val(), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    t.accumulate(ia, g);
    t.accumulate(ib, Mat(-g));
  });
}

Var cwise_mul(Var a, Var b) {
  require(a.val().rows() == b.val().rows() && a.val().cols() == b.val().cols(),
          "cwise_mul: shapes");
  const int ia = a.id, ib = b.id;
  return make_op(*a.tape, a.val().cwiseProduct(b.val()), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    t.accumulate(ia, g.cwiseProduct(t.value_of(ib)));
    t.accumulate(ib, g.cwiseProduct(t.value_of(ia)));
  });
}

Var scale(Var a, double s) {
  const int ia = a.id;
  return make_op(*a.tape, a.val() * s, {a}, [ia, s](Tape& t, int self) {
    t.accumulate(ia, Mat(t.grad_of(self) * s));
  });
}

Var add_row_broadcast(Var x, Var row) {
  require(row.val().rows() == 1 && row.val().cols() == x.val().cols(),
          "add_row_broadcast: row must be 1 x cols(x)");
  Mat out = x.val();
  out.rowwise() += row.val().row(0);
  const int ix = x.id, irow = row.id;
  return make_op(*x.tape, std::move(out), {x, row}, [ix, irow](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    t.accumulate(ix, g);
    t.accumulate(irow, Mat(g.colwise().sum()));
  });
}

Var relu(Var a) {
  const int ia = a.id;
  const Mat& x = a.val();
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) a.tape->fold_activation_bit(x(r, c) > 0.0);
  return make_op(*a.tape, a.val().cwiseMax(0.0), {a}, [ia](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& x = t.value_of(ia);
    t.accumulate(ia, Mat(g.cwiseProduct((x.array() > 0.0).cast<double>().matrix())));
  });
}

Var matmul(Var a, Var b) {
  require(a.val().cols() == b.val().rows(), "matmul: inner dimensions");
  const int ia = a.id, ib = b.id;
  return make_op(*a.tape, a.val() * b.val(), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    t.accumulate(ia, Mat(g * t.value_of(ib).transpose()));
    t.accumulate(ib, Mat(t.value_of(ia).transpose() * g));
  });
}

Var matmul_nt(Var a, Var b) {
  require(a.val().cols() == b.val().cols(), "matmul_nt: inner dimensions");
  const int ia = a.id, ib = b.id;
  return make_op(*a.tape, a.val() * b.val().transpose(), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    t.accumulate(ia, Mat(g * t.value_of(ib)));
    t.accumulate(ib, Mat(g.transpose() * t.value_of(ia)));
  });
}

Var slice_cols(Var a, int start, int len) {
  require(start >= 0 && len >= 0 && start + len <= a.val().cols(), "slice_cols: range");
  const int ia = a.id;
  return make_op(*a.tape, a.val().middleCols(start, len), {a},
                 [ia, start, len](Tape& t, int self) {
                   const Mat& g = t.grad_of(self);
                   Mat full = Mat::Zero(t.value_of(ia).rows(), t.value_of(ia).cols());
                   full.middleCols(start, len) = g;
                   t.accumulate(ia, full);
                 });
}

Var select_rows(Var a, std::vector<int> index) {
  const Mat& v = a.val();
  Mat out(static_cast<Eigen::Index>(index.size()), v.cols());
  for (size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < v.rows(), "select_rows: index");
    out.row(static_cast<Eigen::Index>(i)) = v.row(index[i]);
  }
  const int ia = a.id;
  return make_op(*a.tape, std::move(out), {a},
                 [ia, index = std::move(index)](Tape& t, int self) {
                   const Mat& g = t.grad_of(self);
                   Mat full = Mat::Zero(t.value_of(ia).rows(), t.value_of(ia).cols());
                   for (size_t i = 0; i < index.size(); ++i)
                     full.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
                   t.accumulate(ia, full);
                 });
}

Var scatter_rows(Var a, std::vector<int> index, int total_rows) {
  const Mat& v = a.val();
  require(static_cast<size_t>(v.rows()) == index.size(), "scatter_rows: row count");
  Mat out = Mat::Zero(total_rows, v.cols());
  for (size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < total_rows, "scatter_rows: index");
    out.row(index[i]) = v.row(static_cast<Eigen::Index>(i));
  }
  const int ia = a.id;
  return make_op(*a.tape, std::move(out), {a},
                 [ia, index = std::move(index)](Tape& t, int self) {
                   const Mat& g = t.grad_of(self);
                   Mat part(t.value_of(ia).rows(), t.value_of(ia).cols());
                   for (size_t i = 0; i < index.size(); ++i)
                     part.row(static_cast<Eigen::Index>(i)) = g.row(index[i]);
                   t.accumulate(ia, part);
                 });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: empty");
  Tape& t = *parts[0].tape;
  const Eigen::Index rows = parts[0].val().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require(p.valid() && p.tape == &t && p.val().rows() == rows, "concat_cols: shapes");
    cols += p.val().cols();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  std::vector<int> ids;
  std::vector<int> widths;
  for (const Var& p : parts) {
    out.middleCols(at, p.val().cols()) = p.val();
    ids.push_back(p.id);
    widths.push_back(static_cast<int>(p.val().cols()));
    at += p.val().cols();
  }
  return make_op(t, std::move(out), parts,
                 [ids = std::move(ids), widths = std::move(widths)](Tape& tape, int self) {
                   const Mat& g = tape.grad_of(self);
                   Eigen::Index at = 0;
                   for (size_t i = 0; i < ids.size(); ++i) {
                     tape.accumulate(ids[i], Mat(g.middleCols(at, widths[i])));
                     at += widths[i];
                   }
                 });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: empty");
  Tape& t = *parts[0].tape;
  const Eigen::Index cols = parts[0].val().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    require(p.valid() && p.tape == &t && p.val().cols() == cols, "concat_rows: shapes");
    rows += p.val().rows();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  std::vector<int> ids;
  std::vector<int> heights;
  for (const Var& p : parts) {
    out.middleRows(at, p.val().rows()) = p.val();
    ids.push_back(p.id);
    heights.push_back(static_cast<int>(p.val().rows()));
    at += p.val().rows();
  }
  return make_op(t, std::move(out), parts,
                 [ids = std::move(ids), heights = std::move(heights)](Tape& tape, int self) {
                   const Mat& g = tape.grad_of(self);
                   Eigen::Index at = 0;
                   for (size_t i = 0; i < ids.size(); ++i) {
                     tape.accumulate(ids[i], Mat(g.middleRows(at, heights[i])));
                     at += heights[i];
                   }
                 });
}

Var masked_softmax_rows(Var scores, Mat mask, double inv_scale) {
  const Mat& s = scores.val();
  require(s.rows() == mask.rows() && s.cols() == mask.cols(), "masked_softmax: mask shape");
  Mat y(s.rows(), s.cols());
  std::vector<char> dead(static_cast<size_t>(s.rows()), 0);
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    bool all_masked = true;
    for (Eigen::Index c = 0; c < s.cols(); ++c) all_masked &= (mask(r, c) <= kDeadMaskLevel);
    if (all_masked) {
      y.row(r).setZero();
      dead[static_cast<size_t>(r)] = 1;
      continue;
    }
    Eigen::RowVectorXd z = (s.row(r) + mask.row(r)) * inv_scale;
    const double zmax = z.maxCoeff();
    Eigen::RowVectorXd e = (z.array() - zmax).exp();
    y.row(r) = e / e.sum();
  }
  const int ia = scores.id;
  return make_op(*scores.tape, std::move(y), {scores},
                 [ia, dead = std::move(dead), inv_scale](Tape& t, int self) {
                   const Mat& g = t.grad_of(self);
                   const Mat& yv = t.value_of(self);
                   Mat ds(g.rows(), g.cols());
                   for (Eigen::Index r = 0; r < g.rows(); ++r) {
                     if (dead[static_cast<size_t>(r)]) {
                       ds.row(r).setZero();
                       continue;
                     }
                     const double dot = g.row(r).cwiseProduct(yv.row(r)).sum();
                     ds.row(r) =
                         yv.row(r).cwiseProduct((g.row(r).array() - dot).matrix()) * inv_scale;
                   }
                   t.accumulate(ia, ds);
                 });
}

Var layer_norm_rows(Var x, Var gain, Var bias) {
  const Mat& v = x.val();
  const Eigen::Index dim = v.cols();
  require(gain.val().rows() == 1 && gain.val().cols() == dim, "layer_norm: gain shape");
  require(bias.val().rows() == 1 && bias.val().cols() == dim, "layer_norm: bias shape");

  Mat xhat(v.rows(), dim);
  Eigen::VectorXd inv_std(v.rows());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double mu = v.row(r).mean();
    const Eigen::RowVectorXd d = v.row(r).array() - mu;
    const double var = d.squaredNorm() / static_cast<double>(dim);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std(r) = inv;
    xhat.row(r) = d * inv;
  }
  Mat out = (xhat.array().rowwise() * gain.val().row(0).array()).matrix();
  out.rowwise() += bias.val().row(0);

  const int ix = x.id, ig = gain.id, ib = bias.id;
  return make_op(*x.tape, std::move(out), {x, gain, bias},
                 [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std),
                  dim](Tape& t, int self) {
                   const Mat& g = t.grad_of(self);
                   const Eigen::RowVectorXd gamma = t.value_of(ig).row(0);
                   t.accumulate(ig, Mat(g.cwiseProduct(xhat).colwise().sum()));
                   t.accumulate(ib, Mat(g.colwise().sum()));
                   Mat dx(g.rows(), dim);
                   for (Eigen::Index r = 0; r < g.rows(); ++r) {
                     const Eigen::RowVectorXd dxhat = g.row(r).cwiseProduct(gamma);
                     const double m1 = dxhat.mean();
                     const double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
                     dx.row(r) = (dxhat.array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
                   }
                   t.accumulate(ix, dx);
                 });
}

Var dropout(Var x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) fail(ErrorKind::InvalidArgument, "dropout rate must be < 1");
  const Mat& v = x.val();
  Mat mask(v.rows(), v.cols());
  const double keep = 1.0 - rate;
  for (Eigen::Index r = 0; r < v.rows(); ++r)
    for (Eigen::Index c = 0; c < v.cols(); ++c)
      mask(r, c) = rng.uniform() < keep ? 1.0 / keep : 0.0;
  const int ia = x.id;
  Mat out = v.cwiseProduct(mask);
  return make_op(*x.tape, std::move(out), {x},
                 [ia, mask = std::move(mask)](Tape& t, int self) {
                   t.accumulate(ia, Mat(t.grad_of(self).cwiseProduct(mask)));
                 });
}

Var sum_all(Var a) {
  Mat out(1, 1);
  out(0, 0) = a.val().sum();
  const int ia = a.id;
  return make_op(*a.tape, std::move(out), {a}, [ia](Tape& t, int self) {
    const double g = t.grad_of(self)(0, 0);
    t.accumulate(ia, Mat(Mat::Constant(t.value_of(ia).rows(), t.value_of(ia).cols(), g)));
  });
}

Var mean_all(Var a) {
  const double n = static_cast<double>(a.val().size());
  Mat out(1, 1);
  out(0, 0) = a.val().mean();
  const int ia = a.id;
  return make_op(*a.tape, std::move(out), {a}, [ia, n](Tape& t, int self) {
    const double g = t.grad_of(self)(0, 0) / n;
    t.accumulate(ia, Mat(Mat::Constant(t.value_of(ia).rows(), t.value_of(ia).cols(), g)));
  });
}

Var weighted_sse(Var pred, Mat target, Mat weight, double denom) {
  const Mat& p = pred.val();
  require(p.rows() == target.rows() && p.cols() == target.cols(), "weighted_sse: target shape");
  require(p.rows() == weight.rows() && p.cols() == weight.cols(), "weighted_sse: weight shape");
  require(denom > 0.0, "weighted_sse: denom");
  const Mat diff = p - target;
  Mat out(1, 1);
  out(0, 0) = weight.cwiseProduct(diff).cwiseProduct(diff).sum() / denom;
  const int ia = pred.id;
  return make_op(*pred.tape, std::move(out), {pred},
                 [ia, target = std::move(target), weight = std::move(weight), denom](
                     Tape& t, int self) {
                   const double g = t.grad_of(self)(0, 0);
                   const Mat diff = t.value_of(ia) - target;
                   t.accumulate(ia, Mat(weight.cwiseProduct(diff) * (2.0 * g / denom)));
                 });
}

Var kl_gaussian(Var mu, Var log_var) {
  const Mat& m = mu.val();
  const Mat& lv = log_var.val();
  require(m.rows() == lv.rows() && m.cols() == lv.cols(), "kl_gaussian: shapes");
  const double rows = static_cast<double>(m.rows());
  Mat out(1, 1);
  out(0, 0) = 0.5 * (m.array().square() + lv.array().exp() - 1.0 - lv.array()).sum() / rows;
  const int im = mu.id, ilv = log_var.id;
  return make_op(*mu.tape, std::move(out), {mu, log_var}, [im, ilv, rows](Tape& t, int self) {
    const double s = t.grad_of(self)(0, 0) / rows;
    t.accumulate(im, Mat(t.value_of(im) * s));
    t.accumulate(ilv, Mat(((t.value_of(ilv).array().exp() - 1.0) * 0.5 * s).matrix()));
  });
}

Var reparameterize(Var mu, Var log_var, Mat noise) {
  const Mat& m = mu.val();
  const Mat& lv = log_var.val();
  require(m.rows() == lv.rows() && m.cols() == lv.cols(), "reparameterize: mu/log_var shapes");
  require(m.rows() == noise.rows() && m.cols() == noise.cols(), "reparameterize: noise shape");
  const Mat sigma = (lv.array() * 0.5).exp().matrix();
  Mat out = m + sigma.cwiseProduct(noise);
  const int im = mu.id, ilv = log_var.id;
  return make_op(*mu.tape, std::move(out), {mu, log_var},
                 [im, ilv, noise = std::move(noise)](Tape& t, int self) {
                   const Mat& g = t.grad_of(self);
                   t.accumulate(im, g);
                   const Mat sigma = (t.value_of(ilv).array() * 0.5).exp().matrix();
                   t.accumulate(ilv, Mat(g.cwiseProduct(sigma).cwiseProduct(noise) * 0.5));
                 });
}

}  // namespace octcast::ad

namespace octcast::ad {

Var cross_entropy_logits(Var logits, int target) {
  const Mat& z = logits.val();
  if (z.rows() != 1) fail(ErrorKind::ShapeMismatch, "cross_entropy: logits must be one row");
  if (target < 0 || target >= z.cols())
    fail(ErrorKind::InvalidArgument, "cross_entropy: target out of range");
  const double zmax = z.maxCoeff();
  const Eigen::RowVectorXd e = (z.row(0).array() - zmax).exp();
  const double lse = zmax + std::log(e.sum());
  Mat out(1, 1);
  out(0, 0) = lse - z(0, target);
  const int ia = logits.id;
  Eigen::RowVectorXd p = e / e.sum();
  const Var self = {logits.tape,
                    logits.tape->push(std::move(out), logits.tape->node_requires_grad(ia),
                                      [ia, p = std::move(p), target](Tape& t, int id) {
                                        const double g = t.grad_of(id)(0, 0);
                                        Mat d = p * g;
                                        d(0, target) -= g;
                                        t.accumulate(ia, d);
                                      })};
  return self;
}

}  // namespace octcast::ad
