#include "core/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace octcast::pipe {

using dataset::TrainingSample;
using nlohmann::json;

namespace {

constexpr double kDefaultLeftX = 0.25;
constexpr double kDefaultRightX = 0.75;
constexpr double kDefaultY = 1.5;

Eigen::Vector2d normalized_box_center(const Eigen::Vector4d& box) {
  return {0.5 * (box(0) + box(2)), 0.5 * (box(1) + box(3))};
}

Eigen::Vector2d default_location(int side) {
  return {side == 0 ? kDefaultLeftX : kDefaultRightX, kDefaultY};
}

// h_T: last-observation hand locations, defaults standing in for invisible sides
Eigen::RowVector4d last_observation_hands(const TrainingSample& s) {
  Eigen::RowVector4d h;
  for (int side = 0; side < 2; ++side) {
    const int t = s.T - 1;
    Eigen::Vector2d p = default_location(side);
    if (s.valid_hand[side][static_cast<size_t>(t)])
      p = normalized_box_center(s.box_hand[side][static_cast<size_t>(t)]);
    h(2 * side) = p.x();
    h(2 * side + 1) = p.y();
  }
  return h;
}

// gt future rows with defaults where a side is invisible, plus the 0/1 mask
std::pair<ad::Mat, ad::Mat> gt_rows_and_mask(const TrainingSample& s) {
  ad::Mat gt(s.F, 4);
  ad::Mat vis = ad::Mat::Zero(s.F, 4);
  for (int t = 0; t < s.F; ++t) {
    for (int side = 0; side < 2; ++side) {
      const bool v = s.gt_trajectory.visible[static_cast<size_t>(t)][static_cast<size_t>(side)];
      const auto& src = side == 0 ? s.gt_trajectory.left : s.gt_trajectory.right;
      const Eigen::Vector2d p = v ? src[static_cast<size_t>(t)] : default_location(side);
      gt(t, 2 * side) = p.x();
      gt(t, 2 * side + 1) = p.y();
      if (v) {
        vis(t, 2 * side) = 1.0;
        vis(t, 2 * side + 1) = 1.0;
      }
    }
  }
  return {gt, vis};
}

ad::Mat flatten_trajectory(const ad::Mat& rows) {
  ad::Mat flat(1, rows.rows() * 4);
  for (Eigen::Index t = 0; t < rows.rows(); ++t)
    for (int j = 0; j < 4; ++j) flat(0, 4 * t + j) = rows(t, j);
  return flat;
}

struct SampleLossValue {
  ad::Var total;
  double l_h = 0.0;
  double l_o = 0.0;
};

SampleLossValue sample_loss(ParamTape& pt, const TrainingSample& s, const ModelConfig& cfg,
                            double lambda, Rng& noise_rng, Rng* dropout_rng) {
  model::TokenSet ts = model::build_tokens(pt, s, cfg);
  model::apply_embeddings(pt, ts);
  const model::EncoderOutput enc = model::encode(pt, ts, cfg, dropout_rng);

  const auto [gt, vis] = gt_rows_and_mask(s);
  ad::Mat history(s.F, 4);
  history.row(0) = last_observation_hands(s);
  for (int t = 1; t < s.F; ++t) history.row(t) = gt.row(t - 1);  // teacher forcing

  const ad::Var feats = model::decode(pt, history, enc, cfg, dropout_rng);
  const ad::Mat hand_noise = noise_rng.normal_matrix(s.F, cfg.latent_dim);
  const ad::Var l_h = model::hand_head_loss(pt, gt, vis, feats, hand_noise, cfg.latent_dim);

  SampleLossValue out;
  out.l_h = l_h.val()(0, 0);
  if (!s.gt_contacts.points.empty()) {
    const int pick = noise_rng.uniform_int(static_cast<int>(s.gt_contacts.points.size()));
    const ad::Mat obj_noise = noise_rng.normal_matrix(1, cfg.latent_dim);
    const ad::Var cond = model::object_condition(pt, enc.z_gT, flatten_trajectory(gt),
                                                 model::conditioning_mode(cfg.conditioning));
    const ad::Var l_o = model::object_head_loss(
        pt, s.gt_contacts.points[static_cast<size_t>(pick)], cond, obj_noise, cfg.latent_dim);
    out.l_o = l_o.val()(0, 0);
    out.total = ad::add(l_h, ad::scale(l_o, lambda));
  } else {
    out.total = l_h;
  }
  return out;
}

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::map<std::string, Eigen::MatrixXd> m;
  std::map<std::string, Eigen::MatrixXd> v;

  void step(ParamStore& weights, const std::map<std::string, Eigen::MatrixXd>& grads, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (const auto& [name, g] : grads) {
      auto mi = m.find(name);
      if (mi == m.end()) {
        m[name] = Eigen::MatrixXd::Zero(g.rows(), g.cols());
        v[name] = Eigen::MatrixXd::Zero(g.rows(), g.cols());
        mi = m.find(name);
      }
      auto& mm = mi->second;
      auto& vv = v[name];
      mm = beta1 * mm + (1.0 - beta1) * g;
      vv = beta2 * vv + (1.0 - beta2) * g.cwiseProduct(g);
      const Eigen::MatrixXd mhat = mm / c1;
      const Eigen::MatrixXd vhat = vv / c2;
      weights.at(name) -=
          lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
    }
  }
};

void check_dataset_shapes(const std::vector<TrainingSample>& data) {
  if (data.empty()) fail(ErrorKind::SchemaError, "dataset is empty");
  for (const auto& s : data) {
    s.validate();
    if (s.T != data[0].T || s.F != data[0].F || s.d_feat != data[0].d_feat)
      fail(ErrorKind::SchemaError, "dataset mixes sample shapes");
  }
}

}  // namespace

double total_loss(double l_h, double l_o, double lambda) {
  if (lambda < 0.0) fail(ErrorKind::InvalidArgument, "lambda must be >= 0");
  return l_h + lambda * l_o;
}

double lr_at(int64_t step, int64_t total_steps, const TrainConfig& cfg) {
  if (step < 0 || step > total_steps) fail(ErrorKind::InvalidArgument, "step outside schedule");
  const double warmup_frac =
      static_cast<double>(cfg.warmup_epochs) / static_cast<double>(cfg.epochs);
  const auto warmup_steps = static_cast<int64_t>(std::llround(warmup_frac * total_steps));
  if (step < warmup_steps)
    return cfg.lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (total_steps == warmup_steps) return cfg.lr;
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return cfg.lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

TrainResult train(const std::vector<TrainingSample>& data, const TrainConfig& tcfg,
                  ModelConfig mcfg, const CheckpointFn& checkpoint) {
  tcfg.validate();
  check_dataset_shapes(data);

  // the dataset decides the geometry; config supplies the rest
  mcfg.T = data[0].T;
  mcfg.F = data[0].F;
  mcfg.d_feat = data[0].d_feat;
  mcfg.ablate = tcfg.ablate;
  int max_verb = -1;
  int max_noun = -1;
  for (const auto& s : data) {
    if (!s.has_action) continue;
    max_verb = std::max(max_verb, s.verb);
    max_noun = std::max(max_noun, s.noun);
  }
  mcfg.n_verbs = std::max(mcfg.n_verbs, max_verb + 1);
  mcfg.n_nouns = std::max(mcfg.n_nouns, max_noun + 1);
  mcfg.validate();

  const int n = static_cast<int>(data.size());
  ParamStore weights = init_model_weights(mcfg, tcfg.seed);
  Adam adam;
  Rng shuffle_rng(mix_seed(tcfg.seed, 101));
  Rng noise_rng(mix_seed(tcfg.seed, 102));
  Rng dropout_rng(mix_seed(tcfg.seed, 103));
  Rng* drop = mcfg.dropout > 0.0 ? &dropout_rng : nullptr;

  const int64_t steps_per_epoch = (n + tcfg.batch - 1) / tcfg.batch;
  const int64_t total_steps = steps_per_epoch * tcfg.epochs;
  int64_t step = 0;

  TrainResult result;
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_lh = 0.0;
    double epoch_lo = 0.0;
    double last_lr = 0.0;
    for (int64_t b = 0; b < steps_per_epoch; ++b) {
      const int begin = static_cast<int>(b) * tcfg.batch;
      const int end = std::min(n, begin + tcfg.batch);
      std::map<std::string, Eigen::MatrixXd> grads;
      for (int i = begin; i < end; ++i) {
        ParamTape pt(weights);
        const SampleLossValue loss =
            sample_loss(pt, data[static_cast<size_t>(order[static_cast<size_t>(i)])], mcfg,
                        tcfg.lambda_obj, noise_rng, drop);
        const double value = loss.total.val()(0, 0);
        if (!std::isfinite(value))
          fail(ErrorKind::NonFiniteLoss,
               "loss diverged at epoch " + std::to_string(epoch));
        epoch_lh += loss.l_h;
        epoch_lo += loss.l_o;
        pt.tape().backward(loss.total);
        for (auto& [name, g] : pt.grads()) {
          auto it = grads.find(name);
          if (it == grads.end()) {
            grads.emplace(name, g);
          } else {
            it->second += g;
          }
        }
      }
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      for (auto& [name, g] : grads) g *= inv_batch;
      last_lr = lr_at(step, total_steps, tcfg);
      adam.step(weights, grads, last_lr);
      ++step;
    }
    EpochLog log;
    log.epoch = epoch;
    log.lr = last_lr;
    log.l_h = epoch_lh / n;
    log.l_o = epoch_lo / n;
    log.total = total_loss(log.l_h, log.l_o, tcfg.lambda_obj);
    result.log.push_back(log);
    if (checkpoint) checkpoint(weights, mcfg, epoch);
  }

  result.weights = std::move(weights);
  result.model = mcfg;
  return result;
}

metrics::AffordanceHeatmap rasterize_heatmap(const std::vector<Eigen::Vector2d>& points,
                                             double sigma, int grid_h, int grid_w) {
  if (points.empty()) fail(ErrorKind::EmptyPoints, "no points to rasterize");
  if (sigma <= 0.0 || grid_h < 1 || grid_w < 1)
    fail(ErrorKind::InvalidArgument, "bad rasterization parameters");
  metrics::AffordanceHeatmap out;
  out.grid = Eigen::MatrixXd::Zero(grid_h, grid_w);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int r = 0; r < grid_h; ++r) {
    const double cy = (r + 0.5) / grid_h;
    for (int c = 0; c < grid_w; ++c) {
      const double cx = (c + 0.5) / grid_w;
      double acc = 0.0;
      for (const auto& p : points) {
        const double d2 = (cx - p.x()) * (cx - p.x()) + (cy - p.y()) * (cy - p.y());
        acc += std::exp(-d2 * inv);
      }
      out.grid(r, c) = acc;
    }
  }
  const double total = out.grid.sum();
  if (total <= 0.0) fail(ErrorKind::AllZero, "rasterized heatmap has no mass");
  out.grid /= total;
  return out;
}

ForecastResult forecast(const TrainingSample& sample, const ParamStore& weights,
                        const ModelConfig& cfg, const EvalConfig& opts, uint64_t seed) {
  sample.validate();
  if (sample.T != cfg.T || sample.F != cfg.F || sample.d_feat != cfg.d_feat)
    fail(ErrorKind::SchemaError, "sample shape differs from the model");
  const model::ConditioningMode mode = model::conditioning_mode(cfg.conditioning);

  ParamTape pt(weights);
  model::TokenSet ts = model::build_tokens(pt, sample, cfg);
  model::apply_embeddings(pt, ts);
  const model::EncoderOutput enc = model::encode(pt, ts, cfg, nullptr);

  ForecastResult out;
  std::vector<Eigen::Vector2d> all_points;
  const Eigen::RowVector4d h_T = last_observation_hands(sample);
  for (int k = 0; k < opts.k; ++k) {
    Rng rollout_rng(mix_seed(seed, 1000 + static_cast<uint64_t>(k)));
    ad::Mat history(1, 4);
    history.row(0) = h_T;
    geom::HandTrajectory traj;
    traj.horizon = sample.F;
    for (int t = 1; t <= sample.F; ++t) {
      const ad::Var feat = model::decode_step(pt, history, enc, cfg, nullptr);
      const ad::Mat z = opts.zero_noise ? ad::Mat::Zero(1, cfg.latent_dim)
                                        : rollout_rng.normal_matrix(1, cfg.latent_dim);
      const ad::Mat pred = model::sample_hand(pt, feat, z).val();
      traj.left.emplace_back(pred(0, 0), pred(0, 1));
      traj.right.emplace_back(pred(0, 2), pred(0, 3));
      traj.visible.push_back({true, true});
      ad::Mat grown(history.rows() + 1, 4);
      grown << history, pred;
      history = std::move(grown);
    }

    ad::Var cond = enc.z_gT;
    if (mode == model::ConditioningMode::OGivenH) {
      ad::Mat traj_rows(sample.F, 4);
      for (int t = 0; t < sample.F; ++t) {
        traj_rows(t, 0) = traj.left[static_cast<size_t>(t)].x();
        traj_rows(t, 1) = traj.left[static_cast<size_t>(t)].y();
        traj_rows(t, 2) = traj.right[static_cast<size_t>(t)].x();
        traj_rows(t, 3) = traj.right[static_cast<size_t>(t)].y();
      }
      cond = model::object_condition(pt, enc.z_gT, flatten_trajectory(traj_rows), mode);
    }
    std::vector<Eigen::Vector2d> contacts;
    for (int j = 0; j < cfg.N_contacts; ++j) {
      const ad::Mat z = opts.zero_noise ? ad::Mat::Zero(1, cfg.latent_dim)
                                        : rollout_rng.normal_matrix(1, cfg.latent_dim);
      const ad::Mat p = model::sample_contact(pt, cond, z).val();
      contacts.emplace_back(std::clamp(p(0, 0), 0.0, 1.0), std::clamp(p(0, 1), 0.0, 1.0));
      all_points.push_back(contacts.back());
    }
    out.trajectories.push_back(std::move(traj));
    out.contacts.push_back(std::move(contacts));
  }
  out.heatmap = rasterize_heatmap(all_points, opts.sigma, opts.grid_h, opts.grid_w);
  return out;
}

std::vector<Eigen::Vector2d> kalman_predict(
    const std::vector<std::optional<Eigen::Vector2d>>& observed, int horizon) {
  int valid = 0;
  int first = -1;
  for (size_t t = 0; t < observed.size(); ++t) {
    if (observed[t].has_value()) {
      ++valid;
      if (first < 0) first = static_cast<int>(t);
    }
  }
  if (valid < 2)
    fail(ErrorKind::InsufficientObservations, "constant-velocity filter needs >= 2 observations");

  Eigen::Matrix4d a = Eigen::Matrix4d::Identity();
  a(0, 2) = 1.0;
  a(1, 3) = 1.0;
  const Eigen::Matrix4d q = 1e-4 * Eigen::Matrix4d::Identity();
  const Eigen::Matrix2d r = 1e-2 * Eigen::Matrix2d::Identity();
  Eigen::Matrix<double, 2, 4> h = Eigen::Matrix<double, 2, 4>::Zero();
  h(0, 0) = 1.0;
  h(1, 1) = 1.0;

  Eigen::Vector4d x = Eigen::Vector4d::Zero();
  x.head<2>() = *observed[static_cast<size_t>(first)];
  Eigen::Matrix4d p = Eigen::Matrix4d::Identity();
  p(0, 0) = p(1, 1) = 1e-2;

  for (size_t t = static_cast<size_t>(first) + 1; t < observed.size(); ++t) {
    x = a * x;
    p = a * p * a.transpose() + q;
    if (observed[t].has_value()) {
      const Eigen::Matrix2d s = h * p * h.transpose() + r;
      const Eigen::Matrix<double, 4, 2> k = p * h.transpose() * s.inverse();
      x += k * (*observed[t] - h * x);
      p = (Eigen::Matrix4d::Identity() - k * h) * p;
    }
  }

  std::vector<Eigen::Vector2d> out;
  for (int j = 0; j < horizon; ++j) {
    x = a * x;
    out.emplace_back(x(0), x(1));
  }
  return out;
}

geom::HandTrajectory kalman_baseline(const TrainingSample& sample) {
  geom::HandTrajectory traj;
  traj.horizon = sample.F;
  traj.left.assign(static_cast<size_t>(sample.F), Eigen::Vector2d::Zero());
  traj.right.assign(static_cast<size_t>(sample.F), Eigen::Vector2d::Zero());
  traj.visible.assign(static_cast<size_t>(sample.F), {true, true});
  for (int side = 0; side < 2; ++side) {
    std::vector<std::optional<Eigen::Vector2d>> obs;
    Eigen::Vector2d last = default_location(side);
    int valid = 0;
    for (int t = 0; t < sample.T; ++t) {
      if (sample.valid_hand[side][static_cast<size_t>(t)]) {
        last = normalized_box_center(sample.box_hand[side][static_cast<size_t>(t)]);
        obs.emplace_back(last);
        ++valid;
      } else {
        obs.emplace_back(std::nullopt);
      }
    }
    auto& dst = side == 0 ? traj.left : traj.right;
    if (valid >= 2) {
      const auto pred = kalman_predict(obs, sample.F);
      for (int t = 0; t < sample.F; ++t) dst[static_cast<size_t>(t)] = pred[static_cast<size_t>(t)];
    } else {
      // too little evidence: hold the last (or default) position
      for (int t = 0; t < sample.F; ++t) dst[static_cast<size_t>(t)] = last;
    }
  }
  return traj;
}

metrics::AffordanceHeatmap center_baseline(int grid_h, int grid_w, double sigma) {
  return rasterize_heatmap({{0.5, 0.5}}, sigma, grid_h, grid_w);
}

EvalReport evaluate(const std::vector<TrainingSample>& data, const ParamStore& weights,
                    const ModelConfig& cfg, const EvalConfig& opts) {
  opts.validate();
  check_dataset_shapes(data);
  if (data[0].T != cfg.T || data[0].F != cfg.F || data[0].d_feat != cfg.d_feat)
    fail(ErrorKind::SchemaError, "dataset shape differs from the trained model");

  const int n = static_cast<int>(data.size());
  std::vector<SampleEval> evals(static_cast<size_t>(n));
  std::vector<BaselineEval> base(static_cast<size_t>(n));
  const metrics::AffordanceHeatmap center =
      opts.baselines ? center_baseline(opts.grid_h, opts.grid_w, opts.sigma)
                     : metrics::AffordanceHeatmap{};
  const double nan = std::numeric_limits<double>::quiet_NaN();

  parallel_for(n, [&](int i) {
    const TrainingSample& s = data[static_cast<size_t>(i)];
    EvalConfig sample_opts = opts;
    const ForecastResult fc = forecast(s, weights, cfg, sample_opts,
                                       mix_seed(opts.seed, 7000 + static_cast<uint64_t>(i)));
    SampleEval e;
    e.id = s.id;
    try {
      e.ade_min = metrics::min_of_k(fc.trajectories, s.gt_trajectory, metrics::ade);
      e.fde_min = metrics::min_of_k(fc.trajectories, s.gt_trajectory, metrics::fde);
    } catch (const Error&) {
      e.ade_min = nan;
      e.fde_min = nan;
    }
    if (!s.gt_contacts.points.empty()) {
      const metrics::AffordanceHeatmap gt_heat =
          rasterize_heatmap(s.gt_contacts.points, opts.sigma, opts.grid_h, opts.grid_w);
      std::vector<metrics::Cell> cells;
      for (const auto& p : s.gt_contacts.points)
        cells.push_back(metrics::cell_of(p, opts.grid_h, opts.grid_w));
      e.sim = metrics::sim(fc.heatmap, gt_heat);
      e.auc_j = metrics::auc_judd(fc.heatmap, cells);
      e.nss = metrics::nss(fc.heatmap, cells);
      if (opts.baselines) {
        base[static_cast<size_t>(i)].center_sim = metrics::sim(center, gt_heat);
        base[static_cast<size_t>(i)].center_auc_j = metrics::auc_judd(center, cells);
        base[static_cast<size_t>(i)].center_nss = metrics::nss(center, cells);
      }
    } else {
      e.sim = nan;
      e.auc_j = nan;
      e.nss = nan;
    }
    if (opts.baselines) {
      const geom::HandTrajectory kf = kalman_baseline(s);
      try {
        base[static_cast<size_t>(i)].kf_ade = metrics::ade(kf, s.gt_trajectory);
        base[static_cast<size_t>(i)].kf_fde = metrics::fde(kf, s.gt_trajectory);
      } catch (const Error&) {
        base[static_cast<size_t>(i)].kf_ade = nan;
        base[static_cast<size_t>(i)].kf_fde = nan;
      }
    }
    evals[static_cast<size_t>(i)] = std::move(e);
  });

  EvalReport report;
  report.n = n;
  report.per_sample = evals;
  const auto mean_of = [&](const std::function<double(int)>& get) {
    double acc = 0.0;
    int terms = 0;
    for (int i = 0; i < n; ++i) {
      const double v = get(i);
      if (std::isnan(v)) continue;
      acc += v;
      ++terms;
    }
    return terms > 0 ? acc / terms : nan;
  };
  report.ade_min_k = mean_of([&](int i) { return evals[static_cast<size_t>(i)].ade_min; });
  report.fde_min_k = mean_of([&](int i) { return evals[static_cast<size_t>(i)].fde_min; });
  report.sim = mean_of([&](int i) { return evals[static_cast<size_t>(i)].sim; });
  report.auc_j = mean_of([&](int i) { return evals[static_cast<size_t>(i)].auc_j; });
  report.nss = mean_of([&](int i) { return evals[static_cast<size_t>(i)].nss; });
  if (opts.baselines) {
    BaselineEval agg;
    agg.kf_ade = mean_of([&](int i) { return base[static_cast<size_t>(i)].kf_ade; });
    agg.kf_fde = mean_of([&](int i) { return base[static_cast<size_t>(i)].kf_fde; });
    agg.center_sim = mean_of([&](int i) { return base[static_cast<size_t>(i)].center_sim; });
    agg.center_auc_j = mean_of([&](int i) { return base[static_cast<size_t>(i)].center_auc_j; });
    agg.center_nss = mean_of([&](int i) { return base[static_cast<size_t>(i)].center_nss; });
    report.baselines = agg;
  }
  return report;
}

namespace {

json safe_number(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

json report_to_json(const EvalReport& report) {
  json per = json::array();
  for (const auto& e : report.per_sample) {
    per.push_back({{"id", e.id},
                   {"ade_min20", safe_number(e.ade_min)},
                   {"fde_min20", safe_number(e.fde_min)},
                   {"sim", safe_number(e.sim)},
                   {"auc_j", safe_number(e.auc_j)},
                   {"nss", safe_number(e.nss)}});
  }
  json out{{"n", report.n},
           {"ade_min20", safe_number(report.ade_min_k)},
           {"fde_min20", safe_number(report.fde_min_k)},
           {"sim", safe_number(report.sim)},
           {"auc_j", safe_number(report.auc_j)},
           {"nss", safe_number(report.nss)},
           {"per_sample", per}};
  if (report.baselines.has_value()) {
    out["baselines"] = {{"kf_ade", safe_number(report.baselines->kf_ade)},
                        {"kf_fde", safe_number(report.baselines->kf_fde)},
                        {"center_sim", safe_number(report.baselines->center_sim)},
                        {"center_auc_j", safe_number(report.baselines->center_auc_j)},
                        {"center_nss", safe_number(report.baselines->center_nss)}};
  }
  return out;
}

json forecast_to_json(const ForecastResult& result) {
  json trajectories = json::array();
  for (const auto& t : result.trajectories) {
    json steps = json::array();
    for (int i = 0; i < t.horizon; ++i) {
      steps.push_back(json::array(
          {json::array({t.left[static_cast<size_t>(i)].x(), t.left[static_cast<size_t>(i)].y()}),
           json::array(
               {t.right[static_cast<size_t>(i)].x(), t.right[static_cast<size_t>(i)].y()})}));
    }
    trajectories.push_back(std::move(steps));
  }
  json contacts = json::array();
  for (const auto& set : result.contacts) {
    json points = json::array();
    for (const auto& p : set) points.push_back(json::array({p.x(), p.y()}));
    contacts.push_back(std::move(points));
  }
  json data = json::array();
  for (Eigen::Index r = 0; r < result.heatmap.grid.rows(); ++r)
    for (Eigen::Index c = 0; c < result.heatmap.grid.cols(); ++c)
      data.push_back(result.heatmap.grid(r, c));
  return json{{"trajectories", trajectories},
              {"contacts", contacts},
              {"heatmap",
               {{"h", result.heatmap.height()}, {"w", result.heatmap.width()}, {"data", data}}}};
}

json epoch_log_to_json(const EpochLog& log) {
  return json{{"epoch", log.epoch},
              {"lr", log.lr},
              {"L_H", log.l_h},
              {"L_O", log.l_o},
              {"total", log.total}};
}

AnticipationReport train_anticipation(const std::vector<TrainingSample>& data,
                                      ParamStore& weights, ModelConfig& cfg,
                                      const AnticipateConfig& opts) {
  opts.validate();
  check_dataset_shapes(data);
  if (data[0].T != cfg.T || data[0].F != cfg.F || data[0].d_feat != cfg.d_feat)
    fail(ErrorKind::SchemaError, "dataset shape differs from the trained model");
  for (const auto& s : data) {
    if (!s.has_action) fail(ErrorKind::SchemaError, "dataset lacks action labels");
  }

  int max_verb = 0;
  int max_noun = 0;
  for (const auto& s : data) {
    max_verb = std::max(max_verb, s.verb);
    max_noun = std::max(max_noun, s.noun);
  }
  if (cfg.n_verbs == 0) cfg.n_verbs = max_verb + 1;
  if (cfg.n_nouns == 0) cfg.n_nouns = max_noun + 1;
  if (max_verb >= cfg.n_verbs || max_noun >= cfg.n_nouns)
    fail(ErrorKind::SchemaError, "action labels exceed the verb/noun vocabulary");
  const int actions = cfg.n_actions();

  // (re)initialize the head when absent or sized for another vocabulary
  if (!weights.contains("ant.w2") || weights.at("ant.w2").cols() != actions) {
    Rng rng(mix_seed(opts.seed, 77));
    const double bound1 = 1.0 / std::sqrt(static_cast<double>(cfg.D));
    Eigen::MatrixXd w1(cfg.D, cfg.D);
    for (Eigen::Index i = 0; i < w1.size(); ++i)
      w1(i / cfg.D, i % cfg.D) = rng.uniform(-bound1, bound1);
    Eigen::MatrixXd w2(cfg.D, actions);
    for (Eigen::Index i = 0; i < w2.size(); ++i)
      w2(i / actions, i % actions) = rng.uniform(-bound1, bound1);
    weights.set("ant.w1", w1);
    weights.set("ant.b1", Eigen::MatrixXd::Zero(1, cfg.D));
    weights.set("ant.w2", w2);
    weights.set("ant.b2", Eigen::MatrixXd::Zero(1, actions));
  }

  // frozen encoder: cache the last-frame global token per sample
  const int n = static_cast<int>(data.size());
  std::vector<Eigen::MatrixXd> z_gT(static_cast<size_t>(n));
  parallel_for(n, [&](int i) {
    ParamTape pt(weights);
    model::TokenSet ts = model::build_tokens(pt, data[static_cast<size_t>(i)], cfg);
    model::apply_embeddings(pt, ts);
    z_gT[static_cast<size_t>(i)] = model::encode(pt, ts, cfg, nullptr).z_gT.val();
  });

  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng split_rng(mix_seed(opts.seed, 50));
  split_rng.shuffle(order);
  const int n_eval = std::max(1, static_cast<int>(std::lround(opts.holdout_frac * n)));
  if (n_eval >= n) fail(ErrorKind::SchemaError, "not enough samples to split");
  const std::vector<int> eval_idx(order.begin(), order.begin() + n_eval);
  const std::vector<int> train_idx(order.begin() + n_eval, order.end());

  const auto action_of = [&](const TrainingSample& s) { return s.verb * cfg.n_nouns + s.noun; };

  Adam adam;
  const std::vector<std::string> head = {"ant.w1", "ant.b1", "ant.w2", "ant.b2"};
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    ParamTape pt(weights);
    ad::Var loss;
    for (int i : train_idx) {
      const ad::Var z = pt.tape().constant(z_gT[static_cast<size_t>(i)]);
      const ad::Var logits = model::anticipation_logits(pt, z);
      const ad::Var ce =
          ad::cross_entropy_logits(logits, action_of(data[static_cast<size_t>(i)]));
      loss = loss.valid() ? ad::add(loss, ce) : ce;
    }
    loss = ad::scale(loss, 1.0 / static_cast<double>(train_idx.size()));
    if (!std::isfinite(loss.val()(0, 0)))
      fail(ErrorKind::NonFiniteLoss, "anticipation loss diverged");
    pt.tape().backward(loss);
    auto grads = pt.grads();
    std::map<std::string, Eigen::MatrixXd> head_grads;
    for (const auto& name : head) {
      auto it = grads.find(name);
      if (it != grads.end()) head_grads[name] = it->second;
    }
    adam.step(weights, head_grads, opts.lr);
  }

  // holdout accuracy
  const auto topk_hit = [](const Eigen::VectorXd& scores, int target, int k) {
    int better = 0;
    for (Eigen::Index i = 0; i < scores.size(); ++i)
      if (scores(i) > scores(target)) ++better;
    return better < k;
  };
  std::vector<int> verb_map, noun_map;
  for (int a = 0; a < actions; ++a) {
    verb_map.push_back(a / cfg.n_nouns);
    noun_map.push_back(a % cfg.n_nouns);
  }

  AnticipationReport report;
  report.n_train = static_cast<int>(train_idx.size());
  report.n_eval = n_eval;
  for (int i : eval_idx) {
    ParamTape pt(weights);
    const ad::Var z = pt.tape().constant(z_gT[static_cast<size_t>(i)]);
    const Eigen::VectorXd logits =
        model::anticipation_logits(pt, z).val().row(0).transpose();
    const auto [verbs, nouns] = model::marginalize(logits, verb_map, noun_map, cfg.n_verbs,
                                                   cfg.n_nouns);
    const TrainingSample& s = data[static_cast<size_t>(i)];
    report.action_top1 += topk_hit(logits, action_of(s), 1) ? 1.0 : 0.0;
    report.action_top5 += topk_hit(logits, action_of(s), 5) ? 1.0 : 0.0;
    report.verb_top1 += topk_hit(verbs, s.verb, 1) ? 1.0 : 0.0;
    report.verb_top5 += topk_hit(verbs, s.verb, 5) ? 1.0 : 0.0;
    report.noun_top1 += topk_hit(nouns, s.noun, 1) ? 1.0 : 0.0;
    report.noun_top5 += topk_hit(nouns, s.noun, 5) ? 1.0 : 0.0;
  }
  for (double* v : {&report.verb_top1, &report.noun_top1, &report.action_top1, &report.verb_top5,
                    &report.noun_top5, &report.action_top5})
    *v /= n_eval;
  return report;
}

json anticipation_report_to_json(const AnticipationReport& r) {
  return json{{"n_train", r.n_train},
              {"n_eval", r.n_eval},
              {"verb_top1", r.verb_top1},
              {"noun_top1", r.noun_top1},
              {"action_top1", r.action_top1},
              {"verb_top5", r.verb_top5},
              {"noun_top5", r.noun_top5},
              {"action_top5", r.action_top5}};
}

}  // namespace octcast::pipe
