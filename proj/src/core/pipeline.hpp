#pragma once

#include "core/dataset.hpp"
#include "core/heads.hpp"
#include "core/metrics.hpp"

#include <json.hpp>

#include <functional>
#include <optional>

namespace octcast::pipe {

double total_loss(double l_h, double l_o, double lambda);

/// Linear warmup to lr over the warmup steps, then cosine decay to zero.
double lr_at(int64_t step, int64_t total_steps, const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double l_h = 0.0;
  double l_o = 0.0;
  double total = 0.0;
};

struct TrainResult {
  ParamStore weights;
  ModelConfig model;
  std::vector<EpochLog> log;
};

using CheckpointFn = std::function<void(const ParamStore&, const ModelConfig&, int epoch)>;

/// Adam over the teacher-forced hand and object C-VAE losses. T, F, d_feat
/// and the action vocabulary are adopted from the dataset; `ablate` zeroes
/// whole token categories (stored with the weights so inference matches).
/// Deterministic given the seed. The checkpoint callback runs after every
/// epoch; on a non-finite loss the last checkpointed state stands.
TrainResult train(const std::vector<dataset::TrainingSample>& data, const TrainConfig& tcfg,
                  ModelConfig mcfg, const CheckpointFn& checkpoint = nullptr);

struct ForecastResult {
  std::vector<geom::HandTrajectory> trajectories;        // K rollouts
  std::vector<std::vector<Eigen::Vector2d>> contacts;    // K x N points
  metrics::AffordanceHeatmap heatmap;
};

/// K autoregressive rollouts sharing one encoder pass, each feeding back its
/// own sampled hand locations; invisible last-frame hands start from the
/// (0.25, 1.5) / (0.75, 1.5) defaults. Contacts are drawn conditioned on each
/// rollout's own trajectory and rasterized into a single heatmap.
ForecastResult forecast(const dataset::TrainingSample& sample, const ParamStore& weights,
                        const ModelConfig& cfg, const EvalConfig& opts, uint64_t seed);

/// Sum of isotropic Gaussians at the cell centers, normalized to sum 1.
metrics::AffordanceHeatmap rasterize_heatmap(const std::vector<Eigen::Vector2d>& points,
                                             double sigma, int grid_h, int grid_w);

/// Constant-velocity filter over the observed centers, then F prediction-only
/// steps. Needs at least two observations.
std::vector<Eigen::Vector2d> kalman_predict(const std::vector<std::optional<Eigen::Vector2d>>& observed,
                                            int horizon);

/// Per-hand Kalman predictions from the sample's observed boxes; sides with
/// too few observations fall back to the last position or default location.
geom::HandTrajectory kalman_baseline(const dataset::TrainingSample& sample);

metrics::AffordanceHeatmap center_baseline(int grid_h, int grid_w, double sigma);

struct SampleEval {
  std::string id;
  double ade_min = 0.0;
  double fde_min = 0.0;
  double sim = 0.0;
  double auc_j = 0.0;
  double nss = 0.0;
};

struct BaselineEval {
  double kf_ade = 0.0;
  double kf_fde = 0.0;
  double center_sim = 0.0;
  double center_auc_j = 0.0;
  double center_nss = 0.0;
};

struct EvalReport {
  int n = 0;
  double ade_min_k = 0.0;
  double fde_min_k = 0.0;
  double sim = 0.0;
  double auc_j = 0.0;
  double nss = 0.0;
  std::vector<SampleEval> per_sample;
  std::optional<BaselineEval> baselines;
};

/// Forecast + metric suite over a split; per-sample work is parallel with
/// per-sample seeds, so reports are deterministic for a fixed seed.
EvalReport evaluate(const std::vector<dataset::TrainingSample>& data, const ParamStore& weights,
                    const ModelConfig& cfg, const EvalConfig& opts);

nlohmann::json report_to_json(const EvalReport& report);
nlohmann::json forecast_to_json(const ForecastResult& result);
nlohmann::json epoch_log_to_json(const EpochLog& log);

struct AnticipationReport {
  int n_train = 0;
  int n_eval = 0;
  double verb_top1 = 0.0, noun_top1 = 0.0, action_top1 = 0.0;
  double verb_top5 = 0.0, noun_top5 = 0.0, action_top5 = 0.0;
};

/// Trains only the anticipation MLP on cached encoder outputs (the encoder
/// stays frozen) and reports holdout accuracy. The weight store gains or
/// updates the ant.* tensors in place.
AnticipationReport train_anticipation(const std::vector<dataset::TrainingSample>& data,
                                      ParamStore& weights, ModelConfig& cfg,
                                      const AnticipateConfig& opts);

nlohmann::json anticipation_report_to_json(const AnticipationReport& report);

}  // namespace octcast::pipe
