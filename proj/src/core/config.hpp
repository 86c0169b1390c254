#pragma once

#include "core/common.hpp"

#include <json.hpp>

#include <set>
#include <string>

namespace octcast {

// Transformer and head sizes. Defaults follow the full-scale setup; desk
// runs override through config files or CLI flags.
struct ModelConfig {
  int T = 10;
  int F = 4;
  int D = 512;
  int heads = 8;
  int enc_blocks = 6;
  int dec_blocks = 4;
  double dropout = 0.1;
  int latent_dim = 256;
  double lambda_obj = 0.1;
  int K_samples = 20;
  int N_contacts = 5;
  int d_feat = 1024;
  std::string conditioning = "o_given_h";  // none | h_given_o | o_given_h
  int n_verbs = 0;  // anticipation head vocabulary; 0 disables the head
  int n_nouns = 0;
  std::set<std::string> ablate;  // token categories zeroed and padded

  int n_actions() const { return n_verbs * n_nouns; }
  void validate() const;
};

struct TrainConfig {
  double lr = 1e-4;
  int batch = 32;  // desk default; full-scale runs use 128
  int epochs = 35;
  int warmup_epochs = 5;
  std::string schedule = "warmup_cosine";
  uint64_t seed = 0;
  double lambda_obj = 0.1;
  std::set<std::string> ablate;

  void validate() const;
};

struct EvalConfig {
  int k = 20;
  int grid_h = 32;
  int grid_w = 32;
  double sigma = 0.05;
  uint64_t seed = 0;
  bool baselines = false;
  bool zero_noise = false;

  void validate() const;
};

struct AnticipateConfig {
  double lr = 1e-2;
  int epochs = 200;
  uint64_t seed = 0;
  double holdout_frac = 0.25;
  int n_verbs = 0;  // 0 = infer from the dataset
  int n_nouns = 0;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const EvalConfig& c);
nlohmann::json to_json(const AnticipateConfig& c);

ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
EvalConfig eval_config_from_json(const nlohmann::json& j);
AnticipateConfig anticipate_config_from_json(const nlohmann::json& j);

/// Layered option resolution: built-in defaults, then the config file, then
/// explicit CLI overrides. Keys absent from `defaults` are rejected
/// (fail-fast against typos).
nlohmann::json resolve_options(const nlohmann::json& defaults, const nlohmann::json& file_values,
                               const nlohmann::json& overrides);

/// Defaults for one option namespace: synth | labels | train | eval |
/// predict | anticipate.
nlohmann::json default_options(const std::string& kind);

nlohmann::json load_json_file(const std::string& path);

}  // namespace octcast
