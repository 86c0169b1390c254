#include "core/config.hpp"

#include <fstream>
#include <sstream>

namespace octcast {

using nlohmann::json;

namespace {

void expect_kind(const json& v, json::value_t kind, const std::string& key) {
  const bool numeric_ok =
      (kind == json::value_t::number_float && v.is_number()) ||
      (kind == json::value_t::number_integer && v.is_number_integer()) ||
      (kind == json::value_t::number_unsigned && v.is_number_integer());
  if (v.type() == kind || numeric_ok) return;
  fail(ErrorKind::ConfigError, "config key '" + key + "' has the wrong type");
}

int get_int(const json& j, const char* key) {
  expect_kind(j.at(key), json::value_t::number_integer, key);
  return j.at(key).get<int>();
}

double get_double(const json& j, const char* key) {
  expect_kind(j.at(key), json::value_t::number_float, key);
  return j.at(key).get<double>();
}

uint64_t get_seed(const json& j, const char* key) {
  expect_kind(j.at(key), json::value_t::number_unsigned, key);
  return j.at(key).get<uint64_t>();
}

std::string get_string(const json& j, const char* key) {
  expect_kind(j.at(key), json::value_t::string, key);
  return j.at(key).get<std::string>();
}

bool get_bool(const json& j, const char* key) {
  expect_kind(j.at(key), json::value_t::boolean, key);
  return j.at(key).get<bool>();
}

std::set<std::string> get_ablate(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_array()) fail(ErrorKind::ConfigError, "'ablate' must be an array of category names");
  std::set<std::string> out;
  for (const auto& item : v) {
    const std::string s = item.get<std::string>();
    if (s != "hand" && s != "object" && s != "global")
      fail(ErrorKind::ConfigError, "unknown ablate category '" + s + "'");
    out.insert(s);
  }
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (T < 1 || F < 1 || D < 1 || heads < 1 || enc_blocks < 0 || dec_blocks < 0 ||
      latent_dim < 1 || K_samples < 1 || N_contacts < 1 || d_feat < 1)
    fail(ErrorKind::ConfigError, "model config counts must be positive");
  if (D % heads != 0) fail(ErrorKind::ConfigError, "D must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0) fail(ErrorKind::ConfigError, "dropout must be in [0,1)");
  if (lambda_obj < 0.0) fail(ErrorKind::ConfigError, "lambda_obj must be >= 0");
  if (conditioning != "none" && conditioning != "h_given_o" && conditioning != "o_given_h")
    fail(ErrorKind::ConfigError, "conditioning must be none|h_given_o|o_given_h");
  if (n_verbs < 0 || n_nouns < 0)
    fail(ErrorKind::ConfigError, "anticipation vocabulary sizes must be >= 0");
}

void TrainConfig::validate() const {
  if (lr <= 0.0) fail(ErrorKind::ConfigError, "lr must be positive");
  if (batch < 1 || epochs < 1) fail(ErrorKind::ConfigError, "batch and epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs >= epochs)
    fail(ErrorKind::ConfigError, "warmup_epochs must be in [0, epochs)");
  if (schedule != "warmup_cosine") fail(ErrorKind::ConfigError, "unknown schedule");
  if (lambda_obj < 0.0) fail(ErrorKind::ConfigError, "lambda_obj must be >= 0");
  if (ablate.size() >= 3)
    fail(ErrorKind::AllTokensAblated, "cannot ablate hand, object and global together");
}

void EvalConfig::validate() const {
  if (k < 1) fail(ErrorKind::ConfigError, "k must be >= 1");
  if (grid_h < 1 || grid_w < 1) fail(ErrorKind::ConfigError, "grid must be >= 1");
  if (sigma <= 0.0) fail(ErrorKind::ConfigError, "sigma must be positive");
}

void AnticipateConfig::validate() const {
  if (lr <= 0.0 || epochs < 1) fail(ErrorKind::ConfigError, "bad anticipation training config");
  if (holdout_frac <= 0.0 || holdout_frac >= 1.0)
    fail(ErrorKind::ConfigError, "holdout_frac must be in (0,1)");
  if (n_verbs < 0 || n_nouns < 0)
    fail(ErrorKind::ConfigError, "vocabulary sizes must be >= 0");
}

json to_json(const ModelConfig& c) {
  return json{{"T", c.T},
              {"F", c.F},
              {"D", c.D},
              {"heads", c.heads},
              {"enc_blocks", c.enc_blocks},
              {"dec_blocks", c.dec_blocks},
              {"dropout", c.dropout},
              {"latent_dim", c.latent_dim},
              {"lambda_obj", c.lambda_obj},
              {"K_samples", c.K_samples},
              {"N_contacts", c.N_contacts},
              {"d_feat", c.d_feat},
              {"conditioning", c.conditioning},
              {"n_verbs", c.n_verbs},
              {"n_nouns", c.n_nouns},
              {"ablate", c.ablate}};
}

json to_json(const TrainConfig& c) {
  return json{{"lr", c.lr},
              {"batch", c.batch},
              {"epochs", c.epochs},
              {"warmup_epochs", c.warmup_epochs},
              {"schedule", c.schedule},
              {"seed", c.seed},
              {"lambda_obj", c.lambda_obj},
              {"ablate", c.ablate}};
}

json to_json(const EvalConfig& c) {
  return json{{"k", c.k},           {"grid_h", c.grid_h},
              {"grid_w", c.grid_w}, {"sigma", c.sigma},
              {"seed", c.seed},     {"baselines", c.baselines},
              {"zero_noise", c.zero_noise}};
}

json to_json(const AnticipateConfig& c) {
  return json{{"lr", c.lr},
              {"epochs", c.epochs},
              {"seed", c.seed},
              {"holdout_frac", c.holdout_frac},
              {"n_verbs", c.n_verbs},
              {"n_nouns", c.n_nouns}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.T = get_int(j, "T");
  c.F = get_int(j, "F");
  c.D = get_int(j, "D");
  c.heads = get_int(j, "heads");
  c.enc_blocks = get_int(j, "enc_blocks");
  c.dec_blocks = get_int(j, "dec_blocks");
  c.dropout = get_double(j, "dropout");
  c.latent_dim = get_int(j, "latent_dim");
  c.lambda_obj = get_double(j, "lambda_obj");
  c.K_samples = get_int(j, "K_samples");
  c.N_contacts = get_int(j, "N_contacts");
  c.d_feat = get_int(j, "d_feat");
  c.conditioning = get_string(j, "conditioning");
  c.n_verbs = get_int(j, "n_verbs");
  c.n_nouns = get_int(j, "n_nouns");
  if (j.contains("ablate")) c.ablate = get_ablate(j, "ablate");
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.lr = get_double(j, "lr");
  c.batch = get_int(j, "batch");
  c.epochs = get_int(j, "epochs");
  c.warmup_epochs = get_int(j, "warmup_epochs");
  c.schedule = get_string(j, "schedule");
  c.seed = get_seed(j, "seed");
  c.lambda_obj = get_double(j, "lambda_obj");
  c.ablate = get_ablate(j, "ablate");
  c.validate();
  return c;
}

EvalConfig eval_config_from_json(const json& j) {
  EvalConfig c;
  c.k = get_int(j, "k");
  c.grid_h = get_int(j, "grid_h");
  c.grid_w = get_int(j, "grid_w");
  c.sigma = get_double(j, "sigma");
  c.seed = get_seed(j, "seed");
  c.baselines = get_bool(j, "baselines");
  c.zero_noise = get_bool(j, "zero_noise");
  c.validate();
  return c;
}

AnticipateConfig anticipate_config_from_json(const json& j) {
  AnticipateConfig c;
  c.lr = get_double(j, "lr");
  c.epochs = get_int(j, "epochs");
  c.seed = get_seed(j, "seed");
  c.holdout_frac = get_double(j, "holdout_frac");
  c.n_verbs = get_int(j, "n_verbs");
  c.n_nouns = get_int(j, "n_nouns");
  c.validate();
  return c;
}

json resolve_options(const json& defaults, const json& file_values, const json& overrides) {
  json out = defaults;
  for (const json* layer : {&file_values, &overrides}) {
    if (layer->is_null()) continue;
    if (!layer->is_object()) fail(ErrorKind::ConfigError, "config must be a JSON object");
    for (auto it = layer->begin(); it != layer->end(); ++it) {
      if (!out.contains(it.key()))
        fail(ErrorKind::ConfigError, "unknown config key '" + it.key() + "'");
      out[it.key()] = it.value();
    }
  }
  return out;
}

json default_scene_options();  // defined with the scene generator

json default_options(const std::string& kind) {
  if (kind == "synth") return default_scene_options();
  if (kind == "labels") {
    return json{{"ransac_threshold", 3.0},
                {"ransac_iterations", 2000},
                {"dense_fps", 20.0},
                {"label_fps", 4.0},
                {"seed", uint64_t{0}}};
  }
  if (kind == "train") {
    json j = to_json(ModelConfig{});
    const json t = to_json(TrainConfig{});
    for (auto it = t.begin(); it != t.end(); ++it) j[it.key()] = it.value();
    return j;
  }
  if (kind == "eval" || kind == "predict") return to_json(EvalConfig{});
  if (kind == "anticipate") return to_json(AnticipateConfig{});
  fail(ErrorKind::ConfigError, "unknown option namespace '" + kind + "'");
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IOFailure, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  json j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::ConfigError, "malformed JSON in " + path);
  return j;
}

}  // namespace octcast
