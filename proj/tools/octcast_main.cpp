// octcast command-line front end. Everything substantive happens behind the
// C API in liboctcast; this file parses flags, assembles option overrides and
// moves bytes between files and the library.

#include <octcast/octcast.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

namespace {

using nlohmann::json;

struct StringGuard {
  char* value = nullptr;
  ~StringGuard() { oc_string_free(value); }
};

int fail_with(oc_status status) {
  std::cerr << "octcast: error: " << oc_last_error() << "\n";
  return static_cast<int>(status);
}

bool write_file(const std::string& path, const char* text) {
  std::ofstream out(path);
  if (!out) return false;
  out << text;
  return static_cast<bool>(out);
}

// flags the user actually passed become overrides; the library resolves them
// over the config file and built-in defaults (CLI flag > file > default)
class Overrides {
 public:
  template <typename T>
  void set_if(const CLI::Option* opt, const std::string& key, const T& value) {
    if (opt->count() > 0) values_[key] = value;
  }
  std::string text() const { return values_.dump(); }

 private:
  json values_ = json::object();
};

int resolve(const std::string& kind, const std::string& config_path, const Overrides& overrides,
            StringGuard& out) {
  const oc_status st = oc_resolve_options(kind.c_str(), config_path.c_str(),
                                          overrides.text().c_str(), &out.value);
  return st == OC_OK ? 0 : fail_with(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hand trajectory and interaction hotspot forecasting"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  int synth_n = 1;
  uint64_t synth_seed = 0;
  std::string synth_config, synth_out, synth_detections;
  synth->add_option("--n", synth_n, "Number of scenes")->required();
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--config", synth_config, "Scene config JSON file");
  synth->add_option("--out", synth_out, "Dataset output path (.jsonl or .octd)")->required();
  synth->add_option("--detections-out", synth_detections,
                    "Also write label-generation requests here");

  // ---- labels ----
  auto* labels = app.add_subcommand("labels", "Generate trajectory/contact labels");
  std::string labels_in, labels_out, labels_config;
  double labels_threshold = 3.0, labels_dense = 20.0, labels_fps = 4.0;
  int labels_iters = 2000;
  uint64_t labels_seed = 0;
  labels->add_option("--detections", labels_in, "Detection records (JSON-lines)")->required();
  labels->add_option("--out", labels_out, "Label records output path")->required();
  labels->add_option("--config", labels_config, "Label config JSON file");
  auto* opt_thresh =
      labels->add_option("--ransac-threshold", labels_threshold, "Inlier threshold in pixels");
  auto* opt_iters = labels->add_option("--ransac-iterations", labels_iters, "RANSAC draws");
  auto* opt_dense = labels->add_option("--dense-fps", labels_dense, "Dense interpolation rate");
  auto* opt_fps = labels->add_option("--label-fps", labels_fps, "Label sampling rate");
  auto* opt_lseed = labels->add_option("--seed", labels_seed, "RANSAC seed");

  // ---- train ----
  auto* train = app.add_subcommand("train", "Train the forecaster");
  std::string train_data, train_config, train_weights, train_log;
  std::vector<std::string> train_ablate;
  uint64_t train_seed = 0;
  train->add_option("--data", train_data, "Dataset path")->required();
  train->add_option("--config", train_config, "Model/training config JSON file");
  train->add_option("--out-weights", train_weights, "Weight output path (OCTW1)")->required();
  train->add_option("--log", train_log, "Training log path (default <weights>.log.jsonl)");
  auto* opt_ablate =
      train->add_option("--ablate", train_ablate, "Zero a token category (hand|object|global)");
  auto* opt_tseed = train->add_option("--seed", train_seed, "Training seed");

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "Evaluate a trained model");
  std::string eval_data, eval_weights, eval_config, eval_report;
  int eval_k = 20, eval_grid = 32;
  double eval_sigma = 0.05;
  uint64_t eval_seed = 0;
  bool eval_baselines = false;
  eval->add_option("--data", eval_data, "Dataset path")->required();
  eval->add_option("--weights", eval_weights, "OCTW1 weights path")->required();
  eval->add_option("--config", eval_config, "Evaluation config JSON file");
  auto* opt_k = eval->add_option("--k", eval_k, "Stochastic samples per clip");
  auto* opt_grid = eval->add_option("--grid", eval_grid, "Heatmap grid size (square)");
  auto* opt_sigma = eval->add_option("--sigma", eval_sigma, "Rasterization sigma");
  auto* opt_eseed = eval->add_option("--seed", eval_seed, "Sampling seed");
  auto* opt_base =
      eval->add_flag("--baselines", eval_baselines, "Also score the Kalman and Center baselines");
  eval->add_option("--report", eval_report, "Write the report JSON here");

  // ---- predict ----
  auto* predict = app.add_subcommand("predict", "Forecast one clip");
  std::string pred_data, pred_weights, pred_id, pred_plot, pred_out, pred_config;
  int pred_k = 20, pred_grid = 32;
  double pred_sigma = 0.05;
  uint64_t pred_seed = 0;
  bool pred_zero_noise = false;
  predict->add_option("--data", pred_data, "Dataset path")->required();
  predict->add_option("--weights", pred_weights, "OCTW1 weights path")->required();
  predict->add_option("--id", pred_id, "Sample id")->required();
  predict->add_option("--config", pred_config, "Prediction config JSON file");
  predict->add_option("--plot", pred_plot, "Write an SVG plot here");
  predict->add_option("--out", pred_out, "Write the forecast JSON here (default stdout)");
  auto* opt_pk = predict->add_option("--k", pred_k, "Stochastic samples");
  auto* opt_pgrid = predict->add_option("--grid", pred_grid, "Heatmap grid size");
  auto* opt_psigma = predict->add_option("--sigma", pred_sigma, "Rasterization sigma");
  auto* opt_pseed = predict->add_option("--seed", pred_seed, "Sampling seed");
  auto* opt_pzero =
      predict->add_flag("--zero-noise", pred_zero_noise, "Deterministic greedy rollout (z = 0)");

  // ---- anticipate ----
  auto* anticipate = app.add_subcommand("anticipate", "Train the action-anticipation head");
  std::string ant_data, ant_weights, ant_labels, ant_config;
  double ant_lr = 1e-2;
  int ant_epochs = 200;
  uint64_t ant_seed = 0;
  anticipate->add_option("--data", ant_data, "Dataset path (needs action labels)")->required();
  anticipate->add_option("--weights", ant_weights, "OCTW1 weights path")->required();
  anticipate->add_option("--labels", ant_labels,
                         "Vocabulary JSON file {\"n_verbs\":V,\"n_nouns\":N}");
  anticipate->add_option("--config", ant_config, "Anticipation config JSON file");
  auto* opt_alr = anticipate->add_option("--lr", ant_lr, "Head learning rate");
  auto* opt_aep = anticipate->add_option("--epochs", ant_epochs, "Head training epochs");
  auto* opt_aseed = anticipate->add_option("--seed", ant_seed, "Split/init seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems exit 2, --help exits 0
  }

  if (synth->parsed()) {
    StringGuard opts;
    if (const int rc = resolve("synth", synth_config, Overrides{}, opts)) return rc;
    StringGuard stats;
    const oc_status st =
        oc_synth(opts.value, synth_n, synth_seed, synth_out.c_str(),
                 synth_detections.empty() ? nullptr : synth_detections.c_str(), &stats.value);
    if (st != OC_OK) return fail_with(st);
    std::cout << stats.value << "\n";
    return 0;
  }

  if (labels->parsed()) {
    Overrides ov;
    ov.set_if(opt_thresh, "ransac_threshold", labels_threshold);
    ov.set_if(opt_iters, "ransac_iterations", labels_iters);
    ov.set_if(opt_dense, "dense_fps", labels_dense);
    ov.set_if(opt_fps, "label_fps", labels_fps);
    ov.set_if(opt_lseed, "seed", labels_seed);
    StringGuard opts;
    if (const int rc = resolve("labels", labels_config, ov, opts)) return rc;
    StringGuard stats;
    const oc_status st = oc_labels(labels_in.c_str(), labels_out.c_str(), opts.value, &stats.value);
    if (st != OC_OK) return fail_with(st);
    std::cout << stats.value << "\n";
    return 0;
  }

  if (train->parsed()) {
    Overrides ov;
    ov.set_if(opt_ablate, "ablate", train_ablate);
    ov.set_if(opt_tseed, "seed", train_seed);
    StringGuard opts;
    if (const int rc = resolve("train", train_config, ov, opts)) return rc;
    if (train_log.empty()) train_log = train_weights + ".log.jsonl";
    const oc_status st =
        oc_train(train_data.c_str(), opts.value, train_weights.c_str(), train_log.c_str());
    if (st != OC_OK) return fail_with(st);
    std::cout << "wrote " << train_weights << "\n";
    return 0;
  }

  if (eval->parsed()) {
    Overrides ov;
    ov.set_if(opt_k, "k", eval_k);
    ov.set_if(opt_grid, "grid_h", eval_grid);
    ov.set_if(opt_grid, "grid_w", eval_grid);
    ov.set_if(opt_sigma, "sigma", eval_sigma);
    ov.set_if(opt_eseed, "seed", eval_seed);
    ov.set_if(opt_base, "baselines", eval_baselines);
    StringGuard opts;
    if (const int rc = resolve("eval", eval_config, ov, opts)) return rc;
    StringGuard report;
    const oc_status st = oc_eval(eval_data.c_str(), eval_weights.c_str(), opts.value, &report.value);
    if (st != OC_OK) return fail_with(st);
    if (!eval_report.empty()) {
      if (!write_file(eval_report, report.value)) {
        std::cerr << "octcast: error: cannot write " << eval_report << "\n";
        return 3;
      }
    } else {
      std::cout << report.value << "\n";
    }
    return 0;
  }

  if (predict->parsed()) {
    Overrides ov;
    ov.set_if(opt_pk, "k", pred_k);
    ov.set_if(opt_pgrid, "grid_h", pred_grid);
    ov.set_if(opt_pgrid, "grid_w", pred_grid);
    ov.set_if(opt_psigma, "sigma", pred_sigma);
    ov.set_if(opt_pseed, "seed", pred_seed);
    ov.set_if(opt_pzero, "zero_noise", pred_zero_noise);
    StringGuard opts;
    if (const int rc = resolve("predict", pred_config, ov, opts)) return rc;

    oc_model* model = nullptr;
    oc_status st = oc_model_open(pred_weights.c_str(), &model);
    if (st != OC_OK) return fail_with(st);
    StringGuard forecast;
    StringGuard svg;
    st = oc_forecast(model, pred_data.c_str(), pred_id.c_str(), opts.value, &forecast.value);
    if (st == OC_OK && !pred_plot.empty())
      st = oc_forecast_svg(model, pred_data.c_str(), pred_id.c_str(), opts.value, &svg.value);
    oc_model_close(model);
    if (st != OC_OK) return fail_with(st);
    if (!pred_plot.empty() && !write_file(pred_plot, svg.value)) {
      std::cerr << "octcast: error: cannot write " << pred_plot << "\n";
      return 3;
    }
    if (!pred_out.empty()) {
      if (!write_file(pred_out, forecast.value)) {
        std::cerr << "octcast: error: cannot write " << pred_out << "\n";
        return 3;
      }
    } else {
      std::cout << forecast.value << "\n";
    }
    return 0;
  }

  if (anticipate->parsed()) {
    Overrides ov;
    ov.set_if(opt_alr, "lr", ant_lr);
    ov.set_if(opt_aep, "epochs", ant_epochs);
    ov.set_if(opt_aseed, "seed", ant_seed);
    StringGuard opts;
    if (const int rc = resolve("anticipate", ant_config, ov, opts)) return rc;
    std::string options = opts.value;
    if (!ant_labels.empty()) {
      std::ifstream in(ant_labels);
      if (!in) {
        std::cerr << "octcast: error: cannot open " << ant_labels << "\n";
        return 3;
      }
      json vocab = json::parse(in, nullptr, false);
      if (vocab.is_discarded() || !vocab.is_object()) {
        std::cerr << "octcast: error: malformed labels file " << ant_labels << "\n";
        return 2;
      }
      json merged = json::parse(options);
      for (auto it = vocab.begin(); it != vocab.end(); ++it) merged[it.key()] = it.value();
      options = merged.dump();
    }
    StringGuard report;
    const oc_status st =
        oc_anticipate(ant_data.c_str(), ant_weights.c_str(), options.c_str(), &report.value);
    if (st != OC_OK) return fail_with(st);
    std::cout << report.value << "\n";
    return 0;
  }

  return 2;
}
