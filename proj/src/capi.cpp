#include "octcast/octcast.h"

#include "core/config.hpp"
#include "core/dataset.hpp"
#include "core/pipeline.hpp"
#include "core/svgplot.hpp"
#include "core/synthdata.hpp"
#include "core/weights.hpp"

#include <cstring>
#include <fstream>
#include <iostream>

namespace {

using namespace octcast;
using nlohmann::json;

thread_local std::string g_last_error;

oc_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IOFailure:
      return OC_ERR_IO;
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::DegenerateConfiguration:
    case ErrorKind::PointAtInfinity:
    case ErrorKind::AllZero:
      return OC_ERR_NUMERIC;
    default:
      return OC_ERR_CONFIG;
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
oc_status guarded(Fn&& fn) {
  try {
    fn();
    return OC_OK;
  } catch (const Error& e) {
    g_last_error = std::string(error_kind_name(e.kind())) + ": " + e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return OC_ERR_CONFIG;
  }
}

json resolved(const std::string& kind, const char* config_path, const char* overrides_json) {
  const json defaults = default_options(kind);
  json file_values;  // null
  if (config_path != nullptr && config_path[0] != '\0') file_values = load_json_file(config_path);
  json overrides;  // null
  if (overrides_json != nullptr && overrides_json[0] != '\0') {
    overrides = json::parse(overrides_json, nullptr, false);
    if (overrides.is_discarded()) fail(ErrorKind::ConfigError, "malformed overrides JSON");
  }
  return resolve_options(defaults, file_values, overrides);
}

json parse_options(const char* options_json, const std::string& kind) {
  if (options_json == nullptr || options_json[0] == '\0') return default_options(kind);
  json j = json::parse(options_json, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::ConfigError, "malformed options JSON");
  return resolve_options(default_options(kind), json(), j);
}

void require_arg(const void* p, const char* what) {
  if (p == nullptr) fail(ErrorKind::ConfigError, std::string("missing argument: ") + what);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IOFailure, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorKind::IOFailure, "failed writing " + path);
}

const dataset::TrainingSample& find_sample(const std::vector<dataset::TrainingSample>& data,
                                           const std::string& id) {
  for (const auto& s : data) {
    if (s.id == id) return s;
  }
  fail(ErrorKind::UnknownId, "no sample with id '" + id + "'");
}

}  // namespace

struct oc_model {
  octcast::ParamStore weights;
  octcast::ModelConfig config;
};

extern "C" {

const char* oc_version(void) { return "octcast 0.1.0"; }

const char* oc_last_error(void) { return g_last_error.c_str(); }

void oc_string_free(char* s) { std::free(s); }

oc_status oc_resolve_options(const char* kind, const char* config_path_or_null,
                             const char* overrides_json_or_null, char** out_json) {
  return guarded([&] {
    require_arg(kind, "kind");
    require_arg(out_json, "out_json");
    *out_json = copy_string(resolved(kind, config_path_or_null, overrides_json_or_null).dump());
  });
}

oc_status oc_synth(const char* options_json, int n, uint64_t seed, const char* out_path,
                   const char* detections_out_path_or_null, char** stats_json_out) {
  return guarded([&] {
    require_arg(out_path, "out_path");
    const synth::SceneConfig cfg =
        synth::scene_config_from_json(parse_options(options_json, "synth"));
    const std::string detections =
        detections_out_path_or_null == nullptr ? "" : detections_out_path_or_null;
    const synth::BuildStats stats = synth::build_dataset(n, seed, cfg, out_path, detections);
    if (stats_json_out != nullptr) {
      *stats_json_out = copy_string(json{{"count", stats.count},
                                         {"mean_trajectory_err", stats.mean_trajectory_err},
                                         {"mean_contact_err", stats.mean_contact_err}}
                                        .dump());
    }
  });
}

oc_status oc_labels(const char* detections_path, const char* out_path, const char* options_json,
                    char** stats_json_out) {
  return guarded([&] {
    require_arg(detections_path, "detections_path");
    require_arg(out_path, "out_path");
    const json opts = parse_options(options_json, "labels");
    const double threshold = opts.at("ransac_threshold").get<double>();
    const int iterations = opts.at("ransac_iterations").get<int>();
    const geom::LabelConfig label_cfg{opts.at("dense_fps").get<double>(),
                                      opts.at("label_fps").get<double>()};
    const auto seed = opts.at("seed").get<uint64_t>();

    const auto requests = dataset::read_label_requests(detections_path);
    std::vector<dataset::LabelRecord> records;
    int warnings = 0;
    for (size_t idx = 0; idx < requests.size(); ++idx) {
      const dataset::LabelRequest& r = requests[idx];
      try {
        if (r.future_frames.empty())
          fail(ErrorKind::SchemaError, "clip has no future frames");
        if (r.correspondences.size() != r.future_frames.size())
          fail(ErrorKind::SchemaError, "need one correspondence pair per future frame");
        std::vector<geom::Homography> chain;
        for (size_t j = 0; j < r.correspondences.size(); ++j) {
          chain.push_back(geom::ransac_homography(
                              r.correspondences[j].points, threshold, iterations,
                              mix_seed(seed, mix_seed(idx, j)))
                              .h);
        }
        dataset::LabelRecord rec;
        rec.clip_id = r.clip_id;
        rec.trajectory =
            geom::generate_trajectory_labels(r.future_frames, chain, r.frame_size, label_cfg);
        for (int side = 0; side < 2; ++side) {
          bool any = false;
          for (const auto& v : rec.trajectory.visible) any |= v[static_cast<size_t>(side)];
          if (!any) {
            std::cerr << "octcast: warning: clip " << r.clip_id << ": "
                      << (side == 0 ? "left" : "right")
                      << " hand has no detections (EmptyTrajectory)\n";
            ++warnings;
          }
        }
        if (!r.future_frames.back().contact_candidates.empty()) {
          rec.contacts = geom::generate_contact_labels(r.future_frames.back(), chain,
                                                       r.object_track, r.frame_size);
        } else {
          std::cerr << "octcast: warning: clip " << r.clip_id
                    << ": no contact candidates (NoCandidates)\n";
          ++warnings;
        }
        records.push_back(std::move(rec));
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::SchemaError) throw;
        std::cerr << "octcast: warning: clip " << r.clip_id << " skipped: " << e.what() << "\n";
        ++warnings;
      }
    }
    dataset::write_label_records(out_path, records);
    if (stats_json_out != nullptr) {
      *stats_json_out = copy_string(
          json{{"clips", records.size()}, {"warnings", warnings}}.dump());
    }
  });
}

oc_status oc_train(const char* data_path, const char* options_json, const char* weights_out_path,
                   const char* log_out_path) {
  return guarded([&] {
    require_arg(data_path, "data_path");
    require_arg(weights_out_path, "weights_out_path");
    const json opts = parse_options(options_json, "train");
    const ModelConfig mcfg = model_config_from_json(opts);
    const TrainConfig tcfg = train_config_from_json(opts);
    const auto data = dataset::read_dataset(data_path);

    std::ofstream log;
    if (log_out_path != nullptr && log_out_path[0] != '\0') {
      log.open(log_out_path);
      if (!log) fail(ErrorKind::IOFailure, std::string("cannot write ") + log_out_path);
    }
    const auto checkpoint = [&](const ParamStore& w, const ModelConfig& cfg, int) {
      save_weights(weights_out_path, w, cfg);
    };
    const pipe::TrainResult result = pipe::train(data, tcfg, mcfg, checkpoint);
    if (log.is_open()) {
      for (const auto& entry : result.log) log << pipe::epoch_log_to_json(entry).dump() << "\n";
      if (!log) fail(ErrorKind::IOFailure, "failed writing the training log");
    }
    save_weights(weights_out_path, result.weights, result.model);
  });
}

oc_status oc_eval(const char* data_path, const char* weights_path, const char* options_json,
                  char** report_json_out) {
  return guarded([&] {
    require_arg(data_path, "data_path");
    require_arg(weights_path, "weights_path");
    require_arg(report_json_out, "report_json_out");
    const EvalConfig opts = eval_config_from_json(parse_options(options_json, "eval"));
    const auto [weights, cfg] = load_weights(weights_path);
    const auto data = dataset::read_dataset(data_path);
    const pipe::EvalReport report = pipe::evaluate(data, weights, cfg, opts);
    *report_json_out = copy_string(pipe::report_to_json(report).dump());
  });
}

oc_status oc_anticipate(const char* data_path, const char* weights_path, const char* options_json,
                        char** report_json_out) {
  return guarded([&] {
    require_arg(data_path, "data_path");
    require_arg(weights_path, "weights_path");
    require_arg(report_json_out, "report_json_out");
    const AnticipateConfig opts =
        anticipate_config_from_json(parse_options(options_json, "anticipate"));
    auto [weights, cfg] = load_weights(weights_path);
    if (opts.n_verbs > 0) cfg.n_verbs = opts.n_verbs;
    if (opts.n_nouns > 0) cfg.n_nouns = opts.n_nouns;
    const auto data = dataset::read_dataset(data_path);
    const pipe::AnticipationReport report =
        pipe::train_anticipation(data, weights, cfg, opts);
    *report_json_out = copy_string(pipe::anticipation_report_to_json(report).dump());
  });
}

oc_status oc_model_open(const char* weights_path, oc_model** out) {
  return guarded([&] {
    require_arg(weights_path, "weights_path");
    require_arg(out, "out");
    auto [weights, cfg] = load_weights(weights_path);
    *out = new oc_model{std::move(weights), cfg};
  });
}

void oc_model_close(oc_model* m) { delete m; }

oc_status oc_model_config(const oc_model* m, char** config_json_out) {
  return guarded([&] {
    require_arg(m, "model");
    require_arg(config_json_out, "config_json_out");
    *config_json_out = copy_string(to_json(m->config).dump());
  });
}

namespace {

pipe::ForecastResult forecast_for(const oc_model* m, const char* data_path,
                                  const char* sample_id, const char* options_json,
                                  const dataset::TrainingSample** sample_out) {
  require_arg(m, "model");
  require_arg(data_path, "data_path");
  require_arg(sample_id, "sample_id");
  static thread_local std::vector<dataset::TrainingSample> cache;
  static thread_local std::string cache_path;
  if (cache_path != data_path) {
    cache = dataset::read_dataset(data_path);
    cache_path = data_path;
  }
  const EvalConfig opts = eval_config_from_json(parse_options(options_json, "predict"));
  const dataset::TrainingSample& s = find_sample(cache, sample_id);
  if (sample_out != nullptr) *sample_out = &s;
  return pipe::forecast(s, m->weights, m->config, opts, opts.seed);
}

}  // namespace

oc_status oc_forecast(const oc_model* m, const char* data_path, const char* sample_id,
                      const char* options_json, char** forecast_json_out) {
  return guarded([&] {
    require_arg(forecast_json_out, "forecast_json_out");
    const pipe::ForecastResult fc = forecast_for(m, data_path, sample_id, options_json, nullptr);
    *forecast_json_out = copy_string(pipe::forecast_to_json(fc).dump());
  });
}

oc_status oc_forecast_svg(const oc_model* m, const char* data_path, const char* sample_id,
                          const char* options_json, char** svg_out) {
  return guarded([&] {
    require_arg(svg_out, "svg_out");
    const dataset::TrainingSample* sample = nullptr;
    const pipe::ForecastResult fc = forecast_for(m, data_path, sample_id, options_json, &sample);
    *svg_out = copy_string(plot::render_forecast_svg(*sample, fc));
  });
}

}  // extern "C"
