#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// Exercises the shared-library surface through the public C header only.

#include <octcast/octcast.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>

extern "C" const char* capi_smoke_version(void);
extern "C" int capi_smoke_bad_kind_is_config_error(void);

namespace {

using nlohmann::json;

struct Scoped {
  char* value = nullptr;
  ~Scoped() { oc_string_free(value); }
};

std::string tmp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const char* kSceneOptions =
    R"({"T":6,"F":3,"d_feat":48,"n_bg":24,"ransac_iterations":300,"n_verbs":2,"n_nouns":1})";

std::string train_options() {
  return R"({"D":32,"heads":4,"enc_blocks":1,"dec_blocks":1,"dropout":0.0,"latent_dim":8,)"
         R"("d_feat":48,"epochs":20,"warmup_epochs":2,"lr":0.001,"batch":8,"seed":11})";
}

}  // namespace

TEST_CASE("version and error text are reachable from C") {
  CHECK(std::string(capi_smoke_version()).rfind("octcast", 0) == 0);
  CHECK(capi_smoke_bad_kind_is_config_error() == 1);
}

TEST_CASE("option resolution layers defaults, file and overrides per key") {
  const std::string cfg_path = tmp("octcast_opts.json");
  {
    std::ofstream out(cfg_path);
    out << R"({"k": 7, "sigma": 0.1})";
  }
  Scoped resolved;
  REQUIRE(oc_resolve_options("eval", cfg_path.c_str(), R"({"sigma": 0.2})", &resolved.value) ==
          OC_OK);
  const json j = json::parse(resolved.value);
  CHECK(j.at("k").get<int>() == 7);               // from the file
  CHECK(j.at("sigma").get<double>() == 0.2);      // flag beats file
  CHECK(j.at("grid_h").get<int>() == 32);         // built-in default

  Scoped bad;
  CHECK(oc_resolve_options("eval", nullptr, R"({"no_such_key": 1})", &bad.value) ==
        OC_ERR_CONFIG);
  std::filesystem::remove(cfg_path);
}

TEST_CASE("the full command surface runs behind the C API") {
  const std::string data = tmp("octcast_capi_data.jsonl");
  const std::string data2 = tmp("octcast_capi_data2.jsonl");
  const std::string dets = tmp("octcast_capi_dets.jsonl");
  const std::string labels_out = tmp("octcast_capi_labels.jsonl");
  const std::string weights = tmp("octcast_capi.octw");
  const std::string weights2 = tmp("octcast_capi2.octw");
  const std::string log = tmp("octcast_capi.log.jsonl");

  Scoped stats;
  REQUIRE(oc_synth(kSceneOptions, 12, 5, data.c_str(), dets.c_str(), &stats.value) == OC_OK);
  CHECK(json::parse(stats.value).at("count").get<int>() == 12);

  SUBCASE("same seed gives byte-identical datasets") {
    Scoped again;
    REQUIRE(oc_synth(kSceneOptions, 12, 5, data2.c_str(), nullptr, &again.value) == OC_OK);
    CHECK(file_bytes(data) == file_bytes(data2));
  }

  SUBCASE("labels command consumes the detection records") {
    Scoped lstats;
    REQUIRE(oc_labels(dets.c_str(), labels_out.c_str(), nullptr, &lstats.value) == OC_OK);
    CHECK(json::parse(lstats.value).at("clips").get<int>() == 12);
  }

  SUBCASE("train, eval, forecast, svg and anticipate") {
    REQUIRE(oc_train(data.c_str(), train_options().c_str(), weights.c_str(), log.c_str()) ==
            OC_OK);
    REQUIRE(std::filesystem::exists(weights));
    REQUIRE(std::filesystem::exists(log));

    // byte-identical training under the same seed
    REQUIRE(oc_train(data.c_str(), train_options().c_str(), weights2.c_str(), nullptr) == OC_OK);
    CHECK(file_bytes(weights) == file_bytes(weights2));

    Scoped report;
    REQUIRE(oc_eval(data.c_str(), weights.c_str(), R"({"k":4,"grid_h":12,"grid_w":12})",
                    &report.value) == OC_OK);
    const json r = json::parse(report.value);
    CHECK(r.at("n").get<int>() == 12);
    CHECK(r.contains("ade_min20"));
    CHECK(r.at("per_sample").size() == 12);

    oc_model* model = nullptr;
    REQUIRE(oc_model_open(weights.c_str(), &model) == OC_OK);
    Scoped cfg;
    REQUIRE(oc_model_config(model, &cfg.value) == OC_OK);
    CHECK(json::parse(cfg.value).at("D").get<int>() == 32);

    Scoped forecast;
    REQUIRE(oc_forecast(model, data.c_str(), "clip_000002", R"({"k":3})", &forecast.value) ==
            OC_OK);
    const json fc = json::parse(forecast.value);
    CHECK(fc.at("trajectories").size() == 3);
    double mass = 0.0;
    for (const auto& v : fc.at("heatmap").at("data")) mass += v.get<double>();
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));

    Scoped svg;
    REQUIRE(oc_forecast_svg(model, data.c_str(), "clip_000002", R"({"k":3})", &svg.value) ==
            OC_OK);
    CHECK(std::string(svg.value).rfind("<svg", 0) == 0);

    Scoped missing;
    CHECK(oc_forecast(model, data.c_str(), "clip_999999", nullptr, &missing.value) ==
          OC_ERR_CONFIG);
    oc_model_close(model);

    Scoped ant;
    REQUIRE(oc_anticipate(data.c_str(), weights.c_str(), R"({"epochs":50,"lr":0.02})",
                          &ant.value) == OC_OK);
    CHECK(json::parse(ant.value).contains("verb_top5"));
  }

  SUBCASE("error codes map io, config and schema failures") {
    Scoped out;
    CHECK(oc_eval("/nonexistent/path.jsonl", weights.c_str(), nullptr, &out.value) == OC_ERR_IO);
    Scoped out2;
    CHECK(oc_train(data.c_str(), R"({"epochs":0})", weights.c_str(), nullptr) == OC_ERR_CONFIG);
    // full ablation is a config error
    const std::string opts = R"({"D":16,"heads":2,"enc_blocks":1,"dec_blocks":1,"dropout":0.0,)"
                             R"("latent_dim":4,"d_feat":48,"epochs":1,"warmup_epochs":0,)"
                             R"("ablate":["hand","object","global"]})";
    CHECK(oc_train(data.c_str(), opts.c_str(), weights.c_str(), nullptr) == OC_ERR_CONFIG);
  }

  for (const auto& p : {data, data2, dets, labels_out, weights, weights2, log})
    std::filesystem::remove(p);
}
