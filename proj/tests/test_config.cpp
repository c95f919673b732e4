#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "spherecorr/config.hpp"
#include "spherecorr/trainer.hpp"

using namespace spherecorr;
using nlohmann::json;

#ifndef SPHERECORR_SOURCE_DIR
#error "SPHERECORR_SOURCE_DIR must be defined"
#endif

TEST_CASE("toml subset parsing") {
  const json j = parse_toml(R"(
# comment
seed = 3
name = "a \"b\" \\ c"   # trailing comment
[train]
lr = 1e-3
epochs = 20
flag = true
list = [1, 2.5, "x"]
[a.b]
neg = -4
)");
  CHECK(j["seed"] == 3);
  CHECK(j["name"] == "a \"b\" \\ c");
  CHECK(j["train"]["lr"].get<double>() == 1e-3);
  CHECK(j["train"]["epochs"].is_number_integer());
  CHECK(j["train"]["flag"] == true);
  CHECK(j["train"]["list"] == json::array({1, 2.5, "x"}));
  CHECK(j["a"]["b"]["neg"] == -4);
}

TEST_CASE("toml errors") {
  CHECK_THROWS_AS(parse_toml("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_toml("a = \n"), ConfigError);
  CHECK_THROWS_AS(parse_toml("[t\n"), ConfigError);
  CHECK_THROWS_AS(parse_toml("a = \"open\n"), ConfigError);
  CHECK_THROWS_AS(parse_toml("just words\n"), ConfigError);
}

TEST_CASE("merge rejects unknown keys and wrong types") {
  json base = default_config();
  CHECK_THROWS_AS(merge_config(base, json{{"train", {{"bogus", 1}}}}), ConfigError);
  CHECK_THROWS_AS(merge_config(base, json{{"nosection", 1}}), ConfigError);
  CHECK_THROWS_AS(merge_config(base, json{{"train", {{"epochs", "ten"}}}}), ConfigError);
  CHECK_THROWS_AS(merge_config(base, json{{"train", {{"epochs", 2.5}}}}), ConfigError);
  merge_config(base, json{{"train", {{"epochs", 4.0}, {"lr", 1}}}});
  CHECK(base["train"]["epochs"] == 4);
  CHECK(base["train"]["lr"].is_number_float());
}

TEST_CASE("overrides") {
  json c = default_config();
  apply_override(c, "train.epochs=7");
  apply_override(c, "synth.category=cars");
  apply_override(c, "eval.mask=false");
  CHECK(c["train"]["epochs"] == 7);
  CHECK(c["synth"]["category"] == "cars");
  CHECK(c["eval"]["mask"] == false);
  CHECK_THROWS_AS(apply_override(c, "train.nope=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "train.epochs"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "train.epochs=abc"), ConfigError);
}

TEST_CASE("train config validation") {
  json c = default_config();
  CHECK_NOTHROW(TrainConfig::from_json(c));
  for (const char* o : {"train.epochs=0", "viewpoint.bins=1", "train.batch_size=1", "train.lr=0", "loss.rd=-1"}) {
    json d = c;
    apply_override(d, o);
    CHECK_THROWS_AS(TrainConfig::from_json(d), ConfigError);
  }
  json d = c;
  apply_override(d, "train.batch_size=1");
  apply_override(d, "ablate.vp=true");
  CHECK_NOTHROW(TrainConfig::from_json(d));
}

TEST_CASE("shipped presets") {
  const std::filesystem::path dir = std::filesystem::path(SPHERECORR_SOURCE_DIR) / "configs";
  const std::filesystem::path paper = dir / "paper.toml", desk = dir / "desk.toml";
  const json p = resolve_config(&paper, {});
  CHECK(p["loss"]["rd"] == 0.3);
  CHECK(p["loss"]["o"] == 0.3);
  CHECK(p["loss"]["vp"] == 0.1);
  CHECK(p["loss"]["margin"] == 0.5);
  CHECK(p["loss"]["det_threshold"] == 0.7);
  CHECK(p["eval"]["alpha"] == 0.2);
  CHECK(p["train"]["epochs"] == 200);
  CHECK(p["viewpoint"]["bins"] == 8);
  const TrainConfig tp = TrainConfig::from_json(p);
  CHECK(tp.weights.rd == 0.3);
  CHECK(tp.epochs == 200);

  const json d = resolve_config(&desk, {"seed=4"});
  CHECK(d["train"]["epochs"].get<int>() <= 30);
  CHECK(d["synth"]["height"] == 32);
  CHECK(d["synth"]["width"] == 32);
  CHECK(d["synth"]["channels"] == 16);
  CHECK(d["seed"] == 4);
}

TEST_CASE("json config files") {
  const auto path = std::filesystem::temp_directory_path() / "spherecorr_cfg.json";
  std::ofstream(path) << R"({"train": {"epochs": 3}})";
  const json c = resolve_config(&path, {});
  CHECK(c["train"]["epochs"] == 3);
  std::ofstream(path) << R"({"train": {"epochz": 3}})";
  CHECK_THROWS_AS(resolve_config(&path, {}), ConfigError);
}
