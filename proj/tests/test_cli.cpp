#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "spherecorr/annotations.hpp"
#include "spherecorr/models.hpp"

using namespace spherecorr;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  return {code, o.str(), e.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spherecorr_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::uint8_t> bytes(const fs::path& p) { return read_file_bytes(p); }

json read_json(const fs::path& p) {
  std::ifstream f(p);
  return json::parse(f);
}

const std::vector<std::string> kSmall{"synth.height=16", "synth.width=16", "synth.channels=8", "synth.keypoints=6"};
const std::vector<std::string> kFast{"train.epochs=1", "train.batch_size=2", "train.triplets=16", "model.heads=1"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Writes a checkpoint matching the dataset, epoch 0.
fs::path untrained_checkpoint(const fs::path& dir, bool constant) {
  ModelDims d;
  d.channels = 8;
  d.heads = 1;
  auto [m, p] = init_params(d, 0);
  if (constant) {
    for (double& v : m.p["out.w"].values()) v = 0.0;
    m.p["out.b"] = Tensor({1, 3}, {0.3, -0.8, 0.2});
  }
  Checkpoint ck{m, p, {"synthetic"}, 0, 0, json::object(), std::nullopt};
  fs::create_directories(dir);
  save_checkpoint(ck, dir / "init.scck");
  return dir / "init.scck";
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"synth"}).code == 2);  // --out missing
  CHECK(run({"synth", "--out", scratch("u").string(), "--bogus"}).code == 2);
  const Run bad = run({"synth", "--out", scratch("u").string(), "train.nope=1"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("train.nope") != std::string::npos);
  CHECK(run({"synth", "--out", scratch("u").string(), "justaword"}).code == 2);
  CHECK(run({"train", "--data", "x", "--out", "y", "--ablate", "everything"}).code == 2);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"eval", "--help"}).code == 0);
}

TEST_CASE("synth is reproducible and writes a manifest") {
  const fs::path a = scratch("sa"), b = scratch("sb");
  REQUIRE(run(cat({"synth", "--seed", "7", "--views", "6", "--symmetric", "--out", a.string()}, kSmall)).code == 0);
  REQUIRE(run(cat({"synth", "--seed", "7", "--views", "6", "--symmetric", "--out", b.string()}, kSmall)).code == 0);
  for (const auto& e : fs::directory_iterator(a / "features"))
    CHECK(bytes(e.path()) == bytes(b / "features" / e.path().filename()));
  CHECK(bytes(a / "annotations.json") == bytes(b / "annotations.json"));
  CHECK(bytes(a / "manifest.json") == bytes(b / "manifest.json"));
  const json m = read_json(a / "manifest.json");
  CHECK(m["files"].size() == 6 + 2);  // features, annotations.json, world.json
  const Dataset ds = load_dataset(a);
  CHECK(ds.images.size() == 6);

  const fs::path one = scratch("s1");
  REQUIRE(run(cat({"synth", "--views", "1", "--out", one.string()}, kSmall)).code == 0);
  CHECK(load_dataset(one).images.size() == 1);
  const Run t = run(cat({"train", "--data", one.string(), "--out", scratch("t1").string()}, kFast));
  CHECK(t.code == 1);
  CHECK(t.err.find("L_vp") != std::string::npos);
  CHECK(run(cat({"train", "--data", one.string(), "--out", scratch("t1").string(), "--ablate", "vp",
                 "train.batch_size=1"}, {"train.epochs=1", "train.triplets=16", "model.heads=1"})).code == 0);
}

TEST_CASE("train, eval, match, infer-viewpoint and export-maps") {
  const fs::path data = scratch("data"), t1 = scratch("t1"), t2 = scratch("t2"), t3 = scratch("t3");
  REQUIRE(run(cat({"synth", "--seed", "3", "--views", "6", "--out", data.string()}, kSmall)).code == 0);

  const auto train = [&](const fs::path& out, std::vector<std::string> extra) {
    return run(cat(cat({"train", "--data", data.string(), "--out", out.string(), "--seed", "5"}, kFast), extra));
  };
  REQUIRE(train(t1, {}).code == 0);
  REQUIRE(train(t2, {}).code == 0);
  CHECK(bytes(t1 / "checkpoint.scck") == bytes(t2 / "checkpoint.scck"));

  const Run ab = train(t3, {"--ablate", "rd"});
  REQUIRE(ab.code == 0);
  CHECK(ab.out.find("epoch 1/1") != std::string::npos);
  const Checkpoint ck3 = load_checkpoint(t3 / "checkpoint.scck");
  CHECK(ck3.config["ablate"]["rd"] == true);
  CHECK(ck3.config["seed"] == 5);
  CHECK(read_json(t3 / "train_report.json")["config"]["ablate"]["rd"] == true);

  const std::string ck = (t1 / "checkpoint.scck").string();
  SUBCASE("eval") {
    const fs::path ev = scratch("ev");
    const Run r = run({"eval", "--checkpoint", ck, "--data", data.string(), "--kappa", "0.05", "--out", ev.string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("kappa = 0.05", 0) == 0);
    for (const char* m : {"feature", "sphere-masked", "sphere ", "alpha-mix", "macro", "synthetic"})
      CHECK(r.out.find(m) != std::string::npos);
    const json j = read_json(ev / "eval_report.json");
    CHECK(j["config"]["eval"]["kappa"] == 0.05);
    CHECK(j["checkpoint"]["config"]["seed"] == 5);
    CHECK(j["reports"].size() == 4);
    const Run nm = run({"eval", "--checkpoint", ck, "--data", data.string(), "--no-mask"});
    CHECK(nm.out.find("sphere-masked") == std::string::npos);
    CHECK(run({"eval", "--checkpoint", ck, "--data", data.string(), "--alpha", "2"}).code == 2);
  }
  SUBCASE("match") {
    const Dataset ds = load_dataset(data);
    const Run r = run({"match", "--checkpoint", ck, "--data", data.string(), "--source", ds.images[0].id, "--target",
                       ds.images[0].id, "--query", "3,4", "--query", "8,9", "--alpha", "0.5"});
    REQUIRE(r.code == 0);
    const json j = json::parse(r.out);
    CHECK(j["matches"][0]["match"] == json::array({3, 4}));
    CHECK(j["matches"][1]["match"] == json::array({8, 9}));
    CHECK(run({"match", "--checkpoint", ck, "--data", data.string(), "--source", ds.images[0].id, "--target",
               ds.images[1].id, "--query", "3;4"}).code == 2);
    CHECK(run({"match", "--checkpoint", ck, "--data", data.string(), "--source", "nope", "--target",
               ds.images[1].id, "--query", "3,4"}).code == 1);
  }
  SUBCASE("infer-viewpoint") {
    const fs::path out = scratch("vp.json");
    const Run r = run({"infer-viewpoint", "--checkpoint", ck, "--data", data.string(), "--out", out.string()});
    REQUIRE(r.code == 0);
    const json j = read_json(out);
    CHECK(j["images"].size() == 6);
    CHECK(j["frame_applied"] == true);
    CHECK_FALSE(j.contains("flag"));

    const fs::path init = untrained_checkpoint(scratch("init"), true);
    const Run u = run({"infer-viewpoint", "--checkpoint", init.string(), "--data", data.string(), "--out", out.string()});
    REQUIRE(u.code == 0);
    CHECK(u.err.find("untrained checkpoint") != std::string::npos);
    const json ju = read_json(out);
    CHECK(ju["flag"] == "untrained checkpoint");
    CHECK(ju["checkpoint"]["untrained"] == true);
    for (const auto& im : ju["images"]) CHECK(im["azimuth"] == ju["images"][0]["azimuth"]);
  }
  SUBCASE("export-maps") {
    const fs::path init = untrained_checkpoint(scratch("init2"), true);
    const fs::path a = scratch("maps_a"), b = scratch("maps_b");
    REQUIRE(run({"export-maps", "--checkpoint", ck, "--data", data.string(), "--out", a.string()}).code == 0);
    REQUIRE(run({"export-maps", "--checkpoint", ck, "--data", data.string(), "--out", b.string()}).code == 0);
    const Dataset ds = load_dataset(data);
    for (const auto& rec : ds.images) CHECK(bytes(a / (rec.id + ".ppm")) == bytes(b / (rec.id + ".ppm")));

    // constant map along (1, 0, 0) after normalization
    ModelDims d;
    d.channels = 8;
    d.heads = 1;
    auto [m, p] = init_params(d, 0);
    for (double& v : m.p["out.w"].values()) v = 0.0;
    m.p["out.b"] = Tensor({1, 3}, {2.0, 0.0, 0.0});
    const fs::path cdir = scratch("constck");
    fs::create_directories(cdir);
    save_checkpoint(Checkpoint{m, p, {"synthetic"}, 0, 1, json::object(), std::nullopt}, cdir / "c.scck");
    const fs::path c = scratch("maps_c");
    REQUIRE(run({"export-maps", "--checkpoint", (cdir / "c.scck").string(), "--data", data.string(), "--out",
                 c.string()}).code == 0);
    const DenseFeatureMap f = load_features(ds, ds.images[0]);
    const auto img = bytes(c / (ds.images[0].id + ".ppm"));
    const std::string header = "P6\n16 16\n255\n";
    REQUIRE(img.size() == header.size() + 3 * 256);
    CHECK(std::string(img.begin(), img.begin() + header.size()) == header);
    for (std::size_t px = 0; px < 256; ++px) {
      const std::uint8_t* rgb = img.data() + header.size() + 3 * px;
      if (f.mask[px]) {
        CHECK(rgb[0] == 255);
        CHECK(rgb[1] == 127);
        CHECK(rgb[2] == 127);
      } else {
        CHECK(rgb[0] == 0);
        CHECK(rgb[1] == 0);
        CHECK(rgb[2] == 0);
      }
    }
  }
}
