#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "alacpd/cli.hpp"
#include "alacpd/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace alacpd;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "alacpd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("alacpd_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

json read(const std::string& path) {
  std::ifstream in(path);
  return json::parse(in);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// A quick configuration so end-to-end runs stay in the sub-second range.
const char* kFastConfig = "U = 4\ne_init = 2\ne_train = 1\ne_reinit = 5\n";

void make_fixture(const TempDir& dir, const std::string& name = "twoseg") {
  write(dir / "spec.txt", "name = " + name + "\nseed = 3\nsegment = 80 0 1 0.5\nsegment = 80 5 1 0.5\n");
  write(dir / "fast.txt", kFastConfig);
  const auto r = call({"synth", "--spec", dir / "spec.txt", "--out", dir / (name + ".json")});
  REQUIRE(r.code == 0);
}

}  // namespace

TEST_CASE("config file") {
  const auto cfg = cli::parse_config(
      "# defaults, spelled out\n"
      "w = 6\nU = 20\nM = 3\nS = 3,5,7\nh = 4\nC = 1.4\nbeta = 0.6\nn_cpd = 3\n"
      "n_init_frac = 0.1\ne_init = 10\ne_train = 5\ne_reinit = 100\nlr = 0.001\n");
  CHECK(cfg.net.window == 6);
  CHECK(cfg.skip_sizes == std::vector<std::size_t>{3, 5, 7});
  CHECK(cfg.sgd.learning_rate == 0.001);

  const auto two = cli::parse_config("M = 2\n");
  CHECK(two.skip_sizes == std::vector<std::size_t>{3, 5});
  const auto spaced = cli::parse_config("S = 2 4\nC_grace = 2\ngrace_len = 7\nstandardize = full_series\n");
  CHECK(spaced.skip_sizes == std::vector<std::size_t>{2, 4});
  CHECK(spaced.grace_multiplier == 2.0);
  CHECK(spaced.grace_length == 7);
  CHECK(spaced.scaling == EnsembleConfig::Scaling::kFullSeries);

  CHECK_THROWS_AS(cli::parse_config("foo = 1\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("M = 2\nS = 3,5,7\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("w = six\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("n_cpd = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("C = 0.9\n"), ConfigError);
  try {
    cli::parse_config("w = 6\n\nbogus = 2\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("variants") {
  CHECK(cli::variant_label(cli::parse_variant("full")) == "ALACPD");
  CHECK(cli::variant_label(cli::parse_variant("no_ar")) == "ALACPDw/oAR");
  CHECK(cli::variant_label(cli::parse_variant("no_ae")) == "ALACPDw/oAE");
  CHECK_THROWS_AS(cli::parse_variant("both"), ConfigError);

  EnsembleConfig cfg;
  cli::apply_variant(cfg, cli::Variant::kNoAr);
  CHECK(cfg.net.use_ae);
  CHECK_FALSE(cfg.net.use_ar);
  cli::apply_variant(cfg, cli::Variant::kNoAe);
  CHECK_FALSE(cfg.net.use_ae);
  CHECK(cfg.net.use_ar);
}

TEST_CASE("synth writes a dataset and its annotations") {
  TempDir dir;
  make_fixture(dir);
  const auto doc = read(dir / "twoseg.json");
  CHECK(doc["n_obs"] == 160);
  const auto ann = read(dir / "twoseg.annotations.json");
  CHECK(ann["dataset"] == "twoseg");
  CHECK(ann["n"] == 160);
  CHECK(ann["annotations"]["1"] == json::array({80}));
}

TEST_CASE("detect") {
  TempDir dir;
  make_fixture(dir);
  const auto r = call({"detect", "--data", dir / "twoseg.json", "--config", dir / "fast.txt", "--seeds", "3",
                       "--seed", "4", "--ablation", "no_ar", "--out", dir / "det"});
  REQUIRE(r.code == 0);
  const auto summary = read(dir / "det/summary.json");
  CHECK(summary["variant"] == "ALACPDw/oAR");
  CHECK(summary["seeds"].size() == 3);
  CHECK(summary["config"]["use_ar"] == false);
  for (int s = 4; s < 7; ++s) {
    const auto d = read(dir / ("det/twoseg.seed" + std::to_string(s) + ".json"));
    CHECK(d["seed"] == s);
    CHECK(d["variant"] == "ALACPDw/oAR");
    CHECK(d["flags"].size() == 160);
    CHECK_FALSE(d.contains("losses"));
    for (std::size_t k = 0; k < d["change_points"].size(); ++k)
      CHECK(d["emissions"][k].get<int>() == d["change_points"][k].get<int>() + 3);
  }

  SUBCASE("trace adds per-step losses") {
    const auto t = call({"detect", "--data", dir / "twoseg.json", "--config", dir / "fast.txt", "--seeds", "1",
                         "--trace", "--out", dir / "traced"});
    REQUIRE(t.code == 0);
    const auto d = read(dir / "traced/twoseg.seed0.json");
    CHECK(d["losses"].size() == 160 - d["n_init"].get<std::size_t>());
    CHECK(d["losses"][0].size() == 3);
  }
}

TEST_CASE("seed runs merge in seed order whatever the thread count") {
  data::TimeSeries s;
  s.name = "mini";
  s.values = nd::Matrix(60, 1);
  for (std::size_t t = 0; t < 60; ++t) s.values(t, 0) = std::sin(0.7 * t) + (t >= 35 ? 3.0 : 0.0);
  auto cfg = cli::parse_config(kFastConfig);
  const auto serial = cli::run_seeds(s, cfg, 10, 4, 1);
  const auto threaded = cli::run_seeds(s, cfg, 10, 4, 3);
  REQUIRE(serial.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(serial[i].seed == 10 + i);
    CHECK(threaded[i].seed == 10 + i);
    CHECK(serial[i].change_points == threaded[i].change_points);
    CHECK(serial[i].flags == threaded[i].flags);
  }
}

TEST_CASE("errors carry a stage and an exit code") {
  TempDir dir;
  make_fixture(dir);

  auto r = call({"detect", "--data", dir / "nope.json", "--out", dir / "x"});
  CHECK(r.code == 2);
  const auto e = json::parse(r.err)["error"];
  CHECK(e["stage"] == "load");
  CHECK(e["message"].get<std::string>().find("nope.json") != std::string::npos);

  write(dir / "bad.txt", "U = 4\nwhat = 1\n");
  r = call({"detect", "--data", dir / "twoseg.json", "--config", dir / "bad.txt", "--out", dir / "x"});
  CHECK(r.code == 2);
  CHECK(json::parse(r.err)["error"]["stage"] == "config");

  r = call({"detect", "--data", dir / "twoseg.json"});
  CHECK(r.code == 2);
  CHECK(json::parse(r.err)["error"]["stage"] == "usage");

  r = call({});
  CHECK(r.code == 2);

  write(dir / "broken.json", "{\"name\": \"x\", ");
  r = call({"detect", "--data", dir / "broken.json", "--out", dir / "x"});
  CHECK(r.code == 2);
  CHECK(json::parse(r.err)["error"]["type"] == "ParseError");

  r = call({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("detect") != std::string::npos);
}

TEST_CASE("eval") {
  TempDir dir;
  make_fixture(dir);
  const std::string ann = dir / "twoseg.annotations.json";

  SUBCASE("exact labels score perfectly") {
    write(dir / "pred.json", R"({"dataset": "twoseg", "seed": 0, "n": 160, "change_points": [80]})");
    const auto r = call({"eval", "--pred", dir / "pred.json", "--annotations", ann});
    REQUIRE(r.code == 0);
    const auto doc = json::parse(r.out);
    CHECK(doc["covering"] == 1.0);
    CHECK(doc["f1"] == 1.0);
    CHECK(doc["margin"] == 5);
    CHECK(doc["seeds"].size() == 1);
  }
  SUBCASE("empty prediction gives the zero-method covering") {
    write(dir / "pred.json", R"({"dataset": "twoseg", "seed": 0, "n": 160, "change_points": []})");
    const auto r = call({"eval", "--pred", dir / "pred.json", "--annotations", ann});
    REQUIRE(r.code == 0);
    // Segments [0,80) and [80,160) each covered by [0,160) at Jaccard 0.5.
    CHECK(json::parse(r.out)["covering"].get<double>() == doctest::Approx(0.5));
  }
  SUBCASE("margin moves F1 only") {
    write(dir / "pred.json", R"({"dataset": "twoseg", "seed": 0, "n": 160, "change_points": [84]})");
    const auto tight = json::parse(call({"eval", "--pred", dir / "pred.json", "--annotations", ann, "--margin", "2"}).out);
    const auto loose = json::parse(call({"eval", "--pred", dir / "pred.json", "--annotations", ann, "--margin", "5"}).out);
    CHECK(tight["covering"] == loose["covering"]);
    CHECK(tight["f1"].get<double>() < loose["f1"].get<double>());
  }
  SUBCASE("dataset mismatch is an input error") {
    write(dir / "pred.json", R"({"dataset": "other", "seed": 0, "n": 160, "change_points": [80]})");
    const auto r = call({"eval", "--pred", dir / "pred.json", "--annotations", ann});
    CHECK(r.code == 2);
    CHECK(json::parse(r.err)["error"]["stage"] == "load");
  }
  SUBCASE("a detection directory is averaged over seeds") {
    REQUIRE(call({"detect", "--data", dir / "twoseg.json", "--config", dir / "fast.txt", "--seeds", "2", "--out",
                  dir / "det"}).code == 0);
    const auto r = call({"eval", "--pred", dir / "det", "--annotations", ann, "--out", dir / "scores.json"});
    REQUIRE(r.code == 0);
    const auto doc = read(dir / "scores.json");
    CHECK(doc["seeds"].size() == 2);
    const double mean = (doc["seeds"][0]["covering"].get<double>() + doc["seeds"][1]["covering"].get<double>()) / 2;
    CHECK(doc["covering"].get<double>() == doctest::Approx(mean));
  }
}

TEST_CASE("bench") {
  TempDir dir;
  make_fixture(dir, "alpha");
  write(dir / "spec_b.txt", "name = beta\nseed = 8\nsegment = 70 0 1 0.3\nsegment = 70 -4 1 0.3\n");
  REQUIRE(call({"synth", "--spec", dir / "spec_b.txt", "--out", dir / "beta.json"}).code == 0);

  SUBCASE("single dataset, single variant ranks first") {
    write(dir / "one.json", R"({"datasets": [{"data": "alpha.json", "annotations": "alpha.annotations.json"}],
                                "variants": ["full"], "seeds": 2, "config": "fast.txt", "out": "one_out"})");
    const auto r = call({"bench", "--manifest", dir / "one.json"});
    REQUIRE(r.code == 0);
    const auto rep = read(dir / "one_out/bench.json");
    CHECK(rep["rank_covering"]["ALACPD"] == 1.0);
    const auto plot = read(dir / "one_out/rank_plot.json");
    CHECK(plot["x"] == json::array({"ALACPD"}));
    CHECK(plot["y"] == json::array({1.0}));
  }
  SUBCASE("three variants, byte-identical reruns") {
    write(dir / "all.json", R"({"datasets": [{"data": "alpha.json", "annotations": "alpha.annotations.json"},
                                             {"data": "beta.json", "annotations": "beta.annotations.json"}],
                                "variants": ["full", "no_ar", "no_ae"], "seeds": 2, "config": "fast.txt"})");
    REQUIRE(call({"bench", "--manifest", dir / "all.json", "--out", dir / "r1", "--jobs", "2"}).code == 0);
    REQUIRE(call({"bench", "--manifest", dir / "all.json", "--out", dir / "r2", "--jobs", "1"}).code == 0);
    CHECK(slurp(dir / "r1/bench.json") == slurp(dir / "r2/bench.json"));
    CHECK(slurp(dir / "r1/rank_plot.json") == slurp(dir / "r2/rank_plot.json"));
    const auto rep = read(dir / "r1/bench.json");
    CHECK(rep["rank_covering"].size() == 3);
    double total = 0;
    for (const auto& [k, v] : rep["rank_covering"].items()) total += v.get<double>();
    CHECK(total == doctest::Approx(6.0));  // ranks 1 + 2 + 3 per dataset
  }
  SUBCASE("missing annotations fail at load") {
    write(dir / "bad.json", R"({"datasets": [{"data": "alpha.json", "annotations": "none.json"}]})");
    const auto r = call({"bench", "--manifest", dir / "bad.json"});
    CHECK(r.code == 2);
    CHECK(json::parse(r.err)["error"]["stage"] == "load");
  }
}

TEST_CASE("gradcheck subcommand") {
  const auto r = call({"gradcheck"});
  CHECK(r.code == 0);
  const auto doc = json::parse(r.out);
  CHECK(doc["passed"] == true);
  CHECK(doc["cases"].size() == 16);
  CHECK(doc["worst"].get<double>() < 1e-4);
}
