#include "alacpd/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "alacpd/errors.hpp"
#include "alacpd/gradcheck.hpp"
#include "alacpd/kvconfig.hpp"
#include "alacpd/metrics.hpp"

namespace alacpd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Variants and configuration

Variant parse_variant(std::string_view name) {
  if (name == "full") return Variant::kFull;
  if (name == "no_ar") return Variant::kNoAr;
  if (name == "no_ae") return Variant::kNoAe;
  throw ConfigError("unknown ablation '" + std::string(name) + "' (expected full, no_ar or no_ae)");
}

std::string variant_label(Variant v) {
  switch (v) {
    case Variant::kFull: return "ALACPD";
    case Variant::kNoAr: return "ALACPDw/oAR";
    case Variant::kNoAe: return "ALACPDw/oAE";
  }
  return "ALACPD";
}

std::string variant_key(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoAr: return "no_ar";
    case Variant::kNoAe: return "no_ae";
  }
  return "full";
}

void apply_variant(EnsembleConfig& cfg, Variant v) {
  cfg.net.use_ae = v != Variant::kNoAe;
  cfg.net.use_ar = v != Variant::kNoAr;
}

namespace {

std::string where(const KeyValue& kv) { return "config line " + std::to_string(kv.line) + " (" + kv.key + ")"; }

double to_double(const KeyValue& kv) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(kv.value, &pos);
    if (pos != kv.value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where(kv) + ": expected a number, got '" + kv.value + "'");
  }
}

std::size_t to_count(const KeyValue& kv) {
  const double v = to_double(kv);
  if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
    throw ConfigError(where(kv) + ": expected a non-negative integer, got '" + kv.value + "'");
  }
  return static_cast<std::size_t>(v);
}

bool to_bool(const KeyValue& kv) {
  if (kv.value == "true" || kv.value == "1" || kv.value == "yes") return true;
  if (kv.value == "false" || kv.value == "0" || kv.value == "no") return false;
  throw ConfigError(where(kv) + ": expected true or false, got '" + kv.value + "'");
}

std::vector<std::size_t> to_list(const KeyValue& kv) {
  std::string text = kv.value;
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream in(text);
  std::vector<std::size_t> out;
  std::string tok;
  while (in >> tok) out.push_back(to_count({kv.key, tok, kv.line}));
  if (out.empty()) throw ConfigError(where(kv) + ": empty list");
  return out;
}

EnsembleConfig::Scaling to_scaling(const std::string& s) {
  if (s == "none") return EnsembleConfig::Scaling::kNone;
  if (s == "init_prefix") return EnsembleConfig::Scaling::kInitPrefix;
  if (s == "full_series") return EnsembleConfig::Scaling::kFullSeries;
  throw ConfigError("unknown standardization '" + s + "' (expected none, init_prefix or full_series)");
}

std::string scaling_name(EnsembleConfig::Scaling s) {
  switch (s) {
    case EnsembleConfig::Scaling::kNone: return "none";
    case EnsembleConfig::Scaling::kInitPrefix: return "init_prefix";
    case EnsembleConfig::Scaling::kFullSeries: return "full_series";
  }
  return "init_prefix";
}

}  // namespace

EnsembleConfig parse_config(std::string_view text, EnsembleConfig cfg) {
  std::optional<std::size_t> members;
  bool skips_given = false;
  for (const auto& kv : parse_key_values(text)) {
    const auto& k = kv.key;
    if (k == "w") cfg.net.window = to_count(kv);
    else if (k == "U") cfg.net.hidden = to_count(kv);
    else if (k == "h") cfg.net.horizon = to_count(kv);
    else if (k == "M") members = to_count(kv);
    else if (k == "S") {
      cfg.skip_sizes = to_list(kv);
      skips_given = true;
    }
    else if (k == "C") cfg.threshold_coef = to_double(kv);
    else if (k == "C_grace") cfg.grace_multiplier = to_double(kv);
    else if (k == "grace_len") cfg.grace_length = to_count(kv);
    else if (k == "beta") cfg.vote_fraction = to_double(kv);
    else if (k == "n_cpd") cfg.n_cpd = to_count(kv);
    else if (k == "n_init") cfg.n_init = to_count(kv);
    else if (k == "n_init_frac") cfg.n_init_frac = to_double(kv);
    else if (k == "e_init") cfg.epochs_init = to_count(kv);
    else if (k == "e_train") cfg.epochs_train = to_count(kv);
    else if (k == "e_reinit") cfg.epochs_reinit = to_count(kv);
    else if (k == "lr") cfg.sgd.learning_rate = to_double(kv);
    else if (k == "seed") cfg.seed = to_count(kv);
    else if (k == "standardize") cfg.scaling = to_scaling(kv.value);
    else if (k == "reset_on_change") cfg.reset_on_change = to_bool(kv);
    else if (k == "parallel_members") cfg.parallel_members = to_bool(kv);
    else throw ConfigError(where(kv) + ": unknown key");
  }
  if (members) {
    if (skips_given && *members != cfg.skip_sizes.size()) {
      throw ConfigError("config: M = " + std::to_string(*members) + " but S lists " +
                        std::to_string(cfg.skip_sizes.size()) + " skip sizes");
    }
    if (!skips_given) {
      if (*members == 0 || *members > cfg.skip_sizes.size()) {
        throw ConfigError("config: M = " + std::to_string(*members) + " needs an explicit S list");
      }
      cfg.skip_sizes.resize(*members);
    }
  }
  cfg.validate();
  return cfg;
}

json config_to_json(const EnsembleConfig& cfg) {
  return {{"w", cfg.net.window},
          {"U", cfg.net.hidden},
          {"h", cfg.net.horizon},
          {"M", cfg.members()},
          {"S", cfg.skip_sizes},
          {"C", cfg.threshold_coef},
          {"C_grace", cfg.grace_multiplier},
          {"grace_len", cfg.grace_length},
          {"beta", cfg.vote_fraction},
          {"n_cpd", cfg.n_cpd},
          {"n_init", cfg.n_init},
          {"n_init_frac", cfg.n_init_frac},
          {"e_init", cfg.epochs_init},
          {"e_train", cfg.epochs_train},
          {"e_reinit", cfg.epochs_reinit},
          {"lr", cfg.sgd.learning_rate},
          {"standardize", scaling_name(cfg.scaling)},
          {"reset_on_change", cfg.reset_on_change},
          {"use_ae", cfg.net.use_ae},
          {"use_ar", cfg.net.use_ar}};
}

// ---------------------------------------------------------------------------
// Running

std::vector<DetectionReport> run_seeds(const data::TimeSeries& series, const EnsembleConfig& cfg,
                                       std::uint64_t first_seed, std::size_t count, std::size_t jobs,
                                       const RunOptions& opts) {
  std::vector<DetectionReport> reports(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        EnsembleConfig c = cfg;
        c.seed = first_seed + i;
        reports[i] = alacpd::run(series, c, opts);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  // Report the failure of the lowest seed so the message is reproducible.
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return reports;
}

json detection_to_json(const DetectionReport& r, Variant v, bool with_losses) {
  json doc = {{"dataset", r.dataset},
              {"variant", variant_label(v)},
              {"seed", r.seed},
              {"n", r.n},
              {"n_init", r.n_init},
              {"change_points", r.change_points},
              {"emissions", r.emissions},
              {"flags", r.flags}};
  if (with_losses) doc["losses"] = r.losses;
  return doc;
}

namespace {

// ---------------------------------------------------------------------------
// Plumbing

struct Failure {
  std::string stage;
  std::string type;
  std::string message;
  int code;
};

struct StageGuard {
  std::string& slot;
  StageGuard(std::string& s, std::string name) : slot(s) { slot = std::move(name); }
};

void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw InputError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::size_t default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string safe_name(std::string s) {
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return s.empty() ? "series" : s;
}

// Options shared by detect and bench entries.
struct DetectOptions {
  std::string data;
  std::string config;
  std::uint64_t seed = 0;
  std::size_t seeds = 10;
  std::string ablation = "full";
  bool trace = false;
  std::size_t n_init = 0;
  std::string standardize;
  std::size_t jobs = 0;
  std::string out;
  bool forward_fill = false;
};

EnsembleConfig build_config(const std::string& config_path, std::size_t n_init, const std::string& standardize,
                            Variant v, std::string& stage) {
  StageGuard g(stage, "config");
  EnsembleConfig cfg;
  if (!config_path.empty()) cfg = parse_config(read_text_file(config_path));
  if (n_init > 0) cfg.n_init = n_init;
  if (!standardize.empty()) cfg.scaling = to_scaling(standardize);
  apply_variant(cfg, v);
  cfg.validate();
  return cfg;
}

int cmd_detect(const DetectOptions& o, std::ostream& out, std::string& stage) {
  if (o.seeds < 1) throw ConfigError("--seeds must be >= 1");
  const Variant v = [&] {
    StageGuard g(stage, "config");
    return parse_variant(o.ablation);
  }();
  const EnsembleConfig cfg = build_config(o.config, o.n_init, o.standardize, v, stage);

  data::TimeSeries series;
  {
    StageGuard g(stage, "load");
    series = data::load_series(o.data, {.forward_fill = o.forward_fill});
  }

  std::vector<DetectionReport> reports;
  {
    StageGuard g(stage, "detect");
    reports = run_seeds(series, cfg, o.seed, o.seeds, o.jobs ? o.jobs : default_jobs(), {.trace = o.trace});
  }

  StageGuard g(stage, "write");
  const fs::path dir(o.out);
  const std::string stem = safe_name(series.name);
  json per_seed = json::array();
  std::set<std::size_t> all;
  for (const auto& r : reports) {
    write_json(dir / (stem + ".seed" + std::to_string(r.seed) + ".json"), detection_to_json(r, v, o.trace));
    per_seed.push_back({{"seed", r.seed}, {"change_points", r.change_points}});
    all.insert(r.change_points.begin(), r.change_points.end());
  }
  json summary = {{"dataset", series.name},
                  {"variant", variant_label(v)},
                  {"n", series.n()},
                  {"n_init", reports.front().n_init},
                  {"seeds", per_seed},
                  {"union", std::vector<std::size_t>(all.begin(), all.end())},
                  {"config", config_to_json(cfg)}};
  write_json(dir / "summary.json", summary);
  out << summary.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct Prediction {
  std::string dataset;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::vector<std::size_t> change_points;
};

std::vector<Prediction> load_predictions(const fs::path& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".json" && e.path().filename() != "summary.json")
        files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else if (fs::exists(path)) {
    files.push_back(path);
  } else {
    throw InputError("predictions not found: " + path.string());
  }
  std::vector<Prediction> preds;
  for (const auto& f : files) {
    const json doc = read_json(f);
    if (!doc.is_object() || !doc.contains("change_points")) continue;
    try {
      Prediction p;
      p.dataset = doc.at("dataset").get<std::string>();
      p.seed = doc.value("seed", std::uint64_t{0});
      p.n = doc.value("n", std::size_t{0});
      p.change_points = doc.at("change_points").get<std::vector<std::size_t>>();
      preds.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(f.string() + ": " + e.what());
    }
  }
  if (preds.empty()) throw InputError("no detection files in " + path.string());
  std::stable_sort(preds.begin(), preds.end(), [](const auto& a, const auto& b) { return a.seed < b.seed; });
  for (const auto& p : preds)
    if (p.dataset != preds.front().dataset) {
      throw InputError("predictions mix datasets '" + preds.front().dataset + "' and '" + p.dataset + "'");
    }
  return preds;
}

metrics::AnnotationSet annotations_for(const json& doc, const std::string& dataset, std::size_t n) {
  auto set = metrics::parse_annotations(doc, dataset, n);
  if (set.dataset != dataset) {
    throw InputError("annotations are for dataset '" + set.dataset + "' but predictions are for '" + dataset + "'");
  }
  if (n != 0 && set.n != n) {
    throw InputError("annotations give n = " + std::to_string(set.n) + " but predictions have n = " +
                     std::to_string(n));
  }
  return set;
}

struct Scores {
  double covering = 0, f1 = 0, precision = 0, recall = 0;
};

Scores score(const std::vector<std::size_t>& cps, const metrics::AnnotationSet& truth,
             const metrics::MatchConfig& mc) {
  const auto f = metrics::f1_score(cps, truth, mc);
  return {metrics::covering(cps, truth), f.f1, f.precision, f.recall};
}

json scores_json(const Scores& s) {
  return {{"covering", s.covering}, {"f1", s.f1}, {"precision", s.precision}, {"recall", s.recall}};
}

int cmd_eval(const std::string& pred, const std::string& ann, std::size_t margin, bool no_trivial,
             const std::string& out_path, std::ostream& out, std::string& stage) {
  std::vector<Prediction> preds;
  metrics::AnnotationSet truth;
  {
    StageGuard g(stage, "load");
    preds = load_predictions(pred);
    truth = annotations_for(read_json(ann), preds.front().dataset, preds.front().n);
  }
  StageGuard g(stage, "eval");
  const metrics::MatchConfig mc{margin, !no_trivial};
  json seeds = json::array();
  Scores mean;
  for (const auto& p : preds) {
    const Scores s = score(p.change_points, truth, mc);
    json row = scores_json(s);
    row["seed"] = p.seed;
    seeds.push_back(row);
    mean.covering += s.covering;
    mean.f1 += s.f1;
    mean.precision += s.precision;
    mean.recall += s.recall;
  }
  const double k = static_cast<double>(preds.size());
  json doc = scores_json({mean.covering / k, mean.f1 / k, mean.precision / k, mean.recall / k});
  doc["dataset"] = truth.dataset;
  doc["margin"] = margin;
  doc["trivial_start"] = !no_trivial;
  doc["seeds"] = seeds;
  if (!out_path.empty()) {
    StageGuard w(stage, "write");
    write_json(out_path, doc);
  }
  out << doc.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// bench
//
// Manifest:
//   {"datasets": [{"data": path, "annotations": path, "n_init": int?}, ...],
//    "variants": ["full", "no_ar", "no_ae"], "seeds": 10, "seed": 0,
//    "config": path?, "margin": 5, "rank_metric": "covering" | "f1",
//    "out": dir}
// Relative paths resolve against the manifest's directory.

int cmd_bench(const std::string& manifest_path, const std::string& out_override, std::size_t jobs,
              std::ostream& out, std::string& stage) {
  json manifest;
  fs::path base;
  {
    StageGuard g(stage, "load");
    manifest = read_json(manifest_path);
    base = fs::path(manifest_path).parent_path();
  }
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  struct Entry {
    data::TimeSeries series;
    metrics::AnnotationSet truth;
    std::size_t n_init = 0;
  };
  std::vector<Entry> entries;
  std::vector<Variant> variants;
  std::size_t seeds = 10, margin = 5;
  std::uint64_t first_seed = 0;
  std::string rank_metric = "covering";
  std::string config_path;
  fs::path out_dir;
  {
    StageGuard g(stage, "config");
    try {
      for (const auto& name : manifest.value("variants", std::vector<std::string>{"full"}))
        variants.push_back(parse_variant(name));
      seeds = manifest.value("seeds", std::size_t{10});
      first_seed = manifest.value("seed", std::uint64_t{0});
      margin = manifest.value("margin", std::size_t{5});
      rank_metric = manifest.value("rank_metric", std::string("covering"));
      if (manifest.contains("config")) config_path = resolve(manifest.at("config").get<std::string>()).string();
      out_dir = !out_override.empty() ? fs::path(out_override)
                                      : resolve(manifest.value("out", std::string("bench_out")));
    } catch (const json::exception& e) {
      throw ParseError(manifest_path + ": " + e.what());
    }
    if (variants.empty()) throw ConfigError("manifest: no variants");
    if (seeds < 1) throw ConfigError("manifest: seeds must be >= 1");
    if (rank_metric != "covering" && rank_metric != "f1") {
      throw ConfigError("manifest: rank_metric must be covering or f1");
    }
    if (!manifest.contains("datasets") || !manifest["datasets"].is_array() || manifest["datasets"].empty()) {
      throw ParseError(manifest_path + ": datasets must be a non-empty array");
    }
  }
  {
    StageGuard g(stage, "load");
    for (const auto& d : manifest["datasets"]) {
      Entry e;
      try {
        e.series = data::load_series(resolve(d.at("data").get<std::string>()));
        e.truth = annotations_for(read_json(resolve(d.at("annotations").get<std::string>())), e.series.name,
                                  e.series.n());
        e.n_init = d.value("n_init", std::size_t{0});
      } catch (const json::exception& ex) {
        throw ParseError(manifest_path + ": datasets entry: " + ex.what());
      }
      entries.push_back(std::move(e));
    }
  }

  StageGuard g(stage, "bench");
  const metrics::MatchConfig mc{margin, true};
  json covering = json::object(), f1 = json::object();
  std::vector<std::vector<double>> cov_table, f1_table;
  std::vector<std::string> dataset_names;
  for (const auto& e : entries) dataset_names.push_back(e.series.name);

  for (Variant v : variants) {
    std::vector<double> cov_row, f1_row;
    for (const auto& e : entries) {
      EnsembleConfig cfg = build_config(config_path, e.n_init, "", v, stage);
      stage = "bench";
      const auto reports = run_seeds(e.series, cfg, first_seed, seeds, jobs ? jobs : default_jobs());
      Scores mean;
      for (const auto& r : reports) {
        const Scores s = score(r.change_points, e.truth, mc);
        mean.covering += s.covering;
        mean.f1 += s.f1;
      }
      cov_row.push_back(mean.covering / static_cast<double>(seeds));
      f1_row.push_back(mean.f1 / static_cast<double>(seeds));
      covering[variant_label(v)][e.series.name] = cov_row.back();
      f1[variant_label(v)][e.series.name] = f1_row.back();
    }
    cov_table.push_back(cov_row);
    f1_table.push_back(f1_row);
  }
  const auto cov_rank = metrics::average_rank(cov_table);
  const auto f1_rank = metrics::average_rank(f1_table);

  json labels = json::array(), rank_cov = json::object(), rank_f1 = json::object();
  for (std::size_t i = 0; i < variants.size(); ++i) {
    labels.push_back(variant_label(variants[i]));
    rank_cov[variant_label(variants[i])] = cov_rank[i];
    rank_f1[variant_label(variants[i])] = f1_rank[i];
  }
  json report = {{"datasets", dataset_names}, {"variants", labels},  {"seeds", seeds},
                 {"first_seed", first_seed},  {"margin", margin},    {"covering", covering},
                 {"f1", f1},                  {"rank_covering", rank_cov}, {"rank_f1", rank_f1}};
  json plot = {{"metric", rank_metric},
               {"x", labels},
               {"y", rank_metric == "covering" ? cov_rank : f1_rank},
               {"xlabel", "method"},
               {"ylabel", "average rank"}};
  StageGuard w(stage, "write");
  write_json(out_dir / "bench.json", report);
  write_json(out_dir / "rank_plot.json", plot);
  out << report.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& spec_path, const std::string& out_path, std::string ann_path,
              std::ostream& out, std::string& stage) {
  data::SyntheticSpec spec;
  {
    StageGuard g(stage, "config");
    spec = data::parse_synthetic_spec(read_text_file(spec_path));
  }
  StageGuard g(stage, "synth");
  const auto syn = data::generate_synthetic(spec);
  if (ann_path.empty()) {
    fs::path p(out_path);
    ann_path = (p.parent_path() / (p.stem().string() + ".annotations.json")).string();
  }
  metrics::AnnotationSet truth{syn.series.name, syn.series.n(), {"1"}, {syn.change_points}};
  stage = "write";
  write_json(out_path, data::to_benchmark_json(syn.series));
  write_json(ann_path, metrics::to_json(truth));
  out << json{{"dataset", syn.series.name},
              {"n", syn.series.n()},
              {"dims", syn.series.dims()},
              {"change_points", syn.change_points},
              {"data", out_path},
              {"annotations", ann_path}}
             .dump(2)
      << '\n';
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& out_path, std::ostream& out, std::string& stage) {
  StageGuard g(stage, "gradcheck");
  const auto report = run_gradcheck(seed);
  const json doc = to_json(report);
  if (!out_path.empty()) {
    stage = "write";
    write_json(out_path, doc);
  }
  out << doc.dump(2) << '\n';
  return report.passed() ? 0 : 1;
}

template <class E>
Failure failure(const std::string& stage, const char* type, const E& e, int code) {
  return {stage, type, e.what(), code};
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Online change-point detection with an ensemble of skip-connected LSTM autoencoders"};
  app.require_subcommand(1);

  DetectOptions det;
  auto* detect = app.add_subcommand("detect", "Run the detector on one dataset");
  detect->add_option("--data", det.data, "Dataset (benchmark JSON or CSV)")->required();
  detect->add_option("--config", det.config, "Hyperparameter file (key = value)");
  detect->add_option("--seed", det.seed, "First seed");
  detect->add_option("--seeds", det.seeds, "Number of seeds");
  detect->add_option("--ablation", det.ablation, "full, no_ar or no_ae");
  detect->add_flag("--trace", det.trace, "Record per-step member losses");
  detect->add_option("--n-init", det.n_init, "Initial training samples (overrides the fraction)");
  detect->add_option("--standardize", det.standardize, "none, init_prefix or full_series");
  detect->add_flag("--forward-fill", det.forward_fill, "Fill missing values from the previous row");
  detect->add_option("--jobs", det.jobs, "Seeds run concurrently (default: hardware threads)");
  detect->add_option("--out", det.out, "Output directory")->required();

  std::string pred, ann, eval_out;
  std::size_t margin = 5;
  bool no_trivial = false;
  auto* eval = app.add_subcommand("eval", "Score detections against annotations");
  eval->add_option("--pred", pred, "Detection JSON or a directory of them")->required();
  eval->add_option("--annotations", ann, "Annotation JSON")->required();
  eval->add_option("--margin", margin, "F1 margin of error");
  eval->add_flag("--no-trivial-start", no_trivial, "Do not add index 0 to predictions and annotations");
  eval->add_option("--out", eval_out, "Also write the scores here");

  std::string manifest, bench_out;
  std::size_t bench_jobs = 0;
  auto* bench = app.add_subcommand("bench", "Multi-dataset, multi-seed runs with rank aggregation");
  bench->add_option("--manifest", manifest, "Bench manifest JSON")->required();
  bench->add_option("--out", bench_out, "Output directory (overrides the manifest)");
  bench->add_option("--jobs", bench_jobs, "Seeds run concurrently");

  std::string spec, synth_out, synth_ann;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset and its annotations");
  synth->add_option("--spec", spec, "Generator spec (key = value)")->required();
  synth->add_option("--out", synth_out, "Dataset JSON to write")->required();
  synth->add_option("--annotations", synth_ann, "Annotation JSON (default: <out>.annotations.json)");

  std::uint64_t gc_seed = 2024;
  std::string gc_out;
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic and numerical gradients");
  gradcheck->add_option("--seed", gc_seed, "Seed for the random configurations");
  gradcheck->add_option("--out", gc_out, "Also write the report here");

  std::string stage = "usage";
  std::optional<Failure> fail;
  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      err << json{{"error", {{"stage", "usage"}, {"type", "UsageError"}, {"message", e.what()}}}}.dump() << '\n';
      return 2;
    }
    if (detect->parsed()) return cmd_detect(det, out, stage);
    if (eval->parsed()) return cmd_eval(pred, ann, margin, no_trivial, eval_out, out, stage);
    if (bench->parsed()) return cmd_bench(manifest, bench_out, bench_jobs, out, stage);
    if (synth->parsed()) return cmd_synth(spec, synth_out, synth_ann, out, stage);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_out, out, stage);
    return 2;
  } catch (const InputError& e) {
    fail = failure(stage, "InputError", e, 2);
  } catch (const ParseError& e) {
    fail = failure(stage, "ParseError", e, 2);
  } catch (const ConfigError& e) {
    fail = failure(stage, "ConfigError", e, 2);
  } catch (const DimensionError& e) {
    fail = failure(stage, "DimensionError", e, 2);
  } catch (const TrainingError& e) {
    fail = failure(stage, "TrainingError", e, 1);
  } catch (const fs::filesystem_error& e) {
    fail = failure(stage, "FilesystemError", e, 2);
  } catch (const std::exception& e) {
    fail = failure(stage, "InternalError", e, 1);
  }
  err << json{{"error", {{"stage", fail->stage}, {"type", fail->type}, {"message", fail->message}}}}.dump() << '\n';
  return fail->code;
}

}  // namespace alacpd::cli
