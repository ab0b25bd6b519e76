#include "alacpd/data.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "alacpd/errors.hpp"
#include "alacpd/kvconfig.hpp"

namespace alacpd::data {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

void fill_missing(Matrix& values, const std::vector<std::string>& labels, const LoadOptions& opts,
                  const std::string& where) {
  for (std::size_t d = 0; d < values.cols(); ++d) {
    for (std::size_t t = 0; t < values.rows(); ++t) {
      if (!std::isnan(values(t, d))) continue;
      if (!opts.forward_fill) {
        throw ParseError(where + ": missing value in '" + labels[d] + "' at index " +
                         std::to_string(t));
      }
      if (t == 0) {
        throw ParseError(where + ": cannot forward-fill leading missing value in '" + labels[d] +
                         "'");
      }
      values(t, d) = values(t - 1, d);
    }
  }
}

std::string to_time_label(const nlohmann::json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

TimeSeries parse_benchmark_json(const nlohmann::json& doc, const LoadOptions& opts) {
  auto need = [&](const char* key) -> const nlohmann::json& {
    if (!doc.is_object() || !doc.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
    return doc.at(key);
  };
  TimeSeries ts;
  const auto& name = need("name");
  if (!name.is_string()) throw ParseError("'name' must be a string");
  ts.name = name.get<std::string>();
  const auto& n_obs_j = need("n_obs");
  const auto& n_dim_j = need("n_dim");
  if (!n_obs_j.is_number_unsigned() && !n_obs_j.is_number_integer()) throw ParseError("'n_obs' must be an integer");
  if (!n_dim_j.is_number_unsigned() && !n_dim_j.is_number_integer()) throw ParseError("'n_dim' must be an integer");
  const auto n_obs = n_obs_j.get<long long>();
  const auto n_dim = n_dim_j.get<long long>();
  if (n_obs <= 0) throw ParseError("'n_obs' must be positive");
  if (n_dim <= 0) throw ParseError("'n_dim' must be positive");

  const auto& series = need("series");
  if (!series.is_array()) throw ParseError("'series' must be an array");
  if (series.size() != static_cast<std::size_t>(n_dim)) {
    throw ParseError("'series' has " + std::to_string(series.size()) + " entries but n_dim = " +
                     std::to_string(n_dim));
  }

  ts.values = Matrix(static_cast<std::size_t>(n_obs), static_cast<std::size_t>(n_dim));
  for (std::size_t d = 0; d < series.size(); ++d) {
    const std::string path = "series[" + std::to_string(d) + "]";
    const auto& s = series[d];
    if (!s.is_object() || !s.contains("raw")) throw ParseError(path + ".raw: missing");
    std::string label = s.contains("label") && s["label"].is_string() ? s["label"].get<std::string>()
                                                                       : "V" + std::to_string(d + 1);
    const auto& raw = s["raw"];
    if (!raw.is_array()) throw ParseError(path + ".raw ('" + label + "'): not an array");
    if (raw.size() != static_cast<std::size_t>(n_obs)) {
      throw ParseError(path + ".raw ('" + label + "'): length " + std::to_string(raw.size()) +
                       " does not match n_obs " + std::to_string(n_obs));
    }
    for (std::size_t t = 0; t < raw.size(); ++t) {
      const auto& v = raw[t];
      if (v.is_null()) {
        ts.values(t, d) = kMissing;
      } else if (v.is_number()) {
        ts.values(t, d) = v.get<double>();
      } else {
        throw ParseError(path + ".raw[" + std::to_string(t) + "] ('" + label + "'): non-numeric value " +
                         v.dump());
      }
    }
    ts.labels.push_back(std::move(label));
  }

  if (doc.contains("time") && doc["time"].is_object() && doc["time"].contains("raw") &&
      doc["time"]["raw"].is_array() && doc["time"]["raw"].size() == static_cast<std::size_t>(n_obs)) {
    for (const auto& v : doc["time"]["raw"]) ts.time.push_back(to_time_label(v));
  }
  fill_missing(ts.values, ts.labels, opts, ts.name);
  return ts;
}

TimeSeries load_benchmark_json(const std::filesystem::path& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    return parse_benchmark_json(doc, opts);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

nlohmann::json to_benchmark_json(const TimeSeries& ts) {
  nlohmann::json series = nlohmann::json::array();
  for (std::size_t d = 0; d < ts.dims(); ++d) {
    std::vector<double> raw(ts.n());
    for (std::size_t t = 0; t < ts.n(); ++t) raw[t] = ts.values(t, d);
    series.push_back({{"label", d < ts.labels.size() ? ts.labels[d] : "V" + std::to_string(d + 1)},
                      {"type", "float"},
                      {"raw", raw}});
  }
  std::vector<std::size_t> index(ts.n());
  for (std::size_t t = 0; t < ts.n(); ++t) index[t] = t;
  return {{"name", ts.name},
          {"longname", ts.name},
          {"n_obs", ts.n()},
          {"n_dim", ts.dims()},
          {"time", {{"index", index}}},
          {"series", series}};
}

TimeSeries load_csv(const std::filesystem::path& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  };

  TimeSeries ts;
  ts.name = path.stem().string();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  ts.labels = split(line);
  const std::size_t dims = ts.labels.size();
  if (dims == 0) throw ParseError(path.string() + ": empty header");

  std::vector<double> flat;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != dims) {
      throw ParseError(path.string() + ": row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " fields, header has " + std::to_string(dims));
    }
    for (std::size_t d = 0; d < dims; ++d) {
      const auto& c = cells[d];
      if (c.empty() || c == "NA" || c == "NaN" || c == "nan" || c == "null") {
        flat.push_back(kMissing);
        continue;
      }
      try {
        std::size_t used = 0;
        flat.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw ParseError(path.string() + ": row " + std::to_string(row) + " column '" +
                         ts.labels[d] + "': non-numeric value '" + c + "'");
      }
    }
    ++row;
  }
  if (row == 0) throw ParseError(path.string() + ": no data rows");
  ts.values = Matrix(row, dims);
  std::copy(flat.begin(), flat.end(), ts.values.data().begin());
  fill_missing(ts.values, ts.labels, opts, path.string());
  return ts;
}

TimeSeries load_series(const std::filesystem::path& path, const LoadOptions& opts) {
  if (path.extension() == ".csv") return load_csv(path, opts);
  return load_benchmark_json(path, opts);
}

// ---------------------------------------------------------------------------

Standardizer Standardizer::fit(const Matrix& values, std::size_t fit_rows) {
  if (fit_rows == 0 || fit_rows > values.rows()) {
    throw InputError("standardize: fit range of " + std::to_string(fit_rows) + " rows invalid for " +
                     std::to_string(values.rows()) + " rows");
  }
  Standardizer s;
  const std::size_t dims = values.cols();
  s.mean_.assign(dims, 0.0);
  s.std_.assign(dims, 0.0);
  for (std::size_t d = 0; d < dims; ++d) {
    double m = 0.0;
    for (std::size_t t = 0; t < fit_rows; ++t) m += values(t, d);
    m /= static_cast<double>(fit_rows);
    double v = 0.0;
    for (std::size_t t = 0; t < fit_rows; ++t) v += (values(t, d) - m) * (values(t, d) - m);
    v /= static_cast<double>(fit_rows);
    s.mean_[d] = m;
    const double sd = std::sqrt(v);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(m)))) {
      s.std_[d] = 1.0;
      s.constant_.push_back(d);
    } else {
      s.std_[d] = sd;
    }
  }
  return s;
}

Matrix Standardizer::transform(const Matrix& values) const {
  Matrix out(values.rows(), values.cols());
  for (std::size_t t = 0; t < values.rows(); ++t)
    for (std::size_t d = 0; d < values.cols(); ++d)
      out(t, d) = (values(t, d) - mean_[d]) / std_[d];
  return out;
}

Matrix Standardizer::inverse(const Matrix& values) const {
  Matrix out(values.rows(), values.cols());
  for (std::size_t t = 0; t < values.rows(); ++t)
    for (std::size_t d = 0; d < values.cols(); ++d) out(t, d) = values(t, d) * std_[d] + mean_[d];
  return out;
}

Standardized standardize(const TimeSeries& series, FitRange range, std::size_t prefix_rows) {
  if (series.n() == 0) throw InputError("standardize: empty series");
  const std::size_t rows = range == FitRange::kFullSeries ? series.n() : prefix_rows;
  Standardized out{series, Standardizer::fit(series.values, rows)};
  out.series.values = out.standardizer.transform(series.values);
  return out;
}

// ---------------------------------------------------------------------------

WindowView::WindowView(const Matrix& source, std::size_t end, std::size_t w)
    : src_(&source), end_(end), w_(w) {
  if (w == 0 || end + 1 < w || end >= source.rows()) {
    throw InputError("WindowView: window of " + std::to_string(w) + " ending at " +
                     std::to_string(end) + " outside " + std::to_string(source.rows()) + " rows");
  }
}

std::vector<WindowView> windows(const Matrix& values, std::size_t w) {
  if (w == 0 || values.rows() < w) {
    throw InputError("windows: series of length " + std::to_string(values.rows()) +
                     " is shorter than window " + std::to_string(w));
  }
  std::vector<WindowView> out;
  out.reserve(values.rows() - w + 1);
  for (std::size_t end = w - 1; end < values.rows(); ++end) out.emplace_back(values, end, w);
  return out;
}

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (dims == 0) throw ConfigError("synthetic: dims must be >= 1");
  if (segments.empty()) throw ConfigError("synthetic: at least one segment required");
  std::size_t n = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    const std::string where = "synthetic: segment " + std::to_string(i);
    if (s.length < min_segment_length) {
      throw ConfigError(where + " length " + std::to_string(s.length) + " < " +
                        std::to_string(min_segment_length));
    }
    if (s.mean.size() != dims) throw ConfigError(where + " needs " + std::to_string(dims) + " means");
    if (!(s.stddev >= 0.0)) throw ConfigError(where + " stddev must be >= 0");
    if (!(std::abs(s.ar_coef) < 1.0)) throw ConfigError(where + " needs |ar| < 1");
    n += s.length;
  }
  for (const auto& sp : spikes) {
    if (sp.length == 0 || sp.index + sp.length > n) {
      throw ConfigError("synthetic: spike at " + std::to_string(sp.index) + " outside series");
    }
  }
}

SyntheticSeries generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::size_t n = 0;
  for (const auto& s : spec.segments) n += s.length;

  SyntheticSeries out;
  out.series.name = spec.name;
  out.series.values = Matrix(n, spec.dims);
  for (std::size_t d = 0; d < spec.dims; ++d) out.series.labels.push_back("V" + std::to_string(d + 1));

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t t = 0;
  for (std::size_t i = 0; i < spec.segments.size(); ++i) {
    const auto& seg = spec.segments[i];
    if (i > 0) out.change_points.push_back(t);
    const double innovation = seg.stddev * std::sqrt(1.0 - seg.ar_coef * seg.ar_coef);
    std::vector<double> noise(spec.dims);
    for (auto& e : noise) e = seg.stddev * normal(rng);
    for (std::size_t k = 0; k < seg.length; ++k, ++t) {
      for (std::size_t d = 0; d < spec.dims; ++d) {
        if (k > 0) noise[d] = seg.ar_coef * noise[d] + innovation * normal(rng);
        out.series.values(t, d) = seg.mean[d] + noise[d];
      }
    }
  }
  for (const auto& sp : spec.spikes)
    for (std::size_t k = 0; k < sp.length; ++k)
      for (std::size_t d = 0; d < spec.dims; ++d) out.series.values(sp.index + k, d) += sp.magnitude;
  return out;
}

SyntheticSpec parse_synthetic_spec(std::string_view text) {
  SyntheticSpec spec;
  auto fail = [](const KeyValue& kv, const std::string& why) {
    return ParseError("synthetic spec line " + std::to_string(kv.line) + " (" + kv.key + "): " + why);
  };
  try {
    for (const auto& kv : parse_key_values(text)) {
      std::istringstream ss(kv.value);
      if (kv.key == "name") {
        spec.name = kv.value;
      } else if (kv.key == "seed") {
        spec.seed = std::stoull(kv.value);
      } else if (kv.key == "dims") {
        spec.dims = std::stoul(kv.value);
      } else if (kv.key == "min_segment_length") {
        spec.min_segment_length = std::stoul(kv.value);
      } else if (kv.key == "segment") {
        Segment seg;
        std::string means;
        if (!(ss >> seg.length >> means >> seg.stddev >> seg.ar_coef)) {
          throw fail(kv, "expected '<length> <mean[,mean...]> <std> <ar>'");
        }
        std::stringstream ms(means);
        std::string m;
        while (std::getline(ms, m, ',')) seg.mean.push_back(std::stod(m));
        spec.segments.push_back(std::move(seg));
      } else if (kv.key == "spike") {
        Spike sp;
        if (!(ss >> sp.index >> sp.magnitude)) throw fail(kv, "expected '<index> <magnitude> [length]'");
        if (!(ss >> sp.length)) sp.length = 1;
        spec.spikes.push_back(sp);
      } else {
        throw fail(kv, "unknown key");
      }
    }
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("synthetic spec: bad number (") + e.what() + ")");
  } catch (const std::out_of_range& e) {
    throw ParseError(std::string("synthetic spec: number out of range (") + e.what() + ")");
  }
  // A single mean broadcasts across dimensions.
  for (auto& seg : spec.segments)
    if (seg.mean.size() == 1 && spec.dims > 1) seg.mean.assign(spec.dims, seg.mean[0]);
  return spec;
}

}  // namespace alacpd::data
