#pragma once

// Series ingestion, standardization, sliding windows, and the seeded
// piecewise-stationary generator used by tests and the `synth` command.
// All indices are 0-based.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "alacpd/ndcore.hpp"

namespace alacpd::data {

using nd::Matrix;

struct TimeSeries {
  std::string name;
  Matrix values;                    // n x D
  std::vector<std::string> labels;  // one per dimension
  std::vector<std::string> time;    // optional, one per row

  std::size_t n() const { return values.rows(); }
  std::size_t dims() const { return values.cols(); }
};

struct LoadOptions {
  // Missing values (null / empty / NaN) are an error unless this is set.
  bool forward_fill = false;
};

// Benchmark dataset JSON:
//   {"name", "n_obs", "n_dim", "time": {...}, "series": [{"label", "type", "raw": [...]}]}
TimeSeries parse_benchmark_json(const nlohmann::json& doc, const LoadOptions& opts = {});
TimeSeries load_benchmark_json(const std::filesystem::path& path, const LoadOptions& opts = {});
nlohmann::json to_benchmark_json(const TimeSeries& series);

// Header row names the dimensions; one row per time step.
TimeSeries load_csv(const std::filesystem::path& path, const LoadOptions& opts = {});

// Dispatches on extension (.csv, otherwise benchmark JSON).
TimeSeries load_series(const std::filesystem::path& path, const LoadOptions& opts = {});

enum class FitRange { kInitPrefix, kFullSeries };

class Standardizer {
 public:
  // Population mean/std over rows [0, fit_rows). Constant dimensions get
  // std = 1 and are listed in constant_dims().
  static Standardizer fit(const Matrix& values, std::size_t fit_rows);

  Matrix transform(const Matrix& values) const;
  Matrix inverse(const Matrix& values) const;

  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return std_; }
  const std::vector<std::size_t>& constant_dims() const { return constant_; }

 private:
  std::vector<double> mean_, std_;
  std::vector<std::size_t> constant_;
};

struct Standardized {
  TimeSeries series;
  Standardizer standardizer;
};

// prefix_rows is used for FitRange::kInitPrefix only.
Standardized standardize(const TimeSeries& series, FitRange range, std::size_t prefix_rows = 0);

// Non-owning w x D view of rows [end - w + 1, end].
class WindowView {
 public:
  WindowView(const Matrix& source, std::size_t end, std::size_t w);

  std::size_t end() const { return end_; }
  std::size_t first() const { return end_ + 1 - w_; }
  std::size_t rows() const { return w_; }
  std::size_t cols() const { return src_->cols(); }
  double operator()(std::size_t r, std::size_t d) const { return (*src_)(first() + r, d); }
  std::span<const double> row(std::size_t r) const { return src_->row(first() + r); }
  Matrix to_matrix() const { return src_->slice_rows(first(), w_); }

 private:
  const Matrix* src_;
  std::size_t end_;
  std::size_t w_;
};

// n - w + 1 views with end indices w-1 ... n-1. Throws InputError if n < w.
std::vector<WindowView> windows(const Matrix& values, std::size_t w);

struct Segment {
  std::size_t length = 0;
  std::vector<double> mean;  // one per dimension
  double stddev = 1.0;
  double ar_coef = 0.0;      // AR(1) coefficient of the noise, |phi| < 1
};

struct Spike {
  std::size_t index = 0;
  double magnitude = 0.0;
  std::size_t length = 1;
};

struct SyntheticSpec {
  std::string name = "synthetic";
  std::size_t dims = 1;
  std::vector<Segment> segments;
  std::vector<Spike> spikes;
  std::uint64_t seed = 0;
  std::size_t min_segment_length = 11;  // w + h + 1 at the default window/horizon

  void validate() const;
};

struct SyntheticSeries {
  TimeSeries series;
  std::vector<std::size_t> change_points;  // first index of each new segment
};

// Concatenated AR(1) segments, stationary marginal std = segment stddev,
// plus additive spikes on every dimension. Deterministic per seed.
SyntheticSeries generate_synthetic(const SyntheticSpec& spec);

// Key-value form used by `synth --spec`:
//   name = demo
//   seed = 3
//   dims = 2
//   segment = <length> <mean[,mean...]> <std> <ar>
//   spike = <index> <magnitude> [length]
SyntheticSpec parse_synthetic_spec(std::string_view text);

}  // namespace alacpd::data
