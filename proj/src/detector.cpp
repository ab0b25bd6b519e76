#include "alacpd/detector.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <string>

#include "alacpd/errors.hpp"

namespace alacpd {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t member_seed(std::uint64_t master, std::size_t member, std::uint64_t generation) {
  return splitmix64(splitmix64(master) ^ splitmix64(member + 1) ^ (generation * 0x632be59bd9b4e019ULL));
}

template <class F>
void for_each_member(std::size_t count, bool parallel, F&& f) {
  if (!parallel || count < 2) {
    for (std::size_t m = 0; m < count; ++m) f(m);
    return;
  }
  std::vector<std::future<void>> jobs;
  jobs.reserve(count);
  for (std::size_t m = 0; m < count; ++m) jobs.push_back(std::async(std::launch::async, [&f, m] { f(m); }));
  // get() rethrows; wait for all first so no job outlives the members.
  for (auto& j : jobs) j.wait();
  for (auto& j : jobs) j.get();
}

}  // namespace

// ---------------------------------------------------------------------------
// EnsembleConfig

std::size_t EnsembleConfig::vote_threshold() const {
  // The epsilon keeps e.g. beta = 2/3, M = 3 from rounding up to 3.
  return static_cast<std::size_t>(std::ceil(vote_fraction * static_cast<double>(members()) - 1e-9));
}

std::size_t EnsembleConfig::min_init() const {
  return std::max(net.context_length(), n_cpd);
}

std::size_t EnsembleConfig::resolve_n_init(std::size_t n) const {
  if (n_init > 0) return n_init;
  const auto frac = static_cast<std::size_t>(std::ceil(n_init_frac * static_cast<double>(n)));
  return std::max(frac, min_init());
}

void EnsembleConfig::validate() const {
  TAEnetConfig probe = net;
  probe.dims = std::max<std::size_t>(probe.dims, 1);
  probe.validate();
  if (skip_sizes.empty()) throw ConfigError("ensemble: at least one member required");
  for (auto s : skip_sizes)
    if (s < 1) throw ConfigError("ensemble: skip sizes must be >= 1");
  if (!(vote_fraction > 0.0 && vote_fraction <= 1.0)) throw ConfigError("ensemble: beta must be in (0, 1]");
  if (!(threshold_coef > 1.0)) throw ConfigError("ensemble: C must be > 1");
  if (!(grace_multiplier >= 1.0)) throw ConfigError("ensemble: grace multiplier must be >= 1");
  if (n_cpd < 1) throw ConfigError("ensemble: n_cpd must be >= 1");
  if (!(n_init_frac > 0.0 && n_init_frac < 1.0)) throw ConfigError("ensemble: n_init_frac must be in (0, 1)");
  if (n_init != 0 && n_init < min_init()) {
    throw ConfigError("ensemble: n_init = " + std::to_string(n_init) + " is below the " +
                      std::to_string(min_init()) + " samples one AR context needs (2w + h - 1)");
  }
  if (!(sgd.learning_rate > 0.0)) throw ConfigError("ensemble: learning rate must be > 0");
}

// ---------------------------------------------------------------------------
// Threshold arithmetic

std::vector<MemberThreshold> make_thresholds(const std::vector<double>& mean_losses, double coef) {
  std::vector<MemberThreshold> out;
  out.reserve(mean_losses.size());
  for (double l : mean_losses) out.push_back({l, coef * l});
  return out;
}

MemberThreshold fold_loss(const MemberThreshold& th, std::size_t count, double loss, double coef) {
  const double n = static_cast<double>(count);
  const double mean = (n * th.mean_loss + loss) / (n + 1.0);
  return {mean, coef * mean};
}

Classification vote(const std::vector<double>& losses, const std::vector<MemberThreshold>& thresholds,
                    std::size_t needed) {
  if (losses.size() != thresholds.size()) {
    throw DimensionError("vote: " + std::to_string(losses.size()) + " losses for " +
                         std::to_string(thresholds.size()) + " members");
  }
  Classification c;
  c.losses = losses;
  for (std::size_t m = 0; m < losses.size(); ++m)
    if (losses[m] > thresholds[m].threshold) ++c.exceed_count;
  c.decision = c.exceed_count >= needed ? Decision::kOutOfDistribution : Decision::kInDistribution;
  return c;
}

// ---------------------------------------------------------------------------
// RunTracker

RunTracker::RunTracker(std::size_t n_cpd) : n_cpd_(n_cpd) {
  if (n_cpd < 1) throw ConfigError("RunTracker: n_cpd must be >= 1");
}

RunTracker::Transition RunTracker::observe(std::size_t index, Decision decision) {
  if (decision == Decision::kInDistribution) {
    pending_.clear();
    return {Outcome::kNormal, std::nullopt};
  }
  pending_.push_back(index);
  if (pending_.size() < n_cpd_) return {Outcome::kAnomalous, std::nullopt};
  pending_.clear();
  return {Outcome::kChangePoint, index >= n_cpd_ ? index - n_cpd_ : 0};
}

// ---------------------------------------------------------------------------
// Detector

Detector::Detector(const Matrix& prefix, const EnsembleConfig& cfg) : cfg_(cfg), tracker_(cfg.n_cpd) {
  cfg_.validate();
  dims_ = prefix.cols();
  if (dims_ == 0) throw InputError("detector: series has no dimensions");
  const std::size_t n_init = prefix.rows();
  if (n_init < cfg_.min_init()) {
    throw ConfigError("detector: n_init = " + std::to_string(n_init) + " is below the " +
                      std::to_string(cfg_.min_init()) + " samples one AR context needs (2w + h - 1)");
  }
  if (!prefix.all_finite()) throw InputError("detector: non-finite value in the initial prefix");

  cfg_.net.dims = dims_;
  for (std::size_t m = 0; m < cfg_.members(); ++m) {
    TAEnetConfig c = cfg_.net;
    c.skip = cfg_.skip_sizes[m];
    members_.emplace_back(c, member_seed(cfg_.seed, m, 0));
  }

  const std::size_t len = cfg_.net.context_length();
  std::vector<Matrix> contexts;
  for (std::size_t end = len - 1; end < n_init; ++end) contexts.push_back(prefix.slice_rows(end + 1 - len, len));

  train_members(members_, contexts, cfg_.epochs_init);

  std::vector<double> mean(cfg_.members(), 0.0);
  for (const auto& ctx : contexts) {
    const auto l = losses_of(members_, ctx);
    for (std::size_t m = 0; m < mean.size(); ++m) mean[m] += l[m];
  }
  for (double& v : mean) v /= static_cast<double>(contexts.size());
  thresholds_ = make_thresholds(mean, cfg_.threshold_coef);
  state_count_ = contexts.size();

  for (std::size_t t = n_init - (len - 1); t < n_init; ++t) {
    auto r = prefix.row(t);
    history_.emplace_back(r.begin(), r.end());
  }
  clock_ = n_init;
}

double Detector::effective_coef() const { return coef_for(grace_remaining_); }

std::vector<std::size_t> Detector::inert_skip_members() const {
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < members_.size(); ++m)
    if (!members_[m].config().skip_fires()) out.push_back(m);
  return out;
}

double Detector::coef_for(std::size_t grace) const {
  return grace > 0 ? cfg_.grace_multiplier * cfg_.threshold_coef : cfg_.threshold_coef;
}

std::vector<double> Detector::losses_of(const std::vector<TAEnet>& members, const Matrix& context) const {
  std::vector<double> out(members.size());
  for (std::size_t m = 0; m < members.size(); ++m) out[m] = members[m].loss(context);
  return out;
}

void Detector::train_members(std::vector<TAEnet>& members, std::span<const Matrix> batch,
                             std::size_t epochs) const {
  for_each_member(members.size(), cfg_.parallel_members, [&](std::size_t m) {
    for (std::size_t e = 0; e < epochs; ++e)
      for (const auto& ctx : batch) members[m].train_step(ctx, cfg_.sgd);
  });
}

Classification Detector::classify(const Matrix& context) const {
  if (context.cols() != dims_ || context.rows() < cfg_.net.window) {
    throw DimensionError("classify: context is " + std::to_string(context.rows()) + "x" +
                         std::to_string(context.cols()) + ", expected at least " +
                         std::to_string(cfg_.net.window) + "x" + std::to_string(dims_));
  }
  return vote(losses_of(members_, context), thresholds_, cfg_.vote_threshold());
}

StepResult Detector::step(std::span<const double> x) {
  if (x.size() != dims_) {
    throw InputError("detector: observation has " + std::to_string(x.size()) + " values, expected " +
                     std::to_string(dims_));
  }
  for (double v : x)
    if (!std::isfinite(v)) throw InputError("detector: non-finite observation at index " + std::to_string(clock_));

  const std::size_t t = clock_;
  Matrix context(history_.size() + 1, dims_);
  for (std::size_t r = 0; r < history_.size(); ++r)
    std::copy(history_[r].begin(), history_[r].end(), context.row(r).begin());
  std::copy(x.begin(), x.end(), context.row(history_.size()).begin());

  const Classification cls = classify(context);

  // Work on copies; commit only once every member has trained successfully.
  RunTracker tracker = tracker_;
  const auto tr = tracker.observe(t, cls.decision);
  StepResult result{tr.outcome, t, tr.change_point, cls.losses};

  auto thresholds = thresholds_;
  std::size_t grace = grace_remaining_;
  std::size_t count = state_count_;
  std::vector<TAEnet> members;
  bool members_changed = false;
  std::vector<Buffered> buffer = buffer_;

  switch (tr.outcome) {
    case Outcome::kNormal: {
      members = members_;
      const Matrix batch[] = {context};
      train_members(members, batch, cfg_.epochs_train);
      members_changed = true;
      if (grace > 0) --grace;
      for (std::size_t m = 0; m < thresholds.size(); ++m)
        thresholds[m] = fold_loss(thresholds[m], count, cls.losses[m], coef_for(grace));
      ++count;
      buffer.clear();
      break;
    }
    case Outcome::kAnomalous:
      buffer.push_back({t, std::move(context)});
      if (grace > 0) --grace;
      for (auto& th : thresholds) th.threshold = coef_for(grace) * th.mean_loss;
      break;
    case Outcome::kChangePoint: {
      buffer.push_back({t, std::move(context)});
      peak_retained_ = std::max(peak_retained_, buffer.size());
      std::vector<Matrix> batch;
      for (const auto& b : buffer) batch.push_back(b.context);
      if (cfg_.reset_on_change) {
        ++reset_counter_;
        for (std::size_t m = 0; m < members_.size(); ++m)
          members.emplace_back(members_[m].config(), member_seed(cfg_.seed, m, reset_counter_));
      } else {
        members = members_;
      }
      train_members(members, batch, cfg_.epochs_reinit);
      members_changed = true;
      std::vector<double> mean(members.size(), 0.0);
      for (const auto& ctx : batch) {
        const auto l = losses_of(members, ctx);
        for (std::size_t m = 0; m < mean.size(); ++m) mean[m] += l[m];
      }
      for (double& v : mean) v /= static_cast<double>(batch.size());
      grace = cfg_.grace_length;
      thresholds = make_thresholds(mean, coef_for(grace));
      count = batch.size();
      buffer.clear();
      break;
    }
  }

  // Commit.
  tracker_ = std::move(tracker);
  if (members_changed) members_ = std::move(members);
  thresholds_ = std::move(thresholds);
  grace_remaining_ = grace;
  state_count_ = count;
  buffer_ = std::move(buffer);
  peak_retained_ = std::max(peak_retained_, buffer_.size());
  if (result.change_point) change_points_.push_back(*result.change_point);
  history_.emplace_back(x.begin(), x.end());
  history_.erase(history_.begin());
  ++clock_;
  return result;
}

// ---------------------------------------------------------------------------

DetectionReport run(const data::TimeSeries& series, const EnsembleConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  const std::size_t n = series.n();
  const std::size_t n_init = cfg.resolve_n_init(n);
  if (n <= n_init) {
    throw InputError("run: series '" + series.name + "' has " + std::to_string(n) +
                     " samples, need more than n_init = " + std::to_string(n_init));
  }

  Matrix values = series.values;
  switch (cfg.scaling) {
    case EnsembleConfig::Scaling::kNone:
      break;
    case EnsembleConfig::Scaling::kInitPrefix:
      values = data::standardize(series, data::FitRange::kInitPrefix, n_init).series.values;
      break;
    case EnsembleConfig::Scaling::kFullSeries:
      values = data::standardize(series, data::FitRange::kFullSeries).series.values;
      break;
  }

  DetectionReport report;
  report.dataset = series.name;
  report.seed = cfg.seed;
  report.n = n;
  report.n_init = n_init;
  report.flags.assign(n, 0);

  EnsembleConfig c = cfg;
  c.n_init = n_init;
  Detector det(values.slice_rows(0, n_init), c);
  for (std::size_t t = n_init; t < n; ++t) {
    const auto r = det.step(values.row(t));
    if (r.outcome != Outcome::kNormal) report.flags[t] = 1;
    if (r.change_point) {
      report.change_points.push_back(*r.change_point);
      report.emissions.push_back(t);
    }
    if (opts.trace) report.losses.push_back(r.losses);
    report.peak_retained_windows = std::max(report.peak_retained_windows, det.retained_windows());
  }
  // Count the batch held at the moment of a change-point as well.
  if (!report.change_points.empty())
    report.peak_retained_windows = std::max(report.peak_retained_windows, c.n_cpd);
  return report;
}

}  // namespace alacpd
