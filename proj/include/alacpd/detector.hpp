#pragma once

// Online change-point detection with an ensemble of TAEnets.
//
// Every incoming sample forms a window. Each member reports its
// reconstruction loss; the window is out-of-distribution when at least
// ceil(beta * M) members exceed their thresholds (C times the running mean
// loss of the current state). In-distribution windows are learned and fold
// into the running means. Out-of-distribution windows are buffered; a normal
// window discards the buffer, while n_cpd consecutive outliers ending at t
// declare a change-point at t - n_cpd, retrain every member on the buffered
// windows, and restart the thresholds from them.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alacpd/data.hpp"
#include "alacpd/ndcore.hpp"
#include "alacpd/taenet.hpp"

namespace alacpd {

struct EnsembleConfig {
  // Member architecture. `dims` and `skip` are filled in per member.
  TAEnetConfig net{};
  std::vector<std::size_t> skip_sizes{3, 5, 7};
  double threshold_coef = 1.4;  // C
  // After a change-point the effective coefficient is grace_multiplier * C
  // for the next grace_length samples.
  double grace_multiplier = 4.0;
  std::size_t grace_length = 5;
  double vote_fraction = 0.6;   // beta
  std::size_t n_cpd = 3;
  // Explicit prefix length; when 0, n_init_frac of the series is used.
  std::size_t n_init = 0;
  double n_init_frac = 0.1;
  std::size_t epochs_init = 10;
  std::size_t epochs_train = 5;
  std::size_t epochs_reinit = 100;
  // Re-seed members before the post-change retraining instead of continuing
  // from their current weights.
  bool reset_on_change = false;
  nd::SgdConfig sgd{};
  std::uint64_t seed = 0;
  // Run member forward/training passes on separate threads.
  bool parallel_members = false;
  // Standardization applied by run(); `none` leaves the series untouched.
  enum class Scaling { kNone, kInitPrefix, kFullSeries } scaling = Scaling::kInitPrefix;

  std::size_t members() const { return skip_sizes.size(); }
  std::size_t vote_threshold() const;  // ceil(beta * M)
  // Smallest admissible n_init: one full AR context.
  std::size_t min_init() const;
  // n_init resolved against a series length.
  std::size_t resolve_n_init(std::size_t n) const;
  // Throws ConfigError.
  void validate() const;
};

enum class Decision { kInDistribution, kOutOfDistribution };

struct Classification {
  Decision decision = Decision::kInDistribution;
  std::vector<double> losses;  // per member
  std::size_t exceed_count = 0;
};

enum class Outcome { kNormal, kAnomalous, kChangePoint };

struct StepResult {
  Outcome outcome = Outcome::kNormal;
  std::size_t index = 0;                    // series index of this sample
  std::optional<std::size_t> change_point;  // set for kChangePoint
  std::vector<double> losses;               // per member, before any update
};

// The consecutive-outlier bookkeeping on its own: a normal sample clears the
// pending run; the n_cpd-th consecutive outlier at index t closes the run and
// reports t - n_cpd.
class RunTracker {
 public:
  explicit RunTracker(std::size_t n_cpd);

  struct Transition {
    Outcome outcome = Outcome::kNormal;
    std::optional<std::size_t> change_point;
  };

  Transition observe(std::size_t index, Decision decision);
  std::size_t pending() const { return pending_.size(); }
  const std::vector<std::size_t>& pending_indices() const { return pending_; }

 private:
  std::size_t n_cpd_;
  std::vector<std::size_t> pending_;
};

struct MemberThreshold {
  double mean_loss = 0.0;  // L_avg
  double threshold = 0.0;  // C_effective * L_avg
};

// th = coef * mean for each member.
std::vector<MemberThreshold> make_thresholds(const std::vector<double>& mean_losses, double coef);

// Folds one in-distribution loss into a running mean over `count` samples.
MemberThreshold fold_loss(const MemberThreshold& th, std::size_t count, double loss, double coef);

// Out-of-distribution iff at least `needed` members exceed their threshold.
Classification vote(const std::vector<double>& losses, const std::vector<MemberThreshold>& thresholds,
                    std::size_t needed);

class Detector {
 public:
  // Trains every member on the first n_init samples (prefix.rows() == n_init)
  // and sets thresholds from the mean prefix loss. The prefix is assumed to
  // be free of change-points. Throws ConfigError if the prefix is shorter
  // than cfg.min_init().
  Detector(const Matrix& prefix, const EnsembleConfig& cfg);

  const EnsembleConfig& config() const { return cfg_; }
  std::span<const TAEnet> members() const { return members_; }
  const std::vector<MemberThreshold>& thresholds() const { return thresholds_; }
  const std::vector<std::size_t>& change_points() const { return change_points_; }

  // Index the next sample will receive.
  std::size_t clock() const { return clock_; }
  // Samples folded into the current state's running mean (n_P).
  std::size_t state_count() const { return state_count_; }
  std::size_t grace_remaining() const { return grace_remaining_; }
  double effective_coef() const;
  // Raw windows currently held (the anomaly buffer).
  std::size_t retained_windows() const { return buffer_.size(); }
  // Largest number of raw windows held since initialization finished,
  // including the full batch at the moment a change-point is declared.
  std::size_t peak_retained_windows() const { return peak_retained_; }
  // Members whose skip size is >= the window, so the skip never fires.
  std::vector<std::size_t> inert_skip_members() const;

  // Read-only vote on a context (>= w rows, last w are the window).
  Classification classify(const Matrix& context) const;

  // Consumes one observation. Throws InputError on a dimension mismatch or
  // non-finite value and TrainingError if training diverges; in both cases
  // the detector state is left as it was before the call.
  StepResult step(std::span<const double> x);

 private:
  struct Buffered {
    std::size_t index;
    Matrix context;
  };

  std::vector<double> losses_of(const std::vector<TAEnet>& members, const Matrix& context) const;
  void train_members(std::vector<TAEnet>& members, std::span<const Matrix> batch,
                     std::size_t epochs) const;
  double coef_for(std::size_t grace) const;

  EnsembleConfig cfg_;
  std::vector<TAEnet> members_;
  std::vector<MemberThreshold> thresholds_;
  std::vector<std::size_t> change_points_;
  RunTracker tracker_{1};
  std::vector<Buffered> buffer_;
  std::vector<std::vector<double>> history_;  // last context_length - 1 samples
  std::size_t dims_ = 0;
  std::size_t clock_ = 0;
  std::size_t state_count_ = 0;
  std::size_t grace_remaining_ = 0;
  std::uint64_t reset_counter_ = 0;
  std::size_t peak_retained_ = 0;
};

struct DetectionReport {
  std::string dataset;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::size_t n_init = 0;
  std::vector<std::size_t> change_points;
  // Step index at which each change-point was emitted.
  std::vector<std::size_t> emissions;
  // One entry per series index; prefix samples are 0.
  std::vector<std::uint8_t> flags;
  // Per online step (index n_init + k), the member losses. Filled when
  // tracing was requested.
  std::vector<std::vector<double>> losses;
  // Largest anomaly-buffer size seen after initialization.
  std::size_t peak_retained_windows = 0;
};

struct RunOptions {
  bool trace = false;
};

// Initializes on the prefix, then steps through the remaining samples.
// Indices in the report are positions in `series`.
DetectionReport run(const data::TimeSeries& series, const EnsembleConfig& cfg,
                    const RunOptions& opts = {});

}  // namespace alacpd
