#pragma once

// Segmentation Covering and margin-matched multi-annotator F1, plus mean-rank
// aggregation across datasets.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace alacpd::metrics {

using Index = std::size_t;

// Sorted, de-duplicated change-point indices over [0, n). Index 0 is
// tolerated (it never splits anything).
class Segmentation {
 public:
  Segmentation(std::vector<Index> boundaries, Index n);

  Index n() const { return n_; }
  // Interior boundaries, strictly increasing, each in (0, n).
  const std::vector<Index>& boundaries() const { return boundaries_; }
  // Half-open [begin, end) segments covering [0, n).
  std::vector<std::pair<Index, Index>> segments() const;

 private:
  std::vector<Index> boundaries_;
  Index n_;
};

struct AnnotationSet {
  std::string dataset;
  Index n = 0;
  std::vector<std::string> annotator_ids;
  std::vector<std::vector<Index>> annotations;  // per annotator, sorted

  std::size_t annotators() const { return annotations.size(); }
  void validate() const;
};

// {"dataset": name, "n": int, "annotations": {"1": [...], "2": [...]}}.
// A bare benchmark-style map {"<dataset>": {"<annotator>": [...]}} is also
// accepted; `dataset` selects the entry and `n` must then be supplied.
AnnotationSet parse_annotations(const nlohmann::json& doc, const std::string& dataset = "",
                                Index n = 0);
AnnotationSet load_annotations(const std::filesystem::path& path, const std::string& dataset = "",
                               Index n = 0);
nlohmann::json to_json(const AnnotationSet& set);

struct MatchConfig {
  Index margin = 5;
  bool include_trivial_start = true;
};

// Mean over annotators of (1/n) * sum_A |A| * max_A' J(A, A').
double covering(const std::vector<Index>& predicted, const AnnotationSet& truth);

// Size of a maximum one-to-one matching between `truth` and `predicted`
// under |g - p| <= margin. Inputs need not be sorted or unique.
std::size_t true_positives(const std::vector<Index>& truth, const std::vector<Index>& predicted,
                           Index margin);

struct F1Result {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  // Set when precision or a recall term had an empty denominator.
  bool degenerate = false;
};

F1Result f1_score(const std::vector<Index>& predicted, const AnnotationSet& truth,
                  const MatchConfig& cfg = {});

// Fraction of `points` matched by `predicted` within the margin, e.g. for
// recall restricted to one category of change.
double recall_of(const std::vector<Index>& points, const std::vector<Index>& predicted, Index margin);

// scores[method][dataset], higher is better. Per dataset, rank 1 is best and
// tied methods share the mean of their ranks. NaN marks a missing cell and is
// an InputError, as is a ragged table.
std::vector<double> average_rank(const std::vector<std::vector<double>>& scores);

}  // namespace alacpd::metrics
