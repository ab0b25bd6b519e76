#include "alacpd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "alacpd/errors.hpp"

namespace alacpd::metrics {

namespace {

std::vector<Index> sorted_unique(std::vector<Index> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

Segmentation::Segmentation(std::vector<Index> boundaries, Index n) : n_(n) {
  if (n == 0) throw InputError("segmentation: empty series");
  for (Index b : boundaries) {
    if (b >= n) {
      throw InputError("segmentation: change-point " + std::to_string(b) + " outside [0, " +
                       std::to_string(n) + ")");
    }
  }
  boundaries = sorted_unique(std::move(boundaries));
  if (!boundaries.empty() && boundaries.front() == 0) boundaries.erase(boundaries.begin());
  boundaries_ = std::move(boundaries);
}

std::vector<std::pair<Index, Index>> Segmentation::segments() const {
  std::vector<std::pair<Index, Index>> out;
  Index start = 0;
  for (Index b : boundaries_) {
    out.emplace_back(start, b);
    start = b;
  }
  out.emplace_back(start, n_);
  return out;
}

void AnnotationSet::validate() const {
  if (n == 0) throw InputError("annotations for '" + dataset + "': n must be positive");
  if (annotations.empty()) throw InputError("annotations for '" + dataset + "': no annotators");
  for (std::size_t l = 0; l < annotations.size(); ++l)
    for (Index i : annotations[l])
      if (i >= n) {
        throw InputError("annotations for '" + dataset + "': index " + std::to_string(i) +
                         " outside [0, " + std::to_string(n) + ")");
      }
}

AnnotationSet parse_annotations(const nlohmann::json& doc, const std::string& dataset, Index n) {
  AnnotationSet set;
  const nlohmann::json* ann = nullptr;
  try {
    if (doc.contains("annotations")) {
      set.dataset = doc.at("dataset").get<std::string>();
      set.n = doc.at("n").get<Index>();
      ann = &doc.at("annotations");
    } else {
      if (dataset.empty() || !doc.contains(dataset)) {
        throw ParseError("annotations: no entry for dataset '" + dataset + "'");
      }
      set.dataset = dataset;
      set.n = n;
      ann = &doc.at(dataset);
    }
    if (!ann->is_object()) throw ParseError("annotations: expected an object keyed by annotator");
    // Numeric annotator ids sort numerically; others lexicographically.
    std::vector<std::string> ids;
    for (const auto& [id, _] : ann->items()) ids.push_back(id);
    std::stable_sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) {
      const bool na = !a.empty() && std::all_of(a.begin(), a.end(), ::isdigit);
      const bool nb = !b.empty() && std::all_of(b.begin(), b.end(), ::isdigit);
      if (na && nb && a.size() != b.size()) return a.size() < b.size();
      return a < b;
    });
    for (const auto& id : ids) {
      set.annotator_ids.push_back(id);
      set.annotations.push_back(sorted_unique(ann->at(id).get<std::vector<Index>>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("annotations: ") + e.what());
  }
  set.validate();
  return set;
}

AnnotationSet load_annotations(const std::filesystem::path& path, const std::string& dataset, Index n) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open annotations " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return parse_annotations(doc, dataset, n);
}

nlohmann::json to_json(const AnnotationSet& set) {
  nlohmann::json ann = nlohmann::json::object();
  for (std::size_t l = 0; l < set.annotations.size(); ++l) {
    const std::string id = l < set.annotator_ids.size() ? set.annotator_ids[l] : std::to_string(l + 1);
    ann[id] = set.annotations[l];
  }
  return {{"dataset", set.dataset}, {"n", set.n}, {"annotations", ann}};
}

// ---------------------------------------------------------------------------

double covering(const std::vector<Index>& predicted, const AnnotationSet& truth) {
  truth.validate();
  const auto pred_segs = Segmentation(predicted, truth.n).segments();
  double total = 0.0;
  for (const auto& ann : truth.annotations) {
    double score = 0.0;
    for (const auto& [a0, a1] : Segmentation(ann, truth.n).segments()) {
      double best = 0.0;
      for (const auto& [p0, p1] : pred_segs) {
        const Index lo = std::max(a0, p0), hi = std::min(a1, p1);
        if (hi <= lo) continue;
        const double inter = static_cast<double>(hi - lo);
        const double uni = static_cast<double>((a1 - a0) + (p1 - p0)) - inter;
        best = std::max(best, inter / uni);
      }
      score += static_cast<double>(a1 - a0) * best;
    }
    total += score / static_cast<double>(truth.n);
  }
  return total / static_cast<double>(truth.annotations.size());
}

std::size_t true_positives(const std::vector<Index>& truth, const std::vector<Index>& predicted,
                           Index margin) {
  const auto g = sorted_unique(truth);
  const auto p = sorted_unique(predicted);
  // Each truth point's admissible predictions form an interval whose ends
  // move right with the point, so taking the leftmost free admissible
  // prediction for each truth point in order yields a maximum matching.
  std::size_t tp = 0;
  std::size_t j = 0;
  for (Index x : g) {
    const Index lo = x >= margin ? x - margin : 0;
    while (j < p.size() && p[j] < lo) ++j;
    if (j < p.size() && p[j] <= x + margin) {
      ++tp;
      ++j;
    }
  }
  return tp;
}

F1Result f1_score(const std::vector<Index>& predicted, const AnnotationSet& truth,
                  const MatchConfig& cfg) {
  truth.validate();
  for (Index i : predicted) {
    if (i >= truth.n) {
      throw InputError("f1: prediction " + std::to_string(i) + " outside [0, " +
                       std::to_string(truth.n) + ")");
    }
  }
  auto pred = predicted;
  auto anns = truth.annotations;
  if (cfg.include_trivial_start) {
    pred.push_back(0);
    for (auto& a : anns) a.push_back(0);
  }
  pred = sorted_unique(std::move(pred));

  F1Result r;
  std::vector<Index> all;
  for (auto& a : anns) {
    a = sorted_unique(std::move(a));
    all.insert(all.end(), a.begin(), a.end());
  }

  if (pred.empty()) {
    r.degenerate = true;
  } else {
    r.precision = static_cast<double>(true_positives(all, pred, cfg.margin)) /
                  static_cast<double>(pred.size());
  }
  double recall = 0.0;
  for (const auto& a : anns) {
    if (a.empty()) {
      r.degenerate = true;
      continue;
    }
    recall += static_cast<double>(true_positives(a, pred, cfg.margin)) / static_cast<double>(a.size());
  }
  r.recall = recall / static_cast<double>(anns.size());
  const double s = r.precision + r.recall;
  r.f1 = s > 0.0 ? 2.0 * r.precision * r.recall / s : 0.0;
  return r;
}

double recall_of(const std::vector<Index>& points, const std::vector<Index>& predicted, Index margin) {
  const auto g = sorted_unique(points);
  if (g.empty()) return 0.0;
  return static_cast<double>(true_positives(g, predicted, margin)) / static_cast<double>(g.size());
}

std::vector<double> average_rank(const std::vector<std::vector<double>>& scores) {
  if (scores.empty()) throw InputError("average_rank: no methods");
  const std::size_t datasets = scores.front().size();
  if (datasets == 0) throw InputError("average_rank: no datasets");
  for (std::size_t m = 0; m < scores.size(); ++m) {
    if (scores[m].size() != datasets) {
      throw InputError("average_rank: method " + std::to_string(m) + " scored on " +
                       std::to_string(scores[m].size()) + " datasets, expected " +
                       std::to_string(datasets));
    }
    for (std::size_t d = 0; d < datasets; ++d)
      if (std::isnan(scores[m][d])) {
        throw InputError("average_rank: missing score for method " + std::to_string(m) +
                         ", dataset " + std::to_string(d));
      }
  }
  std::vector<double> ranks(scores.size(), 0.0);
  for (std::size_t d = 0; d < datasets; ++d) {
    for (std::size_t m = 0; m < scores.size(); ++m) {
      std::size_t better = 0, tied = 0;
      for (std::size_t o = 0; o < scores.size(); ++o) {
        if (o == m) continue;
        if (scores[o][d] > scores[m][d]) ++better;
        else if (scores[o][d] == scores[m][d]) ++tied;
      }
      ranks[m] += 1.0 + static_cast<double>(better) + static_cast<double>(tied) / 2.0;
    }
  }
  for (double& r : ranks) r /= static_cast<double>(datasets);
  return ranks;
}

}  // namespace alacpd::metrics
