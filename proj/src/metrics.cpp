#include "apd/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace apd::metrics {

namespace {

void check_two_classes(const ScoredSet& set) {
  if (set.scores.size() != static_cast<Eigen::Index>(set.labels.size()))
    throw ConfigError("scores and labels must have equal length");
  if (set.labels.empty()) throw ConfigError("empty scored set");
  const auto pos = std::count(set.labels.begin(), set.labels.end(), 1);
  if (pos == 0 || pos == static_cast<long>(set.labels.size()))
    throw ConfigError("metric requires at least one positive and one negative");
}

}  // namespace

double auroc(const ScoredSet& set) {
  check_two_classes(set);
  const Eigen::Index n = set.scores.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return set.scores[a] < set.scores[b]; });
  // average 1-based ranks within tie groups; rank sums stay exact in doubles
  double rank_sum_pos = 0.0;
  Eigen::Index n_pos = 0;
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j < n && set.scores[order[j]] == set.scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>((i + 1) + j);
    for (Eigen::Index k = i; k < j; ++k) {
      if (set.labels[order[k]] == 1) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const double n_neg = static_cast<double>(n - n_pos);
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * n_neg);
}

double aupr(const ScoredSet& set, PositiveClass positive_is) {
  check_two_classes(set);
  ScoredSet work = set;
  if (positive_is == PositiveClass::kInDist) {
    work.scores = -work.scores;
    for (auto& y : work.labels) y = 1 - y;
  }
  const Eigen::Index n = work.scores.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return work.scores[a] > work.scores[b];
  });
  long total_pos = std::count(work.labels.begin(), work.labels.end(), 1);
  long tp = 0, fp = 0;
  double area = 0.0;
  double prev_recall = 0.0;
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j < n && work.scores[order[j]] == work.scores[order[i]]) ++j;
    for (Eigen::Index k = i; k < j; ++k) {
      if (work.labels[order[k]] == 1) ++tp;
      else ++fp;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw ConfigError("accuracy: length mismatch");
  if (predicted.empty()) throw ConfigError("accuracy: empty input");
  long correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == truth[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

}  // namespace apd::metrics
