#pragma once

// Threshold-free detection metrics and classification accuracy. Tie handling
// is pinned: AUROC gives half credit to score ties (Mann-Whitney), AUPR
// processes tied scores as one threshold group with step integration.

#include <vector>

#include "apd/common.hpp"

namespace apd::metrics {

struct ScoredSet {
  Vec scores;
  std::vector<int> labels;  // 1 = positive class for the metric at hand
};

/// P(score_pos > score_neg) + 0.5 P(tie), via average ranks.
double auroc(const ScoredSet& set);

enum class PositiveClass { kOod, kInDist };

/// Area under the precision-recall step curve by descending-score sweep.
/// For kInDist the labels are flipped and the scores negated first.
double aupr(const ScoredSet& set, PositiveClass positive_is);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

}  // namespace apd::metrics
