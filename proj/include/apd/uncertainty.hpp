#pragma once

// Monte-Carlo predictive inference and the uncertainty measures computed
// from T stochastic class-probability vectors per input: predictive entropy,
// BALD (mutual information), variation ratio, and approximate model variance
// (trace of the empirical covariance of the probability vectors).

#include <vector>

#include "apd/net.hpp"

namespace apd::uncertainty {

enum class SampleSource { kSgld, kApd, kMcDropout, kPoint };

struct PredictiveBatch {
  Mat probs;  // T x C, rows are probability vectors
  SampleSource source = SampleSource::kPoint;
  void validate() const;
};

enum class Measure { kEntropy, kBald, kVr, kModelVariance };

const char* measure_name(Measure m);

Vec predictive_mean(const PredictiveBatch& batch);

/// Natural-log entropy with 0 ln 0 := 0.
double entropy(const Vec& p);

/// entropy(mean) - mean(per-row entropies), clamped at 0 from below.
double bald(const PredictiveBatch& batch);

/// Fraction of rows whose argmax misses the modal class; argmax ties break
/// toward the lowest class index, in both the votes and the mode.
double variation_ratio(const PredictiveBatch& batch);

/// (1/T) sum p_t.p_t - pbar.pbar, clamped at 0 from below.
double model_variance(const PredictiveBatch& batch);

double score(const PredictiveBatch& batch, Measure m);

/// One PredictiveBatch per input row: row t holds the softmax output under
/// parameter sample t. The first T samples are used, in draw order.
std::vector<PredictiveBatch> predict_from_params(const nn::NetSpec& spec,
                                                 const std::vector<Vec>& params,
                                                 const Mat& inputs, int T, SampleSource tag);

/// MC dropout: T fresh masks drawn from rng, each applied to every input.
std::vector<PredictiveBatch> predict_mc_dropout(const nn::NetSpec& spec, const Vec& params,
                                                const Mat& inputs, int T, Rng& rng);

/// Deterministic point estimate (T = 1).
std::vector<PredictiveBatch> predict_point(const nn::NetSpec& spec, const Vec& params,
                                           const Mat& inputs);

}  // namespace apd::uncertainty
