#pragma once

// Diagonal-covariance mixture of Gaussians fitted to posterior parameter
// samples with EM; the non-adversarial distillation baseline. The E-step and
// log-likelihood use stable log-sum-exp; component collapse (responsibility
// mass < 1e-8) reinitializes the component from a random sample.

#include <vector>

#include "apd/sampler.hpp"

namespace apd::mog {

struct MoGModel {
  Mat means;      // components x dim
  Mat variances;  // components x dim, diagonal entries
  Vec weights;    // mixing proportions, sum to 1
  int components() const { return static_cast<int>(means.rows()); }
  Eigen::Index dim() const { return means.cols(); }
};

struct EmOptions {
  int max_iters = 500;
  double tol = 1e-4;  // relative log-likelihood improvement
  double variance_floor = 1e-6;
};

struct EmReport {
  int iterations = 0;
  int collapse_reinits = 0;
  std::vector<double> ll_trace;  // one entry per E-step
};

MoGModel em_fit(const sampler::SampleSet& samples, int n_components, const EmOptions& opts,
                Rng& rng, EmReport* report = nullptr);

double log_likelihood(const MoGModel& model, const sampler::SampleSet& samples);

/// Ancestral sampling: component by weight, then the diagonal Gaussian.
sampler::SampleSet mog_sample(const MoGModel& model, int count, Rng& rng);

/// n_components * (2*dim + 1): mean and variance per coordinate plus weight.
long parameter_count(int n_components, Eigen::Index dim);
inline long parameter_count(const MoGModel& model) {
  return parameter_count(model.components(), model.dim());
}

}  // namespace apd::mog
