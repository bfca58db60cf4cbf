#pragma once

// Posterior sampling via SGLD, plus the plain-SGD point-estimate baseline.
// Both follow the log-posterior ascent form
//   dtheta = (eps/2) (grad log p(theta) + (N/n) sum_i grad log p(y_i|x_i,theta))
// with SGLD adding i.i.d. N(0, eps) noise per coordinate. The step size is
// fixed (no decay); burn-in and thinning are hyperparameters.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "apd/net.hpp"

namespace apd::sampler {

enum class Mode { kSgd, kSgld };

struct SamplerConfig {
  double step_size = 1e-3;   // epsilon
  long burn_in = 500;
  long thin_interval = 20;
  long total_samples = 200;  // retained draws
  int batch_size = 100;      // clamped to the dataset size at run time
  long dataset_size = 0;     // N in the N/n factor; 0 = take from the model
  double prior_precision = 1.0;
  std::uint64_t rng_seed = 0;
  Mode mode = Mode::kSgld;
  void validate() const;
};

/// Minibatch gradient source: the sum over a batch of per-example
/// log-likelihood gradients. Implementations own any internal randomness
/// (e.g. training-time dropout masks).
class GradModel {
 public:
  virtual ~GradModel() = default;
  virtual long dataset_size() const = 0;
  virtual Eigen::Index param_dim() const = 0;
  virtual Vec grad_log_lik_sum(const Vec& params, const std::vector<long>& batch) = 0;
};

/// Softmax classifier over a fixed labeled dataset. With train_dropout set,
/// a fresh mask is drawn from the mask stream for every gradient call.
class NnClassifierModel final : public GradModel {
 public:
  NnClassifierModel(nn::NetSpec spec, Mat inputs, std::vector<int> labels,
                    bool train_dropout = false, std::uint64_t mask_seed = 0);
  long dataset_size() const override { return inputs_.rows(); }
  Eigen::Index param_dim() const override { return spec_.param_count(); }
  Vec grad_log_lik_sum(const Vec& params, const std::vector<long>& batch) override;
  const nn::NetSpec& spec() const { return spec_; }

 private:
  nn::NetSpec spec_;
  Mat inputs_;
  std::vector<int> labels_;
  bool train_dropout_;
  Rng mask_rng_;
};

Vec sgd_step(const Vec& params, GradModel& model, const std::vector<long>& batch,
             const SamplerConfig& config);

/// SGLD update with the noise vector supplied by the caller (test seam).
Vec sgld_step_with_noise(const Vec& params, GradModel& model, const std::vector<long>& batch,
                         const SamplerConfig& config, const Vec& noise);

Vec sgld_step(const Vec& params, GradModel& model, const std::vector<long>& batch,
              const SamplerConfig& config, Rng& rng);

struct SampleSet {
  std::vector<Vec> samples;           // draw order
  std::optional<nn::NetSpec> spec;    // absent for non-network models
  SamplerConfig config;
  int chain_id = 0;
};

/// Resumable single chain: epoch-shuffled minibatch sweeps (partial tail
/// batches dropped), retention at iterations burn_in + 1 + k*thin_interval.
/// Divergence (non-finite coordinate or |theta|_inf > 1e6) aborts with the
/// last finite iterate's index.
class ChainRunner {
 public:
  ChainRunner(Vec init, GradModel& model, const SamplerConfig& config, int chain_id = 0);
  /// Advance exactly `updates` iterations, appending retained samples to out.
  void advance(long updates, std::vector<Vec>& out);
  /// Restart from new_init; retention restarts (burn-in anew) unless told not to.
  void reset(Vec new_init, bool reset_retention = true);
  const Vec& params() const { return params_; }
  long iteration() const { return iteration_; }
  int chain_id() const { return chain_id_; }

 private:
  std::vector<long> next_batch();
  GradModel* model_;
  SamplerConfig config_;
  Vec params_;
  Rng rng_;
  std::vector<long> order_;
  std::size_t pos_;
  long iteration_ = 0;
  int chain_id_ = 0;
  int effective_batch_ = 0;
};

SampleSet run_chain(const Vec& init, GradModel& model, const SamplerConfig& config,
                    int chain_id = 0);

struct ChainFailure {
  int chain_id = 0;
  std::int64_t last_finite_iteration = 0;
  std::string message;
};

struct ParallelChainsResult {
  std::vector<SampleSet> chains;  // ordered by chain_id, diverged chains omitted
  std::vector<ChainFailure> failures;
};

/// K independent chains; chain k draws its seed as
/// derive_seed(config.rng_seed, kStreamChainBase + k). A diverging chain is
/// reported in `failures` without killing its siblings.
ParallelChainsResult run_parallel_chains(int k_chains, const std::vector<Vec>& inits,
                                         GradModel& model, const SamplerConfig& config);

}  // namespace apd::sampler
