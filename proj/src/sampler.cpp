#include "apd/sampler.hpp"

#include <algorithm>
#include <cmath>

namespace apd::sampler {

void SamplerConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size))
    throw ConfigError("step_size must be positive and finite");
  if (burn_in < 0) throw ConfigError("burn_in must be >= 0");
  if (thin_interval < 1) throw ConfigError("thin_interval must be >= 1");
  if (total_samples < 1) throw ConfigError("total_samples must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (prior_precision < 0.0) throw ConfigError("prior_precision must be >= 0");
}

NnClassifierModel::NnClassifierModel(nn::NetSpec spec, Mat inputs, std::vector<int> labels,
                                     bool train_dropout, std::uint64_t mask_seed)
    : spec_(std::move(spec)),
      inputs_(std::move(inputs)),
      labels_(std::move(labels)),
      train_dropout_(train_dropout),
      mask_rng_(mask_seed) {
  spec_.validate();
  if (inputs_.rows() != static_cast<Eigen::Index>(labels_.size()))
    throw ConfigError("inputs and labels disagree on example count");
}

Vec NnClassifierModel::grad_log_lik_sum(const Vec& params, const std::vector<long>& batch) {
  nn::Batch b;
  b.inputs = Mat(static_cast<Eigen::Index>(batch.size()), inputs_.cols());
  b.labels.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    b.inputs.row(static_cast<Eigen::Index>(i)) = inputs_.row(batch[i]);
    b.labels.push_back(labels_[static_cast<std::size_t>(batch[i])]);
  }
  if (train_dropout_ && spec_.dropout_rate > 0.0) {
    const nn::DropoutMask mask = nn::draw_dropout_mask(spec_, mask_rng_);
    return -nn::loss_and_grad(spec_, params, b, 0.0, 1.0, &mask).grad;
  }
  return -nn::loss_and_grad(spec_, params, b, 0.0, 1.0).grad;
}

Vec sgd_step(const Vec& params, GradModel& model, const std::vector<long>& batch,
             const SamplerConfig& config) {
  config.validate();
  if (batch.empty()) throw ConfigError("empty batch");
  const double n_total = static_cast<double>(
      config.dataset_size > 0 ? config.dataset_size : model.dataset_size());
  const double scale = n_total / static_cast<double>(batch.size());
  const Vec lik = model.grad_log_lik_sum(params, batch);
  Vec out = params +
            0.5 * config.step_size * (scale * lik - config.prior_precision * params);
  if (!out.allFinite()) throw DivergedError("non-finite parameters after update", -1);
  return out;
}

Vec sgld_step_with_noise(const Vec& params, GradModel& model, const std::vector<long>& batch,
                         const SamplerConfig& config, const Vec& noise) {
  if (noise.size() != params.size()) throw ConfigError("noise length mismatch");
  Vec out = sgd_step(params, model, batch, config) + noise;
  if (!out.allFinite()) throw DivergedError("non-finite parameters after update", -1);
  return out;
}

Vec sgld_step(const Vec& params, GradModel& model, const std::vector<long>& batch,
              const SamplerConfig& config, Rng& rng) {
  if (config.mode != Mode::kSgld) throw ConfigError("sgld_step requires mode = sgld");
  const Vec noise = std::sqrt(config.step_size) * normal_vector(rng, params.size());
  return sgld_step_with_noise(params, model, batch, config, noise);
}

ChainRunner::ChainRunner(Vec init, GradModel& model, const SamplerConfig& config, int chain_id)
    : model_(&model),
      config_(config),
      params_(std::move(init)),
      rng_(config.rng_seed),
      chain_id_(chain_id) {
  config_.validate();
  if (params_.size() != model.param_dim())
    throw ConfigError("chain init length does not match model parameter dim");
  const long n = model.dataset_size();
  if (n < 1) throw ConfigError("model has no data");
  effective_batch_ = static_cast<int>(std::min<long>(config_.batch_size, n));
  order_.resize(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) order_[static_cast<std::size_t>(i)] = i;
  pos_ = order_.size();  // force a shuffle on first use
}

std::vector<long> ChainRunner::next_batch() {
  const auto n = order_.size();
  const auto b = static_cast<std::size_t>(effective_batch_);
  if (pos_ + b > n) {  // new epoch; the partial tail is dropped
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  std::vector<long> batch(order_.begin() + static_cast<long>(pos_),
                          order_.begin() + static_cast<long>(pos_ + b));
  pos_ += b;
  return batch;
}

void ChainRunner::advance(long updates, std::vector<Vec>& out) {
  for (long u = 0; u < updates; ++u) {
    const std::vector<long> batch = next_batch();
    ++iteration_;
    try {
      if (config_.mode == Mode::kSgld) {
        const Vec noise = std::sqrt(config_.step_size) * normal_vector(rng_, params_.size());
        params_ = sgld_step_with_noise(params_, *model_, batch, config_, noise);
      } else {
        params_ = sgd_step(params_, *model_, batch, config_);
      }
    } catch (const DivergedError&) {
      throw DivergedError("chain " + std::to_string(chain_id_) + " diverged", iteration_ - 1);
    }
    if (params_.cwiseAbs().maxCoeff() > 1e6)
      throw DivergedError("chain " + std::to_string(chain_id_) + " diverged (|theta|_inf > 1e6)",
                          iteration_ - 1);
    if (iteration_ > config_.burn_in &&
        (iteration_ - config_.burn_in - 1) % config_.thin_interval == 0)
      out.push_back(params_);
  }
}

void ChainRunner::reset(Vec new_init, bool reset_retention) {
  if (new_init.size() != params_.size()) throw ConfigError("reset length mismatch");
  params_ = std::move(new_init);
  if (reset_retention) iteration_ = 0;
}

SampleSet run_chain(const Vec& init, GradModel& model, const SamplerConfig& config,
                    int chain_id) {
  config.validate();
  ChainRunner runner(init, model, config, chain_id);
  SampleSet set;
  set.config = config;
  set.chain_id = chain_id;
  if (auto* nn_model = dynamic_cast<const NnClassifierModel*>(&model))
    set.spec = nn_model->spec();
  const long updates = config.burn_in + 1 + (config.total_samples - 1) * config.thin_interval;
  runner.advance(updates, set.samples);
  return set;
}

ParallelChainsResult run_parallel_chains(int k_chains, const std::vector<Vec>& inits,
                                         GradModel& model, const SamplerConfig& config) {
  if (k_chains < 1) throw ConfigError("need K >= 1 chains");
  if (static_cast<int>(inits.size()) != k_chains)
    throw ConfigError("need one init per chain");
  ParallelChainsResult result;
  for (int k = 0; k < k_chains; ++k) {
    SamplerConfig chain_config = config;
    chain_config.rng_seed = derive_seed(config.rng_seed, kStreamChainBase + static_cast<std::uint64_t>(k));
    try {
      result.chains.push_back(run_chain(inits[static_cast<std::size_t>(k)], model, chain_config, k));
    } catch (const DivergedError& e) {
      result.failures.push_back({k, e.iteration, e.what()});
    }
  }
  return result;
}

}  // namespace apd::sampler
