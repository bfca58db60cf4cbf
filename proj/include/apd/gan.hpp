#pragma once

// Generative distillation of posterior parameter samples: a generator maps
// latent noise to flattened parameter vectors, a critic scores real versus
// generated vectors. Three loss variants: WGAN with gradient penalty, WGAN
// with weight clipping, and the original GAN (non-saturating generator
// loss). Training runs offline over a fixed sample set or online with chain
// updates interleaved through a FIFO replay buffer.

#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "apd/sampler.hpp"

namespace apd::gan {

enum class LossVariant { kWganGp, kWganClip, kVanilla };

const char* variant_name(LossVariant v);

struct GanConfig {
  int latent_dim = 100;
  nn::NetSpec generator_spec;  // latent_dim -> ... -> param_dim
  nn::NetSpec critic_spec;     // param_dim -> ... -> 1
  double gp_lambda = 10.0;
  int critic_steps_per_gen = 5;
  double step_size = 1e-4;  // adaptive-moment step for gp/vanilla, plain step for clip
  double beta1 = 0.5;
  double beta2 = 0.9;
  LossVariant loss_variant = LossVariant::kWganGp;
  double clip = 0.01;  // weight-clip half-width (kWganClip only)
  int batch_size = 64;
  long total_steps = 2000;  // generator update cycles
  double ema_decay = 0.995;  // weight average exported as the distilled generator
  std::uint64_t rng_seed = 0;

  void validate(Eigen::Index param_dim) const;
  /// 3 hidden layers of `hidden` units for both nets, LeakyReLU(0.2).
  static GanConfig defaults_for(Eigen::Index param_dim, int hidden = 100,
                                LossVariant variant = LossVariant::kWganGp);
};

/// Bounded FIFO of parameter vectors; capacity 0 means unbounded.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 0) : capacity_(capacity) {}
  void push(Vec v);
  std::size_t size() const { return items_.size(); }
  long inserted() const { return inserted_; }
  const Vec& at(std::size_t i) const { return items_[i]; }  // oldest first

 private:
  std::deque<Vec> items_;
  std::size_t capacity_;
  long inserted_ = 0;
};

struct GeneratorState {
  nn::NetSpec spec;
  int latent_dim = 0;
  Vec params;
  long steps = 0;
  std::optional<nn::NetSpec> target_spec;  // classifier the outputs parameterize
  // Training standardizes the real vectors per coordinate; generated samples
  // are mapped back through x = raw * output_scale + output_shift.
  Vec output_shift;
  Vec output_scale;
};

Vec interpolate(const Vec& theta_real, const Vec& theta_fake, double u);

struct CriticEval {
  double loss = 0.0;
  double penalty = 0.0;  // lambda-weighted mean penalty term (kWganGp only)
  Vec grad;
};

/// Loss and exact critic gradient. Rows of `real`/`fake` pair up; `interp_u`
/// holds one fresh uniform per pair (read only under kWganGp).
CriticEval critic_loss_and_grad(const GanConfig& cfg, const Vec& critic_params, const Mat& real,
                                const Mat& fake, const Vec& interp_u);

struct GeneratorEval {
  double loss = 0.0;
  Vec grad;
};

/// Loss and exact generator gradient for a batch of latent rows; the
/// gradient flows through the critic into the generator parameters.
GeneratorEval generator_loss_and_grad(const GanConfig& cfg, const Vec& gen_params,
                                      const Vec& critic_params, const Mat& latent);

struct TraceRow {
  long step = 0;
  double critic_loss = 0.0;
  double gen_loss = 0.0;
  double penalty = 0.0;
};

/// Source of real parameter vectors for training steps.
class RealSource {
 public:
  virtual ~RealSource() = default;
  virtual std::size_t size() const = 0;
  virtual const Vec& at(std::size_t i) const = 0;
};

class VectorSource final : public RealSource {
 public:
  explicit VectorSource(const std::vector<Vec>& items) : items_(&items) {}
  std::size_t size() const override { return items_->size(); }
  const Vec& at(std::size_t i) const override { return (*items_)[i]; }

 private:
  const std::vector<Vec>* items_;
};

class BufferSource final : public RealSource {
 public:
  explicit BufferSource(const ReplayBuffer& buffer) : buffer_(&buffer) {}
  std::size_t size() const override { return buffer_->size(); }
  const Vec& at(std::size_t i) const override { return buffer_->at(i); }

 private:
  const ReplayBuffer* buffer_;
};

/// Alternates critic_steps_per_gen critic updates with one generator update.
/// Per critic step the rng is consumed in a fixed order: real indices,
/// latent rows, then (gp only) interpolation uniforms. Real vectors are
/// standardized per coordinate; the statistics are computed once from the
/// source contents at the first cycle and frozen after that.
class GanTrainer {
 public:
  GanTrainer(const GanConfig& cfg, Eigen::Index param_dim,
             std::optional<nn::NetSpec> target_spec = std::nullopt);
  void cycle(const RealSource& real);
  GeneratorState state() const;
  const std::vector<TraceRow>& trace() const { return trace_; }
  long steps() const { return steps_; }
  /// Draw one generated vector from the trainer's own stream (used for
  /// online chain re-initialization).
  Vec sample_from_trainer_stream();

 private:
  void freeze_normalization(const RealSource& real);
  GanConfig cfg_;
  Eigen::Index param_dim_;
  std::optional<nn::NetSpec> target_spec_;
  Vec gen_params_, critic_params_;
  Vec ema_params_;  // averaged generator weights, the exported artifact
  Vec gen_m_, gen_v_, critic_m_, critic_v_;  // adaptive-moment buffers
  long gen_t_ = 0, critic_t_ = 0;
  Vec norm_shift_, norm_scale_;
  bool normalized_ = false;
  Rng rng_;
  long steps_ = 0;
  std::vector<TraceRow> trace_;
};

struct TrainResult {
  GeneratorState state;
  std::vector<TraceRow> trace;
};

/// Offline distillation: the whole sample set is the real-data source.
TrainResult train_offline(const sampler::SampleSet& samples, const GanConfig& cfg);

struct OnlineConfig {
  int k_chains = 1;
  long t_m = 1000;                     // MCMC updates per chain per outer iteration
  long t_g = 100;                      // generator cycles per outer iteration
  std::size_t buffer_capacity = 2000;  // 0 = unbounded
  long outer_iterations = 10;
  bool continue_chains = false;  // keep chains running instead of re-initializing from G
};

/// Online distillation: chains advance t_m updates, retained samples enter
/// the buffer, then t_g generator cycles run on the buffer. Unless
/// continue_chains is set, chains restart from generated samples at every
/// outer iteration after the first (the first starts from chain_inits).
TrainResult train_online(sampler::GradModel& model, const std::vector<Vec>& chain_inits,
                         const sampler::SamplerConfig& sampler_cfg, const GanConfig& gan_cfg,
                         const OnlineConfig& online_cfg);

/// count generated parameter vectors, z ~ N(0, I) per draw.
sampler::SampleSet sample(const GeneratorState& state, int count, Rng& rng);

Vec generate_one(const GeneratorState& state, Rng& rng);

}  // namespace apd::gan
