#include "apd/gan.hpp"

#include <cmath>

namespace apd::gan {

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// Bias-corrected adaptive-moment update (gp and vanilla variants).
void adam_step(Vec& params, const Vec& grad, Vec& m, Vec& v, long& t, const GanConfig& cfg) {
  if (m.size() != params.size()) {
    m = Vec::Zero(params.size());
    v = Vec::Zero(params.size());
  }
  ++t;
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double mc = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double vc = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  params -= (cfg.step_size / mc) *
            m.cwiseQuotient(((v / vc).cwiseSqrt().array() + 1e-8).matrix());
}

}  // namespace

const char* variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::kWganGp: return "wgan_gp";
    case LossVariant::kWganClip: return "wgan_clip";
    case LossVariant::kVanilla: return "vanilla";
  }
  return "?";
}

void GanConfig::validate(Eigen::Index param_dim) const {
  generator_spec.validate();
  critic_spec.validate();
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (generator_spec.input_dim() != latent_dim)
    throw ConfigError("generator input width must equal latent_dim");
  if (generator_spec.output_dim() != param_dim)
    throw ConfigError("generator output width must equal the parameter count");
  if (critic_spec.input_dim() != param_dim)
    throw ConfigError("critic input width must equal the parameter count");
  if (critic_spec.output_dim() != 1) throw ConfigError("critic output width must be 1");
  if (critic_spec.dropout_rate != 0.0 || generator_spec.dropout_rate != 0.0)
    throw ConfigError("GAN nets do not use dropout");
  if (gp_lambda < 0.0) throw ConfigError("gp_lambda must be >= 0");
  if (critic_steps_per_gen < 1) throw ConfigError("critic_steps_per_gen must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
  if (loss_variant == LossVariant::kWganClip && !(clip > 0.0))
    throw ConfigError("clip must be > 0 for the clipped variant");
  if (ema_decay < 0.0 || ema_decay >= 1.0)
    throw ConfigError("ema_decay must lie in [0, 1)");
}

GanConfig GanConfig::defaults_for(Eigen::Index param_dim, int hidden, LossVariant variant) {
  GanConfig cfg;
  cfg.loss_variant = variant;
  cfg.generator_spec.layer_sizes = {cfg.latent_dim, hidden, hidden, hidden,
                                    static_cast<int>(param_dim)};
  cfg.generator_spec.activation = nn::Activation::kLeakyRelu;
  cfg.critic_spec.layer_sizes = {static_cast<int>(param_dim), hidden, hidden, hidden, 1};
  cfg.critic_spec.activation = nn::Activation::kLeakyRelu;
  return cfg;
}

void ReplayBuffer::push(Vec v) {
  items_.push_back(std::move(v));
  ++inserted_;
  if (capacity_ > 0 && items_.size() > capacity_) items_.pop_front();
}

Vec interpolate(const Vec& theta_real, const Vec& theta_fake, double u) {
  if (theta_real.size() != theta_fake.size())
    throw ConfigError("interpolate: length mismatch " + std::to_string(theta_real.size()) +
                      " vs " + std::to_string(theta_fake.size()));
  return u * theta_real + (1.0 - u) * theta_fake;
}

CriticEval critic_loss_and_grad(const GanConfig& cfg, const Vec& critic_params, const Mat& real,
                                const Mat& fake, const Vec& interp_u) {
  if (real.rows() != fake.rows() || real.cols() != fake.cols())
    throw ConfigError("critic batches must have matching shapes");
  const Eigen::Index m = real.rows();
  const double inv_m = 1.0 / static_cast<double>(m);
  CriticEval out;
  out.grad = Vec::Zero(critic_params.size());

  const nn::ForwardTrace tr_real = nn::forward_trace(cfg.critic_spec, critic_params, real);
  const nn::ForwardTrace tr_fake = nn::forward_trace(cfg.critic_spec, critic_params, fake);
  const Vec t_real = tr_real.logits().col(0);
  const Vec t_fake = tr_fake.logits().col(0);

  if (cfg.loss_variant == LossVariant::kVanilla) {
    // minimize E[softplus(-t_real)] + E[softplus(t_fake)]
    Mat cot_real(m, 1), cot_fake(m, 1);
    for (Eigen::Index i = 0; i < m; ++i) {
      out.loss += inv_m * (softplus(-t_real[i]) + softplus(t_fake[i]));
      cot_real(i, 0) = -sigmoid(-t_real[i]) * inv_m;
      cot_fake(i, 0) = sigmoid(t_fake[i]) * inv_m;
    }
    out.grad += nn::backward(cfg.critic_spec, critic_params, tr_real, cot_real).param_grad;
    out.grad += nn::backward(cfg.critic_spec, critic_params, tr_fake, cot_fake).param_grad;
  } else {
    // Wasserstein estimate: E[D(fake)] - E[D(real)]
    out.loss = t_fake.mean() - t_real.mean();
    out.grad += nn::backward(cfg.critic_spec, critic_params, tr_fake,
                             Mat::Constant(m, 1, inv_m))
                    .param_grad;
    out.grad += nn::backward(cfg.critic_spec, critic_params, tr_real,
                             Mat::Constant(m, 1, -inv_m))
                    .param_grad;
    if (cfg.loss_variant == LossVariant::kWganGp && cfg.gp_lambda > 0.0) {
      if (interp_u.size() != m) throw ConfigError("need one interpolation u per pair");
      Mat x_hat(m, real.cols());
      for (Eigen::Index i = 0; i < m; ++i)
        x_hat.row(i) = interp_u[i] * real.row(i) + (1.0 - interp_u[i]) * fake.row(i);
      const nn::PenaltyGrad pg =
          nn::input_grad_norm_penalty(cfg.critic_spec, critic_params, x_hat);
      out.penalty = cfg.gp_lambda * pg.penalties.mean();
      out.loss += out.penalty;
      out.grad += (cfg.gp_lambda * inv_m) * pg.param_grad;
    }
  }
  if (!std::isfinite(out.loss) || !out.grad.allFinite())
    throw DivergedError("non-finite critic loss", -1);
  return out;
}

GeneratorEval generator_loss_and_grad(const GanConfig& cfg, const Vec& gen_params,
                                      const Vec& critic_params, const Mat& latent) {
  const Eigen::Index m = latent.rows();
  const double inv_m = 1.0 / static_cast<double>(m);
  const nn::ForwardTrace tr_gen = nn::forward_trace(cfg.generator_spec, gen_params, latent);
  const Mat& fake = tr_gen.logits();
  const nn::ForwardTrace tr_critic = nn::forward_trace(cfg.critic_spec, critic_params, fake);
  const Vec t_fake = tr_critic.logits().col(0);

  GeneratorEval out;
  Mat cot(m, 1);
  if (cfg.loss_variant == LossVariant::kVanilla) {
    // non-saturating form: minimize -E[log D(G(z))]
    for (Eigen::Index i = 0; i < m; ++i) {
      out.loss += inv_m * softplus(-t_fake[i]);
      cot(i, 0) = -sigmoid(-t_fake[i]) * inv_m;
    }
  } else {
    out.loss = -t_fake.mean();
    cot.setConstant(-inv_m);
  }
  const Mat fake_cot =
      nn::backward(cfg.critic_spec, critic_params, tr_critic, cot, true).input_grad;
  out.grad = nn::backward(cfg.generator_spec, gen_params, tr_gen, fake_cot).param_grad;
  if (!std::isfinite(out.loss) || !out.grad.allFinite())
    throw DivergedError("non-finite generator loss", -1);
  return out;
}

GanTrainer::GanTrainer(const GanConfig& cfg, Eigen::Index param_dim,
                       std::optional<nn::NetSpec> target_spec)
    : cfg_(cfg), param_dim_(param_dim), target_spec_(std::move(target_spec)),
      rng_(cfg.rng_seed) {
  cfg_.validate(param_dim);
  // generator initialized first, then critic, from the same stream
  gen_params_ = nn::init_params(cfg_.generator_spec, rng_);
  critic_params_ = nn::init_params(cfg_.critic_spec, rng_);
  ema_params_ = gen_params_;
}

void GanTrainer::freeze_normalization(const RealSource& real) {
  Vec mean = Vec::Zero(param_dim_);
  for (std::size_t i = 0; i < real.size(); ++i) mean += real.at(i);
  mean /= static_cast<double>(real.size());
  Vec var = Vec::Zero(param_dim_);
  for (std::size_t i = 0; i < real.size(); ++i)
    var += (real.at(i) - mean).cwiseProduct(real.at(i) - mean);
  var /= static_cast<double>(real.size());
  norm_shift_ = mean;
  norm_scale_ = var.cwiseSqrt().cwiseMax(1e-6);
  normalized_ = true;
}

void GanTrainer::cycle(const RealSource& real) {
  if (real.size() == 0) throw ConfigError("real-data source is empty");
  if (!normalized_) freeze_normalization(real);
  const Eigen::Index m = cfg_.batch_size;
  std::uniform_int_distribution<std::size_t> pick(0, real.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  double critic_loss = 0.0, penalty = 0.0;
  for (int c = 0; c < cfg_.critic_steps_per_gen; ++c) {
    Mat real_rows(m, param_dim_);
    for (Eigen::Index i = 0; i < m; ++i)
      real_rows.row(i) =
          (real.at(pick(rng_)) - norm_shift_).cwiseQuotient(norm_scale_).transpose();
    Mat latent(m, cfg_.latent_dim);
    for (Eigen::Index i = 0; i < m; ++i)
      latent.row(i) = normal_vector(rng_, cfg_.latent_dim).transpose();
    const Mat fake_rows = nn::forward(cfg_.generator_spec, gen_params_, latent);
    Vec u = Vec::Zero(m);
    if (cfg_.loss_variant == LossVariant::kWganGp)
      for (Eigen::Index i = 0; i < m; ++i) u[i] = unit(rng_);
    CriticEval eval;
    try {
      eval = critic_loss_and_grad(cfg_, critic_params_, real_rows, fake_rows, u);
    } catch (const DivergedError&) {
      throw DivergedError("gan critic diverged", steps_);
    }
    if (cfg_.loss_variant == LossVariant::kWganClip) {
      critic_params_ -= cfg_.step_size * eval.grad;
      critic_params_ = critic_params_.cwiseMax(-cfg_.clip).cwiseMin(cfg_.clip);
    } else {
      adam_step(critic_params_, eval.grad, critic_m_, critic_v_, critic_t_, cfg_);
    }
    critic_loss = eval.loss;
    penalty = eval.penalty;
  }

  Mat latent(m, cfg_.latent_dim);
  for (Eigen::Index i = 0; i < m; ++i)
    latent.row(i) = normal_vector(rng_, cfg_.latent_dim).transpose();
  GeneratorEval eval;
  try {
    eval = generator_loss_and_grad(cfg_, gen_params_, critic_params_, latent);
  } catch (const DivergedError&) {
    throw DivergedError("gan generator diverged", steps_);
  }
  if (cfg_.loss_variant == LossVariant::kWganClip) {
    gen_params_ -= cfg_.step_size * eval.grad;
  } else {
    adam_step(gen_params_, eval.grad, gen_m_, gen_v_, gen_t_, cfg_);
  }
  ema_params_ = cfg_.ema_decay * ema_params_ + (1.0 - cfg_.ema_decay) * gen_params_;
  ++steps_;
  trace_.push_back({steps_, critic_loss, eval.loss, penalty});
}

GeneratorState GanTrainer::state() const {
  GeneratorState s;
  s.spec = cfg_.generator_spec;
  s.latent_dim = cfg_.latent_dim;
  s.params = ema_params_;
  s.steps = steps_;
  s.target_spec = target_spec_;
  s.output_shift = normalized_ ? norm_shift_ : Vec::Zero(param_dim_);
  s.output_scale = normalized_ ? norm_scale_ : Vec::Ones(param_dim_);
  return s;
}

Vec GanTrainer::sample_from_trainer_stream() {
  const Vec z = normal_vector(rng_, cfg_.latent_dim);
  const Vec raw = nn::forward(cfg_.generator_spec, ema_params_, z.transpose()).row(0).transpose();
  if (!normalized_) return raw;
  return raw.cwiseProduct(norm_scale_) + norm_shift_;
}

TrainResult train_offline(const sampler::SampleSet& samples, const GanConfig& cfg) {
  if (samples.samples.empty()) throw ConfigError("cannot distill an empty sample set");
  GanTrainer trainer(cfg, samples.samples.front().size(), samples.spec);
  VectorSource source(samples.samples);
  for (long s = 0; s < cfg.total_steps; ++s) trainer.cycle(source);
  return {trainer.state(), trainer.trace()};
}

TrainResult train_online(sampler::GradModel& model, const std::vector<Vec>& chain_inits,
                         const sampler::SamplerConfig& sampler_cfg, const GanConfig& gan_cfg,
                         const OnlineConfig& online_cfg) {
  if (online_cfg.k_chains < 1) throw ConfigError("need K >= 1 chains");
  if (static_cast<int>(chain_inits.size()) != online_cfg.k_chains)
    throw ConfigError("need one init per chain");

  std::optional<nn::NetSpec> spec;
  if (auto* nn_model = dynamic_cast<const sampler::NnClassifierModel*>(&model))
    spec = nn_model->spec();
  GanTrainer trainer(gan_cfg, model.param_dim(), spec);
  ReplayBuffer buffer(online_cfg.buffer_capacity);
  BufferSource source(buffer);

  std::vector<sampler::ChainRunner> runners;
  runners.reserve(static_cast<std::size_t>(online_cfg.k_chains));
  for (int k = 0; k < online_cfg.k_chains; ++k) {
    sampler::SamplerConfig chain_cfg = sampler_cfg;
    chain_cfg.rng_seed =
        derive_seed(sampler_cfg.rng_seed, kStreamChainBase + static_cast<std::uint64_t>(k));
    runners.emplace_back(chain_inits[static_cast<std::size_t>(k)], model, chain_cfg, k);
  }

  for (long outer = 0; outer < online_cfg.outer_iterations; ++outer) {
    if (outer > 0 && !online_cfg.continue_chains)
      for (auto& runner : runners) runner.reset(trainer.sample_from_trainer_stream());
    for (auto& runner : runners) {
      std::vector<Vec> retained;
      runner.advance(online_cfg.t_m, retained);
      for (auto& v : retained) buffer.push(std::move(v));
    }
    for (long g = 0; g < online_cfg.t_g; ++g) trainer.cycle(source);
  }
  return {trainer.state(), trainer.trace()};
}

sampler::SampleSet sample(const GeneratorState& state, int count, Rng& rng) {
  if (count < 1) throw ConfigError("sample count must be >= 1");
  sampler::SampleSet set;
  set.spec = state.target_spec;
  set.chain_id = -1;
  set.samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) set.samples.push_back(generate_one(state, rng));
  return set;
}

Vec generate_one(const GeneratorState& state, Rng& rng) {
  const Vec z = normal_vector(rng, state.latent_dim);
  const Vec raw = nn::forward(state.spec, state.params, z.transpose()).row(0).transpose();
  if (state.output_scale.size() != raw.size()) return raw;
  return raw.cwiseProduct(state.output_scale) + state.output_shift;
}

}  // namespace apd::gan
