#include "apd/attacks.hpp"

#include <cmath>

namespace apd::attacks {

namespace {

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Vec input_gradient(const nn::NetSpec& spec, const Vec& params, const Vec& x, int label) {
  nn::Batch b;
  b.inputs = x.transpose();
  b.labels = {label};
  return nn::grad_input(spec, params, b).row(0).transpose();
}

int predicted_class(const nn::NetSpec& spec, const Vec& params, const Vec& x) {
  const Mat logits = nn::forward(spec, params, x.transpose());
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < logits.cols(); ++c)
    if (logits(0, c) > logits(0, best)) best = c;
  return static_cast<int>(best);
}

}  // namespace

void AttackConfig::validate() const {
  if (epsilon < 0.0) throw ConfigError("epsilon must be >= 0");
  if (clamp_lo >= clamp_hi) throw ConfigError("clamp range is empty");
  if (kind == AttackKind::kPgd) {
    if (pgd_step < 0.0 || pgd_step > epsilon)
      throw ConfigError("pgd step must lie in [0, epsilon]");
    if (pgd_iters < 1) throw ConfigError("pgd needs at least one iteration");
  }
}

Vec project_linf_ball(const Vec& x, const Vec& candidate, double eps) {
  return candidate.array().max(x.array() - eps).min(x.array() + eps).matrix();
}

Vec fgsm(const nn::NetSpec& spec, const Vec& params, const Vec& x, int label,
         const AttackConfig& config) {
  config.validate();
  const Vec g = input_gradient(spec, params, x, label);
  Vec out = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] += config.epsilon * sign0(g[i]);
  return out.cwiseMax(config.clamp_lo).cwiseMin(config.clamp_hi);
}

Vec pgd(const nn::NetSpec& spec, const Vec& params, const Vec& x, int label,
        const AttackConfig& config) {
  config.validate();
  Vec cur = x;
  if (config.random_start) {
    Rng rng(config.rng_seed);
    std::uniform_real_distribution<double> jitter(-config.epsilon, config.epsilon);
    for (Eigen::Index i = 0; i < cur.size(); ++i) cur[i] += jitter(rng);
    cur = project_linf_ball(x, cur, config.epsilon)
              .cwiseMax(config.clamp_lo)
              .cwiseMin(config.clamp_hi);
  }
  for (int it = 0; it < config.pgd_iters; ++it) {
    const Vec g = input_gradient(spec, params, cur, label);
    for (Eigen::Index i = 0; i < cur.size(); ++i) cur[i] += config.pgd_step * sign0(g[i]);
    cur = project_linf_ball(x, cur, config.epsilon)
              .cwiseMax(config.clamp_lo)
              .cwiseMin(config.clamp_hi);
  }
  return cur;
}

AttackSet craft_attack_set(const nn::NetSpec& spec, const Vec& source_params, const Mat& inputs,
                           const std::vector<int>& labels, const AttackConfig& config,
                           int count) {
  config.validate();
  if (inputs.rows() != static_cast<Eigen::Index>(labels.size()))
    throw ConfigError("inputs and labels disagree on example count");
  if (count < 1) throw ConfigError("count must be >= 1");
  AttackSet set;
  set.config = config;
  const Eigen::Index n = std::min<Eigen::Index>(count, inputs.rows());
  set.insufficient_inputs = n < count;
  set.records.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    AttackRecord rec;
    rec.clean = inputs.row(i).transpose();
    rec.label = labels[static_cast<std::size_t>(i)];
    rec.adversarial = config.kind == AttackKind::kFgsm
                          ? fgsm(spec, source_params, rec.clean, rec.label, config)
                          : pgd(spec, source_params, rec.clean, rec.label, config);
    rec.linf = (rec.adversarial - rec.clean).cwiseAbs().maxCoeff();
    rec.success = predicted_class(spec, source_params, rec.adversarial) != rec.label;
    set.records.push_back(std::move(rec));
  }
  return set;
}

}  // namespace apd::attacks
