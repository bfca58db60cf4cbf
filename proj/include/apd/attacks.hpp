#pragma once

// FGSM and PGD adversarial example crafting against a single posterior
// sample (gray-box threat model). Perturbations live in the l-infinity ball
// of radius epsilon around the clean input, clamped to the valid input range.

#include <vector>

#include "apd/net.hpp"

namespace apd::attacks {

enum class AttackKind { kFgsm, kPgd };

struct AttackConfig {
  AttackKind kind = AttackKind::kFgsm;
  double epsilon = 0.3;    // l-infinity budget in normalized-pixel units
  double pgd_step = 0.075;  // alpha
  int pgd_iters = 20;
  double clamp_lo = 0.0;
  double clamp_hi = 1.0;
  bool random_start = false;  // PGD start jitter
  std::uint64_t rng_seed = 0;
  void validate() const;
};

/// Per-coordinate clip of candidate onto [x - eps, x + eps].
Vec project_linf_ball(const Vec& x, const Vec& candidate, double eps);

Vec fgsm(const nn::NetSpec& spec, const Vec& params, const Vec& x, int label,
         const AttackConfig& config);

Vec pgd(const nn::NetSpec& spec, const Vec& params, const Vec& x, int label,
        const AttackConfig& config);

struct AttackRecord {
  Vec clean;
  Vec adversarial;
  int label = 0;
  bool success = false;  // source weights misclassify the adversarial input
  double linf = 0.0;
};

struct AttackSet {
  std::vector<AttackRecord> records;
  AttackConfig config;
  bool insufficient_inputs = false;
};

/// Up to `count` adversarial examples crafted in input order; fewer inputs
/// than requested sets the warning flag instead of failing.
AttackSet craft_attack_set(const nn::NetSpec& spec, const Vec& source_params, const Mat& inputs,
                           const std::vector<int>& labels, const AttackConfig& config, int count);

}  // namespace apd::attacks
