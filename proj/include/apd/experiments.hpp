#pragma once

// Experiment pipelines behind the CLI subcommands: toy-2D uncertainty
// contrast, anomaly detection with OOD scaling, active learning, gray-box
// adversarial detection, GAN-formulation comparison, and the MoG baseline
// sweep. Every pipeline is a deterministic function of (config, seed) and
// writes its tables, artifacts, and a result.json into the output directory
// (wall-clock goes to run_info.json so result files stay reproducible).

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "apd/attacks.hpp"
#include "apd/datasets.hpp"
#include "apd/gan.hpp"
#include "apd/mog.hpp"
#include "apd/sampler.hpp"
#include "apd/uncertainty.hpp"

namespace apd::experiments {

using nlohmann::json;

struct ExperimentConfig {
  std::string kind;
  std::string profile = "desk";
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  // data
  std::string digits_csv = "data/digits.csv";
  std::string idx_train_images, idx_train_labels;  // optional full-scale inputs
  std::string idx_test_images, idx_test_labels;
  std::string input_samples;    // sample-set base path: reuse instead of training a chain
  std::string input_generator;  // generator base path: reuse instead of distilling

  // classifier and training
  nn::NetSpec classifier;
  double dropout_rate = 0.5;
  sampler::SamplerConfig sgld;  // step_size 0 resolves to 0.05 / N at run time
  long sgd_iters = 3000;
  double sgd_prior_precision = 1e-3;  // the point-estimate baselines tune their own decay
  gan::GanConfig gan;
  gan::OnlineConfig online;
  bool online_mode = false;
  int inference_samples = 200;  // T

  // anomaly
  std::vector<std::string> methods = {"sgd", "mc_dropout", "sgld", "apd"};
  std::vector<std::string> measures = {"vr", "entropy", "bald", "model_variance"};
  std::vector<std::string> ood_kinds = {"gaussian", "uniform"};
  double ood_scale = 5.0;
  std::vector<int> t_sweep = {10, 50, 100, 200};
  std::vector<double> scale_factors = {0.5, 1.0, 2.0, 5.0, 10.0};
  std::vector<int> gen_hidden_sweep;  // off unless set

  // mog
  std::vector<int> mog_components = {1, 2, 5, 10, 20, 40, 60};
  mog::EmOptions em;
  std::string mog_measure = "entropy";
  std::string mog_ood_kind = "gaussian";
  double mog_ood_scale = 1.0;

  // attacks
  attacks::AttackConfig attack;
  int attack_count = 600;
  bool transfer = true;
  std::vector<std::string> attack_kinds = {"fgsm", "pgd"};
  std::vector<std::string> attack_methods = {"mc_dropout", "sgld", "apd"};
  std::string attack_measure = "model_variance";

  // active learning
  int al_rounds = 12;
  int al_acquire = 10;
  int al_init_per_class = 2;
  std::vector<std::string> al_acquisitions = {"entropy", "random"};
  std::vector<std::string> al_methods = {"sgd", "sgld"};
  long al_sgd_iters = 800;
  sampler::SamplerConfig al_sgld;  // short per-round chain

  // toy2d
  int grid_resolution = 61;
  double grid_extent = 12.0;

  // gan comparison
  long compare_steps = 1200;
  long checkpoint_every = 100;
  std::vector<std::string> compare_variants = {"wgan_gp", "wgan_clip", "vanilla"};
  std::string compare_measure = "vr";
  std::string compare_ood_kind = "gaussian";
  double compare_ood_scale = 1.0;
  int compare_t = 100;
  double clip_step_size = 5e-3;  // plain-step size for the clipped variant
};

/// Kind- and profile-specific defaults ("desk" digits scale or "full" MNIST
/// scale). The classifier, chain, and GAN budgets differ per experiment.
ExperimentConfig default_config(const std::string& kind, const std::string& profile = "desk");

json to_json(const ExperimentConfig& cfg);
void apply_overrides(ExperimentConfig& cfg, const json& overrides);

/// Human-readable dry-run plan: what would be trained and what gets written.
std::string execution_plan(const ExperimentConfig& cfg);

struct ExperimentResult {
  std::string kind;
  json config_snapshot;
  json metrics;
  std::map<std::string, std::string> artifact_hashes;
  double wall_clock_seconds = 0.0;
};

ExperimentResult run_toy2d(const ExperimentConfig& cfg);
ExperimentResult run_train_sgld(const ExperimentConfig& cfg);
ExperimentResult run_distill(const ExperimentConfig& cfg);
ExperimentResult run_anomaly(const ExperimentConfig& cfg);
ExperimentResult run_active_learning(const ExperimentConfig& cfg);
ExperimentResult run_adversarial_detection(const ExperimentConfig& cfg);
ExperimentResult run_gan_comparison(const ExperimentConfig& cfg);
ExperimentResult run_mog_sweep(const ExperimentConfig& cfg);

/// Dispatch on cfg.kind.
ExperimentResult run(const ExperimentConfig& cfg);

// Exposed for tests: fold dropout masks into a flat parameter vector so the
// masked network evaluates as a plain one (mask scaling moves onto the
// outgoing weight columns).
Vec fold_dropout_mask(const nn::NetSpec& spec, const Vec& params, const nn::DropoutMask& mask);

}  // namespace apd::experiments
