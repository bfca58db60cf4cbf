#include "apd/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "apd/io.hpp"
#include "apd/metrics.hpp"

namespace apd::experiments {

namespace fs = std::filesystem;

namespace {

// stable method ids keep per-method rng streams independent of list order
int method_id(const std::string& name) {
  if (name == "sgd") return 0;
  if (name == "sgd_dropout") return 1;
  if (name == "mc_dropout") return 2;
  if (name == "sgld") return 3;
  if (name == "apd") return 4;
  if (name == "mog") return 5;
  throw ConfigError("unknown method '" + name + "'");
}

uncertainty::Measure measure_from(const std::string& name) {
  if (name == "entropy") return uncertainty::Measure::kEntropy;
  if (name == "bald") return uncertainty::Measure::kBald;
  if (name == "vr") return uncertainty::Measure::kVr;
  if (name == "model_variance") return uncertainty::Measure::kModelVariance;
  throw ConfigError("unknown measure '" + name + "'");
}

datasets::OodKind ood_kind_from(const std::string& name) {
  if (name == "gaussian") return datasets::OodKind::kGaussianNoise;
  if (name == "uniform") return datasets::OodKind::kUniformNoise;
  if (name == "external") return datasets::OodKind::kExternalCorpus;
  throw ConfigError("unknown OOD kind '" + name + "'");
}

gan::LossVariant variant_from(const std::string& name) {
  if (name == "wgan_gp") return gan::LossVariant::kWganGp;
  if (name == "wgan_clip") return gan::LossVariant::kWganClip;
  if (name == "vanilla") return gan::LossVariant::kVanilla;
  throw ConfigError("unknown loss variant '" + name + "'");
}

double resolve_step(double configured, long dataset_size) {
  return configured > 0.0 ? configured : 0.05 / static_cast<double>(dataset_size);
}

std::string fmt(double v) { return io::format_double(v); }

Mat vstack(const Mat& a, const Mat& b) {
  Mat out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

}  // namespace

Vec fold_dropout_mask(const nn::NetSpec& spec, const Vec& params, const nn::DropoutMask& mask) {
  std::vector<Mat> weights;
  std::vector<Vec> biases;
  nn::unflatten(spec, params, weights, biases);
  const double inv = 1.0 / (1.0 - mask.rate);
  for (std::size_t l = 0; l < mask.keep.size(); ++l) {
    // scaling of hidden layer l's activations moves to layer l+1's columns
    for (Eigen::Index j = 0; j < mask.keep[l].size(); ++j)
      weights[l + 1].col(j) *= mask.keep[l][j] * inv;
  }
  nn::NetSpec plain = spec;
  plain.dropout_rate = 0.0;
  return nn::flatten(plain, weights, biases);
}

// ---------------------------------------------------------------------------
// defaults, serialization, plan
// ---------------------------------------------------------------------------

ExperimentConfig default_config(const std::string& kind, const std::string& profile) {
  static const char* kKnown[] = {"toy2d",       "train-sgld",   "distill",
                                 "anomaly",     "active-learn", "attack-detect",
                                 "gan-compare", "mog-sweep"};
  if (std::find_if(std::begin(kKnown), std::end(kKnown),
                   [&](const char* k) { return kind == k; }) == std::end(kKnown))
    throw ConfigError("unknown experiment kind '" + kind + "'");
  if (profile != "desk" && profile != "full")
    throw ConfigError("profile must be 'desk' or 'full'");
  ExperimentConfig cfg;
  cfg.kind = kind;
  cfg.profile = profile;

  const bool full = profile == "full";
  cfg.classifier.layer_sizes = full ? std::vector<int>{784, 100, 10}
                                    : std::vector<int>{64, 100, 10};
  cfg.classifier.activation = nn::Activation::kRelu;

  cfg.sgld.step_size = 0.0;  // resolved to 0.05 / N
  cfg.sgld.burn_in = 500;
  cfg.sgld.thin_interval = full ? 20 : 10;
  cfg.sgld.total_samples = 2000;
  cfg.sgld.batch_size = 100;
  cfg.sgld.prior_precision = 1.0;
  cfg.sgld.mode = sampler::Mode::kSgld;

  cfg.sgd_iters = full ? 10000 : 3000;
  cfg.inference_samples = 200;

  cfg.gan = gan::GanConfig::defaults_for(cfg.classifier.param_count(), 100);
  cfg.gan.step_size = 1e-3;
  cfg.gan.batch_size = 64;
  cfg.gan.total_steps = 1500;

  cfg.online.buffer_capacity = 2000;

  cfg.al_sgld = cfg.sgld;
  cfg.al_sgld.burn_in = 300;
  cfg.al_sgld.thin_interval = 5;
  cfg.al_sgld.total_samples = 100;
  cfg.al_sgld.batch_size = 20;

  cfg.attack.kind = attacks::AttackKind::kFgsm;
  cfg.attack.epsilon = 0.3;
  cfg.attack.pgd_step = 0.075;
  cfg.attack.pgd_iters = 20;
  cfg.attack_count = full ? 6000 : 600;

  if (kind == "toy2d") {
    cfg.classifier.layer_sizes = {2, 10, 10, 2};
    cfg.sgld.step_size = 0.0;
    cfg.sgld.burn_in = 500;
    cfg.sgld.thin_interval = 20;
    cfg.sgld.total_samples = 200;
    cfg.sgld.batch_size = 20;
    cfg.gan = gan::GanConfig::defaults_for(cfg.classifier.param_count(), 100);
    cfg.gan.step_size = 1e-3;
    cfg.gan.total_steps = 1500;
    cfg.gan.critic_steps_per_gen = 10;
    cfg.methods = {"sgd", "sgld", "apd"};
  } else if (kind == "gan-compare") {
    cfg.methods = {"sgld"};
  } else if (kind == "mog-sweep") {
    cfg.methods = {"sgld"};
  } else if (kind == "attack-detect") {
    cfg.methods = cfg.attack_methods;
  } else if (kind == "active-learn") {
    cfg.methods = cfg.al_methods;
  }
  return cfg;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["kind"] = c.kind;
  j["profile"] = c.profile;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["digits_csv"] = c.digits_csv;
  j["idx_train_images"] = c.idx_train_images;
  j["idx_train_labels"] = c.idx_train_labels;
  j["idx_test_images"] = c.idx_test_images;
  j["idx_test_labels"] = c.idx_test_labels;
  j["input_samples"] = c.input_samples;
  j["input_generator"] = c.input_generator;
  j["classifier"] = io::to_json(c.classifier);
  j["dropout_rate"] = c.dropout_rate;
  j["sgld"] = io::to_json(c.sgld);
  j["sgd_iters"] = c.sgd_iters;
  j["sgd_prior_precision"] = c.sgd_prior_precision;
  j["gan"] = io::to_json(c.gan);
  j["online"] = json{{"k_chains", c.online.k_chains},
                     {"t_m", c.online.t_m},
                     {"t_g", c.online.t_g},
                     {"buffer_capacity", c.online.buffer_capacity},
                     {"outer_iterations", c.online.outer_iterations},
                     {"continue_chains", c.online.continue_chains}};
  j["online_mode"] = c.online_mode;
  j["inference_samples"] = c.inference_samples;
  j["methods"] = c.methods;
  j["measures"] = c.measures;
  j["ood_kinds"] = c.ood_kinds;
  j["ood_scale"] = c.ood_scale;
  j["t_sweep"] = c.t_sweep;
  j["scale_factors"] = c.scale_factors;
  j["gen_hidden_sweep"] = c.gen_hidden_sweep;
  j["mog_components"] = c.mog_components;
  j["em"] = json{{"max_iters", c.em.max_iters},
                 {"tol", c.em.tol},
                 {"variance_floor", c.em.variance_floor}};
  j["mog_measure"] = c.mog_measure;
  j["mog_ood_kind"] = c.mog_ood_kind;
  j["mog_ood_scale"] = c.mog_ood_scale;
  j["attack"] = io::to_json(c.attack);
  j["attack_count"] = c.attack_count;
  j["transfer"] = c.transfer;
  j["attack_kinds"] = c.attack_kinds;
  j["attack_methods"] = c.attack_methods;
  j["attack_measure"] = c.attack_measure;
  j["al_rounds"] = c.al_rounds;
  j["al_acquire"] = c.al_acquire;
  j["al_init_per_class"] = c.al_init_per_class;
  j["al_acquisitions"] = c.al_acquisitions;
  j["al_methods"] = c.al_methods;
  j["al_sgd_iters"] = c.al_sgd_iters;
  j["al_sgld"] = io::to_json(c.al_sgld);
  j["grid_resolution"] = c.grid_resolution;
  j["grid_extent"] = c.grid_extent;
  j["compare_steps"] = c.compare_steps;
  j["checkpoint_every"] = c.checkpoint_every;
  j["compare_variants"] = c.compare_variants;
  j["compare_measure"] = c.compare_measure;
  j["compare_ood_kind"] = c.compare_ood_kind;
  j["compare_ood_scale"] = c.compare_ood_scale;
  j["compare_t"] = c.compare_t;
  j["clip_step_size"] = c.clip_step_size;
  return j;
}

void apply_overrides(ExperimentConfig& c, const json& j) {
  c.profile = j.value("profile", c.profile);
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.digits_csv = j.value("digits_csv", c.digits_csv);
  c.idx_train_images = j.value("idx_train_images", c.idx_train_images);
  c.idx_train_labels = j.value("idx_train_labels", c.idx_train_labels);
  c.idx_test_images = j.value("idx_test_images", c.idx_test_images);
  c.idx_test_labels = j.value("idx_test_labels", c.idx_test_labels);
  c.input_samples = j.value("input_samples", c.input_samples);
  c.input_generator = j.value("input_generator", c.input_generator);
  if (j.contains("classifier")) c.classifier = io::net_spec_from_json(j.at("classifier"));
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  if (j.contains("sgld")) c.sgld = io::sampler_config_from_json(j.at("sgld"));
  c.sgd_iters = j.value("sgd_iters", c.sgd_iters);
  c.sgd_prior_precision = j.value("sgd_prior_precision", c.sgd_prior_precision);
  if (j.contains("gan")) c.gan = io::gan_config_from_json(j.at("gan"));
  if (j.contains("online")) {
    const json& o = j.at("online");
    c.online.k_chains = o.value("k_chains", c.online.k_chains);
    c.online.t_m = o.value("t_m", c.online.t_m);
    c.online.t_g = o.value("t_g", c.online.t_g);
    c.online.buffer_capacity = o.value("buffer_capacity", c.online.buffer_capacity);
    c.online.outer_iterations = o.value("outer_iterations", c.online.outer_iterations);
    c.online.continue_chains = o.value("continue_chains", c.online.continue_chains);
  }
  c.online_mode = j.value("online_mode", c.online_mode);
  c.inference_samples = j.value("inference_samples", c.inference_samples);
  c.methods = j.value("methods", c.methods);
  c.measures = j.value("measures", c.measures);
  c.ood_kinds = j.value("ood_kinds", c.ood_kinds);
  c.ood_scale = j.value("ood_scale", c.ood_scale);
  c.t_sweep = j.value("t_sweep", c.t_sweep);
  c.scale_factors = j.value("scale_factors", c.scale_factors);
  c.gen_hidden_sweep = j.value("gen_hidden_sweep", c.gen_hidden_sweep);
  c.mog_components = j.value("mog_components", c.mog_components);
  if (j.contains("em")) {
    const json& e = j.at("em");
    c.em.max_iters = e.value("max_iters", c.em.max_iters);
    c.em.tol = e.value("tol", c.em.tol);
    c.em.variance_floor = e.value("variance_floor", c.em.variance_floor);
  }
  c.mog_measure = j.value("mog_measure", c.mog_measure);
  c.mog_ood_kind = j.value("mog_ood_kind", c.mog_ood_kind);
  c.mog_ood_scale = j.value("mog_ood_scale", c.mog_ood_scale);
  if (j.contains("attack")) c.attack = io::attack_config_from_json(j.at("attack"));
  c.attack_count = j.value("attack_count", c.attack_count);
  c.transfer = j.value("transfer", c.transfer);
  c.attack_kinds = j.value("attack_kinds", c.attack_kinds);
  c.attack_methods = j.value("attack_methods", c.attack_methods);
  c.attack_measure = j.value("attack_measure", c.attack_measure);
  c.al_rounds = j.value("al_rounds", c.al_rounds);
  c.al_acquire = j.value("al_acquire", c.al_acquire);
  c.al_init_per_class = j.value("al_init_per_class", c.al_init_per_class);
  c.al_acquisitions = j.value("al_acquisitions", c.al_acquisitions);
  c.al_methods = j.value("al_methods", c.al_methods);
  c.al_sgd_iters = j.value("al_sgd_iters", c.al_sgd_iters);
  if (j.contains("al_sgld")) c.al_sgld = io::sampler_config_from_json(j.at("al_sgld"));
  c.grid_resolution = j.value("grid_resolution", c.grid_resolution);
  c.grid_extent = j.value("grid_extent", c.grid_extent);
  c.compare_steps = j.value("compare_steps", c.compare_steps);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.compare_variants = j.value("compare_variants", c.compare_variants);
  c.compare_measure = j.value("compare_measure", c.compare_measure);
  c.compare_ood_kind = j.value("compare_ood_kind", c.compare_ood_kind);
  c.compare_ood_scale = j.value("compare_ood_scale", c.compare_ood_scale);
  c.compare_t = j.value("compare_t", c.compare_t);
  c.clip_step_size = j.value("clip_step_size", c.clip_step_size);
}

std::string execution_plan(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "plan: " << c.kind << " (profile " << c.profile << ", seed " << c.seed << ")\n";
  if (c.kind == "toy2d") {
    os << "  dataset: toy-2D, 20 points in 2 clusters\n"
       << "  train: sgd(" << c.sgd_iters << " iters), sgld(chain of " << c.sgld.total_samples
       << "), apd(distill " << c.gan.total_steps << " steps)\n"
       << "  write: toy2d_grid_<method>.csv (" << c.grid_resolution << "x" << c.grid_resolution
       << "), toy2d_summary.csv\n";
  } else if (c.kind == "train-sgld") {
    os << "  dataset: " << (c.idx_train_images.empty() ? c.digits_csv : c.idx_train_images)
       << "\n  chain: " << c.sgld.total_samples << " retained (burn " << c.sgld.burn_in
       << ", thin " << c.sgld.thin_interval << ")\n  write: sgld_samples.{json,bin}\n";
  } else if (c.kind == "distill") {
    os << "  input: " << (c.input_samples.empty() ? "<train internally>" : c.input_samples)
       << "\n  gan: " << gan::variant_name(c.gan.loss_variant) << ", " << c.gan.total_steps
       << " steps" << (c.online_mode ? " (online)" : " (offline)")
       << "\n  write: generator.{json,bin}, loss_trace.csv\n";
  } else if (c.kind == "anomaly") {
    os << "  methods:";
    for (const auto& m : c.methods) os << " " << m;
    os << "\n  ood:";
    for (const auto& k : c.ood_kinds) os << " " << k;
    os << " at scale " << c.ood_scale << ", T=" << c.inference_samples
       << "\n  write: anomaly_<measure>.csv, accuracy.csv, sweeps\n";
  } else if (c.kind == "active-learn") {
    os << "  arms:";
    for (const auto& m : c.al_methods)
      for (const auto& a : c.al_acquisitions) os << " " << m << "/" << a;
    os << "\n  rounds: " << c.al_rounds << " x acquire " << c.al_acquire
       << "\n  write: active_learning.csv\n";
  } else if (c.kind == "attack-detect") {
    os << "  sources/defenders:";
    for (const auto& m : c.attack_methods) os << " " << m;
    os << "\n  attacks:";
    for (const auto& k : c.attack_kinds) os << " " << k;
    os << " (eps " << c.attack.epsilon << ", count " << c.attack_count << ", transfer "
       << (c.transfer ? "on" : "off") << ")\n  write: detection_matrix.csv, attack sets\n";
  } else if (c.kind == "gan-compare") {
    os << "  variants:";
    for (const auto& v : c.compare_variants) os << " " << v;
    os << "\n  steps: " << c.compare_steps << ", checkpoint every " << c.checkpoint_every
       << "\n  write: gan_compare.csv\n";
  } else if (c.kind == "mog-sweep") {
    os << "  components:";
    for (int k : c.mog_components) os << " " << k;
    os << "\n  measure: " << c.mog_measure << "\n  write: mog_sweep.csv, mog models\n";
  } else {
    throw ConfigError("unknown experiment kind '" + c.kind + "'");
  }
  os << "  out: " << c.out_dir << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// shared pipeline pieces
// ---------------------------------------------------------------------------

namespace {

struct Workspace {
  ExperimentConfig cfg;  // with resolved step sizes
  datasets::LabeledDataset data;
  Mat train_inputs, val_inputs, test_inputs;
  std::vector<int> train_labels, val_labels, test_labels;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  std::vector<std::string> artifact_files;

  std::string path(const std::string& name) const {
    return (fs::path(cfg.out_dir) / name).string();
  }
};

Workspace open_workspace(const ExperimentConfig& cfg, bool load_digits = true) {
  Workspace ws;
  ws.cfg = cfg;
  fs::create_directories(cfg.out_dir);
  if (load_digits) {
    if (cfg.profile == "full" && !cfg.idx_train_images.empty()) {
      ws.data = datasets::load_idx(cfg.idx_train_images, cfg.idx_train_labels);
      datasets::apply_stratified_split(ws.data, derive_seed(cfg.seed, kStreamData));
    } else {
      ws.data = datasets::load_digits_csv(cfg.digits_csv, derive_seed(cfg.seed, kStreamData));
    }
    ws.train_inputs = ws.data.rows(ws.data.train);
    ws.train_labels = ws.data.labels_at(ws.data.train);
    ws.val_inputs = ws.data.rows(ws.data.val);
    ws.val_labels = ws.data.labels_at(ws.data.val);
    ws.test_inputs = ws.data.rows(ws.data.test);
    ws.test_labels = ws.data.labels_at(ws.data.test);
    ws.cfg.sgld.step_size = resolve_step(cfg.sgld.step_size, ws.data.train.size());
    ws.cfg.al_sgld.step_size = resolve_step(cfg.al_sgld.step_size, ws.data.train.size());
  }
  return ws;
}

ExperimentResult finalize(Workspace& ws, json metrics) {
  ExperimentResult result;
  result.kind = ws.cfg.kind;
  result.config_snapshot = to_json(ws.cfg);
  result.metrics = std::move(metrics);
  for (const auto& file : ws.artifact_files)
    result.artifact_hashes[fs::path(file).filename().string()] = io::sha256_file(file);
  result.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - ws.t0).count();

  json result_json{{"kind", result.kind},
                   {"config", result.config_snapshot},
                   {"metrics", result.metrics},
                   {"artifact_hashes", result.artifact_hashes}};
  io::write_text_file(ws.path("result.json"), result_json.dump(2) + "\n");
  io::write_text_file(ws.path("run_info.json"),
                      json{{"wall_clock_seconds", result.wall_clock_seconds}}.dump(2) + "\n");
  io::write_text_file(ws.path("config_snapshot.json"), result.config_snapshot.dump(2) + "\n");
  return result;
}

struct MethodArtifacts {
  std::optional<Vec> sgd_point;
  std::optional<Vec> dropout_point;
  std::optional<sampler::SampleSet> sgld_set;
  std::optional<gan::GeneratorState> generator;
  std::optional<mog::MoGModel> mog_model;
};

Vec train_point(const nn::NetSpec& spec, const Mat& inputs, const std::vector<int>& labels,
                const sampler::SamplerConfig& base, long iters, bool with_dropout,
                std::uint64_t seed) {
  nn::NetSpec train_spec = spec;
  if (with_dropout) train_spec.dropout_rate = 0.5;
  sampler::NnClassifierModel model(train_spec, inputs, labels, with_dropout,
                                   derive_seed(seed, kStreamDropoutTrain));
  sampler::SamplerConfig cfg = base;
  cfg.mode = sampler::Mode::kSgd;
  cfg.burn_in = iters - 1;
  cfg.thin_interval = 1;
  cfg.total_samples = 1;
  cfg.rng_seed = derive_seed(seed, with_dropout ? kStreamDropoutTrain : kStreamSgdTrain);
  Rng init_rng(derive_seed(seed, kStreamInit));
  const Vec init = nn::init_params(train_spec, init_rng);
  return sampler::run_chain(init, model, cfg).samples.front();
}

sampler::SampleSet train_sgld_chain(const nn::NetSpec& spec, const Mat& inputs,
                                    const std::vector<int>& labels,
                                    const sampler::SamplerConfig& base, std::uint64_t seed) {
  sampler::NnClassifierModel model(spec, inputs, labels);
  sampler::SamplerConfig cfg = base;
  cfg.mode = sampler::Mode::kSgld;
  cfg.rng_seed = derive_seed(seed, kStreamChainBase);
  Rng init_rng(derive_seed(seed, kStreamInit));
  const Vec init = nn::init_params(spec, init_rng);
  return sampler::run_chain(init, model, cfg);
}

MethodArtifacts train_methods(Workspace& ws, const std::vector<std::string>& wanted) {
  const ExperimentConfig& cfg = ws.cfg;
  MethodArtifacts art;
  auto needs = [&](const char* name) {
    return std::find(wanted.begin(), wanted.end(), name) != wanted.end();
  };
  sampler::SamplerConfig point_cfg = cfg.sgld;
  point_cfg.prior_precision = cfg.sgd_prior_precision;
  if (needs("sgd"))
    art.sgd_point = train_point(cfg.classifier, ws.train_inputs, ws.train_labels, point_cfg,
                                cfg.sgd_iters, false, cfg.seed);
  if (needs("mc_dropout") || needs("sgd_dropout"))
    art.dropout_point = train_point(cfg.classifier, ws.train_inputs, ws.train_labels, point_cfg,
                                    cfg.sgd_iters, true, cfg.seed);
  if (needs("sgld") || needs("apd") || needs("mog")) {
    if (!cfg.input_samples.empty()) {
      art.sgld_set = io::load_sample_set(cfg.input_samples);
    } else {
      art.sgld_set =
          train_sgld_chain(cfg.classifier, ws.train_inputs, ws.train_labels, cfg.sgld, cfg.seed);
      io::save_sample_set(ws.path("sgld_samples"), *art.sgld_set);
      ws.artifact_files.push_back(ws.path("sgld_samples.bin"));
      ws.artifact_files.push_back(ws.path("sgld_samples.json"));
    }
  }
  if (needs("apd")) {
    if (!cfg.input_generator.empty()) {
      art.generator = io::load_generator(cfg.input_generator);
      return art;
    }
    gan::GanConfig gcfg = cfg.gan;
    gcfg.rng_seed = derive_seed(cfg.seed, kStreamGan);
    gan::TrainResult trained;
    if (cfg.online_mode) {
      sampler::NnClassifierModel model(cfg.classifier, ws.train_inputs, ws.train_labels);
      Rng init_rng(derive_seed(cfg.seed, kStreamInit));
      std::vector<Vec> inits;
      for (int k = 0; k < cfg.online.k_chains; ++k)
        inits.push_back(nn::init_params(cfg.classifier, init_rng));
      sampler::SamplerConfig scfg = ws.cfg.sgld;
      trained = gan::train_online(model, inits, scfg, gcfg, cfg.online);
    } else {
      trained = gan::train_offline(*art.sgld_set, gcfg);
    }
    art.generator = trained.state;
    io::save_generator(ws.path("generator"), *art.generator);
    io::write_loss_trace_csv(ws.path("gan_loss_trace.csv"), trained.trace);
    ws.artifact_files.push_back(ws.path("generator.bin"));
    ws.artifact_files.push_back(ws.path("generator.json"));
    ws.artifact_files.push_back(ws.path("gan_loss_trace.csv"));
  }
  return art;
}

// One predictive batch per input row; T parameter draws shared across rows.
std::vector<uncertainty::PredictiveBatch> method_predictions(
    const ExperimentConfig& cfg, const MethodArtifacts& art, const std::string& method,
    const Mat& inputs, int t_count) {
  Rng eval_rng(derive_seed(cfg.seed,
                           kStreamEval * 1000 + static_cast<std::uint64_t>(method_id(method))));
  if (method == "sgd") {
    if (!art.sgd_point) throw ConfigError("sgd point estimate not trained");
    return uncertainty::predict_point(cfg.classifier, *art.sgd_point, inputs);
  }
  if (method == "sgd_dropout") {
    if (!art.dropout_point) throw ConfigError("dropout point estimate not trained");
    return uncertainty::predict_point(cfg.classifier, *art.dropout_point, inputs);
  }
  if (method == "mc_dropout") {
    if (!art.dropout_point) throw ConfigError("dropout point estimate not trained");
    nn::NetSpec spec = cfg.classifier;
    spec.dropout_rate = cfg.dropout_rate;
    return uncertainty::predict_mc_dropout(spec, *art.dropout_point, inputs, t_count, eval_rng);
  }
  if (method == "sgld") {
    if (!art.sgld_set) throw ConfigError("sgld chain not trained");
    return uncertainty::predict_from_params(cfg.classifier, art.sgld_set->samples, inputs,
                                            t_count, uncertainty::SampleSource::kSgld);
  }
  if (method == "apd") {
    if (!art.generator) throw ConfigError("generator not trained");
    const auto set = gan::sample(*art.generator, t_count, eval_rng);
    return uncertainty::predict_from_params(cfg.classifier, set.samples, inputs, t_count,
                                            uncertainty::SampleSource::kApd);
  }
  if (method == "mog") {
    if (!art.mog_model) throw ConfigError("mog model not fitted");
    const auto set = mog::mog_sample(*art.mog_model, t_count, eval_rng);
    return uncertainty::predict_from_params(cfg.classifier, set.samples, inputs, t_count,
                                            uncertainty::SampleSource::kApd);
  }
  throw ConfigError("unknown method '" + method + "'");
}

int effective_t(const std::string& method, int t_count) {
  return (method == "sgd" || method == "sgd_dropout") ? 1 : t_count;
}

// first t rows of a predictive batch (draw order), for sample-size sweeps
uncertainty::PredictiveBatch truncate_batch(const uncertainty::PredictiveBatch& b, int t) {
  uncertainty::PredictiveBatch out;
  out.source = b.source;
  out.probs = b.probs.topRows(t);
  return out;
}

Vec scores_from(const std::vector<uncertainty::PredictiveBatch>& preds,
                uncertainty::Measure m, int t = 0) {
  Vec out(static_cast<Eigen::Index>(preds.size()));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (t > 0 && t < preds[i].probs.rows())
      out[static_cast<Eigen::Index>(i)] = uncertainty::score(truncate_batch(preds[i], t), m);
    else
      out[static_cast<Eigen::Index>(i)] = uncertainty::score(preds[i], m);
  }
  return out;
}

double accuracy_from(const std::vector<uncertainty::PredictiveBatch>& preds,
                     const std::vector<int>& labels) {
  std::vector<int> predicted;
  predicted.reserve(preds.size());
  for (const auto& b : preds) {
    const Vec mean = uncertainty::predictive_mean(b);
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < mean.size(); ++c)
      if (mean[c] > mean[best]) best = c;
    predicted.push_back(static_cast<int>(best));
  }
  return metrics::accuracy(predicted, labels);
}

struct DetectionNumbers {
  double auroc = 0.0, aupr_pos = 0.0, aupr_neg = 0.0;
};

DetectionNumbers detect(const Vec& scores, const std::vector<int>& ood_labels) {
  metrics::ScoredSet set{scores, ood_labels};
  DetectionNumbers out;
  out.auroc = metrics::auroc(set);
  out.aupr_pos = metrics::aupr(set, metrics::PositiveClass::kOod);
  out.aupr_neg = metrics::aupr(set, metrics::PositiveClass::kInDist);
  return out;
}

Mat make_ood(const ExperimentConfig& cfg, const std::string& kind, double scale, int count,
             int input_dim, std::uint64_t stream_index) {
  datasets::OodSpec spec;
  spec.kind = ood_kind_from(kind);
  spec.scale_factor = scale;
  spec.count = count;
  spec.rng_seed = derive_seed(cfg.seed, kStreamOodBase + stream_index);
  return datasets::gen_ood(spec, input_dim);
}

}  // namespace

// ---------------------------------------------------------------------------
// toy2d
// ---------------------------------------------------------------------------

ExperimentResult run_toy2d(const ExperimentConfig& cfg) {
  Workspace ws = open_workspace(cfg, /*load_digits=*/false);
  Rng data_rng(derive_seed(cfg.seed, kStreamData));
  datasets::LabeledDataset toy = datasets::make_toy2d(data_rng);
  ws.train_inputs = toy.inputs;
  ws.train_labels = toy.labels;
  ws.cfg.sgld.step_size = resolve_step(cfg.sgld.step_size, toy.inputs.rows());
  ws.cfg.sgld.batch_size = std::min<int>(ws.cfg.sgld.batch_size, 20);

  MethodArtifacts art = train_methods(ws, ws.cfg.methods);

  // evaluation grids
  const int res = cfg.grid_resolution;
  Mat grid(res * res, 2);
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      grid(i * res + j, 0) = -cfg.grid_extent + 2.0 * cfg.grid_extent * j / (res - 1);
      grid(i * res + j, 1) = -cfg.grid_extent + 2.0 * cfg.grid_extent * i / (res - 1);
    }

  // far-field ring at 5x the data spread
  const Eigen::RowVectorXd centroid = toy.inputs.colwise().mean();
  double spread = 0.0;
  for (Eigen::Index i = 0; i < toy.inputs.rows(); ++i)
    spread += (toy.inputs.row(i) - centroid).squaredNorm();
  spread = std::sqrt(spread / static_cast<double>(toy.inputs.rows()));
  const double ring_radius = 5.0 * spread;
  const int ring_points = 64;
  Mat ring(ring_points, 2);
  for (int i = 0; i < ring_points; ++i) {
    const double angle = 2.0 * M_PI * i / ring_points;
    ring(i, 0) = centroid[0] + ring_radius * std::cos(angle);
    ring(i, 1) = centroid[1] + ring_radius * std::sin(angle);
  }

  json method_metrics;
  std::vector<std::vector<std::string>> summary_rows;
  for (const auto& method : ws.cfg.methods) {
    const int t_count = effective_t(method, cfg.inference_samples);
    auto grid_preds = method_predictions(ws.cfg, art, method, grid, t_count);
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
      const Vec mean = uncertainty::predictive_mean(grid_preds[static_cast<std::size_t>(i)]);
      rows.push_back({fmt(grid(i, 0)), fmt(grid(i, 1)), fmt(mean[1]),
                      fmt(uncertainty::entropy(mean))});
    }
    io::write_csv(ws.path("toy2d_grid_" + method + ".csv"), {"x", "y", "p_class1", "entropy"},
                  rows);
    ws.artifact_files.push_back(ws.path("toy2d_grid_" + method + ".csv"));

    auto ring_preds = method_predictions(ws.cfg, art, method, ring, t_count);
    auto near_preds = method_predictions(ws.cfg, art, method, toy.inputs, t_count);
    double far_entropy = 0.0, near_entropy = 0.0;
    for (const auto& b : ring_preds)
      far_entropy += uncertainty::entropy(uncertainty::predictive_mean(b));
    far_entropy /= static_cast<double>(ring_preds.size());
    for (const auto& b : near_preds)
      near_entropy += uncertainty::entropy(uncertainty::predictive_mean(b));
    near_entropy /= static_cast<double>(near_preds.size());
    double train_acc = accuracy_from(near_preds, toy.labels);

    method_metrics[method] = {{"far_field_mean_entropy", far_entropy},
                              {"near_data_mean_entropy", near_entropy},
                              {"train_accuracy", train_acc}};
    summary_rows.push_back(
        {method, fmt(far_entropy), fmt(near_entropy), fmt(train_acc)});
  }
  io::write_csv(ws.path("toy2d_summary.csv"),
                {"method", "far_field_mean_entropy", "near_data_mean_entropy", "train_accuracy"},
                summary_rows);
  ws.artifact_files.push_back(ws.path("toy2d_summary.csv"));

  json metrics_json{{"methods", method_metrics},
                    {"ring_radius", ring_radius},
                    {"data_spread", spread}};
  return finalize(ws, metrics_json);
}

// ---------------------------------------------------------------------------
// train-sgld / distill
// ---------------------------------------------------------------------------

ExperimentResult run_train_sgld(const ExperimentConfig& cfg) {
  Workspace ws = open_workspace(cfg);
  auto set = train_sgld_chain(ws.cfg.classifier, ws.train_inputs, ws.train_labels, ws.cfg.sgld,
                              ws.cfg.seed);
  io::save_sample_set(ws.path("sgld_samples"), set);
  ws.artifact_files.push_back(ws.path("sgld_samples.bin"));
  ws.artifact_files.push_back(ws.path("sgld_samples.json"));

  auto preds = uncertainty::predict_from_params(ws.cfg.classifier, set.samples, ws.test_inputs,
                                                std::min<int>(cfg.inference_samples,
                                                              static_cast<int>(set.samples.size())),
                                                uncertainty::SampleSource::kSgld);
  json metrics_json{{"retained_samples", set.samples.size()},
                    {"test_accuracy", accuracy_from(preds, ws.test_labels)}};
  return finalize(ws, metrics_json);
}

ExperimentResult run_distill(const ExperimentConfig& cfg) {
  Workspace ws = open_workspace(cfg, /*load_digits=*/cfg.online_mode || cfg.input_samples.empty());
  gan::GanConfig gcfg = cfg.gan;
  gcfg.rng_seed = derive_seed(cfg.seed, kStreamGan);
  gan::TrainResult trained;
  if (cfg.online_mode) {
    sampler::NnClassifierModel model(ws.cfg.classifier, ws.train_inputs, ws.train_labels);
    Rng init_rng(derive_seed(cfg.seed, kStreamInit));
    std::vector<Vec> inits;
    for (int k = 0; k < cfg.online.k_chains; ++k)
      inits.push_back(nn::init_params(ws.cfg.classifier, init_rng));
    trained = gan::train_online(model, inits, ws.cfg.sgld, gcfg, cfg.online);
  } else {
    if (cfg.input_samples.empty())
      throw ConfigError("distill needs input_samples (or online_mode)");
    auto set = io::load_sample_set(cfg.input_samples);
    trained = gan::train_offline(set, gcfg);
  }
  io::save_generator(ws.path("generator"), trained.state);
  io::write_loss_trace_csv(ws.path("gan_loss_trace.csv"), trained.trace);
  ws.artifact_files.push_back(ws.path("generator.bin"));
  ws.artifact_files.push_back(ws.path("generator.json"));
  ws.artifact_files.push_back(ws.path("gan_loss_trace.csv"));
  json metrics_json{{"steps", trained.state.steps},
                    {"trace_rows", trained.trace.size()}};
  return finalize(ws, metrics_json);
}

// ---------------------------------------------------------------------------
// anomaly
// ---------------------------------------------------------------------------

ExperimentResult run_anomaly(const ExperimentConfig& cfg) {
  Workspace ws = open_workspace(cfg);
  MethodArtifacts art = train_methods(ws, ws.cfg.methods);
  if (std::find(ws.cfg.methods.begin(), ws.cfg.methods.end(), "mog") != ws.cfg.methods.end()) {
    Rng mog_rng(derive_seed(cfg.seed, kStreamMogFit));
    art.mog_model = mog::em_fit(*art.sgld_set, cfg.mog_components.empty()
                                                   ? 10
                                                   : cfg.mog_components.back(),
                                cfg.em, mog_rng);
  }

  const int t_count = cfg.inference_samples;
  const int ood_count = static_cast<int>(ws.test_inputs.rows());
  json metrics_json;

  // accuracy table (MC-estimate predictions on the test split)
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& method : ws.cfg.methods) {
      auto preds = method_predictions(ws.cfg, art, method, ws.test_inputs,
                                      effective_t(method, t_count));
      const double acc = accuracy_from(preds, ws.test_labels);
      rows.push_back({method, fmt(acc)});
      metrics_json["accuracy"][method] = acc;
    }
    io::write_csv(ws.path("accuracy.csv"), {"method", "accuracy"}, rows);
    ws.artifact_files.push_back(ws.path("accuracy.csv"));
  }

  // detection tables: one CSV per measure; rows = OOD kinds
  std::map<std::string, std::map<std::string, std::vector<uncertainty::PredictiveBatch>>>
      preds_by_kind_method;
  std::vector<int> ood_labels(static_cast<std::size_t>(ws.test_inputs.rows()), 0);
  ood_labels.insert(ood_labels.end(), static_cast<std::size_t>(ood_count), 1);

  for (std::size_t ki = 0; ki < ws.cfg.ood_kinds.size(); ++ki) {
    const auto& kind = ws.cfg.ood_kinds[ki];
    const Mat ood = make_ood(ws.cfg, kind, ws.cfg.ood_scale, ood_count,
                             static_cast<int>(ws.test_inputs.cols()), ki);
    const Mat eval_inputs = vstack(ws.test_inputs, ood);
    for (const auto& method : ws.cfg.methods)
      preds_by_kind_method[kind][method] =
          method_predictions(ws.cfg, art, method, eval_inputs, effective_t(method, t_count));
  }

  for (const auto& measure_name : ws.cfg.measures) {
    const auto measure = measure_from(measure_name);
    std::vector<std::string> header = {"ood_kind"};
    for (const auto& method : ws.cfg.methods)
      for (const char* col : {"roc", "pr_pos", "pr_neg"})
        header.push_back(method + "_" + col);
    std::vector<std::vector<std::string>> rows;
    for (const auto& kind : ws.cfg.ood_kinds) {
      std::vector<std::string> row = {kind};
      for (const auto& method : ws.cfg.methods) {
        const bool not_applicable =
            (method == "sgd" || method == "sgd_dropout") && measure == uncertainty::Measure::kBald;
        if (not_applicable) {
          row.insert(row.end(), {"-", "-", "-"});
          metrics_json["detection"][measure_name][kind][method] = nullptr;
          continue;
        }
        const Vec scores = scores_from(preds_by_kind_method[kind][method], measure);
        const auto numbers = detect(scores, ood_labels);
        row.insert(row.end(),
                   {fmt(numbers.auroc), fmt(numbers.aupr_pos), fmt(numbers.aupr_neg)});
        metrics_json["detection"][measure_name][kind][method] = {
            {"auroc", numbers.auroc},
            {"aupr_pos", numbers.aupr_pos},
            {"aupr_neg", numbers.aupr_neg}};
      }
      rows.push_back(std::move(row));
    }
    io::write_csv(ws.path("anomaly_" + measure_name + ".csv"), header, rows);
    ws.artifact_files.push_back(ws.path("anomaly_" + measure_name + ".csv"));
  }

  // sample-size sweep (prefix subsets of the same draws; VR measure)
  if (!ws.cfg.t_sweep.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& kind : ws.cfg.ood_kinds) {
      for (const auto& method : ws.cfg.methods) {
        if (method == "sgd" || method == "sgd_dropout") continue;
        for (int t : ws.cfg.t_sweep) {
          if (t > t_count) continue;
          const Vec scores =
              scores_from(preds_by_kind_method[kind][method], uncertainty::Measure::kVr, t);
          const auto numbers = detect(scores, ood_labels);
          rows.push_back({kind, method, std::to_string(t), fmt(numbers.auroc)});
          metrics_json["t_sweep"][kind][method][std::to_string(t)] = numbers.auroc;
        }
      }
    }
    io::write_csv(ws.path("sample_size_sweep.csv"), {"ood_kind", "method", "t", "auroc_vr"},
                  rows);
    ws.artifact_files.push_back(ws.path("sample_size_sweep.csv"));
  }

  // OOD intensity scaling sweep (VR measure)
  if (!ws.cfg.scale_factors.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t ki = 0; ki < ws.cfg.ood_kinds.size(); ++ki) {
      const auto& kind = ws.cfg.ood_kinds[ki];
      const Mat base = make_ood(ws.cfg, kind, 1.0, ood_count,
                                static_cast<int>(ws.test_inputs.cols()), ki);
      const auto scaled = datasets::scale_sweep(base, ws.cfg.scale_factors);
      for (std::size_t fi = 0; fi < ws.cfg.scale_factors.size(); ++fi) {
        const Mat eval_inputs = vstack(ws.test_inputs, scaled[fi]);
        for (const auto& method : ws.cfg.methods) {
          auto preds = method_predictions(ws.cfg, art, method, eval_inputs,
                                          effective_t(method, t_count));
          const Vec scores = scores_from(preds, uncertainty::Measure::kVr);
          const auto numbers = detect(scores, ood_labels);
          rows.push_back(
              {kind, method, fmt(ws.cfg.scale_factors[fi]), fmt(numbers.auroc)});
          metrics_json["scale_sweep"][kind][method][fmt(ws.cfg.scale_factors[fi])] =
              numbers.auroc;
        }
      }
    }
    io::write_csv(ws.path("scale_sweep.csv"), {"ood_kind", "method", "factor", "auroc_vr"},
                  rows);
    ws.artifact_files.push_back(ws.path("scale_sweep.csv"));
  }

  // generator-size sweep (storage/performance tradeoff)
  if (!ws.cfg.gen_hidden_sweep.empty()) {
    std::vector<std::vector<std::string>> rows;
    const auto& kind = ws.cfg.ood_kinds.front();
    const Mat ood = make_ood(ws.cfg, kind, ws.cfg.ood_scale, ood_count,
                             static_cast<int>(ws.test_inputs.cols()), 0);
    const Mat eval_inputs = vstack(ws.test_inputs, ood);
    for (int hidden : ws.cfg.gen_hidden_sweep) {
      gan::GanConfig gcfg = gan::GanConfig::defaults_for(ws.cfg.classifier.param_count(), hidden);
      gcfg.step_size = ws.cfg.gan.step_size;
      gcfg.batch_size = ws.cfg.gan.batch_size;
      gcfg.total_steps = ws.cfg.gan.total_steps;
      gcfg.critic_steps_per_gen = ws.cfg.gan.critic_steps_per_gen;
      gcfg.rng_seed = derive_seed(cfg.seed, kStreamGan + 100 + static_cast<std::uint64_t>(hidden));
      auto trained = gan::train_offline(*art.sgld_set, gcfg);
      Rng eval_rng(derive_seed(cfg.seed, kStreamEval * 1000 + 77 + static_cast<std::uint64_t>(hidden)));
      auto gen_set = gan::sample(trained.state, t_count, eval_rng);
      auto preds = uncertainty::predict_from_params(ws.cfg.classifier, gen_set.samples,
                                                    eval_inputs, t_count,
                                                    uncertainty::SampleSource::kApd);
      const auto numbers = detect(scores_from(preds, uncertainty::Measure::kVr), ood_labels);
      rows.push_back({std::to_string(hidden),
                      std::to_string(trained.state.spec.param_count()), fmt(numbers.auroc)});
      metrics_json["gen_hidden_sweep"][std::to_string(hidden)] = numbers.auroc;
    }
    io::write_csv(ws.path("gan_size_sweep.csv"), {"hidden", "generator_params", "auroc_vr"},
                  rows);
    ws.artifact_files.push_back(ws.path("gan_size_sweep.csv"));
  }

  return finalize(ws, metrics_json);
}

// ---------------------------------------------------------------------------
// active learning
// ---------------------------------------------------------------------------

namespace {

struct ArmState {
  std::vector<long> labeled;  // indices into the train split
  std::vector<long> pool;
};

ArmState initial_pool(const Workspace& ws, int per_class, Rng& rng) {
  ArmState arm;
  std::vector<std::vector<long>> by_class(10);
  std::vector<long> order(static_cast<std::size_t>(ws.train_inputs.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> taken(order.size(), false);
  for (long i : order) {
    const int y = ws.train_labels[static_cast<std::size_t>(i)];
    if (static_cast<int>(by_class[static_cast<std::size_t>(y)].size()) < per_class) {
      by_class[static_cast<std::size_t>(y)].push_back(i);
      taken[static_cast<std::size_t>(i)] = true;
    }
  }
  for (const auto& members : by_class)
    arm.labeled.insert(arm.labeled.end(), members.begin(), members.end());
  std::sort(arm.labeled.begin(), arm.labeled.end());
  for (long i = 0; i < static_cast<long>(order.size()); ++i)
    if (!taken[static_cast<std::size_t>(i)]) arm.pool.push_back(i);
  return arm;
}

}  // namespace

ExperimentResult run_active_learning(const ExperimentConfig& cfg) {
  Workspace ws = open_workspace(cfg);
  const std::uint64_t al_master = derive_seed(cfg.seed, kStreamActive);

  std::vector<std::vector<std::string>> rows;
  json curves;
  for (std::size_t mi = 0; mi < ws.cfg.al_methods.size(); ++mi) {
    const std::string& method = ws.cfg.al_methods[mi];
    for (std::size_t ai = 0; ai < ws.cfg.al_acquisitions.size(); ++ai) {
      const std::string& acquisition = ws.cfg.al_acquisitions[ai];
      const std::uint64_t arm_seed = derive_seed(al_master, mi * 16 + ai);
      Rng arm_rng(derive_seed(arm_seed, 0));
      ArmState arm = initial_pool(ws, ws.cfg.al_init_per_class, arm_rng);
      Rng acquisition_rng(derive_seed(arm_seed, 999));

      for (int round = 0; round <= ws.cfg.al_rounds; ++round) {
        const Mat labeled_inputs = ws.data.rows([&] {
          std::vector<long> global;
          for (long i : arm.labeled) global.push_back(ws.data.train[static_cast<std::size_t>(i)]);
          return global;
        }());
        std::vector<int> labeled_labels;
        for (long i : arm.labeled)
          labeled_labels.push_back(ws.train_labels[static_cast<std::size_t>(i)]);

        // per-round training from scratch
        const std::uint64_t round_seed = derive_seed(arm_seed, 1000 + static_cast<std::uint64_t>(round));
        MethodArtifacts art;
        sampler::SamplerConfig round_cfg = ws.cfg.al_sgld;
        round_cfg.step_size = resolve_step(cfg.al_sgld.step_size,
                                           static_cast<long>(arm.labeled.size()));
        sampler::SamplerConfig round_point_cfg = round_cfg;
        round_point_cfg.prior_precision = ws.cfg.sgd_prior_precision;
        if (method == "sgd") {
          art.sgd_point = train_point(ws.cfg.classifier, labeled_inputs, labeled_labels,
                                      round_point_cfg, ws.cfg.al_sgd_iters, false, round_seed);
        } else if (method == "sgd_dropout" || method == "mc_dropout") {
          art.dropout_point = train_point(ws.cfg.classifier, labeled_inputs, labeled_labels,
                                          round_point_cfg, ws.cfg.al_sgd_iters, true, round_seed);
        } else if (method == "sgld") {
          art.sgld_set = train_sgld_chain(ws.cfg.classifier, labeled_inputs, labeled_labels,
                                          round_cfg, round_seed);
        } else if (method == "apd") {
          art.sgld_set = train_sgld_chain(ws.cfg.classifier, labeled_inputs, labeled_labels,
                                          round_cfg, round_seed);
          gan::GanConfig gcfg = ws.cfg.gan;
          gcfg.rng_seed = derive_seed(round_seed, kStreamGan);
          art.generator = gan::train_offline(*art.sgld_set, gcfg).state;
        } else {
          throw ConfigError("active learning does not support method '" + method + "'");
        }

        ExperimentConfig round_view = ws.cfg;
        round_view.seed = round_seed;
        const int t_count = effective_t(method, std::min<int>(ws.cfg.inference_samples,
                                                              static_cast<int>(round_cfg.total_samples)));
        auto test_preds = method_predictions(round_view, art, method, ws.test_inputs, t_count);
        const double acc = accuracy_from(test_preds, ws.test_labels);
        rows.push_back({method, acquisition, std::to_string(round),
                        std::to_string(arm.labeled.size()), fmt(acc)});
        curves[method][acquisition].push_back(
            {{"round", round}, {"labeled", arm.labeled.size()}, {"accuracy", acc}});

        if (round == ws.cfg.al_rounds || arm.pool.empty()) break;

        // acquisition: score the pool, take the top al_acquire
        const Mat pool_inputs = ws.data.rows([&] {
          std::vector<long> global;
          for (long i : arm.pool) global.push_back(ws.data.train[static_cast<std::size_t>(i)]);
          return global;
        }());
        Vec pool_scores(static_cast<Eigen::Index>(arm.pool.size()));
        if (acquisition == "random") {
          std::uniform_real_distribution<double> unit(0.0, 1.0);
          for (Eigen::Index i = 0; i < pool_scores.size(); ++i)
            pool_scores[i] = unit(acquisition_rng);
        } else if (acquisition == "entropy") {
          auto pool_preds = method_predictions(round_view, art, method, pool_inputs, t_count);
          for (Eigen::Index i = 0; i < pool_scores.size(); ++i)
            pool_scores[i] = uncertainty::entropy(
                uncertainty::predictive_mean(pool_preds[static_cast<std::size_t>(i)]));
        } else {
          throw ConfigError("unknown acquisition '" + acquisition + "'");
        }
        std::vector<std::size_t> order(arm.pool.size());
        std::iota(order.begin(), order.end(), 0);
        // ties break toward the lowest pool index
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          return pool_scores[static_cast<Eigen::Index>(a)] >
                 pool_scores[static_cast<Eigen::Index>(b)];
        });
        const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(ws.cfg.al_acquire),
                                                       arm.pool.size());
        std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<long>(take));
        std::sort(chosen.begin(), chosen.end());
        for (auto it = chosen.rbegin(); it != chosen.rend(); ++it) {
          arm.labeled.push_back(arm.pool[*it]);
          arm.pool.erase(arm.pool.begin() + static_cast<long>(*it));
        }
        std::sort(arm.labeled.begin(), arm.labeled.end());
      }
    }
  }
  io::write_csv(ws.path("active_learning.csv"),
                {"method", "acquisition", "round", "labeled_size", "accuracy"}, rows);
  ws.artifact_files.push_back(ws.path("active_learning.csv"));
  return finalize(ws, json{{"curves", curves}});
}

// ---------------------------------------------------------------------------
// adversarial detection
// ---------------------------------------------------------------------------

ExperimentResult run_adversarial_detection(const ExperimentConfig& cfg) {
  Workspace ws = open_workspace(cfg);
  ws.cfg.methods = ws.cfg.attack_methods;
  MethodArtifacts art = train_methods(ws, ws.cfg.attack_methods);

  const int t_count = cfg.inference_samples;
  const auto measure = measure_from(cfg.attack_measure);
  Rng source_rng(derive_seed(cfg.seed, kStreamAttack));

  json matrix;
  std::vector<std::vector<std::string>> rows;
  for (const auto& source : ws.cfg.attack_methods) {
    // the gray-box source: one posterior sample from the source method
    Vec source_sample;
    if (source == "sgld") {
      source_sample = art.sgld_set->samples.back();
    } else if (source == "apd") {
      source_sample = gan::generate_one(*art.generator, source_rng);
    } else if (source == "mc_dropout") {
      nn::NetSpec spec = ws.cfg.classifier;
      spec.dropout_rate = cfg.dropout_rate;
      const auto mask = nn::draw_dropout_mask(spec, source_rng);
      source_sample = fold_dropout_mask(spec, *art.dropout_point, mask);
    } else {
      throw ConfigError("attack source '" + source + "' not supported");
    }

    for (const auto& attack_kind : ws.cfg.attack_kinds) {
      attacks::AttackConfig acfg = ws.cfg.attack;
      acfg.kind = attack_kind == "pgd" ? attacks::AttackKind::kPgd : attacks::AttackKind::kFgsm;
      auto attack_set = attacks::craft_attack_set(ws.cfg.classifier, source_sample,
                                                  ws.val_inputs, ws.val_labels, acfg,
                                                  ws.cfg.attack_count);
      const std::string base = ws.path("attacks_" + source + "_" + attack_kind);
      io::save_attack_set(base, attack_set);
      ws.artifact_files.push_back(base + ".bin");
      ws.artifact_files.push_back(base + "_manifest.csv");

      Mat adv(static_cast<Eigen::Index>(attack_set.records.size()), ws.val_inputs.cols());
      for (std::size_t i = 0; i < attack_set.records.size(); ++i)
        adv.row(static_cast<Eigen::Index>(i)) = attack_set.records[i].adversarial.transpose();
      const Mat eval_inputs = vstack(ws.test_inputs, adv);
      std::vector<int> adv_labels(static_cast<std::size_t>(ws.test_inputs.rows()), 0);
      adv_labels.insert(adv_labels.end(), attack_set.records.size(), 1);

      for (const auto& defender : ws.cfg.attack_methods) {
        if (!ws.cfg.transfer && defender != source) continue;
        auto preds = method_predictions(ws.cfg, art, defender, eval_inputs,
                                        effective_t(defender, t_count));
        const Vec scores = scores_from(preds, measure);
        const double auroc = metrics::auroc({scores, adv_labels});
        rows.push_back({source, attack_kind, defender, fmt(auroc)});
        matrix[source][attack_kind][defender] = auroc;
      }
    }
  }
  io::write_csv(ws.path("detection_matrix.csv"), {"source", "attack", "defender", "auroc"},
                rows);
  ws.artifact_files.push_back(ws.path("detection_matrix.csv"));
  return finalize(ws, json{{"matrix", matrix}, {"measure", cfg.attack_measure}});
}

// ---------------------------------------------------------------------------
// gan comparison
// ---------------------------------------------------------------------------

ExperimentResult run_gan_comparison(const ExperimentConfig& cfg) {
  Workspace ws = open_workspace(cfg);
  MethodArtifacts art = train_methods(ws, {"sgld"});

  const int ood_count = static_cast<int>(ws.test_inputs.rows());
  const Mat ood = make_ood(ws.cfg, cfg.compare_ood_kind, cfg.compare_ood_scale, ood_count,
                           static_cast<int>(ws.test_inputs.cols()), 0);
  const Mat eval_inputs = vstack(ws.test_inputs, ood);
  std::vector<int> ood_labels(static_cast<std::size_t>(ws.test_inputs.rows()), 0);
  ood_labels.insert(ood_labels.end(), static_cast<std::size_t>(ood_count), 1);
  const auto measure = measure_from(cfg.compare_measure);

  json traces;
  std::vector<std::vector<std::string>> rows;
  for (const auto& variant_name : ws.cfg.compare_variants) {
    gan::GanConfig gcfg = ws.cfg.gan;
    gcfg.loss_variant = variant_from(variant_name);
    if (gcfg.loss_variant == gan::LossVariant::kWganClip) gcfg.step_size = cfg.clip_step_size;
    gcfg.rng_seed = derive_seed(cfg.seed, kStreamGan);
    gcfg.total_steps = cfg.compare_steps;

    gan::GanTrainer trainer(gcfg, ws.cfg.classifier.param_count(), ws.cfg.classifier);
    gan::VectorSource source(art.sgld_set->samples);
    bool diverged = false;
    for (long step = 0; step < cfg.compare_steps && !diverged;) {
      const long target = std::min(cfg.compare_steps, step + cfg.checkpoint_every);
      try {
        while (step < target) {
          trainer.cycle(source);
          ++step;
        }
      } catch (const DivergedError&) {
        diverged = true;
      }
      if (!diverged) {
        Rng eval_rng(derive_seed(cfg.seed, kStreamEval * 1000 + 500 + static_cast<std::uint64_t>(step)));
        auto gen_set = gan::sample(trainer.state(), cfg.compare_t, eval_rng);
        auto preds = uncertainty::predict_from_params(ws.cfg.classifier, gen_set.samples,
                                                      eval_inputs, cfg.compare_t,
                                                      uncertainty::SampleSource::kApd);
        const double auroc = metrics::auroc({scores_from(preds, measure), ood_labels});
        rows.push_back({variant_name, std::to_string(step), fmt(auroc)});
        traces[variant_name]["auroc"].push_back(auroc);
        traces[variant_name]["step"].push_back(step);
      }
    }
    traces[variant_name]["diverged"] = diverged;
  }
  io::write_csv(ws.path("gan_compare.csv"), {"variant", "step", "auroc"}, rows);
  ws.artifact_files.push_back(ws.path("gan_compare.csv"));
  return finalize(ws, json{{"traces", traces}, {"measure", cfg.compare_measure}});
}

// ---------------------------------------------------------------------------
// mog sweep
// ---------------------------------------------------------------------------

ExperimentResult run_mog_sweep(const ExperimentConfig& cfg) {
  Workspace ws = open_workspace(cfg);
  MethodArtifacts art = train_methods(ws, {"sgld"});

  const int t_count = cfg.inference_samples;
  const int ood_count = static_cast<int>(ws.test_inputs.rows());
  const Mat ood = make_ood(ws.cfg, cfg.mog_ood_kind, cfg.mog_ood_scale, ood_count,
                           static_cast<int>(ws.test_inputs.cols()), 0);
  const Mat eval_inputs = vstack(ws.test_inputs, ood);
  std::vector<int> ood_labels(static_cast<std::size_t>(ws.test_inputs.rows()), 0);
  ood_labels.insert(ood_labels.end(), static_cast<std::size_t>(ood_count), 1);
  const auto measure = measure_from(cfg.mog_measure);

  // SGLD reference line
  auto sgld_preds = uncertainty::predict_from_params(ws.cfg.classifier, art.sgld_set->samples,
                                                     eval_inputs, t_count,
                                                     uncertainty::SampleSource::kSgld);
  const double sgld_auroc = metrics::auroc({scores_from(sgld_preds, measure), ood_labels});

  json sweep;
  sweep["sgld_auroc"] = sgld_auroc;
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"sgld", "-", fmt(sgld_auroc), "-"});
  for (int n_c : ws.cfg.mog_components) {
    Rng fit_rng(derive_seed(cfg.seed, kStreamMogFit + static_cast<std::uint64_t>(n_c)));
    mog::EmReport report;
    auto model = mog::em_fit(*art.sgld_set, n_c, cfg.em, fit_rng, &report);
    const std::string base = ws.path("mog_" + std::to_string(n_c));
    io::save_mog(base, model);
    ws.artifact_files.push_back(base + ".bin");

    Rng eval_rng(derive_seed(cfg.seed, kStreamEval * 1000 + 5 * 1000 + static_cast<std::uint64_t>(n_c)));
    auto mog_set = mog::mog_sample(model, t_count, eval_rng);
    auto preds = uncertainty::predict_from_params(ws.cfg.classifier, mog_set.samples,
                                                  eval_inputs, t_count,
                                                  uncertainty::SampleSource::kApd);
    const double auroc = metrics::auroc({scores_from(preds, measure), ood_labels});
    rows.push_back({std::to_string(n_c), std::to_string(mog::parameter_count(model)),
                    fmt(auroc), std::to_string(report.iterations)});
    sweep["components"][std::to_string(n_c)] = {
        {"auroc", auroc},
        {"parameter_count", mog::parameter_count(model)},
        {"em_iterations", report.iterations},
        {"collapse_reinits", report.collapse_reinits}};
  }
  io::write_csv(ws.path("mog_sweep.csv"), {"n_c", "parameter_count", "auroc", "em_iterations"},
                rows);
  ws.artifact_files.push_back(ws.path("mog_sweep.csv"));
  return finalize(ws, sweep);
}

ExperimentResult run(const ExperimentConfig& cfg) {
  if (cfg.kind == "toy2d") return run_toy2d(cfg);
  if (cfg.kind == "train-sgld") return run_train_sgld(cfg);
  if (cfg.kind == "distill") return run_distill(cfg);
  if (cfg.kind == "anomaly") return run_anomaly(cfg);
  if (cfg.kind == "active-learn") return run_active_learning(cfg);
  if (cfg.kind == "attack-detect") return run_adversarial_detection(cfg);
  if (cfg.kind == "gan-compare") return run_gan_comparison(cfg);
  if (cfg.kind == "mog-sweep") return run_mog_sweep(cfg);
  throw ConfigError("unknown experiment kind '" + cfg.kind + "'");
}

}  // namespace apd::experiments
