#include "apd/mog.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace apd::mog {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kCollapseMass = 1e-8;

Mat stack(const sampler::SampleSet& samples) {
  if (samples.samples.empty()) throw ConfigError("empty sample set");
  const Eigen::Index n = static_cast<Eigen::Index>(samples.samples.size());
  const Eigen::Index d = samples.samples.front().size();
  Mat x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (samples.samples[static_cast<std::size_t>(i)].size() != d)
      throw ConfigError("ragged sample set");
    x.row(i) = samples.samples[static_cast<std::size_t>(i)].transpose();
  }
  return x;
}

// log N(x_i; mu_k, diag sigma2_k) for all (i, k), via
// (x - mu)^2/s2 = x^2 . (1/s2) - 2 x . (mu/s2) + sum mu^2/s2.
Mat log_densities(const MoGModel& m, const Mat& x, const Mat& x2) {
  const Eigen::Index d = x.cols();
  const Mat inv_var = m.variances.cwiseInverse();
  const Vec log_det = m.variances.array().log().rowwise().sum();
  const Vec mu_term = m.means.cwiseProduct(m.means).cwiseProduct(inv_var).rowwise().sum();
  Mat quad = x2 * inv_var.transpose();
  quad.noalias() -= 2.0 * (x * m.means.cwiseProduct(inv_var).transpose());
  quad.rowwise() += mu_term.transpose();
  Mat out = -0.5 * quad;
  out.rowwise() -= (0.5 * (log_det.array() + static_cast<double>(d) * kLog2Pi)).matrix().transpose();
  return out;
}

// returns per-row logsumexp of (log_dens + log pi); fills resp in place
double e_step(const MoGModel& m, const Mat& log_dens, Mat& resp) {
  const Vec log_pi = m.weights.array().log();
  resp = log_dens;
  resp.rowwise() += log_pi.transpose();
  double total = 0.0;
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    const double mx = resp.row(i).maxCoeff();
    const double lse = mx + std::log((resp.row(i).array() - mx).exp().sum());
    total += lse;
    resp.row(i) = (resp.row(i).array() - lse).exp();
  }
  return total;
}

}  // namespace

long parameter_count(int n_components, Eigen::Index dim) {
  return static_cast<long>(n_components) * (2 * static_cast<long>(dim) + 1);
}

MoGModel em_fit(const sampler::SampleSet& samples, int n_components, const EmOptions& opts,
                Rng& rng, EmReport* report) {
  if (n_components < 1) throw ConfigError("need at least one component");
  const Mat x = stack(samples);
  const Eigen::Index n = x.rows(), d = x.cols();
  if (n < n_components) throw ConfigError("need at least one sample per component");
  const Mat x2 = x.cwiseProduct(x);

  // init: means from n_components distinct random samples, global variances,
  // uniform weights
  MoGModel m;
  m.weights = Vec::Constant(n_components, 1.0 / n_components);
  m.means = Mat(n_components, d);
  {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int k = 0; k < n_components; ++k) {
      std::uniform_int_distribution<Eigen::Index> pick(k, n - 1);
      std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(pick(rng))]);
      m.means.row(k) = x.row(idx[static_cast<std::size_t>(k)]);
    }
  }
  const Eigen::RowVectorXd global_mean = x.colwise().mean();
  Eigen::RowVectorXd global_var =
      (x2.colwise().mean() - global_mean.cwiseProduct(global_mean))
          .cwiseMax(opts.variance_floor);
  m.variances = global_var.replicate(n_components, 1);

  EmReport local_report;
  EmReport& rep = report ? *report : local_report;
  Mat resp;
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    const Mat log_dens = log_densities(m, x, x2);
    const double ll = e_step(m, log_dens, resp);
    rep.ll_trace.push_back(ll);
    rep.iterations = iter + 1;

    Vec mass = resp.colwise().sum().transpose();
    bool collapsed = false;
    for (int k = 0; k < n_components; ++k) {
      if (mass[k] < kCollapseMass) {
        std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
        m.means.row(k) = x.row(pick(rng));
        m.variances.row(k) = global_var;
        m.weights[k] = 1.0 / static_cast<double>(n);
        ++rep.collapse_reinits;
        collapsed = true;
      }
    }
    if (collapsed) {
      m.weights /= m.weights.sum();
      prev_ll = -std::numeric_limits<double>::infinity();
      continue;  // responsibilities are stale for reinitialized components
    }

    // M-step: weighted moments
    for (int k = 0; k < n_components; ++k) {
      const double nk = mass[k];
      m.means.row(k) = (resp.col(k).transpose() * x) / nk;
      m.variances.row(k) =
          ((resp.col(k).transpose() * x2) / nk - m.means.row(k).cwiseProduct(m.means.row(k)))
              .cwiseMax(opts.variance_floor);
      m.weights[k] = nk / static_cast<double>(n);
    }
    m.weights /= m.weights.sum();

    if (std::isfinite(prev_ll) && ll - prev_ll < opts.tol * std::abs(prev_ll)) break;
    prev_ll = ll;
  }
  return m;
}

double log_likelihood(const MoGModel& model, const sampler::SampleSet& samples) {
  const Mat x = stack(samples);
  const Mat x2 = x.cwiseProduct(x);
  Mat work = log_densities(model, x, x2);
  work.rowwise() += model.weights.array().log().matrix().transpose();
  double total = 0.0;
  for (Eigen::Index i = 0; i < work.rows(); ++i) {
    const double mx = work.row(i).maxCoeff();
    total += mx + std::log((work.row(i).array() - mx).exp().sum());
  }
  return total;
}

sampler::SampleSet mog_sample(const MoGModel& model, int count, Rng& rng) {
  if (count < 1) throw ConfigError("sample count must be >= 1");
  sampler::SampleSet out;
  out.chain_id = -2;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Mat sd = model.variances.cwiseSqrt();
  for (int i = 0; i < count; ++i) {
    const double u = unit(rng);
    int k = 0;
    double acc = 0.0;
    for (; k < model.components() - 1; ++k) {
      acc += model.weights[k];
      if (u < acc) break;
    }
    const Vec z = normal_vector(rng, model.dim());
    out.samples.push_back(model.means.row(k).transpose() +
                          sd.row(k).transpose().cwiseProduct(z));
  }
  return out;
}

}  // namespace apd::mog
