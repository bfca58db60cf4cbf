#include "apd/uncertainty.hpp"

#include <algorithm>
#include <cmath>

namespace apd::uncertainty {

void PredictiveBatch::validate() const {
  if (probs.rows() < 1) throw ConfigError("PredictiveBatch needs at least one row");
  for (Eigen::Index t = 0; t < probs.rows(); ++t) {
    if (probs.row(t).minCoeff() < 0.0)
      throw ConfigError("PredictiveBatch rows must be non-negative");
    if (std::abs(probs.row(t).sum() - 1.0) > 1e-9)
      throw ConfigError("PredictiveBatch rows must sum to 1");
  }
}

const char* measure_name(Measure m) {
  switch (m) {
    case Measure::kEntropy: return "entropy";
    case Measure::kBald: return "bald";
    case Measure::kVr: return "vr";
    case Measure::kModelVariance: return "model_variance";
  }
  return "?";
}

Vec predictive_mean(const PredictiveBatch& batch) {
  if (batch.probs.rows() < 1) throw ConfigError("empty predictive batch");
  return batch.probs.colwise().mean().transpose();
}

double entropy(const Vec& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  return h;
}

double bald(const PredictiveBatch& batch) {
  if (batch.probs.rows() < 1) throw ConfigError("empty predictive batch");
  const double h_mean = entropy(predictive_mean(batch));
  double mean_h = 0.0;
  for (Eigen::Index t = 0; t < batch.probs.rows(); ++t)
    mean_h += entropy(batch.probs.row(t).transpose());
  mean_h /= static_cast<double>(batch.probs.rows());
  return std::max(0.0, h_mean - mean_h);
}

namespace {

Eigen::Index argmax_lowest(const Eigen::RowVectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

double variation_ratio(const PredictiveBatch& batch) {
  const Eigen::Index t_count = batch.probs.rows();
  if (t_count < 1) throw ConfigError("empty predictive batch");
  std::vector<long> votes(batch.probs.cols(), 0);
  for (Eigen::Index t = 0; t < t_count; ++t) ++votes[argmax_lowest(batch.probs.row(t))];
  const auto modal = std::max_element(votes.begin(), votes.end()) - votes.begin();
  return 1.0 - static_cast<double>(votes[modal]) / static_cast<double>(t_count);
}

double model_variance(const PredictiveBatch& batch) {
  const Eigen::Index t_count = batch.probs.rows();
  if (t_count < 1) throw ConfigError("empty predictive batch");
  if (t_count == 1) return 0.0;
  double mean_sq = 0.0;
  for (Eigen::Index t = 0; t < t_count; ++t) mean_sq += batch.probs.row(t).squaredNorm();
  mean_sq /= static_cast<double>(t_count);
  const Vec mean = predictive_mean(batch);
  return std::max(0.0, mean_sq - mean.squaredNorm());
}

double score(const PredictiveBatch& batch, Measure m) {
  switch (m) {
    case Measure::kEntropy: return entropy(predictive_mean(batch));
    case Measure::kBald: return bald(batch);
    case Measure::kVr: return variation_ratio(batch);
    case Measure::kModelVariance: return model_variance(batch);
  }
  throw ConfigError("unknown measure");
}

std::vector<PredictiveBatch> predict_from_params(const nn::NetSpec& spec,
                                                 const std::vector<Vec>& params,
                                                 const Mat& inputs, int T, SampleSource tag) {
  if (T < 1) throw ConfigError("T must be >= 1");
  if (static_cast<std::size_t>(T) > params.size())
    throw ConfigError("T = " + std::to_string(T) + " exceeds available samples (" +
                      std::to_string(params.size()) + ")");
  std::vector<PredictiveBatch> out(inputs.rows());
  for (auto& b : out) {
    b.probs = Mat(T, spec.output_dim());
    b.source = tag;
  }
  for (int t = 0; t < T; ++t) {
    const Mat probs = nn::softmax_rows(nn::forward(spec, params[t], inputs));
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) out[i].probs.row(t) = probs.row(i);
  }
  return out;
}

std::vector<PredictiveBatch> predict_mc_dropout(const nn::NetSpec& spec, const Vec& params,
                                                const Mat& inputs, int T, Rng& rng) {
  if (T < 1) throw ConfigError("T must be >= 1");
  std::vector<PredictiveBatch> out(inputs.rows());
  for (auto& b : out) {
    b.probs = Mat(T, spec.output_dim());
    b.source = SampleSource::kMcDropout;
  }
  for (int t = 0; t < T; ++t) {
    const nn::DropoutMask mask = nn::draw_dropout_mask(spec, rng);
    const Mat probs = nn::softmax_rows(nn::forward(spec, params, inputs, &mask));
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) out[i].probs.row(t) = probs.row(i);
  }
  return out;
}

std::vector<PredictiveBatch> predict_point(const nn::NetSpec& spec, const Vec& params,
                                           const Mat& inputs) {
  std::vector<PredictiveBatch> out(inputs.rows());
  const Mat probs = nn::softmax_rows(nn::forward(spec, params, inputs));
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    out[i].probs = probs.row(i);
    out[i].source = SampleSource::kPoint;
  }
  return out;
}

}  // namespace apd::uncertainty
