#include "apd/net.hpp"

#include <cmath>
#include <sstream>

namespace apd::nn {

namespace {

using WView = Eigen::Map<const RowMat>;
using BView = Eigen::Map<const Vec>;

struct LayerDims {
  int in = 0;
  int out = 0;
  Eigen::Index w_off = 0;
  Eigen::Index b_off = 0;
};

std::vector<LayerDims> layer_dims(const NetSpec& spec) {
  std::vector<LayerDims> dims(spec.num_layers());
  Eigen::Index off = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    dims[l].in = spec.layer_sizes[l];
    dims[l].out = spec.layer_sizes[l + 1];
    dims[l].w_off = off;
    off += static_cast<Eigen::Index>(dims[l].in) * dims[l].out;
    dims[l].b_off = off;
    off += dims[l].out;
  }
  return dims;
}

void check_params(const NetSpec& spec, const Vec& params) {
  if (params.size() != spec.param_count()) {
    std::ostringstream os;
    os << "parameter vector length " << params.size() << " does not match spec count "
       << spec.param_count();
    throw ConfigError(os.str());
  }
}

void check_inputs(const NetSpec& spec, const Mat& inputs) {
  if (inputs.cols() != spec.input_dim()) {
    std::ostringstream os;
    os << "input width " << inputs.cols() << " does not match spec input dim "
       << spec.input_dim();
    throw ConfigError(os.str());
  }
  if (inputs.rows() < 1) throw ConfigError("batch must contain at least one row");
}

void check_mask(const NetSpec& spec, const DropoutMask* mask) {
  if (!mask) return;
  const auto hidden = static_cast<std::size_t>(spec.num_layers() - 1);
  if (mask->keep.size() != hidden)
    throw ConfigError("dropout mask layer count does not match hidden layer count");
  for (std::size_t l = 0; l < hidden; ++l)
    if (mask->keep[l].size() != spec.layer_sizes[l + 1])
      throw ConfigError("dropout mask width does not match hidden width");
}

// Activation and its first two derivatives, elementwise over pre-activations.
// LeakyReLU/ReLU are treated as exactly piecewise-linear: zero second
// derivative, ties at 0 resolved to the positive branch.
Mat act(const NetSpec& s, const Mat& a) {
  switch (s.activation) {
    case Activation::kRelu:
      return a.cwiseMax(0.0);
    case Activation::kLeakyRelu:
      return (a.array() >= 0.0).select(a, s.leaky_slope * a);
    case Activation::kTanh:
      return a.array().tanh();
    case Activation::kIdentity:
      return a;
  }
  throw ConfigError("unknown activation");
}

Mat act_d1(const NetSpec& s, const Mat& a) {
  switch (s.activation) {
    case Activation::kRelu:
      return (a.array() >= 0.0).cast<double>();
    case Activation::kLeakyRelu:
      return (a.array() >= 0.0).select(Mat::Constant(a.rows(), a.cols(), 1.0),
                                       Mat::Constant(a.rows(), a.cols(), s.leaky_slope));
    case Activation::kTanh: {
      Mat t = a.array().tanh();
      return (1.0 - t.array().square()).matrix();
    }
    case Activation::kIdentity:
      return Mat::Ones(a.rows(), a.cols());
  }
  throw ConfigError("unknown activation");
}

Mat act_d2(const NetSpec& s, const Mat& a) {
  if (s.activation == Activation::kTanh) {
    Mat t = a.array().tanh();
    return (-2.0 * t.array() * (1.0 - t.array().square())).matrix();
  }
  return Mat::Zero(a.rows(), a.cols());
}

void apply_mask_cols(Mat& h, const DropoutMask& mask, std::size_t layer) {
  const double inv = 1.0 / (1.0 - mask.rate);
  h.array().rowwise() *= (mask.keep[layer].array() * inv).transpose();
}

}  // namespace

Eigen::Index NetSpec::param_count() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += static_cast<Eigen::Index>(layer_sizes[l]) * layer_sizes[l + 1] + layer_sizes[l + 1];
  return n;
}

void NetSpec::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("NetSpec needs at least two layer sizes");
  for (int w : layer_sizes)
    if (w <= 0) throw ConfigError("NetSpec layer sizes must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("dropout_rate must lie in [0, 1)");
  if (activation == Activation::kLeakyRelu && !(leaky_slope > 0.0 && leaky_slope < 1.0))
    throw ConfigError("leaky_slope must lie in (0, 1)");
}

DropoutMask draw_dropout_mask(const NetSpec& spec, Rng& rng) {
  DropoutMask mask;
  mask.rate = spec.dropout_rate;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int l = 1; l + 1 < static_cast<int>(spec.layer_sizes.size()); ++l) {
    Vec keep(spec.layer_sizes[l]);
    for (Eigen::Index i = 0; i < keep.size(); ++i)
      keep[i] = unit(rng) < (1.0 - spec.dropout_rate) ? 1.0 : 0.0;
    mask.keep.push_back(std::move(keep));
  }
  return mask;
}

Vec init_params(const NetSpec& spec, Rng& rng) {
  spec.validate();
  Vec params = Vec::Zero(spec.param_count());
  const auto dims = layer_dims(spec);
  for (const auto& d : dims) {
    const double bound = std::sqrt(6.0 / (d.in + d.out));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(d.in) * d.out; ++i)
      params[d.w_off + i] = u(rng);
    // biases stay zero
  }
  return params;
}

Mat forward(const NetSpec& spec, const Vec& params, const Mat& inputs,
            const DropoutMask* mask) {
  check_params(spec, params);
  check_inputs(spec, inputs);
  check_mask(spec, mask);
  const auto dims = layer_dims(spec);
  Mat h = inputs;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const auto& d = dims[l];
    WView w(params.data() + d.w_off, d.out, d.in);
    BView b(params.data() + d.b_off, d.out);
    Mat a = h * w.transpose();
    a.rowwise() += b.transpose();
    if (l + 1 == spec.num_layers()) return a;
    h = act(spec, a);
    if (mask) apply_mask_cols(h, *mask, static_cast<std::size_t>(l));
  }
  throw ConfigError("NetSpec has no layers");
}

ForwardTrace forward_trace(const NetSpec& spec, const Vec& params, const Mat& inputs,
                           const DropoutMask* mask) {
  check_params(spec, params);
  check_inputs(spec, inputs);
  check_mask(spec, mask);
  const auto dims = layer_dims(spec);
  ForwardTrace trace;
  trace.post.push_back(inputs);
  for (int l = 0; l < spec.num_layers(); ++l) {
    const auto& d = dims[l];
    WView w(params.data() + d.w_off, d.out, d.in);
    BView b(params.data() + d.b_off, d.out);
    Mat a = trace.post.back() * w.transpose();
    a.rowwise() += b.transpose();
    trace.pre.push_back(a);
    if (l + 1 < spec.num_layers()) {
      Mat h = act(spec, a);
      if (mask) apply_mask_cols(h, *mask, static_cast<std::size_t>(l));
      trace.post.push_back(std::move(h));
    }
  }
  return trace;
}

BackwardResult backward(const NetSpec& spec, const Vec& params, const ForwardTrace& trace,
                        const Mat& logit_cotangent, bool want_input_grad,
                        const DropoutMask* mask) {
  check_params(spec, params);
  const auto dims = layer_dims(spec);
  BackwardResult res;
  res.param_grad = Vec::Zero(params.size());
  Mat da = logit_cotangent;
  for (int l = spec.num_layers() - 1; l >= 0; --l) {
    const auto& d = dims[l];
    WView w(params.data() + d.w_off, d.out, d.in);
    Eigen::Map<RowMat> gw(res.param_grad.data() + d.w_off, d.out, d.in);
    Eigen::Map<Vec> gb(res.param_grad.data() + d.b_off, d.out);
    gw = da.transpose() * trace.post[l];
    gb = da.colwise().sum();
    if (l > 0) {
      Mat dh = da * w;
      if (mask) apply_mask_cols(dh, *mask, static_cast<std::size_t>(l - 1));
      da = dh.cwiseProduct(act_d1(spec, trace.pre[l - 1]));
    } else if (want_input_grad) {
      res.input_grad = da * w;
    }
  }
  return res;
}

Vec log_softmax(const Vec& logits) {
  if (!logits.allFinite()) throw ConfigError("log_softmax requires finite inputs");
  const double m = logits.maxCoeff();
  const Vec shifted = logits.array() - m;
  const double lse = std::log(shifted.array().exp().sum());
  return shifted.array() - lse;
}

Mat log_softmax_rows(const Mat& logits) {
  if (!logits.allFinite()) throw ConfigError("log_softmax requires finite inputs");
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    Eigen::RowVectorXd shifted = logits.row(i).array() - m;
    const double lse = std::log(shifted.array().exp().sum());
    out.row(i) = shifted.array() - lse;
  }
  return out;
}

Mat softmax_rows(const Mat& logits) { return log_softmax_rows(logits).array().exp(); }

namespace {

void check_labels(const NetSpec& spec, const Batch& batch) {
  if (static_cast<Eigen::Index>(batch.labels.size()) != batch.inputs.rows())
    throw ConfigError("label count does not match batch rows");
  for (int y : batch.labels)
    if (y < 0 || y >= spec.output_dim())
      throw ConfigError("label " + std::to_string(y) + " outside [0, " +
                        std::to_string(spec.output_dim()) + ")");
}

}  // namespace

LossGrad loss_and_grad(const NetSpec& spec, const Vec& params, const Batch& batch,
                       double prior_precision, double scale, const DropoutMask* mask) {
  // scale 0 is allowed as a prior-only evaluation
  if (prior_precision < 0.0) throw ConfigError("prior_precision must be >= 0");
  if (scale < 0.0) throw ConfigError("scale must be >= 0");
  check_labels(spec, batch);
  const ForwardTrace trace = forward_trace(spec, params, batch.inputs, mask);
  const Mat logp = log_softmax_rows(trace.logits());
  double nll = 0.0;
  for (Eigen::Index i = 0; i < logp.rows(); ++i) nll -= logp(i, batch.labels[i]);
  LossGrad out;
  out.loss = scale * nll + 0.5 * prior_precision * params.squaredNorm();
  Mat cot = logp.array().exp();
  for (Eigen::Index i = 0; i < cot.rows(); ++i) cot(i, batch.labels[i]) -= 1.0;
  cot *= scale;
  out.grad = backward(spec, params, trace, cot, false, mask).param_grad;
  out.grad += prior_precision * params;
  if (!std::isfinite(out.loss) || !out.grad.allFinite())
    throw DivergedError("non-finite training loss", -1);
  return out;
}

Mat grad_input(const NetSpec& spec, const Vec& params, const Batch& batch) {
  check_labels(spec, batch);
  const ForwardTrace trace = forward_trace(spec, params, batch.inputs);
  Mat cot = softmax_rows(trace.logits());
  for (Eigen::Index i = 0; i < cot.rows(); ++i) cot(i, batch.labels[i]) -= 1.0;
  return backward(spec, params, trace, cot, true).input_grad;
}

PenaltyGrad input_grad_norm_penalty(const NetSpec& spec, const Vec& params, const Mat& x_hat) {
  if (spec.output_dim() != 1)
    throw ConfigError("input-gradient penalty requires a scalar-output net");
  check_params(spec, params);
  check_inputs(spec, x_hat);
  const auto dims = layer_dims(spec);
  const Eigen::Index n = x_hat.rows();
  const int layers = spec.num_layers();
  const ForwardTrace trace = forward_trace(spec, params, x_hat);

  // Input gradient rows g_i of the scalar output.
  Mat g;
  {
    Mat da = Mat::Ones(n, 1);
    for (int l = layers - 1; l >= 0; --l) {
      const auto& d = dims[l];
      WView w(params.data() + d.w_off, d.out, d.in);
      Mat dh = da * w;
      if (l > 0) da = dh.cwiseProduct(act_d1(spec, trace.pre[l - 1]));
      else g = std::move(dh);
    }
  }

  PenaltyGrad out;
  out.penalties = Vec::Zero(n);
  out.param_grad = Vec::Zero(params.size());

  // Direction rows u_i = dP_i/dg_i; rows with |g_i| under threshold stay zero.
  Mat u = Mat::Zero(n, x_hat.cols());
  bool any = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = g.row(i).norm();
    out.penalties[i] = (norm - 1.0) * (norm - 1.0);
    if (norm >= 1e-12) {
      u.row(i) = (2.0 * (norm - 1.0) / norm) * g.row(i);
      any = true;
    }
  }
  if (!any) return out;

  // Forward tangent along u: dot_pre[l] = tangent of pre-activations,
  // dot_post[l] = tangent of layer inputs.
  std::vector<Mat> dot_pre(layers), dot_post(layers);
  dot_post[0] = u;
  for (int l = 0; l < layers; ++l) {
    const auto& d = dims[l];
    WView w(params.data() + d.w_off, d.out, d.in);
    dot_pre[l] = dot_post[l] * w.transpose();
    if (l + 1 < layers)
      dot_post[l + 1] = dot_pre[l].cwiseProduct(act_d1(spec, trace.pre[l]));
  }

  // Reverse pass over the tangent program. r = cotangent on dot_pre,
  // s = cotangent on pre; the phi'' term feeds tangent curvature back into s.
  Mat r = Mat::Ones(n, 1);
  Mat s = Mat::Zero(n, 1);
  for (int l = layers - 1; l >= 0; --l) {
    const auto& d = dims[l];
    WView w(params.data() + d.w_off, d.out, d.in);
    Eigen::Map<RowMat> gw(out.param_grad.data() + d.w_off, d.out, d.in);
    Eigen::Map<Vec> gb(out.param_grad.data() + d.b_off, d.out);
    gw = s.transpose() * trace.post[l] + r.transpose() * dot_post[l];
    gb = s.colwise().sum();
    if (l > 0) {
      const Mat r_tilde = r * w;
      const Mat s_tilde = s * w;
      const Mat d1 = act_d1(spec, trace.pre[l - 1]);
      r = r_tilde.cwiseProduct(d1);
      s = s_tilde.cwiseProduct(d1);
      if (spec.activation == Activation::kTanh)
        s += act_d2(spec, trace.pre[l - 1]).cwiseProduct(dot_pre[l - 1]).cwiseProduct(r_tilde);
    }
  }
  return out;
}

Vec grad_param_of_input_grad_norm(const NetSpec& spec, const Vec& params, const Vec& x_hat) {
  return input_grad_norm_penalty(spec, params, x_hat.transpose()).param_grad;
}

Vec flatten(const NetSpec& spec, const std::vector<Mat>& weights, const std::vector<Vec>& biases) {
  const auto dims = layer_dims(spec);
  if (weights.size() != dims.size() || biases.size() != dims.size())
    throw ConfigError("flatten: layer count mismatch");
  Vec params(spec.param_count());
  for (std::size_t l = 0; l < dims.size(); ++l) {
    const auto& d = dims[l];
    if (weights[l].rows() != d.out || weights[l].cols() != d.in || biases[l].size() != d.out)
      throw ConfigError("flatten: layer " + std::to_string(l) + " shape mismatch");
    Eigen::Map<RowMat>(params.data() + d.w_off, d.out, d.in) = weights[l];
    Eigen::Map<Vec>(params.data() + d.b_off, d.out) = biases[l];
  }
  return params;
}

void unflatten(const NetSpec& spec, const Vec& params, std::vector<Mat>& weights,
               std::vector<Vec>& biases) {
  check_params(spec, params);
  const auto dims = layer_dims(spec);
  weights.resize(dims.size());
  biases.resize(dims.size());
  for (std::size_t l = 0; l < dims.size(); ++l) {
    const auto& d = dims[l];
    weights[l] = Eigen::Map<const RowMat>(params.data() + d.w_off, d.out, d.in);
    biases[l] = Eigen::Map<const Vec>(params.data() + d.b_off, d.out);
  }
}

}  // namespace apd::nn
