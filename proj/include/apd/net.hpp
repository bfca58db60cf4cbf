#pragma once

// Fully-connected network evaluation and analytic gradients over flattened
// parameter vectors. Gradients are hand-derived for this fixed MLP family:
// first-order (parameter and input) backprop, plus the forward-over-reverse
// second-order path needed to differentiate an input-gradient-norm penalty
// with respect to the parameters.
//
// Flattened layout, fixed across versions: for each layer l in order,
// weights (out_l x in_l, row-major) followed by biases (out_l). Hidden
// layers share one activation; the output layer is linear.

#include <optional>
#include <vector>

#include "apd/common.hpp"

namespace apd::nn {

enum class Activation { kRelu, kLeakyRelu, kTanh, kIdentity };

struct NetSpec {
  std::vector<int> layer_sizes;  // input width, hidden widths..., output width
  Activation activation = Activation::kRelu;
  double leaky_slope = 0.2;    // only read for kLeakyRelu
  double dropout_rate = 0.0;   // applied after hidden activations when a mask is given

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  Eigen::Index param_count() const;
  void validate() const;  // throws ConfigError

  bool operator==(const NetSpec&) const = default;
};

struct Batch {
  Mat inputs;               // n x input_dim
  std::vector<int> labels;  // class indices in [0, output_dim)
};

/// Per-hidden-unit Bernoulli keep indicators (one vector per hidden layer,
/// entries 0 or 1) and the rate they were drawn with. Kept units are scaled
/// by 1/(1-rate) so rate 0 reproduces the unmasked forward bit-for-bit.
struct DropoutMask {
  std::vector<Vec> keep;
  double rate = 0.0;
};

DropoutMask draw_dropout_mask(const NetSpec& spec, Rng& rng);

/// Glorot-uniform weights, zero biases. Draw order matches the flattened
/// layout so the stream consumption is reproducible.
Vec init_params(const NetSpec& spec, Rng& rng);

Mat forward(const NetSpec& spec, const Vec& params, const Mat& inputs,
            const DropoutMask* mask = nullptr);

inline Mat forward(const NetSpec& spec, const Vec& params, const Batch& batch,
                   const DropoutMask* mask = nullptr) {
  return forward(spec, params, batch.inputs, mask);
}

Vec log_softmax(const Vec& logits);
Mat log_softmax_rows(const Mat& logits);
Mat softmax_rows(const Mat& logits);

/// Activations cached by forward_trace for the reverse passes.
struct ForwardTrace {
  std::vector<Mat> pre;   // pre[l]: pre-activations of layer l (n x out_l)
  std::vector<Mat> post;  // post[l]: layer inputs; post[0] = batch inputs
  const Mat& logits() const { return pre.back(); }
};

ForwardTrace forward_trace(const NetSpec& spec, const Vec& params, const Mat& inputs,
                           const DropoutMask* mask = nullptr);

struct BackwardResult {
  Vec param_grad;
  Mat input_grad;  // empty unless requested
};

/// Reverse pass: given dScalar/dlogits for every row, accumulate the exact
/// parameter gradient (and optionally the input gradient).
BackwardResult backward(const NetSpec& spec, const Vec& params, const ForwardTrace& trace,
                        const Mat& logit_cotangent, bool want_input_grad = false,
                        const DropoutMask* mask = nullptr);

struct LossGrad {
  double loss = 0.0;
  Vec grad;
};

/// loss = scale * sum_i -log p(y_i | x_i, theta) + prior_precision * 0.5*|theta|^2,
/// with scale = dataset_size / batch_size; grad is its exact gradient.
LossGrad loss_and_grad(const NetSpec& spec, const Vec& params, const Batch& batch,
                       double prior_precision, double scale,
                       const DropoutMask* mask = nullptr);

/// Row i holds the gradient of -log p(y_i | x_i, theta) with respect to x_i.
Mat grad_input(const NetSpec& spec, const Vec& params, const Batch& batch);

struct PenaltyGrad {
  Vec param_grad;  // sum over rows of d(|grad_x D(x_i)| - 1)^2 / dtheta
  Vec penalties;   // per-row penalty values
};

/// Second-order path for critics with scalar output: penalties and their
/// parameter gradients for a batch of evaluation points. Gradient norms
/// below 1e-12 contribute a zero row instead of dividing.
PenaltyGrad input_grad_norm_penalty(const NetSpec& spec, const Vec& params, const Mat& x_hat);

/// Single-point form: d/dparams of (|grad_x D(x_hat)| - 1)^2.
Vec grad_param_of_input_grad_norm(const NetSpec& spec, const Vec& params, const Vec& x_hat);

/// Structured weights <-> flat vector. Round-trip identity; layer l weights
/// precede layer l biases precede layer l+1 weights.
Vec flatten(const NetSpec& spec, const std::vector<Mat>& weights, const std::vector<Vec>& biases);
void unflatten(const NetSpec& spec, const Vec& params, std::vector<Mat>& weights,
               std::vector<Vec>& biases);

}  // namespace apd::nn
