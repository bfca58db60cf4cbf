#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "apd/uncertainty.hpp"
#include "oracles.hpp"

using namespace apd;
using uncertainty::Measure;
using uncertainty::PredictiveBatch;
using uncertainty::SampleSource;

namespace {

PredictiveBatch batch_of(std::initializer_list<std::initializer_list<double>> rows) {
  PredictiveBatch b;
  const auto t_count = static_cast<Eigen::Index>(rows.size());
  const auto classes = static_cast<Eigen::Index>(rows.begin()->size());
  b.probs = Mat(t_count, classes);
  Eigen::Index t = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) b.probs(t, c++) = v;
    ++t;
  }
  return b;
}

}  // namespace

TEST_CASE("predictive_mean") {
  auto b = batch_of({{1.0, 0.0}, {0.0, 1.0}});
  Vec mean = uncertainty::predictive_mean(b);
  CHECK(mean[0] == doctest::Approx(0.5));
  CHECK(mean[1] == doctest::Approx(0.5));
  auto single = batch_of({{0.3, 0.7}});
  Vec m1 = uncertainty::predictive_mean(single);
  CHECK(m1[0] == doctest::Approx(0.3));
}

TEST_CASE("entropy basics") {
  Vec onehot = Vec::Zero(4);
  onehot[2] = 1.0;
  CHECK(uncertainty::entropy(onehot) == 0.0);
  Vec uniform10 = Vec::Constant(10, 0.1);
  CHECK(uncertainty::entropy(uniform10) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  Vec half(2);
  half << 0.5, 0.5;
  CHECK(uncertainty::entropy(half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("entropy is invariant under class permutation") {
  Rng rng(5);
  Mat p = oracle::random_prob_rows(rng, 1, 6);
  Vec v = p.row(0).transpose();
  Vec shuffled = v;
  std::shuffle(shuffled.data(), shuffled.data() + shuffled.size(), rng);
  CHECK(uncertainty::entropy(v) == doctest::Approx(uncertainty::entropy(shuffled)).epsilon(1e-12));
}

TEST_CASE("bald basics") {
  auto same = batch_of({{0.2, 0.8}, {0.2, 0.8}, {0.2, 0.8}});
  CHECK(uncertainty::bald(same) == doctest::Approx(0.0).epsilon(1e-15));
  auto split = batch_of({{1.0, 0.0}, {0.0, 1.0}});
  CHECK(uncertainty::bald(split) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("variation ratio with documented tie rule") {
  auto agree = batch_of({{0.9, 0.1}, {0.8, 0.2}, {0.7, 0.3}});
  CHECK(uncertainty::variation_ratio(agree) == doctest::Approx(0.0));
  auto uneven = batch_of({{0.9, 0.1}, {0.8, 0.2}, {0.7, 0.3}, {0.1, 0.9}});
  CHECK(uncertainty::variation_ratio(uneven) == doctest::Approx(0.25));
  // two votes split between classes 0 and 1: modal class is 0, VR = 0.5
  auto tie = batch_of({{1.0, 0.0}, {0.0, 1.0}});
  CHECK(uncertainty::variation_ratio(tie) == doctest::Approx(0.5));
  // row-level argmax tie breaks toward the lowest index
  auto rowtie = batch_of({{0.5, 0.5}, {0.5, 0.5}});
  CHECK(uncertainty::variation_ratio(rowtie) == doctest::Approx(0.0));
}

TEST_CASE("model variance basics") {
  auto same = batch_of({{0.3, 0.7}, {0.3, 0.7}});
  CHECK(uncertainty::model_variance(same) == doctest::Approx(0.0).epsilon(1e-15));
  auto split = batch_of({{1.0, 0.0}, {0.0, 1.0}});
  CHECK(uncertainty::model_variance(split) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("measures match direct evaluations on random batches") {
  Rng rng(404);
  for (int trial = 0; trial < 500; ++trial) {
    const int t_count = 1 + trial % 12;
    const int classes = 2 + trial % 9;
    PredictiveBatch b;
    b.probs = oracle::random_prob_rows(rng, t_count, classes, trial % 2 == 0);
    b.validate();
    CHECK(uncertainty::entropy(uncertainty::predictive_mean(b)) ==
          doctest::Approx(oracle::entropy_direct(uncertainty::predictive_mean(b))).epsilon(1e-12));
    CHECK(uncertainty::bald(b) ==
          doctest::Approx(std::max(0.0, oracle::bald_direct(b.probs))).epsilon(1e-10));
    CHECK(uncertainty::variation_ratio(b) == oracle::vr_direct(b.probs));
    CHECK(uncertainty::model_variance(b) ==
          doctest::Approx(std::max(0.0, oracle::model_variance_direct(b.probs))).epsilon(1e-10));
    // invariants
    CHECK(uncertainty::bald(b) >= 0.0);
    CHECK(uncertainty::bald(b) <=
          uncertainty::entropy(uncertainty::predictive_mean(b)) + 1e-12);
    CHECK(uncertainty::variation_ratio(b) >= 0.0);
    CHECK(uncertainty::variation_ratio(b) <= 1.0 - 1.0 / classes + 1e-12);
    CHECK(std::abs(uncertainty::model_variance(b) - oracle::covariance_trace(b.probs)) < 1e-12);
  }
}

TEST_CASE("measures are invariant under permutation of the rows") {
  Rng rng(77);
  PredictiveBatch b;
  b.probs = oracle::random_prob_rows(rng, 8, 5);
  PredictiveBatch shuffled = b;
  std::vector<int> order = {7, 2, 5, 0, 3, 6, 1, 4};
  for (int t = 0; t < 8; ++t) shuffled.probs.row(t) = b.probs.row(order[t]);
  CHECK(uncertainty::bald(b) == doctest::Approx(uncertainty::bald(shuffled)).epsilon(1e-12));
  CHECK(uncertainty::variation_ratio(b) == uncertainty::variation_ratio(shuffled));
  CHECK(uncertainty::model_variance(b) ==
        doctest::Approx(uncertainty::model_variance(shuffled)).epsilon(1e-12));
  CHECK(uncertainty::entropy(uncertainty::predictive_mean(b)) ==
        doctest::Approx(uncertainty::entropy(uncertainty::predictive_mean(shuffled)))
            .epsilon(1e-12));
}

TEST_CASE("predict: point source is degenerate for all measures") {
  nn::NetSpec spec;
  spec.layer_sizes = {3, 6, 4};
  Rng rng(21);
  Vec params = nn::init_params(spec, rng);
  Mat inputs = Mat::Random(5, 3);
  auto batches = uncertainty::predict_point(spec, params, inputs);
  REQUIRE(batches.size() == 5);
  for (const auto& b : batches) {
    CHECK(b.probs.rows() == 1);
    CHECK(b.source == SampleSource::kPoint);
    CHECK(uncertainty::bald(b) == 0.0);
    CHECK(uncertainty::variation_ratio(b) == 0.0);
    CHECK(uncertainty::model_variance(b) == 0.0);
  }
}

TEST_CASE("predict: sample source keeps draw order and bounds T") {
  nn::NetSpec spec;
  spec.layer_sizes = {2, 4, 3};
  Rng rng(31);
  std::vector<Vec> samples;
  for (int i = 0; i < 4; ++i) samples.push_back(nn::init_params(spec, rng));
  Mat inputs = Mat::Random(3, 2);
  auto batches = uncertainty::predict_from_params(spec, samples, inputs, 4, SampleSource::kSgld);
  // row t corresponds to sample t
  Mat probs2 = nn::softmax_rows(nn::forward(spec, samples[2], inputs));
  CHECK((batches[1].probs.row(2) - probs2.row(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(uncertainty::predict_from_params(spec, samples, inputs, 5, SampleSource::kSgld),
                  ConfigError);
}

TEST_CASE("predict: dropout rate zero gives identical rows") {
  nn::NetSpec spec;
  spec.layer_sizes = {3, 5, 2};
  spec.dropout_rate = 0.0;
  Rng rng(41), mask_rng(42);
  Vec params = nn::init_params(spec, rng);
  Mat inputs = Mat::Random(2, 3);
  auto batches = uncertainty::predict_mc_dropout(spec, params, inputs, 6, mask_rng);
  for (const auto& b : batches)
    for (int t = 1; t < 6; ++t)
      CHECK((b.probs.row(t) - b.probs.row(0)).cwiseAbs().maxCoeff() == 0.0);
}
