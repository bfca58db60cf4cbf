#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "apd/mog.hpp"

using namespace apd;
using mog::EmOptions;
using mog::MoGModel;

namespace {

sampler::SampleSet set_of(std::initializer_list<std::initializer_list<double>> rows) {
  sampler::SampleSet s;
  for (const auto& row : rows) {
    Vec v(static_cast<Eigen::Index>(row.size()));
    Eigen::Index i = 0;
    for (double x : row) v[i++] = x;
    s.samples.push_back(v);
  }
  return s;
}

}  // namespace

TEST_CASE("single component closed form") {
  auto s = set_of({{1.0}, {3.0}});
  Rng rng(1);
  auto m = mog::em_fit(s, 1, {}, rng);
  CHECK(m.weights[0] == doctest::Approx(1.0));
  CHECK(m.means(0, 0) == doctest::Approx(2.0));
  CHECK(m.variances(0, 0) == doctest::Approx(1.0));  // population variance
}

TEST_CASE("single component matches mean and population variance in 3-D") {
  Rng data_rng(3);
  sampler::SampleSet s;
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 400; ++i) {
    Vec v(3);
    v << 2.0 + 0.5 * g(data_rng), -1.0 + 2.0 * g(data_rng), 0.1 * g(data_rng);
    s.samples.push_back(v);
  }
  Vec mean = Vec::Zero(3);
  for (const auto& x : s.samples) mean += x;
  mean /= 400.0;
  Vec var = Vec::Zero(3);
  for (const auto& x : s.samples) var += (x - mean).cwiseProduct(x - mean);
  var /= 400.0;
  Rng rng(7);
  auto m = mog::em_fit(s, 1, {}, rng);
  for (int d = 0; d < 3; ++d) {
    CHECK(m.means(0, d) == doctest::Approx(mean[d]).epsilon(1e-9));
    CHECK(m.variances(0, d) == doctest::Approx(var[d]).epsilon(1e-9));
  }
}

TEST_CASE("two separated clusters are recovered") {
  Rng data_rng(5);
  sampler::SampleSet s;
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int i = 0; i < 300; ++i) {
    Vec v(1);
    v << (i % 2 == 0 ? -2.0 : 2.0) + noise(data_rng);
    s.samples.push_back(v);
  }
  Rng rng(11);
  mog::EmReport report;
  auto m = mog::em_fit(s, 2, {}, rng, &report);
  double lo = std::min(m.means(0, 0), m.means(1, 0));
  double hi = std::max(m.means(0, 0), m.means(1, 0));
  CHECK(std::abs(lo - (-2.0)) < 0.05);
  CHECK(std::abs(hi - 2.0) < 0.05);
  CHECK(m.weights.sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("log likelihood at the mean of a single-component model") {
  MoGModel m;
  m.means = Mat(1, 2);
  m.means << 0.7, -0.3;
  m.variances = Mat(1, 2);
  m.variances << 0.5, 2.0;
  m.weights = Vec::Ones(1);
  sampler::SampleSet s;
  s.samples.push_back(m.means.row(0).transpose());
  const double want = -0.5 * (std::log(2.0 * M_PI * 0.5) + std::log(2.0 * M_PI * 2.0));
  CHECK(mog::log_likelihood(m, s) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("log likelihood matches extended-precision direct evaluation") {
  Rng rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  MoGModel m;
  m.means = Mat(3, 2);
  m.variances = Mat(3, 2);
  for (Eigen::Index k = 0; k < 3; ++k)
    for (Eigen::Index d = 0; d < 2; ++d) {
      m.means(k, d) = g(rng);
      m.variances(k, d) = 0.3 + std::abs(g(rng));
    }
  m.weights = Vec(3);
  m.weights << 0.2, 0.5, 0.3;
  sampler::SampleSet s;
  for (int i = 0; i < 20; ++i) {
    Vec v(2);
    v << g(rng), g(rng);
    s.samples.push_back(v);
  }
  long double want = 0.0L;
  for (const auto& x : s.samples) {
    long double px = 0.0L;
    for (int k = 0; k < 3; ++k) {
      long double logp = 0.0L;
      for (int d = 0; d < 2; ++d) {
        const long double var = m.variances(k, d);
        const long double diff = x[d] - m.means(k, d);
        logp += -0.5L * (std::log(2.0L * static_cast<long double>(M_PI) * var) + diff * diff / var);
      }
      px += static_cast<long double>(m.weights[k]) * std::exp(logp);
    }
    want += std::log(px);
  }
  CHECK(mog::log_likelihood(m, s) == doctest::Approx(static_cast<double>(want)).epsilon(1e-10));
}

TEST_CASE("EM log likelihood is non-decreasing") {
  Rng data_rng(17);
  sampler::SampleSet s;
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    Vec v(3);
    v << g(data_rng) + (i % 3), g(data_rng), 0.5 * g(data_rng);
    s.samples.push_back(v);
  }
  Rng rng(19);
  mog::EmReport report;
  EmOptions opts;
  opts.tol = 1e-9;
  opts.max_iters = 100;
  mog::em_fit(s, 4, opts, rng, &report);
  REQUIRE(report.ll_trace.size() >= 2);
  CHECK(report.collapse_reinits == 0);
  for (std::size_t i = 1; i < report.ll_trace.size(); ++i)
    CHECK(report.ll_trace[i] >= report.ll_trace[i - 1] - 1e-8);
}

TEST_CASE("fit is invariant to sample permutation on separated clusters") {
  Rng data_rng(23);
  sampler::SampleSet s;
  std::normal_distribution<double> noise(0.0, 0.08);
  for (int i = 0; i < 240; ++i) {
    Vec v(2);
    const double c = (i % 2 == 0) ? -3.0 : 3.0;
    v << c + noise(data_rng), -c + noise(data_rng);
    s.samples.push_back(v);
  }
  sampler::SampleSet shuffled = s;
  Rng perm(29);
  std::shuffle(shuffled.samples.begin(), shuffled.samples.end(), perm);

  EmOptions opts;
  opts.tol = 1e-12;
  opts.max_iters = 300;
  Rng r1(31), r2(31);
  auto a = mog::em_fit(s, 2, opts, r1);
  auto b = mog::em_fit(shuffled, 2, opts, r2);
  // align components by the first mean coordinate
  auto key = [](const MoGModel& m, int k) { return m.means(k, 0); };
  const int a_lo = key(a, 0) < key(a, 1) ? 0 : 1;
  const int b_lo = key(b, 0) < key(b, 1) ? 0 : 1;
  CHECK(a.means(a_lo, 0) == doctest::Approx(b.means(b_lo, 0)).epsilon(1e-6));
  CHECK(a.means(1 - a_lo, 0) == doctest::Approx(b.means(1 - b_lo, 0)).epsilon(1e-6));
  CHECK(a.weights[a_lo] == doctest::Approx(b.weights[b_lo]).epsilon(1e-6));
}

TEST_CASE("responsibility collapse triggers reinitialization, not failure") {
  // 5 samples, 4 components: at least one component will fight for mass
  auto s = set_of({{0.0}, {0.01}, {0.02}, {5.0}, {5.01}});
  Rng rng(37);
  EmOptions opts;
  opts.max_iters = 60;
  mog::EmReport report;
  auto m = mog::em_fit(s, 4, opts, rng, &report);
  CHECK(m.weights.sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(m.variances.minCoeff() >= opts.variance_floor);
}

TEST_CASE("mog_sample: degenerate single component concentrates at the mean") {
  MoGModel m;
  m.means = Mat(1, 2);
  m.means << 1.5, -2.5;
  m.variances = Mat::Constant(1, 2, 1e-6);
  m.weights = Vec::Ones(1);
  Rng rng(41);
  auto out = mog::mog_sample(m, 50, rng);
  for (const auto& x : out.samples) {
    CHECK(std::abs(x[0] - 1.5) < 0.01);
    CHECK(std::abs(x[1] + 2.5) < 0.01);
  }
}

TEST_CASE("mog_sample: component frequencies follow the weights") {
  MoGModel m;
  m.means = Mat(2, 1);
  m.means << -10.0, 10.0;
  m.variances = Mat::Constant(2, 1, 0.01);
  m.weights = Vec(2);
  m.weights << 0.3, 0.7;
  Rng rng(43);
  auto out = mog::mog_sample(m, 10000, rng);
  long low = 0;
  for (const auto& x : out.samples)
    if (x[0] < 0.0) ++low;
  const double p = 0.3;
  const double sigma = std::sqrt(p * (1 - p) * 10000);
  CHECK(std::abs(static_cast<double>(low) - p * 10000) < 3.0 * sigma);
}

TEST_CASE("mog_sample is deterministic under a fixed seed") {
  MoGModel m;
  m.means = Mat(2, 3);
  m.means.setRandom();
  m.variances = Mat::Constant(2, 3, 0.5);
  m.weights = Vec(2);
  m.weights << 0.4, 0.6;
  Rng r1(47), r2(47);
  auto a = mog::mog_sample(m, 20, r1);
  auto b = mog::mog_sample(m, 20, r2);
  for (int i = 0; i < 20; ++i)
    CHECK((a.samples[i] - b.samples[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("parameter counts") {
  CHECK(mog::parameter_count(60, 79510) == 9541260);
  CHECK(mog::parameter_count(1, 3) == 7);
  // generator with 3 hidden layers of 20 units on the same dimension
  nn::NetSpec gen;
  gen.layer_sizes = {100, 20, 20, 20, 79510};
  CHECK(gen.param_count() == 1672570);  // ~1.67M
}
