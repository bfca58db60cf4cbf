#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "apd/datasets.hpp"

using namespace apd;
using datasets::LabeledDataset;
using datasets::OodKind;
using datasets::OodSpec;

#ifndef DIGITS_CSV_PATH
#define DIGITS_CSV_PATH "data/digits.csv"
#endif

TEST_CASE("toy2d: counts, separability, determinism") {
  Rng r1(5), r2(5);
  auto a = datasets::make_toy2d(r1);
  auto b = datasets::make_toy2d(r2);
  REQUIRE(a.inputs.rows() == 20);
  int c0 = 0, c1 = 0;
  for (int y : a.labels) (y == 0 ? c0 : c1)++;
  CHECK(c0 == 10);
  CHECK(c1 == 10);
  // the line x + y = 0 separates the two clusters
  for (int i = 0; i < 20; ++i) {
    const double s = a.inputs(i, 0) + a.inputs(i, 1);
    CHECK((a.labels[static_cast<std::size_t>(i)] == 1) == (s > 0.0));
  }
  CHECK((a.inputs - b.inputs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("digits corpus: shape, normalization, split arithmetic") {
  auto ds = datasets::load_digits_csv(DIGITS_CSV_PATH, 7);
  CHECK(ds.inputs.rows() == 1797);
  CHECK(ds.inputs.cols() == 64);
  CHECK(ds.num_classes == 10);
  CHECK(ds.inputs.minCoeff() >= 0.0);
  CHECK(ds.inputs.maxCoeff() <= 1.0);
  CHECK(ds.normalization_divisor == 16.0);

  CHECK(ds.train.size() == 1078);
  CHECK(ds.val.size() == 359);
  CHECK(ds.test.size() == 360);

  // disjoint and exhaustive
  std::set<long> all;
  for (long i : ds.train) all.insert(i);
  for (long i : ds.val) all.insert(i);
  for (long i : ds.test) all.insert(i);
  CHECK(all.size() == 1797);

  // stratified: every class appears in every split
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    std::set<int> classes;
    for (long i : *split) classes.insert(ds.labels[static_cast<std::size_t>(i)]);
    CHECK(classes.size() == 10);
  }
}

TEST_CASE("digits split is stable under the seed and changes with it") {
  auto a = datasets::load_digits_csv(DIGITS_CSV_PATH, 7);
  auto b = datasets::load_digits_csv(DIGITS_CSV_PATH, 7);
  auto c = datasets::load_digits_csv(DIGITS_CSV_PATH, 8);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);
  CHECK(a.train != c.train);
}

TEST_CASE("digits csv: malformed rows carry the line number") {
  const char* path = "/tmp/apd_bad_digits.csv";
  {
    std::ofstream out(path);
    for (int i = 0; i < 64; ++i) out << 1 << ",";
    out << 3 << "\n";
    out << "1,2,nope\n";
  }
  try {
    datasets::load_digits_csv(path, 1);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::remove(path);
}

namespace {

void write_be32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

void write_idx_pair(const std::string& img_path, const std::string& lab_path, int n,
                    bool corrupt_magic = false, int label_count_delta = 0) {
  std::ofstream img(img_path, std::ios::binary);
  write_be32(img, corrupt_magic ? 0x00000805u : 0x00000803u);
  write_be32(img, static_cast<std::uint32_t>(n));
  write_be32(img, 28);
  write_be32(img, 28);
  for (int i = 0; i < n * 28 * 28; ++i) {
    unsigned char byte = static_cast<unsigned char>(i % 256);
    img.write(reinterpret_cast<char*>(&byte), 1);
  }
  std::ofstream lab(lab_path, std::ios::binary);
  write_be32(lab, 0x00000801u);
  write_be32(lab, static_cast<std::uint32_t>(n + label_count_delta));
  for (int i = 0; i < n + label_count_delta; ++i) {
    unsigned char byte = static_cast<unsigned char>(i % 10);
    lab.write(reinterpret_cast<char*>(&byte), 1);
  }
}

}  // namespace

TEST_CASE("idx loader: format arithmetic and error paths") {
  const std::string img = "/tmp/apd_test_images.idx";
  const std::string lab = "/tmp/apd_test_labels.idx";

  SUBCASE("two 28x28 images flatten to 784-wide rows, 255 maps to 1.0") {
    write_idx_pair(img, lab, 2);
    auto ds = datasets::load_idx(img, lab);
    CHECK(ds.inputs.rows() == 2);
    CHECK(ds.inputs.cols() == 784);
    CHECK(ds.labels.size() == 2);
    CHECK(ds.inputs(0, 255) == doctest::Approx(1.0));  // byte value 255
    CHECK(ds.inputs(0, 0) == doctest::Approx(0.0));
    CHECK(ds.normalization_divisor == 255.0);
  }

  SUBCASE("bad magic is rejected") {
    write_idx_pair(img, lab, 2, true);
    CHECK_THROWS_AS(datasets::load_idx(img, lab), IoError);
  }

  SUBCASE("label count mismatch is rejected") {
    write_idx_pair(img, lab, 2, false, 1);
    CHECK_THROWS_AS(datasets::load_idx(img, lab), IoError);
  }

  std::remove(img.c_str());
  std::remove(lab.c_str());
}

TEST_CASE("ood generation") {
  OodSpec spec;
  spec.count = 200;
  spec.rng_seed = 3;

  SUBCASE("uniform at scale 1 stays in [0,1]") {
    spec.kind = OodKind::kUniformNoise;
    Mat m = datasets::gen_ood(spec, 64);
    CHECK(m.rows() == 200);
    CHECK(m.minCoeff() >= 0.0);
    CHECK(m.maxCoeff() <= 1.0);
  }

  SUBCASE("uniform at scale 5 fills [0,5]") {
    spec.kind = OodKind::kUniformNoise;
    spec.scale_factor = 5.0;
    Mat m = datasets::gen_ood(spec, 64);
    CHECK(m.maxCoeff() <= 5.0);
    CHECK(m.maxCoeff() > 4.5);
    CHECK(m.minCoeff() >= 0.0);
  }

  SUBCASE("gaussian is clamped before scaling") {
    spec.kind = OodKind::kGaussianNoise;
    spec.scale_factor = 2.0;
    Mat m = datasets::gen_ood(spec, 32);
    CHECK(m.minCoeff() >= 0.0);
    CHECK(m.maxCoeff() <= 2.0);
    CHECK(m.maxCoeff() > 1.5);  // mass at the clamp boundary survives scaling
  }

  SUBCASE("seeded determinism") {
    spec.kind = OodKind::kGaussianNoise;
    Mat a = datasets::gen_ood(spec, 16);
    Mat b = datasets::gen_ood(spec, 16);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("scale sweep") {
  OodSpec spec;
  spec.kind = OodKind::kUniformNoise;
  spec.count = 50;
  spec.rng_seed = 5;
  Mat base = datasets::gen_ood(spec, 8);

  auto sweep = datasets::scale_sweep(base, {1.0});
  CHECK((sweep[0] - base).cwiseAbs().maxCoeff() == 0.0);

  auto three = datasets::scale_sweep(base, {1.0, 2.0, 5.0});
  REQUIRE(three.size() == 3);
  CHECK(three[1].maxCoeff() == doctest::Approx(2.0 * base.maxCoeff()));
  CHECK(three[2].maxCoeff() == doctest::Approx(5.0 * base.maxCoeff()));
  CHECK_THROWS_AS(datasets::scale_sweep(base, {0.0}), ConfigError);
}
