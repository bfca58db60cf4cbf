#pragma once

// Data inputs: the toy-2D two-cluster problem, the bundled small-digits CSV
// corpus, an IDX loader for MNIST-format files, and synthetic OOD sources
// with multiplicative intensity scaling.

#include <string>
#include <vector>

#include "apd/common.hpp"

namespace apd::datasets {

struct LabeledDataset {
  Mat inputs;  // one example per row, intensities normalized to [0, 1]
  std::vector<int> labels;
  int num_classes = 0;
  double normalization_divisor = 1.0;  // raw-intensity divisor applied on load
  std::vector<long> train, val, test;  // row indices; disjoint and exhaustive
  std::uint64_t split_seed = 0;

  Mat rows(const std::vector<long>& idx) const;
  std::vector<int> labels_at(const std::vector<long>& idx) const;
};

/// 20 points, 10 per class: Gaussian clusters at (-1.5,-1.5) and (+1.5,+1.5)
/// with spread 0.3. All rows land in the train split.
LabeledDataset make_toy2d(Rng& rng);

/// Rows of 64 integer intensities in 0..16 plus a label; intensities are
/// divided by 16. Stratified 60/20/20 split under split_seed: global sizes
/// round(0.6n)/round(0.2n)/rest, apportioned per class by largest remainder.
LabeledDataset load_digits_csv(const std::string& path, std::uint64_t split_seed);

/// IDX pair (big-endian magic 0x803 images / 0x801 labels); intensities are
/// divided by 255. No split is assigned; callers compose train/test files.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

/// In-place stratified 60/20/20 split by the documented rounding rule.
void apply_stratified_split(LabeledDataset& ds, std::uint64_t split_seed);

enum class OodKind { kGaussianNoise, kUniformNoise, kExternalCorpus };

struct OodSpec {
  OodKind kind = OodKind::kGaussianNoise;
  double scale_factor = 1.0;
  int count = 0;
  std::uint64_t rng_seed = 0;
  std::string external_path;  // CSV matrix dump, used for kExternalCorpus
};

/// gaussian: N(0.5, 1) clamped to [0,1]; uniform: U(0,1); both then scaled
/// multiplicatively without re-clamping.
Mat gen_ood(const OodSpec& spec, int input_dim);

/// One scaled copy per factor; factor 1 returns the base bit-identically.
std::vector<Mat> scale_sweep(const Mat& base, const std::vector<double>& factors);

}  // namespace apd::datasets
