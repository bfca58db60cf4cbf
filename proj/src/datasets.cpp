#include "apd/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>

namespace apd::datasets {

Mat LabeledDataset::rows(const std::vector<long>& idx) const {
  Mat out(static_cast<Eigen::Index>(idx.size()), inputs.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = inputs.row(idx[i]);
  return out;
}

std::vector<int> LabeledDataset::labels_at(const std::vector<long>& idx) const {
  std::vector<int> out;
  out.reserve(idx.size());
  for (long i : idx) out.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

LabeledDataset make_toy2d(Rng& rng) {
  LabeledDataset ds;
  ds.inputs = Mat(20, 2);
  ds.num_classes = 2;
  std::normal_distribution<double> spread(0.0, 0.3);
  for (int i = 0; i < 10; ++i) {
    ds.inputs(i, 0) = -1.5 + spread(rng);
    ds.inputs(i, 1) = -1.5 + spread(rng);
    ds.labels.push_back(0);
  }
  for (int i = 10; i < 20; ++i) {
    ds.inputs(i, 0) = 1.5 + spread(rng);
    ds.inputs(i, 1) = 1.5 + spread(rng);
    ds.labels.push_back(1);
  }
  ds.train.resize(20);
  std::iota(ds.train.begin(), ds.train.end(), 0);
  return ds;
}

void apply_stratified_split(LabeledDataset& ds, std::uint64_t split_seed) {
  const long n = static_cast<long>(ds.labels.size());
  const long n_train = std::lround(0.6 * static_cast<double>(n));
  const long n_val = std::lround(0.2 * static_cast<double>(n));

  std::vector<std::vector<long>> by_class(static_cast<std::size_t>(ds.num_classes));
  for (long i = 0; i < n; ++i)
    by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
  Rng rng(split_seed);
  for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);

  // largest-remainder apportionment of the global quota across classes
  auto apportion = [&](long quota, const std::vector<long>& avail) {
    const long total = std::accumulate(avail.begin(), avail.end(), 0L);
    std::vector<long> take(avail.size());
    std::vector<std::pair<double, std::size_t>> rema;
    long assigned = 0;
    for (std::size_t c = 0; c < avail.size(); ++c) {
      const double ideal =
          static_cast<double>(quota) * static_cast<double>(avail[c]) / static_cast<double>(total);
      take[c] = static_cast<long>(ideal);
      assigned += take[c];
      rema.push_back({ideal - static_cast<double>(take[c]), c});
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < quota; ++r, ++assigned) ++take[rema[r].second];
    return take;
  };

  std::vector<long> avail(by_class.size());
  for (std::size_t c = 0; c < by_class.size(); ++c)
    avail[c] = static_cast<long>(by_class[c].size());
  const std::vector<long> train_take = apportion(n_train, avail);
  std::vector<long> remaining(avail.size());
  for (std::size_t c = 0; c < avail.size(); ++c) remaining[c] = avail[c] - train_take[c];
  const std::vector<long> val_take = apportion(n_val, remaining);

  ds.train.clear();
  ds.val.clear();
  ds.test.clear();
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const auto& members = by_class[c];
    long i = 0;
    for (; i < train_take[c]; ++i) ds.train.push_back(members[static_cast<std::size_t>(i)]);
    for (; i < train_take[c] + val_take[c]; ++i)
      ds.val.push_back(members[static_cast<std::size_t>(i)]);
    for (; i < avail[c]; ++i) ds.test.push_back(members[static_cast<std::size_t>(i)]);
  }
  ds.split_seed = split_seed;
}

LabeledDataset load_digits_csv(const std::string& path, std::uint64_t split_seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::array<double, 64>> rows;
  std::vector<int> labels;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::array<double, 64> row{};
    std::string cell;
    for (int c = 0; c < 65; ++c) {
      if (!std::getline(ss, cell, ','))
        throw ParseError(path + ": line " + std::to_string(line_no) + ": expected 65 fields");
      long v = 0;
      try {
        std::size_t used = 0;
        v = std::stol(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(path + ": line " + std::to_string(line_no) + ": bad integer '" + cell +
                         "'");
      }
      if (c < 64) {
        if (v < 0 || v > 16)
          throw ParseError(path + ": line " + std::to_string(line_no) +
                           ": intensity out of range");
        row[static_cast<std::size_t>(c)] = static_cast<double>(v) / 16.0;
      } else {
        if (v < 0 || v > 9)
          throw ParseError(path + ": line " + std::to_string(line_no) + ": bad label");
        labels.push_back(static_cast<int>(v));
      }
    }
    rows.push_back(row);
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");
  LabeledDataset ds;
  ds.inputs = Mat(static_cast<Eigen::Index>(rows.size()), 64);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int c = 0; c < 64; ++c) ds.inputs(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
  ds.labels = std::move(labels);
  ds.num_classes = 10;
  ds.normalization_divisor = 16.0;
  apply_stratified_split(ds, split_seed);
  return ds;
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError(path + ": truncated header");
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw IoError("cannot open " + images_path);
  if (read_be32(img, images_path) != 0x00000803u)
    throw IoError(images_path + ": bad magic (want 0x00000803)");
  const std::uint32_t n = read_be32(img, images_path);
  const std::uint32_t rows = read_be32(img, images_path);
  const std::uint32_t cols = read_be32(img, images_path);
  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> pixels(static_cast<std::size_t>(n) * dim);
  if (!img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size())))
    throw IoError(images_path + ": truncated payload");

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("cannot open " + labels_path);
  if (read_be32(lab, labels_path) != 0x00000801u)
    throw IoError(labels_path + ": bad magic (want 0x00000801)");
  const std::uint32_t n_labels = read_be32(lab, labels_path);
  if (n_labels != n)
    throw IoError(labels_path + ": label count " + std::to_string(n_labels) +
                  " does not match image count " + std::to_string(n));
  std::vector<unsigned char> raw_labels(n_labels);
  if (!lab.read(reinterpret_cast<char*>(raw_labels.data()), n_labels))
    throw IoError(labels_path + ": truncated payload");

  LabeledDataset ds;
  ds.inputs = Mat(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < dim; ++p)
      ds.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) =
          static_cast<double>(pixels[i * dim + p]) / 255.0;
  ds.labels.assign(raw_labels.begin(), raw_labels.end());
  ds.num_classes = 10;
  ds.normalization_divisor = 255.0;
  return ds;
}

Mat gen_ood(const OodSpec& spec, int input_dim) {
  if (spec.scale_factor <= 0.0) throw ConfigError("scale_factor must be > 0");
  Rng rng(spec.rng_seed);
  Mat out;
  switch (spec.kind) {
    case OodKind::kGaussianNoise: {
      if (spec.count < 1) throw ConfigError("count must be >= 1");
      out = Mat(spec.count, input_dim);
      std::normal_distribution<double> gauss(0.5, 1.0);
      for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j)
          out(i, j) = std::clamp(gauss(rng), 0.0, 1.0);
      break;
    }
    case OodKind::kUniformNoise: {
      if (spec.count < 1) throw ConfigError("count must be >= 1");
      out = Mat(spec.count, input_dim);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = unit(rng);
      break;
    }
    case OodKind::kExternalCorpus: {
      std::ifstream in(spec.external_path);
      if (!in) throw IoError("cannot open " + spec.external_path);
      std::vector<std::vector<double>> rows;
      std::string line;
      long line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
          try {
            row.push_back(std::stod(cell));
          } catch (const std::exception&) {
            throw ParseError(spec.external_path + ": line " + std::to_string(line_no) +
                             ": bad number '" + cell + "'");
          }
        }
        if (static_cast<int>(row.size()) != input_dim)
          throw ParseError(spec.external_path + ": line " + std::to_string(line_no) +
                           ": expected " + std::to_string(input_dim) + " columns");
        rows.push_back(std::move(row));
        if (spec.count > 0 && static_cast<int>(rows.size()) >= spec.count) break;
      }
      out = Mat(static_cast<Eigen::Index>(rows.size()), input_dim);
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < input_dim; ++j) out(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
      break;
    }
  }
  if (spec.scale_factor != 1.0) out *= spec.scale_factor;
  return out;
}

std::vector<Mat> scale_sweep(const Mat& base, const std::vector<double>& factors) {
  std::vector<Mat> out;
  out.reserve(factors.size());
  for (double f : factors) {
    if (f <= 0.0) throw ConfigError("scale factors must be > 0");
    if (f == 1.0) out.push_back(base);
    else out.push_back(base * f);
  }
  return out;
}

}  // namespace apd::datasets
