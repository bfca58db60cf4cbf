#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace apd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
// Weight blocks are stored row-major inside flattened parameter vectors.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration or argument contract violation (CLI exit code 2).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

/// Numerical divergence during training or sampling (CLI exit code 3).
class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, std::int64_t iteration)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration(iteration) {}
  std::int64_t iteration;
};

/// Malformed input file.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

/// File-level I/O failure (missing file, bad magic, truncation).
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Sub-seed derivation: one splitmix64 step over (master, stream) so that
// stream k is a pure function of the master seed and k. Adding streams never
// perturbs existing ones.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream * 0xD6E8FEB86659FD93ULL + 1));
}

// Stream indices used by the experiment harness. Chains occupy
// [kStreamChainBase, kStreamChainBase + K); everything else has a fixed slot.
inline constexpr std::uint64_t kStreamChainBase = 1000;
inline constexpr std::uint64_t kStreamGan = 1;
inline constexpr std::uint64_t kStreamInit = 2;
inline constexpr std::uint64_t kStreamData = 3;
inline constexpr std::uint64_t kStreamEval = 4;
inline constexpr std::uint64_t kStreamAttack = 5;
inline constexpr std::uint64_t kStreamDropout = 6;
inline constexpr std::uint64_t kStreamSgdTrain = 10;
inline constexpr std::uint64_t kStreamDropoutTrain = 11;
inline constexpr std::uint64_t kStreamMogFit = 12;
inline constexpr std::uint64_t kStreamActive = 13;
inline constexpr std::uint64_t kStreamOodBase = 20;

// A fresh distribution per call so no Box-Muller state leaks between
// streams; each call consumes a deterministic slice of the rng sequence.
inline Vec normal_vector(Rng& rng, Eigen::Index n) {
  Vec v(n);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

}  // namespace apd
