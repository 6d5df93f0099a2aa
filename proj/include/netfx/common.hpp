#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace netfx {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using NodeId = std::int32_t;

/// Bad input: malformed files, violated preconditions, inconsistent configs.
/// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or divergence during numerical work (exit code 2).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Named seed streams derived from one master seed. Every stochastic stage
// draws from its own stream so that changing one stage's consumption does
// not shift another stage's draws.
enum class Stream : std::uint64_t {
  kGraph = 1,
  kFeatures,
  kParams,
  kGibbsInit,
  kGibbs,
  kNoise,
  kSplit,
  kModelInit,
  kPiInit,
  kCalibration,
  kDropout,
  kCounterfactual,
  kRepetition,
  kGradCheck,
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0);

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(master, stream, index));
}

/// 64-bit FNV-1a, used for payload checksums and config/bundle hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Shortest round-trippable text for a double (17 significant digits).
std::string format_double(double v);
double parse_double(std::string_view text);

bool all_finite(const Matrix& m);

}  // namespace netfx
