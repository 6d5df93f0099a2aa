#pragma once

#include <optional>
#include <vector>

#include "netfx/diffcore.hpp"
#include "netfx/model.hpp"

namespace netfx {

/// Discriminator π(r, t, z) = P(observational | r, t, z): {64,64,64} ReLU
/// stack with a sigmoid output.
struct PiModel {
  std::size_t input_dim = 0;
  diff::ParamBlock block{"pi"};
  diff::AdamState adam;

  static PiModel initialize(std::size_t input_dim, std::uint64_t seed,
                            const std::vector<std::size_t>& widths = {64, 64, 64});
};

/// Observational rows with t and z replaced by two independent permutations.
struct Calibration {
  Vector t;
  Vector z;
};

Calibration make_calibration(const Vector& t, const Vector& z, std::uint64_t seed);

/// Rows (r_i, t_i, z_i).
Matrix pi_inputs(const Matrix& r, const Vector& t, const Vector& z);

/// Taped mean BCE of π over observational (label 1) and calibration (label 0)
/// rows stacked in that order.
diff::Var pi_loss(diff::Tape& tape, PiModel& pi, const Matrix& obs, const Matrix& cal);

/// Full-batch Adam steps on the discriminator; returns the last loss.
double train_pi(PiModel& pi, const Matrix& obs, const Matrix& cal, int epochs, double lr);

Vector pi_predict(const PiModel& pi, const Matrix& inputs);

struct WeightVector {
  Vector w;
  bool normalized = false;

  double mean() const { return w.mean(); }
  double max() const { return w.maxCoeff(); }
};

/// w_i = (1 − π_i)/π_i with π clipped to [clip_eps, 1 − clip_eps].
WeightVector weights_from_probabilities(const Vector& pi, double clip_eps, bool normalize);
WeightVector sample_weights(const PiModel& pi, const Matrix& r, const Vector& t, const Vector& z,
                            double clip_eps, bool normalize);

struct WeightLearning {
  int rounds = 200;          // fresh calibration draws
  int steps_per_round = 5;   // discriminator steps per draw
  double lr = 1e-3;
  double clip_eps = 0.01;
  bool normalize = true;
  std::uint64_t seed = 0;
};

struct LearnedWeights {
  PiModel pi;
  WeightVector weights;
  double last_loss = 0.0;
};

/// Standalone density-ratio estimation for fixed (r, t, z).
LearnedWeights learn_weights(const Matrix& r, const Vector& t, const Vector& z,
                             const WeightLearning& options);

/// Weighted Pearson correlation; nullopt when either side has zero
/// weighted variance.
std::optional<double> weighted_correlation(const Vector& a, const Vector& b, const Vector& w);

struct DecorrelationReport {
  std::optional<double> corr_tz;
  double max_abs_corr_rt = 0.0;
  double max_abs_corr_rz = 0.0;
  /// Representation coordinates skipped for zero variance.
  std::vector<std::size_t> constant_columns;
  bool t_constant = false;
  bool z_constant = false;
};

DecorrelationReport decorrelation_report(const Matrix& r, const Vector& t, const Vector& z,
                                         const Vector& w);

}  // namespace netfx
