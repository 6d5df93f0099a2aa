#include "netfx/reweighter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace netfx {

using diff::Tape;
using diff::Var;

PiModel PiModel::initialize(std::size_t input_dim, std::uint64_t seed,
                            const std::vector<std::size_t>& widths) {
  PiModel pi;
  pi.input_dim = input_dim;
  Rng rng = make_rng(seed, Stream::kPiInit);
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), widths.begin(), widths.end());
  dims.push_back(1);
  Mlp::init(pi.block, dims, rng);
  pi.adam = diff::AdamState::for_block(pi.block);
  return pi;
}

Calibration make_calibration(const Vector& t, const Vector& z, std::uint64_t seed) {
  if (t.size() != z.size()) throw ValidationError("make_calibration: length mismatch");
  const auto n = static_cast<std::size_t>(t.size());
  auto permutation = [n](std::uint64_t s) {
    std::vector<Eigen::Index> p(n);
    std::iota(p.begin(), p.end(), 0);
    Rng rng(s);
    std::shuffle(p.begin(), p.end(), rng);
    return p;
  };
  const auto pt = permutation(derive_seed(seed, Stream::kCalibration, 0));
  const auto pz = permutation(derive_seed(seed, Stream::kCalibration, 1));
  Calibration cal{Vector(t.size()), Vector(z.size())};
  for (std::size_t i = 0; i < n; ++i) {
    cal.t[static_cast<Eigen::Index>(i)] = t[pt[i]];
    cal.z[static_cast<Eigen::Index>(i)] = z[pz[i]];
  }
  return cal;
}

Matrix pi_inputs(const Matrix& r, const Vector& t, const Vector& z) {
  if (r.rows() != t.size() || r.rows() != z.size()) throw ValidationError("pi_inputs: length mismatch");
  Matrix in(r.rows(), r.cols() + 2);
  in << r, t, z;
  return in;
}

Var pi_loss(Tape& tape, PiModel& pi, const Matrix& obs, const Matrix& cal) {
  if (obs.rows() != cal.rows()) {
    throw ValidationError("pi: observational and calibration sets must have equal size");
  }
  if (static_cast<std::size_t>(obs.cols()) != pi.input_dim || obs.cols() != cal.cols()) {
    throw ValidationError("pi: input width mismatch");
  }
  Matrix stacked(obs.rows() + cal.rows(), obs.cols());
  stacked << obs, cal;
  Vector labels(stacked.rows());
  labels.head(obs.rows()).setOnes();
  labels.tail(cal.rows()).setZero();
  const Var prob = Mlp::forward(tape, pi.block, tape.constant(std::move(stacked)), Activation::kSigmoid);
  return diff::bce_loss(tape, prob, labels);
}

double train_pi(PiModel& pi, const Matrix& obs, const Matrix& cal, int epochs, double lr) {
  if (epochs < 0) throw ValidationError("train_pi: epochs must be nonnegative");
  const diff::AdamConfig adam{lr};
  double loss = 0.0;
  for (int e = 0; e < epochs; ++e) {
    pi.block.zero_grad();
    Tape tape;
    const Var l = pi_loss(tape, pi, obs, cal);
    loss = tape.value(l)(0, 0);
    if (!std::isfinite(loss)) throw NumericalError("pi loss is non-finite at step " + std::to_string(e));
    tape.backward(l);
    diff::adam_step(pi.block, pi.adam, adam);
  }
  return loss;
}

Vector pi_predict(const PiModel& pi, const Matrix& inputs) {
  if (static_cast<std::size_t>(inputs.cols()) != pi.input_dim) {
    throw ValidationError("pi_predict: input width mismatch");
  }
  // Taped forward on a scratch copy keeps eval numerics identical to training.
  PiModel scratch = pi;
  Tape tape;
  const Var p = Mlp::forward(tape, scratch.block, tape.constant(inputs), Activation::kSigmoid);
  return tape.value(p).col(0);
}

WeightVector weights_from_probabilities(const Vector& pi, double clip_eps, bool normalize) {
  if (!(clip_eps > 0.0 && clip_eps < 0.5)) throw ValidationError("clip_eps must lie in (0, 0.5)");
  WeightVector out{Vector(pi.size()), normalize};
  for (Eigen::Index i = 0; i < pi.size(); ++i) {
    const double p = std::clamp(pi[i], clip_eps, 1.0 - clip_eps);
    out.w[i] = (1.0 - p) / p;
  }
  if (normalize && pi.size() > 0) out.w /= out.w.mean();
  return out;
}

WeightVector sample_weights(const PiModel& pi, const Matrix& r, const Vector& t, const Vector& z,
                            double clip_eps, bool normalize) {
  return weights_from_probabilities(pi_predict(pi, pi_inputs(r, t, z)), clip_eps, normalize);
}

LearnedWeights learn_weights(const Matrix& r, const Vector& t, const Vector& z,
                             const WeightLearning& options) {
  LearnedWeights out{PiModel::initialize(static_cast<std::size_t>(r.cols()) + 2, options.seed), {}, 0.0};
  const Matrix obs = pi_inputs(r, t, z);
  for (int round = 0; round < options.rounds; ++round) {
    const Calibration cal =
        make_calibration(t, z, derive_seed(options.seed, Stream::kCalibration, static_cast<std::uint64_t>(round)));
    out.last_loss = train_pi(out.pi, obs, pi_inputs(r, cal.t, cal.z), options.steps_per_round, options.lr);
  }
  out.weights = sample_weights(out.pi, r, t, z, options.clip_eps, options.normalize);
  return out;
}

std::optional<double> weighted_correlation(const Vector& a, const Vector& b, const Vector& w) {
  if (a.size() != b.size() || a.size() != w.size()) {
    throw ValidationError("weighted_correlation: length mismatch");
  }
  const double sw = w.sum();
  if (!(sw > 0.0)) return std::nullopt;
  const double ma = a.dot(w) / sw;
  const double mb = b.dot(w) / sw;
  const Vector da = a.array() - ma;
  const Vector db = b.array() - mb;
  const double cov = (w.array() * da.array() * db.array()).sum();
  const double va = (w.array() * da.array().square()).sum();
  const double vb = (w.array() * db.array().square()).sum();
  // Relative threshold: a constant column leaves only rounding residue.
  const double eps = 1e-24 * sw;
  if (va <= eps * (1.0 + ma * ma) || vb <= eps * (1.0 + mb * mb)) return std::nullopt;
  return cov / std::sqrt(va * vb);
}

DecorrelationReport decorrelation_report(const Matrix& r, const Vector& t, const Vector& z,
                                         const Vector& w) {
  if ((w.array() <= 0.0).any()) throw ValidationError("decorrelation_report: weights must be positive");
  DecorrelationReport rep;
  rep.corr_tz = weighted_correlation(t, z, w);
  rep.t_constant = !weighted_correlation(t, t, w).has_value();
  rep.z_constant = !weighted_correlation(z, z, w).has_value();
  for (Eigen::Index k = 0; k < r.cols(); ++k) {
    const Vector col = r.col(k);
    if (!weighted_correlation(col, col, w)) {
      rep.constant_columns.push_back(static_cast<std::size_t>(k));
      continue;
    }
    if (auto c = weighted_correlation(col, t, w)) rep.max_abs_corr_rt = std::max(rep.max_abs_corr_rt, std::abs(*c));
    if (auto c = weighted_correlation(col, z, w)) rep.max_abs_corr_rz = std::max(rep.max_abs_corr_rz, std::abs(*c));
  }
  return rep;
}

}  // namespace netfx
