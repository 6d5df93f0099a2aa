#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "netfx/model.hpp"
#include "netfx/synthgen.hpp"
#include "netfx/trainer.hpp"

namespace netfx {

double pehe(const Vector& tau_hat, const Vector& tau);
double mae_ate(const Vector& tau_hat, const Vector& tau);
/// Pearson correlation; nullopt if either vector is constant.
std::optional<double> exposure_recovery(const Vector& z_hat, const Vector& z_true);

/// Draws t_i ~ Bernoulli(0.5), z_i ~ Uniform(0,1) and scores the model
/// against the noiseless oracle. Restricted to `rows` when non-empty.
double counterfactual_rmse(const OutcomePredictor& model, const Oracle& oracle, std::uint64_t seed,
                           std::span<const NodeId> rows = {});

inline constexpr std::array<std::string_view, 7> kMetricNames{
    "sqrt_pehe_de", "mae_de", "sqrt_pehe_se", "mae_se", "sqrt_pehe_te", "cf_rmse", "exposure_pearson"};

/// One value per kMetricNames entry; NaN marks an undefined metric.
using MetricValues = std::array<double, kMetricNames.size()>;

std::size_t metric_index(std::string_view name);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

Summary summarize(std::span<const double> values);

struct EffectReport {
  int repetitions = 0;
  std::string z_eval = "realized";
  std::array<Summary, kMetricNames.size()> within{};
  std::array<Summary, kMetricNames.size()> out_of_sample{};
  std::vector<MetricValues> within_runs;
  std::vector<MetricValues> out_of_sample_runs;

  const Summary& get(std::string_view metric, bool heldout = false) const {
    return (heldout ? out_of_sample : within)[metric_index(metric)];
  }
  void finalize();
};

std::string report_to_json(const EffectReport& report);
EffectReport report_from_json(std::string_view text);
std::string report_table(const EffectReport& report);

/// Where direct and spillover effects are evaluated: each unit's realized
/// ground-truth exposure, or one fixed exposure for all units.
struct ZEval {
  std::optional<double> fixed;

  std::string describe() const;
  Vector resolve(const Dataset& data) const;
};

struct SplitMetrics {
  MetricValues within{};
  MetricValues out_of_sample{};
};

SplitMetrics evaluate_predictor(const OutcomePredictor& model, const Benchmark& bench, const Split& split,
                                const ZEval& z_eval, std::uint64_t cf_seed);

struct ExperimentConfig {
  TrainConfig train;
  int repetitions = 10;
  std::uint64_t master_seed = 0;
  ZEval z_eval;
  int jobs = 1;
};

/// Independent fits with per-repetition seeds derived from master_seed.
EffectReport run_experiment(const Benchmark& bench, const ExperimentConfig& config);

struct SweepRow {
  double scale = 0.0;
  EffectReport report;
};

std::vector<SweepRow> interference_sweep(const BenchmarkConfig& base, const ExperimentConfig& config,
                                         std::span<const double> scales);
/// Columns: scale, metric, mean, std (metric names carry a _within or
/// _heldout suffix).
std::string sweep_csv(std::span<const SweepRow> rows);
/// Columns: id, z_hat, z_bar, z_true.
std::string exposure_scatter_csv(const Vector& z_hat, const Vector& z_bar, const Vector& z_true);

}  // namespace netfx
