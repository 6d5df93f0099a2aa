#include "netfx/evalkit.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "netfx/reweighter.hpp"

namespace netfx {

using json = nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_same_length(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size()) throw ValidationError(std::string(what) + ": length mismatch");
  if (a.size() == 0) throw ValidationError(std::string(what) + ": empty input");
}

Vector take(const Vector& v, std::span<const NodeId> rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[rows[k]];
  return out;
}

}  // namespace

double pehe(const Vector& tau_hat, const Vector& tau) {
  require_same_length(tau_hat, tau, "pehe");
  return std::sqrt((tau_hat - tau).squaredNorm() / static_cast<double>(tau.size()));
}

double mae_ate(const Vector& tau_hat, const Vector& tau) {
  require_same_length(tau_hat, tau, "mae_ate");
  return std::abs(tau_hat.mean() - tau.mean());
}

std::optional<double> exposure_recovery(const Vector& z_hat, const Vector& z_true) {
  require_same_length(z_hat, z_true, "exposure_recovery");
  return weighted_correlation(z_hat, z_true, Vector::Ones(z_hat.size()));
}

double counterfactual_rmse(const OutcomePredictor& model, const Oracle& oracle, std::uint64_t seed,
                           std::span<const NodeId> rows) {
  const auto n = static_cast<Eigen::Index>(model.size());
  if (static_cast<std::size_t>(n) != oracle.size()) throw ValidationError("counterfactual_rmse: size mismatch");
  Rng rng = make_rng(seed, Stream::kCounterfactual);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector t(n), z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    t[i] = coin(rng) ? 1.0 : 0.0;
    z[i] = unit(rng);
  }
  const Vector diff = model.predict(t, z) - oracle.potential_outcomes(t, z);
  if (rows.empty()) return std::sqrt(diff.squaredNorm() / static_cast<double>(n));
  return std::sqrt(take(diff, rows).squaredNorm() / static_cast<double>(rows.size()));
}

std::size_t metric_index(std::string_view name) {
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
    if (kMetricNames[k] == name) return k;
  }
  throw ValidationError("unknown metric '" + std::string(name) + "'");
}

Summary summarize(std::span<const double> values) {
  std::vector<double> v;
  for (double x : values) {
    if (std::isfinite(x)) v.push_back(x);
  }
  if (v.empty()) return {kNaN, kNaN};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

void EffectReport::finalize() {
  repetitions = static_cast<int>(within_runs.size());
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
    std::vector<double> a, b;
    for (const auto& r : within_runs) a.push_back(r[k]);
    for (const auto& r : out_of_sample_runs) b.push_back(r[k]);
    within[k] = summarize(a);
    out_of_sample[k] = summarize(b);
  }
}

// ------------------------------------------------------------ serialization

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

json summaries(const std::array<Summary, kMetricNames.size()>& s) {
  json out = json::object();
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
    out[std::string(kMetricNames[k])] = {{"mean", number(s[k].mean)}, {"std", number(s[k].std)}};
  }
  return out;
}

json runs(const std::vector<MetricValues>& rs) {
  json out = json::array();
  for (const auto& r : rs) {
    json row = json::object();
    for (std::size_t k = 0; k < kMetricNames.size(); ++k) row[std::string(kMetricNames[k])] = number(r[k]);
    out.push_back(row);
  }
  return out;
}

std::array<Summary, kMetricNames.size()> summaries_from(const json& j) {
  std::array<Summary, kMetricNames.size()> s{};
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
    const auto& m = j.at(std::string(kMetricNames[k]));
    s[k] = {number(m.at("mean")), number(m.at("std"))};
  }
  return s;
}

std::vector<MetricValues> runs_from(const json& j) {
  std::vector<MetricValues> out;
  for (const auto& row : j) {
    MetricValues v{};
    for (std::size_t k = 0; k < kMetricNames.size(); ++k) v[k] = number(row.at(std::string(kMetricNames[k])));
    out.push_back(v);
  }
  return out;
}

}  // namespace

std::string report_to_json(const EffectReport& report) {
  json j{{"format", "netfx-report-1"},
         {"repetitions", report.repetitions},
         {"z_eval", report.z_eval},
         {"within", summaries(report.within)},
         {"out_of_sample", summaries(report.out_of_sample)},
         {"within_runs", runs(report.within_runs)},
         {"out_of_sample_runs", runs(report.out_of_sample_runs)}};
  return j.dump(2) + "\n";
}

EffectReport report_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("report: ") + e.what());
  }
  EffectReport r;
  r.repetitions = j.at("repetitions").get<int>();
  r.z_eval = j.at("z_eval").get<std::string>();
  r.within = summaries_from(j.at("within"));
  r.out_of_sample = summaries_from(j.at("out_of_sample"));
  r.within_runs = runs_from(j.at("within_runs"));
  r.out_of_sample_runs = runs_from(j.at("out_of_sample_runs"));
  return r;
}

std::string report_table(const EffectReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-18s %24s %24s\n", "metric", "within-sample", "out-of-sample");
  out << line;
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
    const auto& a = report.within[k];
    const auto& b = report.out_of_sample[k];
    std::snprintf(line, sizeof line, "%-18s %11.4f +- %-9.4f %11.4f +- %-9.4f\n",
                  std::string(kMetricNames[k]).c_str(), a.mean, a.std, b.mean, b.std);
    out << line;
  }
  out << "repetitions: " << report.repetitions << ", effects evaluated at z = " << report.z_eval << "\n";
  return out.str();
}

// ---------------------------------------------------------------- experiment

std::string ZEval::describe() const { return fixed ? format_double(*fixed) : "realized"; }

Vector ZEval::resolve(const Dataset& data) const {
  if (fixed) {
    if (*fixed < 0.0 || *fixed > 1.0) throw ValidationError("z_eval must lie in [0, 1]");
    return Vector::Constant(static_cast<Eigen::Index>(data.size()), *fixed);
  }
  if (data.z_true.size() != static_cast<Eigen::Index>(data.size())) {
    throw ValidationError("realized z_eval needs ground-truth exposures");
  }
  return data.z_true;
}

SplitMetrics evaluate_predictor(const OutcomePredictor& model, const Benchmark& bench, const Split& split,
                                const ZEval& z_eval, std::uint64_t cf_seed) {
  const Vector z = z_eval.resolve(bench.data);
  const Effects est = effect_estimates(model, z);
  const Effects truth = bench.oracle.effects(z);
  const Vector z_hat = model.exposure(bench.data.t);

  auto compute = [&](std::span<const NodeId> rows) {
    MetricValues m{};
    const Vector de_hat = take(est.de, rows), de = take(truth.de, rows);
    const Vector se_hat = take(est.se, rows), se = take(truth.se, rows);
    m[metric_index("sqrt_pehe_de")] = pehe(de_hat, de);
    m[metric_index("mae_de")] = mae_ate(de_hat, de);
    m[metric_index("sqrt_pehe_se")] = pehe(se_hat, se);
    m[metric_index("mae_se")] = mae_ate(se_hat, se);
    m[metric_index("sqrt_pehe_te")] = pehe(take(est.te, rows), take(truth.te, rows));
    m[metric_index("cf_rmse")] = counterfactual_rmse(model, bench.oracle, cf_seed, rows);
    const auto r = exposure_recovery(take(z_hat, rows), take(bench.data.z_true, rows));
    m[metric_index("exposure_pearson")] = r ? *r : kNaN;
    return m;
  };
  return SplitMetrics{compute(split.train), compute(split.heldout)};
}

EffectReport run_experiment(const Benchmark& bench, const ExperimentConfig& config) {
  if (config.repetitions < 1) throw ValidationError("repetitions must be positive");
  const auto reps = static_cast<std::size_t>(config.repetitions);
  std::vector<SplitMetrics> results(reps);
  std::vector<std::exception_ptr> errors(reps);

  auto run_one = [&](std::size_t r) {
    try {
      TrainConfig tc = config.train;
      tc.seed = derive_seed(config.master_seed, Stream::kRepetition, r);
      const FitResult fitted = fit(bench.data, tc);
      const FittedModel model(fitted.model, bench.data.net, bench.data.x);
      results[r] = evaluate_predictor(model, bench, fitted.split, config.z_eval, tc.seed);
    } catch (...) {
      errors[r] = std::current_exception();
    }
  };

  const auto jobs = static_cast<std::size_t>(std::max(1, config.jobs));
  if (jobs == 1) {
    for (std::size_t r = 0; r < reps; ++r) run_one(r);
  } else {
    // Repetitions are independent and write to their own slot, so the
    // result does not depend on scheduling.
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < std::min(jobs, reps); ++w) {
      workers.emplace_back([&] {
        for (std::size_t r = next++; r < reps; r = next++) run_one(r);
      });
    }
    for (auto& w : workers) w.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  EffectReport report;
  report.z_eval = config.z_eval.describe();
  for (const auto& r : results) {
    report.within_runs.push_back(r.within);
    report.out_of_sample_runs.push_back(r.out_of_sample);
  }
  report.finalize();
  return report;
}

std::vector<SweepRow> interference_sweep(const BenchmarkConfig& base, const ExperimentConfig& config,
                                         std::span<const double> scales) {
  std::vector<SweepRow> rows;
  for (double s : scales) {
    if (!(s >= 0.0)) throw ValidationError("interference scales must be nonnegative");
    BenchmarkConfig bc = base;
    bc.priors.interference_scale = s;
    const Benchmark bench = generate_benchmark(bc);
    rows.push_back(SweepRow{s, run_experiment(bench, config)});
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "scale,metric,mean,std\n";
  auto cell = [](double v) { return std::isfinite(v) ? format_double(v) : std::string("nan"); };
  for (const auto& row : rows) {
    for (int heldout = 0; heldout < 2; ++heldout) {
      const auto& s = heldout ? row.report.out_of_sample : row.report.within;
      for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
        out += format_double(row.scale) + "," + std::string(kMetricNames[k]) +
               (heldout ? "_heldout," : "_within,") + cell(s[k].mean) + "," + cell(s[k].std) + "\n";
      }
    }
  }
  return out;
}

std::string exposure_scatter_csv(const Vector& z_hat, const Vector& z_bar, const Vector& z_true) {
  if (z_hat.size() != z_true.size() || z_bar.size() != z_true.size()) {
    throw ValidationError("exposure_scatter: length mismatch");
  }
  std::string out = "id,z_hat,z_bar,z_true\n";
  for (Eigen::Index i = 0; i < z_hat.size(); ++i) {
    out += std::to_string(i) + "," + format_double(z_hat[i]) + "," + format_double(z_bar[i]) + "," +
           format_double(z_true[i]) + "\n";
  }
  return out;
}

}  // namespace netfx
