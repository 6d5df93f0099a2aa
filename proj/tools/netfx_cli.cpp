// netfx: generate benchmarks, train and evaluate DWR models, sweep the
// interference level and check gradients, all driven by one config file.
//
// Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "netfx/config.hpp"
#include "netfx/evalkit.hpp"
#include "netfx/synthgen.hpp"
#include "netfx/trainer.hpp"
#include "netfx/tsv.hpp"

namespace fs = std::filesystem;
using namespace netfx;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("NETFX_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  long long v = -1;
  try {
    v = parse_int(raw);
  } catch (const ValidationError&) {
  }
  if (v < 0) throw ValidationError("NETFX_SEED must be a nonnegative integer, got '" + std::string(raw) + "'");
  return static_cast<std::uint64_t>(v);
}

/// Explicit --config wins; otherwise the config echoed into `fallback_dir`
/// (a bundle), otherwise built-in defaults.
RunConfig resolve_config(const std::string& path, const std::string& fallback_dir = {}) {
  if (!path.empty()) return load_run_config(path, env_seed());
  if (!fallback_dir.empty() && fs::exists(fs::path(fallback_dir) / "config.ini")) {
    return load_run_config(fs::path(fallback_dir) / "config.ini", env_seed());
  }
  return parse_run_config("", {}, env_seed());
}

void prepare_output(const fs::path& dir, const RunConfig& config) {
  fs::create_directories(dir);
  write_file(dir / "config.ini", config.text);
}

std::string effects_tsv(const Effects& e) {
  std::string out = "id\tDE\tSE\tTE\n";
  for (Eigen::Index i = 0; i < e.de.size(); ++i) {
    out += std::to_string(i) + '\t' + format_double(e.de(i)) + '\t' + format_double(e.se(i)) + '\t' +
           format_double(e.te(i)) + '\n';
  }
  return out;
}

std::string weights_tsv(const Vector& w) {
  std::string out = "id\tw\n";
  for (Eigen::Index i = 0; i < w.size(); ++i) out += std::to_string(i) + '\t' + format_double(w(i)) + '\n';
  return out;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

// ------------------------------------------------------------------ commands

struct GenerateArgs {
  std::string config;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  const RunConfig config = resolve_config(a.config);
  const Benchmark bench = generate_benchmark(config.bench);
  write_bundle(a.out, bench, config.text);
  const Dataset& d = bench.data;
  std::cout << "nodes            " << d.size() << '\n'
            << "edges            " << d.net.num_edges() << '\n'
            << "treated_fraction " << fmt("%.4f", d.t.mean()) << '\n'
            << "mean_exposure    " << fmt("%.4f", d.z_true.mean()) << '\n'
            << "bundle           " << a.out << '\n';
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string bundle;
  std::string out;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig config = resolve_config(a.config, a.bundle);
  const Benchmark bench = read_bundle(a.bundle);
  const int every = std::max(1, config.train.outer_epochs / 10);
  const FitResult fit_result = fit(bench.data, config.train, [&](const EpochRecord& r) {
    if (a.quiet || (r.epoch % every != 0 && r.epoch + 1 != config.train.outer_epochs)) return;
    std::cerr << "epoch " << r.epoch << "  loss " << fmt("%.6f", r.outcome_loss) << "  pi_loss "
              << fmt("%.6f", r.pi_loss) << "  w_max " << fmt("%.3f", r.weight_max) << '\n';
  });

  const fs::path out(a.out);
  prepare_output(out, config);
  save_checkpoint(out / "checkpoint.bin", fit_result.model, fit_result.pi,
                  CheckpointMeta{config.train.seed, config.hash(), config.train.split_fraction});
  write_file(out / "history.jsonl", history_jsonl(fit_result.history, config.train));
  write_file(out / "weights.tsv", weights_tsv(fit_result.weights));
  std::cout << "final_loss " << fmt("%.6f", fit_result.history.back().outcome_loss) << '\n'
            << "checkpoint " << (out / "checkpoint.bin").string() << '\n';
  return 0;
}

struct EvaluateArgs {
  std::string config;
  std::string bundle;
  std::string checkpoint;
  std::string out;
  bool use_oracle = false;
  int repetitions = 0;
  int jobs = 0;
};

int cmd_evaluate(const EvaluateArgs& a) {
  RunConfig config = resolve_config(a.config, a.bundle);
  const Benchmark bench = read_bundle(a.bundle);
  if (a.repetitions > 0) config.experiment.repetitions = a.repetitions;
  if (a.jobs > 0) config.experiment.jobs = a.jobs;
  if (!a.checkpoint.empty() && a.use_oracle) {
    throw ValidationError("--checkpoint and --use-oracle are mutually exclusive");
  }

  const fs::path out(a.out);
  EffectReport report;
  std::optional<std::string> scatter;
  std::optional<std::string> effects;
  const Vector z_bar = compute_exposure(uniform_attention(neighbor_index(bench.data.net)), bench.data.t);

  if (!a.checkpoint.empty() || a.use_oracle) {
    std::unique_ptr<OutcomePredictor> model;
    std::uint64_t seed = config.seed;
    double fraction = config.train.split_fraction;
    if (a.use_oracle) {
      model = std::make_unique<OraclePredictor>(bench.oracle);
    } else {
      const ModelConfig expected = config.train.model_config(static_cast<std::size_t>(bench.data.x.cols()));
      Checkpoint ckpt = restore_checkpoint(a.checkpoint, expected);
      seed = ckpt.meta.seed;
      fraction = ckpt.meta.split_fraction;
      model = std::make_unique<FittedModel>(std::move(ckpt.model), bench.data.net, bench.data.x);
    }
    const Split split = make_split(bench.data.size(), fraction, seed);
    const SplitMetrics m = evaluate_predictor(*model, bench, split, config.experiment.z_eval,
                                              derive_seed(seed, Stream::kCounterfactual, 0));
    report.repetitions = 1;
    report.z_eval = config.experiment.z_eval.describe();
    report.within_runs.push_back(m.within);
    report.out_of_sample_runs.push_back(m.out_of_sample);
    report.finalize();
    scatter = exposure_scatter_csv(model->exposure(bench.data.t), z_bar, bench.data.z_true);
    effects = effects_tsv(effect_estimates(*model, config.experiment.z_eval.resolve(bench.data)));
  } else {
    report = run_experiment(bench, config.experiment);
  }

  prepare_output(out, config);
  write_file(out / "report.json", report_to_json(report));
  if (scatter) write_file(out / "exposure_scatter.csv", *scatter);
  if (effects) write_file(out / "effects.tsv", *effects);
  std::cout << report_table(report);
  return 0;
}

struct SweepArgs {
  std::string config;
  std::string out;
  std::vector<double> scales{0.0, 0.5, 1.0, 1.5, 2.0};
  int repetitions = 0;
  int jobs = 0;
};

int cmd_sweep(const SweepArgs& a) {
  RunConfig config = resolve_config(a.config);
  if (a.repetitions > 0) config.experiment.repetitions = a.repetitions;
  if (a.jobs > 0) config.experiment.jobs = a.jobs;
  const std::vector<SweepRow> rows = interference_sweep(config.bench, config.experiment, a.scales);
  const fs::path out(a.out);
  prepare_output(out, config);
  const std::string csv = sweep_csv(rows);
  write_file(out / "sweep.csv", csv);
  std::cout << csv;
  return 0;
}

struct GradCheckArgs {
  std::string config;
  std::string out;
  std::optional<std::size_t> corrupt;
};

std::string describe(const char* label, const diff::GradCheckReport& r) {
  return std::string(label) + " max_rel_err " + fmt("%.3e", r.max_rel_err) + " checked " +
         std::to_string(r.checked) + " kink_crossings " + std::to_string(r.kink_crossings) + " worst " + r.worst_name + " (coordinate " +
         std::to_string(r.worst_coordinate) + ", analytic " + fmt("%.9g", r.worst_analytic) +
         ", numeric " + fmt("%.9g", r.worst_numeric) + ") " + (r.passed ? "PASS" : "FAIL") + "\n";
}

int cmd_gradcheck(const GradCheckArgs& a) {
  RunConfig config = resolve_config(a.config);
  BenchmarkConfig bench_config = config.bench;
  bench_config.nodes = config.gradcheck.nodes;
  const Benchmark bench = generate_benchmark(bench_config);

  diff::GradCheckOptions options;
  options.h = config.gradcheck.h;
  options.tol = config.gradcheck.tol;
  options.max_coords_per_tensor = config.gradcheck.max_coords_per_tensor;
  options.seed = derive_seed(config.seed, Stream::kGradCheck, 0);
  options.corrupt_coordinate = a.corrupt ? a.corrupt : config.gradcheck.corrupt_coordinate;

  const DwrGradCheck result = check_dwr_gradients(bench.data, config.train, options);
  const std::string text = describe("dwr_loss", result.outcome) + describe("pi_loss", result.pi);
  std::cout << text;
  if (!a.out.empty()) {
    prepare_output(a.out, config);
    write_file(fs::path(a.out) / "gradcheck.txt", text);
  }
  return result.passed() ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"netfx: networked treatment-effect estimation with dual weighting"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate a semi-synthetic benchmark bundle");
  generate->add_option("-c,--config", gen.config, "Config file")->check(CLI::ExistingFile);
  generate->add_option("-o,--out", gen.out, "Bundle directory")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Fit a DWR model to a bundle");
  train->add_option("-c,--config", tr.config, "Config file (default: the bundle's config.ini)");
  train->add_option("-b,--bundle", tr.bundle, "Bundle directory")->required();
  train->add_option("-o,--out", tr.out, "Output directory")->required();
  train->add_flag("-q,--quiet", tr.quiet, "Suppress per-epoch progress");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint, the oracle, or the repetition protocol");
  evaluate->add_option("-c,--config", ev.config, "Config file (default: the bundle's config.ini)");
  evaluate->add_option("-b,--bundle", ev.bundle, "Bundle directory")->required();
  evaluate->add_option("--checkpoint", ev.checkpoint, "Trained checkpoint to score");
  evaluate->add_flag("--use-oracle", ev.use_oracle, "Score the ground-truth oracle as the model");
  evaluate->add_option("-r,--repetitions", ev.repetitions, "Override [eval] repetitions")->check(CLI::PositiveNumber);
  evaluate->add_option("-j,--jobs", ev.jobs, "Parallel repetitions")->check(CLI::PositiveNumber);
  evaluate->add_option("-o,--out", ev.out, "Output directory")->required();

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Repeat the protocol across interference scales");
  sweep->add_option("-c,--config", sw.config, "Config file");
  sweep->add_option("-s,--scales", sw.scales, "Interference scales")->delimiter(',');
  sweep->add_option("-r,--repetitions", sw.repetitions, "Override [eval] repetitions")->check(CLI::PositiveNumber);
  sweep->add_option("-j,--jobs", sw.jobs, "Parallel repetitions")->check(CLI::PositiveNumber);
  sweep->add_option("-o,--out", sw.out, "Output directory")->required();

  GradCheckArgs gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the DWR and pi gradients");
  gradcheck->add_option("-c,--config", gc.config, "Config file");
  gradcheck->add_option("--corrupt", gc.corrupt, "Double the analytic gradient at this flat coordinate");
  gradcheck->add_option("-o,--out", gc.out, "Optional output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*generate) return cmd_generate(gen);
    if (*train) return cmd_train(tr);
    if (*evaluate) return cmd_evaluate(ev);
    if (*sweep) return cmd_sweep(sw);
    if (*gradcheck) return cmd_gradcheck(gc);
  } catch (const NumericalError& e) {
    std::cerr << "netfx: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ValidationError& e) {
    std::cerr << "netfx: " << e.what() << '\n';
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "netfx: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}
