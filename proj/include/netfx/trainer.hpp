#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "netfx/model.hpp"
#include "netfx/reweighter.hpp"
#include "netfx/synthgen.hpp"

namespace netfx {

struct TrainConfig {
  int outer_epochs = 300;
  int pi_epochs_per_outer = 5;
  double lr_outcome = 1e-3;
  double lr_pi = 1e-3;
  double clip_eps = 0.01;
  bool normalize_weights = true;
  std::uint64_t seed = 0;
  bool use_attention = true;
  bool use_weights = true;
  double split_fraction = 0.8;
  bool dropout = false;
  double dropout_rate = 0.5;

  void validate() const;
  ModelConfig model_config(std::size_t input_dim) const;
};

/// Transductive holdout: heldout outcomes are excluded from the loss; the
/// graph, covariates and treatments stay visible.
struct Split {
  std::vector<NodeId> train;
  std::vector<NodeId> heldout;
};

Split make_split(std::size_t n, double fraction, std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double outcome_loss = 0.0;
  double pi_loss = 0.0;
  double weight_mean = 1.0;
  double weight_max = 1.0;
  std::optional<double> corr_tz;           // unweighted, on (t, ẑ)
  DecorrelationReport unweighted;          // on (R, t, ẑ) with unit weights
  DecorrelationReport weighted;            // with the epoch's weights
};

struct FitResult {
  ModelState model;
  PiModel pi;
  Split split;
  std::vector<EpochRecord> history;
  Vector weights;  // last epoch's sample weights
};

/// Observer hook, called after each outer epoch.
using EpochCallback = std::function<void(const EpochRecord&)>;

FitResult fit(const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Weighted outcome loss on `rows` with constant weights `w`, taped.
diff::Var outcome_loss(diff::Tape& tape, ModelState& model, const GraphContext& ctx,
                       const Dataset& data, const Vector& w, std::span<const NodeId> rows,
                       TrainingNoise noise = {});

/// Finite-difference checks at initialization: the weighted outcome loss
/// over all model parameters (weights from the freshly initialized π held
/// constant) and the discriminator loss over all π parameters.
struct DwrGradCheck {
  diff::GradCheckReport outcome;
  diff::GradCheckReport pi;

  bool passed() const { return outcome.passed && pi.passed; }
};

DwrGradCheck check_dwr_gradients(const Dataset& data, const TrainConfig& config,
                                 const diff::GradCheckOptions& options);

std::string history_jsonl(const std::vector<EpochRecord>& history, const TrainConfig& config);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string config_hash;
  double split_fraction = 0.8;
};

struct Checkpoint {
  ModelState model;
  PiModel pi;
  CheckpointMeta meta;
};

/// JSON header line + little-endian float64 payload with an FNV-1a checksum.
std::string serialize_checkpoint(const ModelState& model, const PiModel& pi, const CheckpointMeta& meta);
Checkpoint deserialize_checkpoint(std::string_view bytes,
                                  const std::optional<ModelConfig>& expected = std::nullopt);
void save_checkpoint(const std::filesystem::path& path, const ModelState& model, const PiModel& pi,
                     const CheckpointMeta& meta);
Checkpoint restore_checkpoint(const std::filesystem::path& path,
                              const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace netfx
