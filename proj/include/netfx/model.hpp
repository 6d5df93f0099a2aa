#pragma once

#include <optional>
#include <vector>

#include "netfx/diffcore.hpp"
#include "netfx/graph.hpp"
#include "netfx/synthgen.hpp"

namespace netfx {

enum class Activation { kNone, kRelu, kSigmoid };

/// Fully connected stack stored as W0,b0,W1,b1,... in a ParamBlock.
/// Hidden layers use ReLU; the last layer uses `output`.
struct Mlp {
  static void init(diff::ParamBlock& block, const std::vector<std::size_t>& dims, Rng& rng);
  static std::size_t layers(const diff::ParamBlock& block) { return block.tensors().size() / 2; }

  /// `dropout_rng` non-null enables inverted dropout with rate `dropout`
  /// after each hidden activation.
  static diff::Var forward(diff::Tape& tape, diff::ParamBlock& block, diff::Var x, Activation output,
                           double dropout = 0.0, Rng* dropout_rng = nullptr);
};

struct ModelConfig {
  std::size_t input_dim = 10;
  std::vector<std::size_t> encoder_widths{32, 64};
  std::vector<std::size_t> head_widths{128, 128, 128};
  bool use_attention = true;
  bool use_weights = true;
  double dropout = 0.0;

  std::size_t representation_dim() const { return encoder_widths.back(); }
};

/// Neighbor-only and self-inclusive supports of a graph.
struct GraphContext {
  diff::SegmentIndex neighbors;
  diff::SegmentIndex with_self;

  explicit GraphContext(const Network& net);
};

struct ModelState {
  ModelConfig config;
  diff::ParamBlock encoder{"encoder"};
  diff::ParamBlock head0{"head0"};
  diff::ParamBlock head1{"head1"};

  static ModelState initialize(const ModelConfig& config, std::uint64_t seed);
  std::vector<diff::ParamBlock*> blocks() { return {&encoder, &head0, &head1}; }
  std::vector<const diff::ParamBlock*> blocks() const { return {&encoder, &head0, &head1}; }
};

/// Taped forward pass through encoder, attention, exposure and aggregation.
struct ForwardVars {
  diff::Var h;
  diff::Var attention;       // E x 1 over neighbors (exposure weights)
  diff::Var self_attention;  // E' x 1 over neighbors ∪ self (aggregation weights)
  diff::Var exposure;        // n x 1, ẑ
  diff::Var representation;  // n x 64, R
};

struct TrainingNoise {
  double dropout = 0.0;
  Rng* rng = nullptr;
};

ForwardVars forward_representation(diff::Tape& tape, ModelState& model, const GraphContext& ctx,
                                   const Matrix& x, const Vector& t, TrainingNoise noise = {});
/// head_{t_i}(r_i ⊕ z_i) for i in `rows` (all rows if empty), taped;
/// returns n x 1 with zeros outside `rows`.
diff::Var forward_outcome(diff::Tape& tape, ModelState& model, diff::Var r, diff::Var z,
                          const Vector& t, std::span<const NodeId> rows = {},
                          TrainingNoise noise = {});

// Plain evaluations (eval mode: no dropout).
Matrix encode(const ModelState& model, const Matrix& x);
AttentionMap attention_scores(const Matrix& h, const diff::SegmentIndex& index);
Vector estimated_exposure(const AttentionMap& attention, const Vector& t);
Matrix aggregate(const Matrix& h, const AttentionMap& self_attention);
Vector predict(const ModelState& model, const Matrix& r, const Vector& t, const Vector& z);

/// Everything the frozen model computes from (X, graph); independent of t.
struct Representation {
  Matrix h;
  AttentionMap attention;
  AttentionMap self_attention;
  Matrix r;
};

Representation represent(const ModelState& model, const GraphContext& ctx, const Matrix& x);

/// Counterfactual query surface shared by trained models and the oracle.
class OutcomePredictor {
 public:
  virtual ~OutcomePredictor() = default;
  virtual std::size_t size() const = 0;
  virtual Vector predict(const Vector& t, const Vector& z) const = 0;
  /// Peer exposure this predictor perceives for treatment vector t.
  virtual Vector exposure(const Vector& t) const = 0;
};

class FittedModel final : public OutcomePredictor {
 public:
  FittedModel(ModelState model, const Network& net, const Matrix& x);

  std::size_t size() const override { return static_cast<std::size_t>(rep_.r.rows()); }
  Vector predict(const Vector& t, const Vector& z) const override;
  Vector exposure(const Vector& t) const override;

  const ModelState& model() const { return model_; }
  const Representation& representation() const { return rep_; }

 private:
  ModelState model_;
  Representation rep_;
};

class OraclePredictor final : public OutcomePredictor {
 public:
  explicit OraclePredictor(const Oracle& oracle) : oracle_(&oracle) {}

  std::size_t size() const override { return oracle_->size(); }
  Vector predict(const Vector& t, const Vector& z) const override {
    return oracle_->potential_outcomes(t, z);
  }
  Vector exposure(const Vector& t) const override {
    return compute_exposure(oracle_->attention(), t);
  }

 private:
  const Oracle* oracle_;
};

/// DÊ = ŷ(1,z) − ŷ(0,z), SÊ = ŷ(0,z) − ŷ(0,0), TÊ = ŷ(1,1) − ŷ(0,0).
Effects effect_estimates(const OutcomePredictor& model, const Vector& z_eval);

}  // namespace netfx
