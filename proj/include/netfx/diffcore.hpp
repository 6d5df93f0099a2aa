#pragma once

// Small reverse-mode differentiation kernel over dense Eigen matrices, with
// the sparse segment operations needed for neighborhood attention. Only the
// primitives below are differentiable; anything else enters a Tape as a
// constant.

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "netfx/common.hpp"

namespace netfx::diff {

struct Tensor {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Named tensors with fixed shapes and a flat coordinate view.
class ParamBlock {
 public:
  ParamBlock() = default;
  explicit ParamBlock(std::string name) : name_(std::move(name)) {}

  /// The returned reference stays valid across later add() calls.
  Tensor& add(std::string name, Matrix init);

  const std::string& name() const { return name_; }
  std::deque<Tensor>& tensors() { return tensors_; }
  const std::deque<Tensor>& tensors() const { return tensors_; }
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;

  std::size_t size() const;
  double& coord(std::size_t k);
  double grad_coord(std::size_t k) const;
  std::string coord_name(std::size_t k) const;

  void zero_grad();
  void set_zero();
  bool all_finite() const;

 private:
  std::pair<std::size_t, std::size_t> locate(std::size_t k) const;

  std::string name_;
  std::deque<Tensor> tensors_;  // deque: references from add() stay valid
};

/// Row-segmented sparse layout: entries offsets[i]..offsets[i+1] belong to
/// row i and point at column ids cols[e]. Used for edge-indexed quantities.
struct SegmentIndex {
  std::vector<std::size_t> offsets;
  std::vector<NodeId> cols;

  std::size_t rows() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t entries() const { return cols.size(); }
};

class Tape {
 public:
  struct Var {
    int id = -1;
  };
  using ForwardFn = std::function<Matrix(const Tape&)>;
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  Var constant(Matrix value);
  /// Leaf bound to a parameter; backward() accumulates into tensor.grad.
  Var param(Tensor& tensor);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(Var v) const { return nodes_[v.id].op; }

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 node and propagates to every
  /// parameter leaf.
  void backward(Var loss);
  /// Recomputes every node from its inputs (parameters re-read).
  void replay();
  /// Hash of the active/inactive pattern of every ReLU on the tape; two
  /// evaluations with equal signatures lie on the same linear piece.
  std::uint64_t kink_signature() const;

  // Used by the primitive implementations.
  Var push(std::string op, std::initializer_list<Var> inputs, ForwardFn forward,
           BackwardFn backward);
  void accumulate(Var v, const Matrix& g);

 private:
  struct Node {
    std::string op;
    Matrix value;
    Matrix grad;
    ForwardFn forward;
    BackwardFn backward;
    Tensor* param = nullptr;
    bool needs_grad = false;
  };
  void check_finite(const Node& node) const;

  std::vector<Node> nodes_;
};

using Var = Tape::Var;

// Dense primitives.
Var matmul(Tape& tape, Var a, Var b);
Var add_bias(Tape& tape, Var x, Var bias);  // bias is 1 x cols, broadcast over rows
Var affine(Tape& tape, Var x, Var weight, Var bias);
Var add(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double c);
Var relu(Tape& tape, Var x);
Var sigmoid(Tape& tape, Var x);
Var concat_cols(Tape& tape, Var a, Var b);
/// x * mask elementwise; mask is a constant (dropout masks, selection).
Var mul_const(Tape& tape, Var x, const Matrix& mask);
/// Rows `ids` of x, in that order.
Var gather_rows(Tape& tape, Var x, std::span<const NodeId> ids);
/// n-row matrix with a's rows placed at ids_a and b's rows at ids_b; rows
/// named by neither are zero.
Var scatter_rows(Tape& tape, std::size_t n, Var a, std::span<const NodeId> ids_a, Var b,
                 std::span<const NodeId> ids_b);
Var sum_all(Tape& tape, Var x);
Var half_sum_squares(Tape& tape, Var x);

// Segment (sparse row) primitives.
/// s_e = h_i . h_{cols[e]} for every entry e of row i; returns E x 1.
Var edge_dot_scores(Tape& tape, Var h, const SegmentIndex& index);
/// Softmax within each row segment, max-shifted; returns E x 1.
Var segment_softmax(Tape& tape, Var scores, const SegmentIndex& index);
/// out_i = sum_e w_e * values[cols[e]]; values is a constant n-vector.
Var segment_weighted_sum(Tape& tape, Var weights, const Vector& values, const SegmentIndex& index);
/// out_i = sum_e w_e * h_{cols[e]}; returns n x k.
Var segment_aggregate(Tape& tape, Var weights, Var h, const SegmentIndex& index);

// Losses.
/// (1/|rows|) sum_{i in rows} w_i (pred_i - target_i)^2; all rows if empty.
Var weighted_mse(Tape& tape, Var pred, const Vector& target, const Vector& w,
                 std::span<const NodeId> rows = {});
/// Mean binary cross-entropy; probabilities clipped to [1e-7, 1 - 1e-7].
Var bce_loss(Tape& tape, Var prob, const Vector& label);

// Plain (non-taped) helpers with the same numerics.
double weighted_mse_value(const Vector& pred, const Vector& target, const Vector& w);
double bce_value(const Vector& prob, const Vector& label);
/// Dense masked softmax; entries outside the support are exactly zero.
Matrix masked_row_softmax(const Matrix& scores, const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& support);
double relu(double x);
double sigmoid(double x);

using LossBuilder = std::function<Var(Tape&)>;

/// Gradients of the scalar built by `build` with respect to every tensor of
/// `blocks` (previous grads are overwritten).
double compute_gradients(const LossBuilder& build, std::span<ParamBlock* const> blocks);

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  /// Per-tensor cap on checked coordinates (sampled with `seed`); 0 = all.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Test hook: flat coordinate (across blocks, in order) whose analytic
  /// gradient is doubled before comparison. Always included in the sample.
  std::optional<std::size_t> corrupt_coordinate;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_coordinate = 0;
  std::string worst_name;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose ±h probe changed some ReLU's active set; the
  /// central difference is not a derivative there, so they are excluded.
  std::size_t kink_crossings = 0;
  bool passed = true;
};

GradCheckReport grad_check(const LossBuilder& build, std::span<ParamBlock* const> blocks,
                           const GradCheckOptions& options = {});

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;

  static AdamState for_block(const ParamBlock& block);
};

/// One bias-corrected Adam update from the gradients stored in `block`.
void adam_step(ParamBlock& block, AdamState& state, const AdamConfig& config);

}  // namespace netfx::diff
