#include "netfx/model.hpp"

#include <algorithm>
#include <cmath>

namespace netfx {

namespace {
constexpr double kExposureSlack = 1e-9;
}  // namespace

using diff::Tape;
using diff::Var;

// --------------------------------------------------------------------- Mlp

void Mlp::init(diff::ParamBlock& block, const std::vector<std::size_t>& dims, Rng& rng) {
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(dims[l]);
    const auto fan_out = static_cast<Eigen::Index>(dims[l + 1]);
    // He-uniform for ReLU stacks.
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix w(fan_in, fan_out);
    for (Eigen::Index c = 0; c < fan_out; ++c) {
      for (Eigen::Index r = 0; r < fan_in; ++r) w(r, c) = u(rng);
    }
    block.add("W" + std::to_string(l), std::move(w));
    block.add("b" + std::to_string(l), Matrix::Zero(1, fan_out));
  }
}

Var Mlp::forward(Tape& tape, diff::ParamBlock& block, Var x, Activation output, double dropout,
                 Rng* dropout_rng) {
  auto& ts = block.tensors();
  const std::size_t n_layers = ts.size() / 2;
  Var a = x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    a = diff::affine(tape, a, tape.param(ts[2 * l]), tape.param(ts[2 * l + 1]));
    const bool last = l + 1 == n_layers;
    if (!last) {
      a = diff::relu(tape, a);
      if (dropout_rng != nullptr && dropout > 0.0) {
        const Matrix& v = tape.value(a);
        std::bernoulli_distribution keep(1.0 - dropout);
        Matrix mask(v.rows(), v.cols());
        for (Eigen::Index c = 0; c < v.cols(); ++c) {
          for (Eigen::Index r = 0; r < v.rows(); ++r) {
            mask(r, c) = keep(*dropout_rng) ? 1.0 / (1.0 - dropout) : 0.0;
          }
        }
        a = diff::mul_const(tape, a, mask);
      }
    } else if (output == Activation::kRelu) {
      a = diff::relu(tape, a);
    } else if (output == Activation::kSigmoid) {
      a = diff::sigmoid(tape, a);
    }
  }
  return a;
}

// ------------------------------------------------------------------- model

GraphContext::GraphContext(const Network& net)
    : neighbors(neighbor_index(net)), with_self(self_loop_index(net)) {
  net.require_no_isolated();
}

ModelState ModelState::initialize(const ModelConfig& config, std::uint64_t seed) {
  if (config.encoder_widths.empty() || config.head_widths.empty()) {
    throw ValidationError("model widths must be non-empty");
  }
  ModelState m;
  m.config = config;
  Rng rng = make_rng(seed, Stream::kModelInit);
  std::vector<std::size_t> enc{config.input_dim};
  enc.insert(enc.end(), config.encoder_widths.begin(), config.encoder_widths.end());
  Mlp::init(m.encoder, enc, rng);
  std::vector<std::size_t> head{config.representation_dim() + 1};
  head.insert(head.end(), config.head_widths.begin(), config.head_widths.end());
  head.push_back(1);
  Mlp::init(m.head0, head, rng);
  Mlp::init(m.head1, head, rng);
  return m;
}

ForwardVars forward_representation(Tape& tape, ModelState& model, const GraphContext& ctx,
                                   const Matrix& x, const Vector& t, TrainingNoise noise) {
  if (static_cast<std::size_t>(x.cols()) != model.config.input_dim) {
    throw ValidationError("encoder expects " + std::to_string(model.config.input_dim) +
                          " input columns, got " + std::to_string(x.cols()));
  }
  if (static_cast<std::size_t>(x.rows()) != ctx.neighbors.rows() || t.size() != x.rows()) {
    throw ValidationError("forward: covariates, treatments and graph sizes differ");
  }
  ForwardVars f;
  // Encoder output is ReLU'd, so the final activation is part of the stack.
  f.h = Mlp::forward(tape, model.encoder, tape.constant(x), Activation::kRelu, noise.dropout,
                     noise.rng);
  if (model.config.use_attention) {
    f.attention = diff::segment_softmax(tape, diff::edge_dot_scores(tape, f.h, ctx.neighbors),
                                        ctx.neighbors);
    f.self_attention = diff::segment_softmax(
        tape, diff::edge_dot_scores(tape, f.h, ctx.with_self), ctx.with_self);
  } else {
    f.attention = tape.constant(uniform_attention(ctx.neighbors).weights);
    f.self_attention = tape.constant(uniform_attention(ctx.with_self).weights);
  }
  f.exposure = diff::segment_weighted_sum(tape, f.attention, t, ctx.neighbors);
  f.representation = diff::relu(tape, diff::segment_aggregate(tape, f.self_attention, f.h, ctx.with_self));
  return f;
}

Var forward_outcome(Tape& tape, ModelState& model, Var r, Var z, const Vector& t,
                    std::span<const NodeId> rows, TrainingNoise noise) {
  const Var input = diff::concat_cols(tape, r, z);
  const auto n = static_cast<std::size_t>(t.size());
  std::vector<NodeId> control, treated;
  auto route = [&](NodeId i) { (t[i] > 0.5 ? treated : control).push_back(i); };
  if (rows.empty()) {
    for (std::size_t i = 0; i < n; ++i) route(static_cast<NodeId>(i));
  } else {
    for (NodeId i : rows) route(i);
  }
  // Each head only sees the rows whose treatment selects it.
  const Var y0 = Mlp::forward(tape, model.head0, diff::gather_rows(tape, input, control),
                              Activation::kNone, noise.dropout, noise.rng);
  const Var y1 = Mlp::forward(tape, model.head1, diff::gather_rows(tape, input, treated),
                              Activation::kNone, noise.dropout, noise.rng);
  return diff::scatter_rows(tape, n, y0, control, y1, treated);
}

namespace {

// Eval-mode forward through a parameter block without recording gradients.
Matrix evaluate_mlp(const diff::ParamBlock& block, const Matrix& x, Activation output) {
  const auto& ts = block.tensors();
  const std::size_t n_layers = ts.size() / 2;
  Matrix a = x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    Matrix z = a * ts[2 * l].value;
    z.rowwise() += ts[2 * l + 1].value.row(0);
    const bool last = l + 1 == n_layers;
    if (!last || output == Activation::kRelu) {
      a = z.cwiseMax(0.0);
    } else if (output == Activation::kSigmoid) {
      a = z.unaryExpr([](double v) { return diff::sigmoid(v); });
    } else {
      a = std::move(z);
    }
  }
  return a;
}

}  // namespace

Matrix encode(const ModelState& model, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != model.config.input_dim) {
    throw ValidationError("encoder expects " + std::to_string(model.config.input_dim) +
                          " input columns, got " + std::to_string(x.cols()));
  }
  if (!x.allFinite()) throw ValidationError("encode: non-finite covariates");
  return evaluate_mlp(model.encoder, x, Activation::kRelu);
}

AttentionMap attention_scores(const Matrix& h, const diff::SegmentIndex& index) {
  for (std::size_t i = 0; i < index.rows(); ++i) {
    if (index.offsets[i] == index.offsets[i + 1]) {
      throw ValidationError("attention_scores: node " + std::to_string(i) + " has no neighbors");
    }
  }
  Tape tape;
  const Var a = diff::segment_softmax(tape, diff::edge_dot_scores(tape, tape.constant(h), index), index);
  return AttentionMap{index, tape.value(a).col(0)};
}

Vector estimated_exposure(const AttentionMap& attention, const Vector& t) {
  return compute_exposure(attention, t);
}

Matrix aggregate(const Matrix& h, const AttentionMap& self_attention) {
  const auto& idx = self_attention.index;
  for (std::size_t i = 0; i < idx.rows(); ++i) {
    const auto b = idx.cols.begin() + static_cast<std::ptrdiff_t>(idx.offsets[i]);
    const auto e = idx.cols.begin() + static_cast<std::ptrdiff_t>(idx.offsets[i + 1]);
    if (!std::binary_search(b, e, static_cast<NodeId>(i))) {
      throw ValidationError("aggregate: support of node " + std::to_string(i) + " lacks the self edge");
    }
  }
  Tape tape;
  const Var r = diff::relu(
      tape, diff::segment_aggregate(tape, tape.constant(self_attention.weights), tape.constant(h), idx));
  return tape.value(r);
}

Vector predict(const ModelState& model, const Matrix& r, const Vector& t, const Vector& z) {
  if (r.rows() != t.size() || r.rows() != z.size()) throw ValidationError("predict: length mismatch");
  if ((z.array() < -kExposureSlack).any() || (z.array() > 1.0 + kExposureSlack).any()) {
    throw ValidationError("predict: exposure outside [0, 1]");
  }
  std::vector<Eigen::Index> arm[2];
  for (Eigen::Index i = 0; i < t.size(); ++i) arm[t[i] > 0.5 ? 1 : 0].push_back(i);
  Vector y(r.rows());
  for (int a = 0; a < 2; ++a) {
    if (arm[a].empty()) continue;
    Matrix input(static_cast<Eigen::Index>(arm[a].size()), r.cols() + 1);
    for (std::size_t k = 0; k < arm[a].size(); ++k) {
      const auto row = static_cast<Eigen::Index>(k);
      input.row(row).head(r.cols()) = r.row(arm[a][k]);
      input(row, r.cols()) = std::clamp(z[arm[a][k]], 0.0, 1.0);
    }
    const Matrix out = evaluate_mlp(a == 1 ? model.head1 : model.head0, input, Activation::kNone);
    for (std::size_t k = 0; k < arm[a].size(); ++k) y[arm[a][k]] = out(static_cast<Eigen::Index>(k), 0);
  }
  return y;
}

Representation represent(const ModelState& model, const GraphContext& ctx, const Matrix& x) {
  Representation rep;
  rep.h = encode(model, x);
  if (model.config.use_attention) {
    rep.attention = attention_scores(rep.h, ctx.neighbors);
    rep.self_attention = attention_scores(rep.h, ctx.with_self);
  } else {
    rep.attention = uniform_attention(ctx.neighbors);
    rep.self_attention = uniform_attention(ctx.with_self);
  }
  rep.r = aggregate(rep.h, rep.self_attention);
  return rep;
}

FittedModel::FittedModel(ModelState model, const Network& net, const Matrix& x)
    : model_(std::move(model)), rep_(represent(model_, GraphContext(net), x)) {}

Vector FittedModel::predict(const Vector& t, const Vector& z) const {
  return netfx::predict(model_, rep_.r, t, z);
}

Vector FittedModel::exposure(const Vector& t) const { return compute_exposure(rep_.attention, t); }

Effects effect_estimates(const OutcomePredictor& model, const Vector& z_eval) {
  const auto n = static_cast<Eigen::Index>(model.size());
  if (z_eval.size() != n) throw ValidationError("effect_estimates: z_eval length mismatch");
  const Vector ones = Vector::Ones(n);
  const Vector zeros = Vector::Zero(n);
  const Vector y1z = model.predict(ones, z_eval);
  const Vector y0z = model.predict(zeros, z_eval);
  const Vector y00 = model.predict(zeros, zeros);
  const Vector y11 = model.predict(ones, ones);
  return Effects{y1z - y0z, y0z - y00, y11 - y00};
}

}  // namespace netfx
