#include "netfx/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace netfx::diff {

// ---------------------------------------------------------------- ParamBlock

Tensor& ParamBlock::add(std::string name, Matrix init) {
  Matrix grad = Matrix::Zero(init.rows(), init.cols());
  tensors_.push_back(Tensor{std::move(name), std::move(init), std::move(grad)});
  return tensors_.back();
}

Tensor& ParamBlock::at(std::string_view name) {
  for (auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw ValidationError("no tensor named '" + std::string(name) + "' in " + name_);
}

const Tensor& ParamBlock::at(std::string_view name) const {
  return const_cast<ParamBlock*>(this)->at(name);
}

std::size_t ParamBlock::size() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

std::pair<std::size_t, std::size_t> ParamBlock::locate(std::size_t k) const {
  for (std::size_t ti = 0; ti < tensors_.size(); ++ti) {
    const auto sz = static_cast<std::size_t>(tensors_[ti].value.size());
    if (k < sz) return {ti, k};
    k -= sz;
  }
  throw ValidationError("coordinate out of range in " + name_);
}

double& ParamBlock::coord(std::size_t k) {
  auto [ti, off] = locate(k);
  return tensors_[ti].value.data()[off];
}

double ParamBlock::grad_coord(std::size_t k) const {
  auto [ti, off] = locate(k);
  return tensors_[ti].grad.data()[off];
}

std::string ParamBlock::coord_name(std::size_t k) const {
  auto [ti, off] = locate(k);
  const auto& t = tensors_[ti];
  const auto r = static_cast<Eigen::Index>(off) % t.value.rows();
  const auto c = static_cast<Eigen::Index>(off) / t.value.rows();
  return name_ + "." + t.name + "[" + std::to_string(r) + "," + std::to_string(c) + "]";
}

void ParamBlock::zero_grad() {
  for (auto& t : tensors_) t.grad.setZero(t.value.rows(), t.value.cols());
}

void ParamBlock::set_zero() {
  for (auto& t : tensors_) t.value.setZero();
}

bool ParamBlock::all_finite() const {
  return std::all_of(tensors_.begin(), tensors_.end(),
                     [](const Tensor& t) { return t.value.allFinite(); });
}

// ---------------------------------------------------------------------- Tape

void Tape::check_finite(const Node& node) const {
  if (!node.value.allFinite()) {
    throw NumericalError("non-finite value produced by op '" + node.op + "'");
  }
}

Var Tape::constant(Matrix value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  check_finite(node);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Tensor& tensor) {
  Node node;
  node.op = "param:" + tensor.name;
  node.value = tensor.value;
  node.param = &tensor;
  node.needs_grad = true;
  check_finite(node);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::push(std::string op, std::initializer_list<Var> inputs, ForwardFn forward,
               BackwardFn backward) {
  Node node;
  node.op = std::move(op);
  node.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                [this](Var v) { return nodes_[v.id].needs_grad; });
  node.value = forward(*this);
  node.forward = std::move(forward);
  node.backward = std::move(backward);
  check_finite(node);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& node = nodes_[v.id];
  if (!node.needs_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::backward(Var loss) {
  Node& root = nodes_[loss.id];
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw ValidationError("backward() needs a 1x1 loss, got op '" + root.op + "'");
  }
  for (auto& node : nodes_) node.grad.resize(0, 0);
  root.grad = Matrix::Ones(1, 1);
  for (int id = loss.id; id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.needs_grad || node.grad.size() == 0) continue;
    if (!node.grad.allFinite()) {
      throw NumericalError("non-finite gradient flowing into op '" + node.op + "'");
    }
    if (node.param != nullptr) {
      node.param->grad += node.grad;
    } else if (node.backward) {
      const Matrix g = std::move(node.grad);
      node.backward(*this, g);
    }
  }
}

std::uint64_t Tape::kink_signature() const {
  std::uint64_t h = fnv1a64("");
  for (const Node& node : nodes_) {
    if (node.op != "relu") continue;
    const double* v = node.value.data();
    for (Eigen::Index k = 0; k < node.value.size(); ++k) {
      h ^= v[k] > 0.0 ? 1U : 2U;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void Tape::replay() {
  for (auto& node : nodes_) {
    if (node.param != nullptr) {
      node.value = node.param->value;
    } else if (node.forward) {
      node.value = node.forward(*this);
    }
    check_finite(node);
  }
}

// ---------------------------------------------------------- dense primitives

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
  }
}

}  // namespace

Var matmul(Tape& tape, Var a, Var b) {
  if (tape.value(a).cols() != tape.value(b).rows()) {
    throw ValidationError("matmul: inner dimensions differ (" +
                          std::to_string(tape.value(a).cols()) + " vs " +
                          std::to_string(tape.value(b).rows()) + ")");
  }
  return tape.push(
      "matmul", {a, b}, [a, b](const Tape& t) -> Matrix { return t.value(a) * t.value(b); },
      [a, b](Tape& t, const Matrix& g) {
        if (t.needs_grad(a)) t.accumulate(a, g * t.value(b).transpose());
        if (t.needs_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
      });
}

Var add_bias(Tape& tape, Var x, Var bias) {
  if (tape.value(bias).rows() != 1 || tape.value(bias).cols() != tape.value(x).cols()) {
    throw ValidationError("add_bias: bias must be 1 x " + std::to_string(tape.value(x).cols()));
  }
  return tape.push(
      "add_bias", {x, bias},
      [x, bias](const Tape& t) -> Matrix {
        return t.value(x).rowwise() + t.value(bias).row(0);
      },
      [x, bias](Tape& t, const Matrix& g) {
        t.accumulate(x, g);
        if (t.needs_grad(bias)) t.accumulate(bias, g.colwise().sum());
      });
}

Var affine(Tape& tape, Var x, Var weight, Var bias) {
  return add_bias(tape, matmul(tape, x, weight), bias);
}

Var add(Tape& tape, Var a, Var b) {
  require_same_shape(tape.value(a), tape.value(b), "add");
  return tape.push(
      "add", {a, b}, [a, b](const Tape& t) -> Matrix { return t.value(a) + t.value(b); },
      [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
      });
}

Var scale(Tape& tape, Var a, double c) {
  return tape.push(
      "scale", {a}, [a, c](const Tape& t) -> Matrix { return t.value(a) * c; },
      [a, c](Tape& t, const Matrix& g) { t.accumulate(a, g * c); });
}

Var relu(Tape& tape, Var x) {
  return tape.push(
      "relu", {x}, [x](const Tape& t) -> Matrix { return t.value(x).cwiseMax(0.0); },
      [x](Tape& t, const Matrix& g) {
        t.accumulate(x, (t.value(x).array() > 0.0).select(g, 0.0));
      });
}

Var sigmoid(Tape& tape, Var x) {
  Var out{static_cast<int>(tape.size())};
  return tape.push(
      "sigmoid", {x},
      [x](const Tape& t) -> Matrix { return t.value(x).unaryExpr([](double v) { return sigmoid(v); }); },
      [x, out](Tape& t, const Matrix& g) {
        const auto& s = t.value(out).array();
        t.accumulate(x, (g.array() * s * (1.0 - s)).matrix());
      });
}

Var concat_cols(Tape& tape, Var a, Var b) {
  if (tape.value(a).rows() != tape.value(b).rows()) {
    throw ValidationError("concat_cols: row counts differ");
  }
  return tape.push(
      "concat_cols", {a, b},
      [a, b](const Tape& t) -> Matrix {
        const Matrix& va = t.value(a);
        const Matrix& vb = t.value(b);
        Matrix out(va.rows(), va.cols() + vb.cols());
        out << va, vb;
        return out;
      },
      [a, b](Tape& t, const Matrix& g) {
        const auto ca = t.value(a).cols();
        if (t.needs_grad(a)) t.accumulate(a, g.leftCols(ca));
        if (t.needs_grad(b)) t.accumulate(b, g.rightCols(g.cols() - ca));
      });
}

Var mul_const(Tape& tape, Var x, const Matrix& mask) {
  require_same_shape(tape.value(x), mask, "mul_const");
  return tape.push(
      "mul_const", {x}, [x, mask](const Tape& t) -> Matrix { return t.value(x).cwiseProduct(mask); },
      [x, mask](Tape& t, const Matrix& g) { t.accumulate(x, g.cwiseProduct(mask)); });
}

Var gather_rows(Tape& tape, Var x, std::span<const NodeId> ids) {
  const auto rows = tape.value(x).rows();
  for (NodeId i : ids) {
    if (i < 0 || i >= rows) throw ValidationError("gather_rows: row id out of range");
  }
  std::vector<NodeId> idx(ids.begin(), ids.end());
  return tape.push(
      "gather_rows", {x},
      [x, idx](const Tape& t) -> Matrix {
        const Matrix& v = t.value(x);
        Matrix out(static_cast<Eigen::Index>(idx.size()), v.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = v.row(idx[k]);
        return out;
      },
      [x, idx](Tape& t, const Matrix& g) {
        const Matrix& v = t.value(x);
        Matrix dx = Matrix::Zero(v.rows(), v.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) dx.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
        t.accumulate(x, dx);
      });
}

Var scatter_rows(Tape& tape, std::size_t n, Var a, std::span<const NodeId> ids_a, Var b,
                 std::span<const NodeId> ids_b) {
  const Matrix& va = tape.value(a);
  const Matrix& vb = tape.value(b);
  if (va.rows() != static_cast<Eigen::Index>(ids_a.size()) ||
      vb.rows() != static_cast<Eigen::Index>(ids_b.size()) || va.cols() != vb.cols()) {
    throw ValidationError("scatter_rows: row ids do not match inputs");
  }
  std::vector<char> used(n, 0);
  for (auto ids : {ids_a, ids_b}) {
    for (NodeId i : ids) {
      if (i < 0 || static_cast<std::size_t>(i) >= n || used[i]) {
        throw ValidationError("scatter_rows: row ids must be distinct and in range");
      }
      used[i] = 1;
    }
  }
  std::vector<NodeId> ia(ids_a.begin(), ids_a.end()), ib(ids_b.begin(), ids_b.end());
  const auto cols = va.cols();
  return tape.push(
      "scatter_rows", {a, b},
      [a, b, ia, ib, n, cols](const Tape& t) -> Matrix {
        Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n), cols);
        for (std::size_t k = 0; k < ia.size(); ++k) out.row(ia[k]) = t.value(a).row(static_cast<Eigen::Index>(k));
        for (std::size_t k = 0; k < ib.size(); ++k) out.row(ib[k]) = t.value(b).row(static_cast<Eigen::Index>(k));
        return out;
      },
      [a, b, ia, ib, cols](Tape& t, const Matrix& g) {
        Matrix ga(static_cast<Eigen::Index>(ia.size()), cols);
        Matrix gb(static_cast<Eigen::Index>(ib.size()), cols);
        for (std::size_t k = 0; k < ia.size(); ++k) ga.row(static_cast<Eigen::Index>(k)) = g.row(ia[k]);
        for (std::size_t k = 0; k < ib.size(); ++k) gb.row(static_cast<Eigen::Index>(k)) = g.row(ib[k]);
        t.accumulate(a, ga);
        t.accumulate(b, gb);
      });
}

Var sum_all(Tape& tape, Var x) {
  return tape.push(
      "sum_all", {x},
      [x](const Tape& t) -> Matrix { return Matrix::Constant(1, 1, t.value(x).sum()); },
      [x](Tape& t, const Matrix& g) {
        t.accumulate(x, Matrix::Constant(t.value(x).rows(), t.value(x).cols(), g(0, 0)));
      });
}

Var half_sum_squares(Tape& tape, Var x) {
  return tape.push(
      "half_sum_squares", {x},
      [x](const Tape& t) -> Matrix {
        return Matrix::Constant(1, 1, 0.5 * t.value(x).squaredNorm());
      },
      [x](Tape& t, const Matrix& g) { t.accumulate(x, t.value(x) * g(0, 0)); });
}

// -------------------------------------------------------- segment primitives

namespace {

void require_rows(const SegmentIndex& index, Eigen::Index n, const char* op) {
  if (static_cast<Eigen::Index>(index.rows()) != n) {
    throw ValidationError(std::string(op) + ": index has " + std::to_string(index.rows()) +
                          " rows, input has " + std::to_string(n));
  }
}

}  // namespace

Var edge_dot_scores(Tape& tape, Var h, const SegmentIndex& index) {
  require_rows(index, tape.value(h).rows(), "edge_dot_scores");
  const SegmentIndex* idx = &index;
  return tape.push(
      "edge_dot_scores", {h},
      [h, idx](const Tape& t) -> Matrix {
        const Matrix ht = t.value(h).transpose();
        Matrix out(static_cast<Eigen::Index>(idx->entries()), 1);
        for (std::size_t i = 0; i < idx->rows(); ++i) {
          for (std::size_t e = idx->offsets[i]; e < idx->offsets[i + 1]; ++e) {
            out(static_cast<Eigen::Index>(e), 0) =
                ht.col(static_cast<Eigen::Index>(i)).dot(ht.col(idx->cols[e]));
          }
        }
        return out;
      },
      [h, idx](Tape& t, const Matrix& g) {
        const Matrix ht = t.value(h).transpose();
        Matrix dht = Matrix::Zero(ht.rows(), ht.cols());
        for (std::size_t i = 0; i < idx->rows(); ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          for (std::size_t e = idx->offsets[i]; e < idx->offsets[i + 1]; ++e) {
            const double ge = g(static_cast<Eigen::Index>(e), 0);
            const auto j = static_cast<Eigen::Index>(idx->cols[e]);
            dht.col(ii) += ge * ht.col(j);
            dht.col(j) += ge * ht.col(ii);
          }
        }
        t.accumulate(h, dht.transpose());
      });
}

Var segment_softmax(Tape& tape, Var scores, const SegmentIndex& index) {
  if (tape.value(scores).rows() != static_cast<Eigen::Index>(index.entries()) ||
      tape.value(scores).cols() != 1) {
    throw ValidationError("segment_softmax: scores must be E x 1");
  }
  for (std::size_t i = 0; i < index.rows(); ++i) {
    if (index.offsets[i] == index.offsets[i + 1]) {
      throw ValidationError("segment_softmax: empty support in row " + std::to_string(i));
    }
  }
  const SegmentIndex* idx = &index;
  Var out{static_cast<int>(tape.size())};
  return tape.push(
      "segment_softmax", {scores},
      [scores, idx](const Tape& t) -> Matrix {
        const Matrix& s = t.value(scores);
        Matrix a(s.rows(), 1);
        for (std::size_t i = 0; i < idx->rows(); ++i) {
          const auto b = static_cast<Eigen::Index>(idx->offsets[i]);
          const auto len = static_cast<Eigen::Index>(idx->offsets[i + 1]) - b;
          const double mx = s.col(0).segment(b, len).maxCoeff();
          double total = 0.0;
          for (Eigen::Index e = b; e < b + len; ++e) {
            a(e, 0) = std::exp(s(e, 0) - mx);
            total += a(e, 0);
          }
          a.col(0).segment(b, len) /= total;
        }
        return a;
      },
      [scores, idx, out](Tape& t, const Matrix& g) {
        const Matrix& a = t.value(out);
        Matrix ds(a.rows(), 1);
        for (std::size_t i = 0; i < idx->rows(); ++i) {
          const auto b = static_cast<Eigen::Index>(idx->offsets[i]);
          const auto len = static_cast<Eigen::Index>(idx->offsets[i + 1]) - b;
          const double inner = a.col(0).segment(b, len).dot(g.col(0).segment(b, len));
          for (Eigen::Index e = b; e < b + len; ++e) ds(e, 0) = a(e, 0) * (g(e, 0) - inner);
        }
        t.accumulate(scores, ds);
      });
}

Var segment_weighted_sum(Tape& tape, Var weights, const Vector& values, const SegmentIndex& index) {
  if (tape.value(weights).rows() != static_cast<Eigen::Index>(index.entries())) {
    throw ValidationError("segment_weighted_sum: weights must be E x 1");
  }
  const SegmentIndex* idx = &index;
  return tape.push(
      "segment_weighted_sum", {weights},
      [weights, values, idx](const Tape& t) -> Matrix {
        const Matrix& w = t.value(weights);
        Matrix out = Matrix::Zero(static_cast<Eigen::Index>(idx->rows()), 1);
        for (std::size_t i = 0; i < idx->rows(); ++i) {
          double acc = 0.0;
          for (std::size_t e = idx->offsets[i]; e < idx->offsets[i + 1]; ++e) {
            acc += w(static_cast<Eigen::Index>(e), 0) * values[idx->cols[e]];
          }
          out(static_cast<Eigen::Index>(i), 0) = acc;
        }
        return out;
      },
      [weights, values, idx](Tape& t, const Matrix& g) {
        Matrix dw(static_cast<Eigen::Index>(idx->entries()), 1);
        for (std::size_t i = 0; i < idx->rows(); ++i) {
          for (std::size_t e = idx->offsets[i]; e < idx->offsets[i + 1]; ++e) {
            dw(static_cast<Eigen::Index>(e), 0) =
                g(static_cast<Eigen::Index>(i), 0) * values[idx->cols[e]];
          }
        }
        t.accumulate(weights, dw);
      });
}

Var segment_aggregate(Tape& tape, Var weights, Var h, const SegmentIndex& index) {
  if (tape.value(weights).rows() != static_cast<Eigen::Index>(index.entries())) {
    throw ValidationError("segment_aggregate: weights must be E x 1");
  }
  require_rows(index, tape.value(h).rows(), "segment_aggregate");
  const SegmentIndex* idx = &index;
  return tape.push(
      "segment_aggregate", {weights, h},
      [weights, h, idx](const Tape& t) -> Matrix {
        const Matrix& w = t.value(weights);
        const Matrix ht = t.value(h).transpose();
        Matrix outt = Matrix::Zero(ht.rows(), ht.cols());
        for (std::size_t i = 0; i < idx->rows(); ++i) {
          for (std::size_t e = idx->offsets[i]; e < idx->offsets[i + 1]; ++e) {
            outt.col(static_cast<Eigen::Index>(i)) +=
                w(static_cast<Eigen::Index>(e), 0) * ht.col(idx->cols[e]);
          }
        }
        return outt.transpose();
      },
      [weights, h, idx](Tape& t, const Matrix& g) {
        const Matrix& w = t.value(weights);
        const Matrix ht = t.value(h).transpose();
        const Matrix gt = g.transpose();
        Matrix dw(w.rows(), 1);
        Matrix dht = Matrix::Zero(ht.rows(), ht.cols());
        for (std::size_t i = 0; i < idx->rows(); ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          for (std::size_t e = idx->offsets[i]; e < idx->offsets[i + 1]; ++e) {
            const auto j = static_cast<Eigen::Index>(idx->cols[e]);
            const auto ee = static_cast<Eigen::Index>(e);
            dw(ee, 0) = gt.col(ii).dot(ht.col(j));
            dht.col(j) += w(ee, 0) * gt.col(ii);
          }
        }
        if (t.needs_grad(weights)) t.accumulate(weights, dw);
        if (t.needs_grad(h)) t.accumulate(h, dht.transpose());
      });
}

// -------------------------------------------------------------------- losses

Var weighted_mse(Tape& tape, Var pred, const Vector& target, const Vector& w,
                 std::span<const NodeId> rows) {
  const Matrix& p = tape.value(pred);
  if (p.cols() != 1 || p.rows() != target.size() || w.size() != target.size()) {
    throw ValidationError("weighted_mse: length mismatch");
  }
  if ((w.array() < 0.0).any()) throw ValidationError("weighted_mse: negative weight");
  std::vector<NodeId> ids(rows.begin(), rows.end());
  if (ids.empty()) {
    ids.resize(static_cast<std::size_t>(target.size()));
    std::iota(ids.begin(), ids.end(), 0);
  }
  return tape.push(
      "weighted_mse", {pred},
      [pred, target, w, ids](const Tape& t) -> Matrix {
        const Matrix& pv = t.value(pred);
        double acc = 0.0;
        for (NodeId i : ids) {
          const double d = pv(i, 0) - target[i];
          acc += w[i] * (d * d);
        }
        return Matrix::Constant(1, 1, acc / static_cast<double>(ids.size()));
      },
      [pred, target, w, ids](Tape& t, const Matrix& g) {
        const Matrix& pv = t.value(pred);
        Matrix dp = Matrix::Zero(pv.rows(), 1);
        const double c = 2.0 * g(0, 0) / static_cast<double>(ids.size());
        for (NodeId i : ids) dp(i, 0) = c * w[i] * (pv(i, 0) - target[i]);
        t.accumulate(pred, dp);
      });
}

namespace {

constexpr double kProbClip = 1e-7;

void require_labels(const Vector& label) {
  for (Eigen::Index i = 0; i < label.size(); ++i) {
    if (label[i] != 0.0 && label[i] != 1.0) {
      throw ValidationError("bce_loss: label " + std::to_string(label[i]) + " at row " +
                            std::to_string(i) + " is not in {0,1}");
    }
  }
}

double bce_term(double p, double y) {
  const double pc = std::clamp(p, kProbClip, 1.0 - kProbClip);
  return -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}

}  // namespace

Var bce_loss(Tape& tape, Var prob, const Vector& label) {
  const Matrix& p = tape.value(prob);
  if (p.cols() != 1 || p.rows() != label.size()) throw ValidationError("bce_loss: length mismatch");
  require_labels(label);
  return tape.push(
      "bce_loss", {prob},
      [prob, label](const Tape& t) -> Matrix {
        const Matrix& pv = t.value(prob);
        double acc = 0.0;
        for (Eigen::Index i = 0; i < label.size(); ++i) acc += bce_term(pv(i, 0), label[i]);
        return Matrix::Constant(1, 1, acc / static_cast<double>(label.size()));
      },
      [prob, label](Tape& t, const Matrix& g) {
        const Matrix& pv = t.value(prob);
        Matrix dp = Matrix::Zero(pv.rows(), 1);
        const double c = g(0, 0) / static_cast<double>(label.size());
        for (Eigen::Index i = 0; i < label.size(); ++i) {
          const double p = pv(i, 0);
          if (p <= kProbClip || p >= 1.0 - kProbClip) continue;
          dp(i, 0) = c * (-label[i] / p + (1.0 - label[i]) / (1.0 - p));
        }
        t.accumulate(prob, dp);
      });
}

double weighted_mse_value(const Vector& pred, const Vector& target, const Vector& w) {
  if (pred.size() != target.size() || w.size() != target.size()) {
    throw ValidationError("weighted_mse: length mismatch");
  }
  if ((w.array() < 0.0).any()) throw ValidationError("weighted_mse: negative weight");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += w[i] * (d * d);
  }
  return acc / static_cast<double>(pred.size());
}

double bce_value(const Vector& prob, const Vector& label) {
  if (prob.size() != label.size()) throw ValidationError("bce_loss: length mismatch");
  require_labels(label);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < prob.size(); ++i) acc += bce_term(prob[i], label[i]);
  return acc / static_cast<double>(prob.size());
}

Matrix masked_row_softmax(const Matrix& scores,
                          const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& support) {
  if (scores.rows() != support.rows() || scores.cols() != support.cols()) {
    throw ValidationError("masked_row_softmax: support shape mismatch");
  }
  Matrix out = Matrix::Zero(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (support(i, j)) mx = std::max(mx, scores(i, j));
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw ValidationError("masked_row_softmax: empty support in row " + std::to_string(i));
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (support(i, j)) {
        out(i, j) = std::exp(scores(i, j) - mx);
        total += out(i, j);
      }
    }
    out.row(i) /= total;
  }
  return out;
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ------------------------------------------------------------ gradient check

double compute_gradients(const LossBuilder& build, std::span<ParamBlock* const> blocks) {
  for (auto* b : blocks) b->zero_grad();
  Tape tape;
  Var loss = build(tape);
  tape.backward(loss);
  return tape.value(loss)(0, 0);
}

namespace {

struct Probe {
  double value = 0.0;
  std::uint64_t signature = 0;
};

Probe evaluate(const LossBuilder& build) {
  Tape tape;
  const double v = tape.value(build(tape))(0, 0);
  return {v, tape.kink_signature()};
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& build, std::span<ParamBlock* const> blocks,
                           const GradCheckOptions& options) {
  compute_gradients(build, blocks);
  const std::uint64_t base_signature = evaluate(build).signature;

  GradCheckReport report;
  Rng rng(options.seed);
  std::size_t base = 0;
  for (auto* block : blocks) {
    std::size_t tensor_base = 0;
    for (auto& tensor : block->tensors()) {
      const auto count = static_cast<std::size_t>(tensor.value.size());
      std::vector<std::size_t> coords(count);
      std::iota(coords.begin(), coords.end(), 0);
      if (options.max_coords_per_tensor > 0 && count > options.max_coords_per_tensor) {
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(options.max_coords_per_tensor);
        std::sort(coords.begin(), coords.end());
      }
      if (options.corrupt_coordinate) {
        const std::size_t c = *options.corrupt_coordinate;
        if (c >= base + tensor_base && c < base + tensor_base + count) {
          const std::size_t local = c - base - tensor_base;
          if (!std::binary_search(coords.begin(), coords.end(), local)) {
            coords.insert(std::upper_bound(coords.begin(), coords.end(), local), local);
          }
        }
      }
      for (std::size_t local : coords) {
        const std::size_t flat = base + tensor_base + local;
        double analytic = tensor.grad.data()[local];
        if (options.corrupt_coordinate && *options.corrupt_coordinate == flat) analytic *= 2.0;
        double& p = tensor.value.data()[local];
        const double saved = p;
        p = saved + options.h;
        const Probe up = evaluate(build);
        p = saved - options.h;
        const Probe down = evaluate(build);
        p = saved;
        if (up.signature != base_signature || down.signature != base_signature) {
          ++report.kink_crossings;
          continue;
        }
        const double numeric = (up.value - down.value) / (2.0 * options.h);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        const double rel = std::abs(analytic - numeric) / denom;
        ++report.checked;
        if (report.checked == 1 || rel > report.max_rel_err) {
          report.max_rel_err = rel;
          report.worst_coordinate = flat;
          report.worst_name = block->coord_name(tensor_base + local);
          report.worst_analytic = analytic;
          report.worst_numeric = numeric;
        }
      }
      tensor_base += count;
    }
    base += block->size();
  }
  report.passed = report.checked > 0 && report.max_rel_err <= options.tol;
  return report;
}

// ---------------------------------------------------------------------- Adam

AdamState AdamState::for_block(const ParamBlock& block) {
  AdamState s;
  for (const auto& t : block.tensors()) {
    s.m.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
    s.v.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
  }
  return s;
}

void adam_step(ParamBlock& block, AdamState& state, const AdamConfig& config) {
  auto& tensors = block.tensors();
  if (state.m.size() != tensors.size() || state.v.size() != tensors.size()) {
    throw ValidationError("adam_step: optimizer state does not match " + block.name());
  }
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    if (state.m[k].rows() != tensors[k].value.rows() || state.m[k].cols() != tensors[k].value.cols()) {
      throw ValidationError("adam_step: state shape mismatch for " + tensors[k].name);
    }
    if (!tensors[k].grad.allFinite()) {
      throw NumericalError("adam_step: non-finite gradient for " + block.name() + "." +
                           tensors[k].name);
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto& t = tensors[k];
    state.m[k] = config.beta1 * state.m[k] + (1.0 - config.beta1) * t.grad;
    state.v[k] = config.beta2 * state.v[k] + (1.0 - config.beta2) * t.grad.cwiseAbs2();
    t.value.array() -= config.lr * (state.m[k].array() / bc1) /
                       ((state.v[k].array() / bc2).sqrt() + config.eps);
  }
  if (!block.all_finite()) {
    throw NumericalError("adam_step: parameters of " + block.name() + " became non-finite");
  }
}

}  // namespace netfx::diff
