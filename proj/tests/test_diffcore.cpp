#include <doctest.h>

#include <cmath>

#include "netfx/diffcore.hpp"
#include "test_support.hpp"

using namespace netfx;
using namespace netfx::diff;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

// Central differences computed directly, independent of grad_check.
double numeric_partial(const LossBuilder& build, double& p, double h) {
  const double saved = p;
  p = saved + h;
  Tape up;
  const double f_up = up.value(build(up))(0, 0);
  p = saved - h;
  Tape down;
  const double f_down = down.value(build(down))(0, 0);
  p = saved;
  return (f_up - f_down) / (2.0 * h);
}

}  // namespace

TEST_CASE("affine closed forms") {
  Tape tape;
  const Var x = tape.constant(testing::random_matrix(3, 4, 1));
  const Var eye = tape.constant(Matrix::Identity(4, 4));
  const Var zero_bias = tape.constant(Matrix::Zero(1, 4));
  CHECK(tape.value(affine(tape, x, eye, zero_bias)) == tape.value(x));

  const Matrix b = testing::random_matrix(1, 2, 2);
  const Var rows = affine(tape, tape.constant(Matrix::Zero(5, 4)), tape.constant(testing::random_matrix(4, 2, 3)),
                          tape.constant(b));
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(tape.value(rows).row(i) == b);

  const Var one = affine(tape, tape.constant(scalar(2)), tape.constant(scalar(3)), tape.constant(scalar(1)));
  CHECK(tape.value(one)(0, 0) == 7.0);

  CHECK_THROWS_AS(matmul(tape, tape.constant(Matrix::Zero(2, 3)), tape.constant(Matrix::Zero(2, 3))),
                  ValidationError);
}

TEST_CASE("pointwise activations and masked softmax") {
  CHECK(diff::sigmoid(0.0) == 0.5);
  CHECK(diff::relu(-3.0) == 0.0);
  CHECK(diff::relu(3.0) == 3.0);

  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> support(2, 4);
  support << true, true, true, false, true, false, true, true;
  const Matrix equal = Matrix::Constant(2, 4, 0.7);
  const Matrix s = masked_row_softmax(equal, support);
  CHECK(s(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(s(0, 3) == 0.0);
  CHECK(s(1, 1) == 0.0);
  CHECK(s(1, 3) == doctest::Approx(1.0 / 3.0));

  const Matrix scores = testing::random_matrix(2, 4, 9, 10.0);
  const Matrix a = masked_row_softmax(scores, support);
  Matrix shifted = scores;
  shifted.row(0).array() += 123.0;
  shifted.row(1).array() -= 50.0;
  const Matrix b = masked_row_softmax(shifted, support);
  for (Eigen::Index i = 0; i < 2; ++i) CHECK(std::abs(a.row(i).sum() - 1.0) <= 1e-12);
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);

  support.row(1).setConstant(false);
  CHECK_THROWS_AS(masked_row_softmax(scores, support), ValidationError);
}

TEST_CASE("segment softmax matches the dense masked softmax") {
  // Rows: {1,2}, {0,2,3}, {3}
  SegmentIndex idx{{0, 2, 5, 6}, {1, 2, 0, 2, 3, 3}};
  const Vector scores = testing::random_matrix(6, 1, 4);
  Tape tape;
  const Matrix seg = tape.value(segment_softmax(tape, tape.constant(scores), idx));

  Matrix dense = Matrix::Zero(3, 4);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> support =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(3, 4, false);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t e = idx.offsets[i]; e < idx.offsets[i + 1]; ++e) {
      dense(static_cast<Eigen::Index>(i), idx.cols[e]) = scores(static_cast<Eigen::Index>(e));
      support(static_cast<Eigen::Index>(i), idx.cols[e]) = true;
    }
  }
  const Matrix ref = masked_row_softmax(dense, support);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t e = idx.offsets[i]; e < idx.offsets[i + 1]; ++e) {
      CHECK(seg(static_cast<Eigen::Index>(e), 0) ==
            doctest::Approx(ref(static_cast<Eigen::Index>(i), idx.cols[e])).epsilon(1e-14));
    }
  }

  SegmentIndex empty_row{{0, 1, 1}, {1}};
  Tape t2;
  CHECK_THROWS_AS(segment_softmax(t2, t2.constant(Matrix::Zero(1, 1)), empty_row), ValidationError);
}

TEST_CASE("weighted MSE") {
  Tape tape;
  const Vector target = testing::random_matrix(6, 1, 3);
  const Var same = tape.constant(target);
  CHECK(tape.value(weighted_mse(tape, same, target, Vector::Ones(6)))(0, 0) == 0.0);

  const Vector pred = testing::random_matrix(6, 1, 4);
  const double unweighted = (pred - target).squaredNorm() / 6.0;
  CHECK(tape.value(weighted_mse(tape, tape.constant(pred), target, Vector::Ones(6)))(0, 0) == unweighted);
  CHECK(weighted_mse_value(pred, target, Vector::Ones(6)) == unweighted);

  const Vector p2 = testing::binary({1.0, 2.0});
  const Vector zero2 = Vector::Zero(2);
  CHECK(weighted_mse_value(p2, zero2, testing::binary({2.0, 0.0})) == 1.0);
  CHECK_THROWS_AS(weighted_mse_value(p2, zero2, testing::binary({1.0, -1.0})), ValidationError);
  CHECK_THROWS_AS(weighted_mse_value(p2, Vector::Zero(3), Vector::Ones(2)), ValidationError);
}

TEST_CASE("binary cross-entropy") {
  const Vector labels = testing::binary({1, 0, 1, 0});
  CHECK(bce_value(Vector::Constant(4, 0.5), labels) == doctest::Approx(std::log(2.0)));
  CHECK(bce_value(labels, labels) <= 1e-6);
  CHECK(bce_value(testing::binary({0.9}), testing::binary({1})) == doctest::Approx(0.10536).epsilon(1e-4));
  CHECK_THROWS_AS(bce_value(testing::binary({0.5}), testing::binary({0.5})), ValidationError);
}

TEST_CASE("reverse-mode gradients: closed forms") {
  ParamBlock block("p");
  Tensor& p = block.add("v", testing::random_matrix(5, 1, 8));
  ParamBlock* blocks[] = {&block};

  compute_gradients([&](Tape& t) { return half_sum_squares(t, t.param(p)); }, blocks);
  CHECK(p.grad == p.value);

  compute_gradients(
      [&](Tape& t) {
        const Var c = t.constant(scalar(4.0));
        t.param(p);
        return c;
      },
      blocks);
  CHECK(p.grad.isZero());
}

TEST_CASE("non-finite intermediates name the op") {
  ParamBlock block("p");
  Tensor& p = block.add("v", scalar(1e300));
  Tape tape;
  CHECK_THROWS_WITH_AS(matmul(tape, tape.param(p), tape.param(p)), doctest::Contains("matmul"), NumericalError);
}

TEST_CASE("random two-layer network matches central differences on every coordinate") {
  const Matrix x = testing::random_matrix(7, 3, 21);
  const Vector y = testing::random_matrix(7, 1, 22);
  ParamBlock block("net");
  Tensor& w0 = block.add("W0", testing::random_matrix(3, 5, 23, 0.7));
  Tensor& b0 = block.add("b0", testing::random_matrix(1, 5, 24, 0.3));
  Tensor& w1 = block.add("W1", testing::random_matrix(5, 1, 25, 0.7));
  Tensor& b1 = block.add("b1", testing::random_matrix(1, 1, 26, 0.3));
  const LossBuilder loss = [&](Tape& t) {
    const Var h = relu(t, affine(t, t.constant(x), t.param(w0), t.param(b0)));
    const Var out = sigmoid(t, affine(t, h, t.param(w1), t.param(b1)));
    return weighted_mse(t, out, y, Vector::Ones(7));
  };
  ParamBlock* blocks[] = {&block};
  compute_gradients(loss, blocks);

  double worst = 0.0;
  for (std::size_t k = 0; k < block.size(); ++k) {
    const double analytic = block.grad_coord(k);
    const double numeric = numeric_partial(loss, block.coord(k), 1e-5);
    worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8}));
  }
  CHECK(worst <= 1e-4);

  const GradCheckReport report = grad_check(loss, blocks);
  CHECK(report.passed);
  CHECK(report.checked + report.kink_crossings == block.size());
}

TEST_CASE("grad_check on a linear loss is exact to rounding") {
  ParamBlock block("lin");
  Tensor& w = block.add("w", testing::random_matrix(6, 1, 31));
  const Matrix x = testing::random_matrix(4, 6, 32);
  ParamBlock* blocks[] = {&block};
  const GradCheckReport r =
      grad_check([&](Tape& t) { return sum_all(t, matmul(t, t.constant(x), t.param(w))); }, blocks);
  CHECK(r.max_rel_err <= 1e-9);
  CHECK(r.checked == 6);
}

TEST_CASE("grad_check reports a corrupted coordinate") {
  ParamBlock a("a");
  a.add("u", testing::random_matrix(3, 2, 41));
  ParamBlock b("b");
  Tensor& v = b.add("v", testing::random_matrix(2, 2, 42));
  Tensor& u = a.at("u");
  ParamBlock* blocks[] = {&a, &b};
  const LossBuilder loss = [&](Tape& t) { return half_sum_squares(t, matmul(t, t.param(u), t.param(v))); };
  GradCheckOptions options;
  options.corrupt_coordinate = 7;  // block b, v(1, 0)
  const GradCheckReport r = grad_check(loss, blocks, options);
  CHECK_FALSE(r.passed);
  CHECK(r.worst_coordinate == 7);
  CHECK(r.worst_name == "b.v[1,0]");
  CHECK(r.worst_analytic == doctest::Approx(2.0 * r.worst_numeric).epsilon(1e-6));
}

TEST_CASE("segment and gather/scatter ops have correct gradients") {
  SegmentIndex idx{{0, 2, 5, 6, 8}, {1, 2, 0, 2, 3, 3, 0, 1}};
  ParamBlock block("seg");
  Tensor& h = block.add("h", testing::random_matrix(4, 3, 51, 0.5));
  const Vector values = testing::random_matrix(4, 1, 52);
  const std::vector<NodeId> a_rows{0, 3};
  const std::vector<NodeId> b_rows{1, 2};
  ParamBlock* blocks[] = {&block};
  const LossBuilder loss = [&](Tape& t) {
    const Var hv = t.param(h);
    const Var a = segment_softmax(t, edge_dot_scores(t, hv, idx), idx);
    const Var z = segment_weighted_sum(t, a, values, idx);
    const Var r = segment_aggregate(t, a, hv, idx);
    const Var joined = scatter_rows(t, 4, gather_rows(t, r, a_rows), a_rows, gather_rows(t, hv, b_rows), b_rows);
    return add(t, half_sum_squares(t, concat_cols(t, joined, z)), sum_all(t, mul_const(t, hv, Matrix::Constant(4, 3, 0.25))));
  };
  const GradCheckReport r = grad_check(loss, blocks);
  CHECK(r.max_rel_err <= 1e-6);
  CHECK(r.checked == 12);
}

TEST_CASE("replay reproduces the forward value bitwise") {
  ParamBlock block("p");
  Tensor& w = block.add("w", testing::random_matrix(3, 3, 61));
  const Matrix x = testing::random_matrix(5, 3, 62);
  Tape tape;
  const Var out = sum_all(tape, sigmoid(tape, matmul(tape, tape.constant(x), tape.param(w))));
  const double first = tape.value(out)(0, 0);
  tape.replay();
  CHECK(tape.value(out)(0, 0) == first);
}

TEST_CASE("Adam: zero gradient, first step and determinism") {
  ParamBlock block("p");
  Tensor& w = block.add("w", testing::random_matrix(4, 1, 71));
  AdamState state = AdamState::for_block(block);
  const Matrix before = w.value;
  block.zero_grad();
  adam_step(block, state, AdamConfig{});
  CHECK(w.value == before);
  state.m[0].setConstant(0.5);
  state.v[0].setConstant(0.25);
  adam_step(block, state, AdamConfig{});
  CHECK(state.m[0](0, 0) == doctest::Approx(0.45));
  CHECK(state.v[0](0, 0) == doctest::Approx(0.25 * 0.999));

  ParamBlock fresh("q");
  Tensor& q = fresh.add("q", Matrix::Zero(3, 1));
  q.grad = testing::binary({2.0, -0.5, 1e-3});
  AdamState s2 = AdamState::for_block(fresh);
  adam_step(fresh, s2, AdamConfig{0.01});
  CHECK(q.value(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(q.value(1, 0) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(q.value(2, 0) == doctest::Approx(-0.01).epsilon(1e-4));

  auto run = [] {
    ParamBlock b("r");
    Tensor& t = b.add("t", testing::random_matrix(3, 2, 5));
    AdamState st = AdamState::for_block(b);
    for (int k = 0; k < 10; ++k) {
      ParamBlock* bs[] = {&b};
      compute_gradients([&](Tape& tp) { return half_sum_squares(tp, tp.param(t)); }, bs);
      adam_step(b, st, AdamConfig{});
    }
    return t.value;
  };
  CHECK(run() == run());

  q.grad(0, 0) = std::nan("");
  CHECK_THROWS_AS(adam_step(fresh, s2, AdamConfig{}), NumericalError);
}
