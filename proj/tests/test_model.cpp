#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "netfx/model.hpp"
#include "test_support.hpp"

using namespace netfx;

namespace {

ModelConfig small_config(std::size_t input_dim, bool use_attention = true) {
  ModelConfig c;
  c.input_dim = input_dim;
  c.use_attention = use_attention;
  return c;
}

struct Fixture {
  Network net = erdos_renyi_graph(60, 4.0, 3);
  Matrix x = spectral_embed(net, 5);
  Vector t;
  ModelState model = ModelState::initialize(small_config(5), 11);

  Fixture() {
    Rng rng(4);
    std::bernoulli_distribution coin(0.5);
    t.resize(60);
    for (Eigen::Index i = 0; i < 60; ++i) t[i] = coin(rng) ? 1.0 : 0.0;
  }
};

Network relabel(const Network& net, const std::vector<NodeId>& perm) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (auto [a, b] : net.canonical_edges()) edges.emplace_back(perm[a], perm[b]);
  return Network::from_edges(net.num_nodes(), edges);
}

}  // namespace

TEST_CASE("encoder contract") {
  Fixture f;
  CHECK(encode(f.model, f.x).cols() == 64);
  CHECK(encode(f.model, f.x.topRows(7)).rows() == 7);

  ModelState zero = f.model;
  zero.encoder.set_zero();
  CHECK(encode(zero, f.x).isZero());

  Matrix same = f.x;
  same.row(9) = same.row(2);
  const Matrix h = encode(f.model, same);
  CHECK(h.row(9) == h.row(2));

  CHECK_THROWS_AS(encode(f.model, Matrix::Zero(3, 4)), ValidationError);
}

TEST_CASE("attention scores") {
  const Network star = testing::star_graph(3);
  const AttentionMap a = attention_scores(Matrix::Constant(4, 6, 0.3), neighbor_index(star));
  for (int k = 0; k < 3; ++k) CHECK(a.weights[k] == doctest::Approx(1.0 / 3.0));

  Fixture f;
  const Matrix h = encode(f.model, f.x);
  const auto idx = neighbor_index(f.net);
  const AttentionMap base = attention_scores(h, idx);
  CHECK(base.max_row_error() <= 1e-12);
  CHECK_NOTHROW(base.validate(f.net));
  // An all-ones column adds 1 to every score, a per-row constant.
  Matrix shifted(h.rows(), h.cols() + 1);
  shifted << h, Matrix::Ones(h.rows(), 1);
  CHECK((attention_scores(shifted, idx).weights - base.weights).cwiseAbs().maxCoeff() <= 1e-12);

  // With unit-norm rows, dot products are cosines: the generator's map.
  const AttentionMap truth = ground_truth_attention(f.x, f.net);
  CHECK((attention_scores(f.x, idx).weights - truth.weights).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("estimated exposure") {
  Fixture f;
  const AttentionMap a = attention_scores(encode(f.model, f.x), neighbor_index(f.net));
  CHECK(estimated_exposure(a, Vector::Ones(60)).isApproxToConstant(1.0, 1e-12));

  const Vector z_bar = estimated_exposure(uniform_attention(neighbor_index(f.net)), f.t);
  for (NodeId i = 0; i < 60; ++i) {
    double treated = 0.0;
    for (NodeId j : f.net.neighbors(i)) treated += f.t[j];
    CHECK(z_bar[i] == doctest::Approx(treated / static_cast<double>(f.net.degree(i))).epsilon(1e-14));
  }

  const std::pair<NodeId, NodeId> e[] = {{0, 1}, {0, 2}};
  const Network path = Network::from_edges(3, e);
  AttentionMap manual = uniform_attention(neighbor_index(path));
  manual.weights[0] = 0.25;
  manual.weights[1] = 0.75;
  CHECK(estimated_exposure(manual, testing::binary({0, 0, 1}))[0] == doctest::Approx(0.75));
}

TEST_CASE("aggregation") {
  const Network star = testing::star_graph(4);
  const auto with_self = self_loop_index(star);
  const Matrix same = Matrix::Constant(5, 3, -0.5).rowwise() + testing::random_matrix(1, 3, 2).row(0);
  const Matrix r = aggregate(same, uniform_attention(with_self));
  CHECK((r.row(0) - same.row(0).cwiseMax(0.0)).cwiseAbs().maxCoeff() <= 1e-15);

  AttentionMap self_only{with_self, Vector::Zero(static_cast<Eigen::Index>(with_self.entries()))};
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t e = with_self.offsets[i]; e < with_self.offsets[i + 1]; ++e) {
      if (with_self.cols[e] == static_cast<NodeId>(i)) self_only.weights[static_cast<Eigen::Index>(e)] = 1.0;
    }
  }
  const Matrix h = testing::random_matrix(5, 3, 3);
  CHECK(aggregate(h, self_only) == h.cwiseMax(0.0));

  // Pre-activation rows stay in the convex hull of their support.
  Fixture f;
  const Matrix hh = encode(f.model, f.x);
  const auto idx = self_loop_index(f.net);
  const AttentionMap a = attention_scores(hh, idx);
  const Matrix rr = aggregate(hh, a);
  for (std::size_t i = 0; i < 60; ++i) {
    for (Eigen::Index c = 0; c < hh.cols(); ++c) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t e = idx.offsets[i]; e < idx.offsets[i + 1]; ++e) {
        lo = std::min(lo, hh(idx.cols[e], c));
        hi = std::max(hi, hh(idx.cols[e], c));
      }
      CHECK(rr(static_cast<Eigen::Index>(i), c) <= hi + 1e-12);
      CHECK(rr(static_cast<Eigen::Index>(i), c) >= std::max(lo, 0.0) - 1e-12);
    }
  }

  CHECK_THROWS_AS(aggregate(hh, attention_scores(hh, neighbor_index(f.net))), ValidationError);
}

TEST_CASE("prediction") {
  Fixture f;
  const Representation rep = represent(f.model, GraphContext(f.net), f.x);
  const Vector z = compute_exposure(rep.attention, f.t);

  ModelState zero = f.model;
  zero.head0.set_zero();
  zero.head1.set_zero();
  CHECK(predict(zero, rep.r, f.t, z).isZero());

  CHECK(predict(f.model, rep.r, f.t, z) == predict(f.model, rep.r, f.t, z));

  // Counterfactual grid: t in {0,1} x z in {0, z_i, 1} -> 6 values per node.
  const FittedModel fitted(f.model, f.net, f.x);
  std::vector<Vector> grid;
  for (double arm : {0.0, 1.0}) {
    for (const Vector& zz : {Vector(Vector::Zero(60)), z, Vector(Vector::Ones(60))}) {
      grid.push_back(fitted.predict(Vector::Constant(60, arm), zz));
    }
  }
  CHECK(grid.size() == 6);
  for (const auto& g : grid) CHECK(g.size() == 60);

  // A node's prediction depends only on its own arm's head.
  Vector mixed = f.t;
  const Vector all_control = fitted.predict(Vector::Zero(60), z);
  const Vector all_treated = fitted.predict(Vector::Ones(60), z);
  const Vector y = fitted.predict(mixed, z);
  // Equal up to rounding: the GEMM kernel path depends on the batch size.
  for (Eigen::Index i = 0; i < 60; ++i) {
    CHECK(std::abs(y[i] - (f.t[i] > 0.5 ? all_treated[i] : all_control[i])) <= 1e-12);
  }

  Vector bad = z;
  bad[0] = 1.5;
  CHECK_THROWS_AS(predict(f.model, rep.r, f.t, bad), ValidationError);
}

TEST_CASE("effect estimates") {
  Fixture f;
  const Vector z_eval = Vector::LinSpaced(60, 0.0, 1.0);

  ModelState twins = f.model;
  for (std::size_t k = 0; k < twins.head0.tensors().size(); ++k) {
    twins.head1.tensors()[k].value = twins.head0.tensors()[k].value;
  }
  CHECK(effect_estimates(FittedModel(twins, f.net, f.x), z_eval).de.isZero());

  // Zero the weights reading z (the last input column) in head 0.
  ModelState flat = f.model;
  Matrix& w0 = flat.head0.at("W0").value;
  w0.row(w0.rows() - 1).setZero();
  CHECK(effect_estimates(FittedModel(flat, f.net, f.x), z_eval).se.isZero());

  const Effects one = effect_estimates(FittedModel(f.model, f.net, f.x), Vector::Ones(60));
  CHECK((one.te - one.de - one.se).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("taped forward pass agrees with plain evaluation") {
  for (bool use_attention : {true, false}) {
    Fixture f;
    f.model = ModelState::initialize(small_config(5, use_attention), 12);
    const GraphContext ctx(f.net);
    diff::Tape tape;
    const ForwardVars fv = forward_representation(tape, f.model, ctx, f.x, f.t);
    const Representation rep = represent(f.model, ctx, f.x);
    CHECK((tape.value(fv.representation) - rep.r).cwiseAbs().maxCoeff() <= 1e-12);
    const Vector z = compute_exposure(rep.attention, f.t);
    CHECK((tape.value(fv.exposure).col(0) - z).cwiseAbs().maxCoeff() <= 1e-12);
    const diff::Var y = forward_outcome(tape, f.model, fv.representation, fv.exposure, f.t);
    CHECK((tape.value(y).col(0) - predict(f.model, rep.r, f.t, z)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(z.minCoeff() >= 0.0);
    CHECK(z.maxCoeff() <= 1.0);
  }
}

TEST_CASE("without attention the exposure is the treated-neighbor fraction") {
  Fixture f;
  f.model = ModelState::initialize(small_config(5, false), 13);
  const Representation rep = represent(f.model, GraphContext(f.net), f.x);
  const Vector z_bar = compute_exposure(uniform_attention(neighbor_index(f.net)), f.t);
  CHECK(compute_exposure(rep.attention, f.t) == z_bar);
}

TEST_CASE("relabeling nodes permutes every output") {
  Fixture f;
  std::vector<NodeId> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), Rng(99));
  const Network net2 = relabel(f.net, perm);
  Matrix x2(60, 5);
  Vector t2(60);
  for (Eigen::Index i = 0; i < 60; ++i) {
    x2.row(perm[i]) = f.x.row(i);
    t2[perm[i]] = f.t[i];
  }
  const FittedModel a(f.model, f.net, f.x);
  const FittedModel b(f.model, net2, x2);
  const Vector za = a.exposure(f.t), zb = b.exposure(t2);
  const Vector ya = a.predict(f.t, za), yb = b.predict(t2, zb);
  for (Eigen::Index i = 0; i < 60; ++i) {
    CHECK(zb[perm[i]] == doctest::Approx(za[i]).epsilon(1e-12));
    CHECK(yb[perm[i]] == doctest::Approx(ya[i]).epsilon(1e-10));
    CHECK((b.representation().r.row(perm[i]) - a.representation().r.row(i)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}
