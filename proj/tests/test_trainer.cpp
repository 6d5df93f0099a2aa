#include <doctest.h>

#include <algorithm>
#include <set>

#include "netfx/trainer.hpp"
#include "netfx/tsv.hpp"
#include "test_support.hpp"

using namespace netfx;

namespace {

Benchmark small_benchmark(std::uint64_t seed = 5) {
  BenchmarkConfig c;
  c.nodes = 80;
  c.dim = 4;
  c.seed = seed;
  return generate_benchmark(c);
}

TrainConfig short_run(std::uint64_t seed = 3) {
  TrainConfig t;
  t.outer_epochs = 15;
  t.seed = seed;
  return t;
}

}  // namespace

TEST_CASE("split: sizes, disjointness, coverage, determinism") {
  const Split s = make_split(10, 0.8, 4);
  CHECK(s.train.size() == 8);
  CHECK(s.heldout.size() == 2);
  std::set<NodeId> all(s.train.begin(), s.train.end());
  all.insert(s.heldout.begin(), s.heldout.end());
  CHECK(all.size() == 10);
  CHECK(*all.rbegin() == 9);
  CHECK(make_split(10, 0.8, 4).train == s.train);
  CHECK(std::is_sorted(s.train.begin(), s.train.end()));

  const Split big = make_split(1000, 0.8, 1);
  CHECK_FALSE(big.train == make_split(1000, 0.8, 2).train);
  CHECK_THROWS_AS(make_split(10, 0.01, 1), ValidationError);
  CHECK_THROWS_AS(make_split(10, 0.99, 1), ValidationError);
  CHECK_THROWS_AS(make_split(10, 1.0, 1), ValidationError);
}

TEST_CASE("config validation") {
  TrainConfig bad = short_run();
  bad.outer_epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = short_run();
  bad.lr_pi = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = short_run();
  bad.split_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("fit is deterministic and records every epoch") {
  const Benchmark b = small_benchmark();
  const FitResult a = fit(b.data, short_run());
  const FitResult c = fit(b.data, short_run());
  CHECK(serialize_checkpoint(a.model, a.pi, {}) == serialize_checkpoint(c.model, c.pi, {}));
  CHECK(a.history.size() == 15);
  for (const auto& r : a.history) {
    CHECK(std::isfinite(r.outcome_loss));
    CHECK(r.weight_mean == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(a.history.back().outcome_loss < a.history.front().outcome_loss);

  const FitResult other = fit(b.data, short_run(4));
  CHECK(serialize_checkpoint(other.model, other.pi, {}) != serialize_checkpoint(a.model, a.pi, {}));
}

TEST_CASE("without weights, fit is plain regression with unit weights") {
  const Benchmark b = small_benchmark();
  TrainConfig cfg = short_run();
  cfg.use_weights = false;
  const FitResult f = fit(b.data, cfg);
  CHECK(f.weights.isApproxToConstant(1.0, 0.0));
  for (const auto& r : f.history) {
    CHECK(r.weight_max == 1.0);
    CHECK(r.pi_loss == 0.0);
  }

  // Independent replay of the upper level with w = 1.
  ModelState model = ModelState::initialize(cfg.model_config(4), cfg.seed);
  const Split split = make_split(b.data.size(), cfg.split_fraction, cfg.seed);
  const GraphContext ctx(b.data.net);
  std::vector<diff::AdamState> adam;
  for (auto* block : model.blocks()) adam.push_back(diff::AdamState::for_block(*block));
  const Vector ones = Vector::Ones(static_cast<Eigen::Index>(b.data.size()));
  for (int e = 0; e < cfg.outer_epochs; ++e) {
    for (auto* block : model.blocks()) block->zero_grad();
    diff::Tape tape;
    const diff::Var loss = outcome_loss(tape, model, ctx, b.data, ones, split.train);
    CHECK(tape.value(loss)(0, 0) == f.history[static_cast<std::size_t>(e)].outcome_loss);
    tape.backward(loss);
    auto blocks = model.blocks();
    for (std::size_t k = 0; k < blocks.size(); ++k) diff::adam_step(*blocks[k], adam[k], diff::AdamConfig{cfg.lr_outcome});
  }
  CHECK(serialize_checkpoint(model, f.pi, {}) == serialize_checkpoint(f.model, f.pi, {}));
}

TEST_CASE("without attention the learned exposure is the treated-neighbor fraction") {
  const Benchmark b = small_benchmark();
  TrainConfig cfg = short_run();
  cfg.use_attention = false;
  const FitResult f = fit(b.data, cfg);
  const FittedModel m(f.model, b.data.net, b.data.x);
  const Vector z_bar = compute_exposure(uniform_attention(neighbor_index(b.data.net)), b.data.t);
  CHECK(m.exposure(b.data.t) == z_bar);
}

TEST_CASE("learned attention stays row-stochastic and exposures stay in range") {
  const Benchmark b = small_benchmark();
  const FitResult f = fit(b.data, short_run());
  const FittedModel m(f.model, b.data.net, b.data.x);
  CHECK(m.representation().attention.max_row_error() <= 1e-12);
  CHECK(m.representation().self_attention.max_row_error() <= 1e-12);
  const Vector z = m.exposure(b.data.t);
  CHECK(z.minCoeff() >= 0.0);
  CHECK(z.maxCoeff() <= 1.0);
}

TEST_CASE("held-out outcomes never reach the loss") {
  Benchmark b = small_benchmark();
  const TrainConfig cfg = short_run();
  const FitResult base = fit(b.data, cfg);
  for (NodeId i : base.split.heldout) b.data.y[i] += 100.0;
  const FitResult shifted = fit(b.data, cfg);
  CHECK(serialize_checkpoint(base.model, base.pi, {}) == serialize_checkpoint(shifted.model, shifted.pi, {}));
}

TEST_CASE("dropout is seeded and only active when enabled") {
  const Benchmark b = small_benchmark();
  TrainConfig cfg = short_run();
  cfg.dropout = true;
  const FitResult a = fit(b.data, cfg);
  const FitResult c = fit(b.data, cfg);
  CHECK(serialize_checkpoint(a.model, a.pi, {}) == serialize_checkpoint(c.model, c.pi, {}));
  const FitResult plain = fit(b.data, short_run());
  CHECK(serialize_checkpoint(a.model, a.pi, {}) != serialize_checkpoint(plain.model, plain.pi, {}));
}

TEST_CASE("divergence is reported with the epoch") {
  const Benchmark b = small_benchmark();
  TrainConfig cfg = short_run();
  cfg.lr_outcome = 1e200;
  cfg.outer_epochs = 50;
  CHECK_THROWS_WITH_AS(fit(b.data, cfg), doctest::Contains("at epoch"), NumericalError);
}

TEST_CASE("history lines carry the mode flags") {
  const Benchmark b = small_benchmark();
  TrainConfig cfg = short_run();
  cfg.outer_epochs = 2;
  cfg.use_attention = false;
  const std::string text = history_jsonl(fit(b.data, cfg).history, cfg);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  CHECK(text.find("\"use_attention\":false") != std::string::npos);
  CHECK(text.find("\"use_weights\":true") != std::string::npos);
}

TEST_CASE("checkpoint round-trip, corruption and architecture checks") {
  const Benchmark b = small_benchmark();
  const FitResult f = fit(b.data, short_run());
  const auto dir = testing::scratch_dir("checkpoint");
  const CheckpointMeta meta{3, "abc123", 0.8};
  save_checkpoint(dir / "c.bin", f.model, f.pi, meta);

  const Checkpoint back = restore_checkpoint(dir / "c.bin", f.model.config);
  CHECK(back.meta.seed == 3);
  CHECK(back.meta.config_hash == "abc123");
  const FittedModel original(f.model, b.data.net, b.data.x);
  const FittedModel restored(back.model, b.data.net, b.data.x);
  const Vector z = original.exposure(b.data.t);
  CHECK(original.predict(b.data.t, z) == restored.predict(b.data.t, z));
  CHECK(serialize_checkpoint(back.model, back.pi, back.meta) == read_file(dir / "c.bin"));

  std::string bytes = read_file(dir / "c.bin");
  bytes[bytes.size() - 100] ^= 0x01;
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(bytes), doctest::Contains("checksum"), ValidationError);
  CHECK_THROWS_AS(deserialize_checkpoint(read_file(dir / "c.bin").substr(0, 500)), ValidationError);
  CHECK_THROWS_AS(deserialize_checkpoint("not a checkpoint"), ValidationError);

  ModelConfig wider = f.model.config;
  wider.input_dim = 7;
  CHECK_THROWS_AS(restore_checkpoint(dir / "c.bin", wider), ValidationError);
  ModelConfig no_att = f.model.config;
  no_att.use_attention = false;
  CHECK_THROWS_AS(restore_checkpoint(dir / "c.bin", no_att), ValidationError);
}

TEST_CASE("gradient check of the composite losses on a toy graph") {
  BenchmarkConfig c;
  c.nodes = 200;
  c.seed = 5;
  const Benchmark b = generate_benchmark(c);
  diff::GradCheckOptions options;
  options.max_coords_per_tensor = 16;
  options.seed = 1;
  const DwrGradCheck r = check_dwr_gradients(b.data, short_run(), options);
  CHECK(r.outcome.max_rel_err <= 1e-4);
  CHECK(r.pi.max_rel_err <= 1e-4);
  CHECK(r.passed());

  options.corrupt_coordinate = 100;
  const DwrGradCheck bad = check_dwr_gradients(b.data, short_run(), options);
  CHECK_FALSE(bad.passed());
  CHECK(bad.outcome.worst_coordinate == 100);
}
