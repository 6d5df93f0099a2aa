#include "netfx/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "netfx/tsv.hpp"

namespace netfx {

using diff::Tape;
using diff::Var;
using json = nlohmann::json;

void TrainConfig::validate() const {
  if (outer_epochs < 1) throw ValidationError("outer_epochs must be positive");
  if (pi_epochs_per_outer < 1) throw ValidationError("pi_epochs_per_outer must be positive");
  if (!(lr_outcome > 0.0) || !(lr_pi > 0.0)) throw ValidationError("learning rates must be positive");
  if (!(clip_eps > 0.0 && clip_eps < 0.5)) throw ValidationError("clip_eps must lie in (0, 0.5)");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw ValidationError("split_fraction must lie in (0, 1)");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("dropout_rate must lie in [0, 1)");
}

ModelConfig TrainConfig::model_config(std::size_t input_dim) const {
  ModelConfig m;
  m.input_dim = input_dim;
  m.use_attention = use_attention;
  m.use_weights = use_weights;
  m.dropout = dropout ? dropout_rate : 0.0;
  return m;
}

Split make_split(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("split fraction must lie in (0, 1)");
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) {
    throw ValidationError("split of " + std::to_string(n) + " nodes at fraction " +
                          format_double(fraction) + " leaves one side empty");
  }
  std::vector<NodeId> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng = make_rng(seed, Stream::kSplit);
  std::shuffle(ids.begin(), ids.end(), rng);
  Split s;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.heldout.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.heldout.begin(), s.heldout.end());
  return s;
}

Var outcome_loss(Tape& tape, ModelState& model, const GraphContext& ctx, const Dataset& data,
                 const Vector& w, std::span<const NodeId> rows, TrainingNoise noise) {
  const ForwardVars f = forward_representation(tape, model, ctx, data.x, data.t, noise);
  const Var pred = forward_outcome(tape, model, f.representation, f.exposure, data.t, rows, noise);
  return diff::weighted_mse(tape, pred, data.y, w, rows);
}

FitResult fit(const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  data.validate();
  const GraphContext ctx(data.net);
  const auto n = static_cast<Eigen::Index>(data.size());

  FitResult out{ModelState::initialize(config.model_config(static_cast<std::size_t>(data.x.cols())), config.seed),
                PiModel::initialize(config.model_config(0).representation_dim() + 2, config.seed),
                make_split(data.size(), config.split_fraction, config.seed),
                {},
                Vector::Ones(n)};
  ModelState& model = out.model;

  std::vector<diff::AdamState> adam;
  for (auto* b : model.blocks()) adam.push_back(diff::AdamState::for_block(*b));
  const diff::AdamConfig outcome_adam{config.lr_outcome};
  Rng dropout_rng = make_rng(config.seed, Stream::kDropout);
  const TrainingNoise noise{config.dropout ? config.dropout_rate : 0.0,
                            config.dropout ? &dropout_rng : nullptr};

  // One outer iteration of the bi-level loop; returns the epoch's record
  // and the weights it used.
  auto run_epoch = [&](int epoch, Vector& w) {
    EpochRecord rec;
    rec.epoch = epoch;

    // Representation and exposure under the current parameters.
    const Representation rep = represent(model, ctx, data.x);
    const Vector z_hat = compute_exposure(rep.attention, data.t);

    // Lower level: refresh the calibration set and the discriminator.
    w = Vector::Ones(n);
    if (config.use_weights) {
      const Calibration cal =
          make_calibration(data.t, z_hat, derive_seed(config.seed, Stream::kCalibration, static_cast<std::uint64_t>(epoch)));
      rec.pi_loss = train_pi(out.pi, pi_inputs(rep.r, data.t, z_hat), pi_inputs(rep.r, cal.t, cal.z),
                             config.pi_epochs_per_outer, config.lr_pi);
      w = sample_weights(out.pi, rep.r, data.t, z_hat, config.clip_eps, config.normalize_weights).w;
    }
    rec.weight_mean = w.mean();
    rec.weight_max = w.maxCoeff();
    rec.unweighted = decorrelation_report(rep.r, data.t, z_hat, Vector::Ones(n));
    rec.corr_tz = rec.unweighted.corr_tz;
    rec.weighted = decorrelation_report(rep.r, data.t, z_hat, w);

    // Upper level: one weighted regression step; w enters as a constant.
    for (auto* b : model.blocks()) b->zero_grad();
    Tape tape;
    const Var loss = outcome_loss(tape, model, ctx, data, w, out.split.train, noise);
    rec.outcome_loss = tape.value(loss)(0, 0);
    if (!std::isfinite(rec.outcome_loss)) throw NumericalError("outcome loss is non-finite");
    tape.backward(loss);
    auto blocks = model.blocks();
    for (std::size_t k = 0; k < blocks.size(); ++k) diff::adam_step(*blocks[k], adam[k], outcome_adam);
    return rec;
  };

  for (int epoch = 0; epoch < config.outer_epochs; ++epoch) {
    Vector w;
    EpochRecord rec;
    try {
      rec = run_epoch(epoch, w);
    } catch (const NumericalError& e) {
      throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    out.weights = w;
    out.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return out;
}

DwrGradCheck check_dwr_gradients(const Dataset& data, const TrainConfig& config,
                                 const diff::GradCheckOptions& options) {
  config.validate();
  data.validate();
  const GraphContext ctx(data.net);
  ModelState model =
      ModelState::initialize(config.model_config(static_cast<std::size_t>(data.x.cols())), config.seed);
  PiModel pi = PiModel::initialize(config.model_config(0).representation_dim() + 2, config.seed);
  const Split split = make_split(data.size(), config.split_fraction, config.seed);

  const Representation rep = represent(model, ctx, data.x);
  const Vector z_hat = compute_exposure(rep.attention, data.t);
  const Calibration cal = make_calibration(data.t, z_hat, derive_seed(config.seed, Stream::kCalibration, 0));
  const Matrix obs_in = pi_inputs(rep.r, data.t, z_hat);
  const Matrix cal_in = pi_inputs(rep.r, cal.t, cal.z);
  const Vector w = config.use_weights
                       ? sample_weights(pi, rep.r, data.t, z_hat, config.clip_eps, config.normalize_weights).w
                       : Vector(Vector::Ones(static_cast<Eigen::Index>(data.size())));

  DwrGradCheck out;
  auto blocks = model.blocks();
  out.outcome = diff::grad_check(
      [&](Tape& tape) { return outcome_loss(tape, model, ctx, data, w, split.train); }, blocks, options);

  diff::GradCheckOptions pi_options = options;
  pi_options.corrupt_coordinate.reset();
  diff::ParamBlock* pi_blocks[] = {&pi.block};
  out.pi = diff::grad_check([&](Tape& tape) { return pi_loss(tape, pi, obs_in, cal_in); }, pi_blocks,
                            pi_options);
  return out;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string history_jsonl(const std::vector<EpochRecord>& history, const TrainConfig& config) {
  std::string out;
  for (const auto& r : history) {
    json j{{"epoch", r.epoch},
           {"mode", {{"use_attention", config.use_attention}, {"use_weights", config.use_weights}}},
           {"outcome_loss", r.outcome_loss},
           {"pi_loss", r.pi_loss},
           {"weight_mean", r.weight_mean},
           {"weight_max", r.weight_max},
           {"corr_tz", optional_number(r.corr_tz)},
           {"max_corr_rt", r.unweighted.max_abs_corr_rt},
           {"max_corr_rz", r.unweighted.max_abs_corr_rz},
           {"weighted_corr_tz", optional_number(r.weighted.corr_tz)},
           {"weighted_max_corr_rt", r.weighted.max_abs_corr_rt},
           {"weighted_max_corr_rz", r.weighted.max_abs_corr_rz}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

// -------------------------------------------------------------- checkpoints

namespace {

constexpr const char* kCheckpointFormat = "netfx-checkpoint-1";

void append_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int k = 0; k < 8; ++k) {
    out.push_back(static_cast<char>(bits & 0xffU));
    bits >>= 8;
  }
}

double read_le(std::string_view bytes, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int k = 7; k >= 0; --k) {
    bits = (bits << 8) | static_cast<unsigned char>(bytes[pos + static_cast<std::size_t>(k)]);
  }
  return std::bit_cast<double>(bits);
}

json model_json(const ModelConfig& m) {
  return json{{"input_dim", m.input_dim},
              {"encoder_widths", m.encoder_widths},
              {"head_widths", m.head_widths},
              {"use_attention", m.use_attention},
              {"use_weights", m.use_weights},
              {"dropout", m.dropout}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.input_dim = j.at("input_dim").get<std::size_t>();
  m.encoder_widths = j.at("encoder_widths").get<std::vector<std::size_t>>();
  m.head_widths = j.at("head_widths").get<std::vector<std::size_t>>();
  m.use_attention = j.at("use_attention").get<bool>();
  m.use_weights = j.at("use_weights").get<bool>();
  m.dropout = j.at("dropout").get<double>();
  return m;
}

bool same_architecture(const ModelConfig& a, const ModelConfig& b) {
  return a.input_dim == b.input_dim && a.encoder_widths == b.encoder_widths &&
         a.head_widths == b.head_widths && a.use_attention == b.use_attention;
}

std::vector<const diff::ParamBlock*> all_blocks(const ModelState& model, const PiModel& pi) {
  auto blocks = model.blocks();
  blocks.push_back(&pi.block);
  return blocks;
}

}  // namespace

std::string serialize_checkpoint(const ModelState& model, const PiModel& pi, const CheckpointMeta& meta) {
  std::string payload;
  json tensors = json::array();
  for (const auto* block : all_blocks(model, pi)) {
    for (const auto& t : block->tensors()) {
      tensors.push_back({{"block", block->name()}, {"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
      for (Eigen::Index k = 0; k < t.value.size(); ++k) append_le(payload, t.value.data()[k]);
    }
  }
  json header{{"format", kCheckpointFormat},
              {"model", model_json(model.config)},
              {"pi_input_dim", pi.input_dim},
              {"seed", meta.seed},
              {"config_hash", meta.config_hash},
              {"split_fraction", meta.split_fraction},
              {"tensors", tensors},
              {"payload_bytes", payload.size()},
              {"checksum", hex64(fnv1a64(payload))}};
  return header.dump() + "\n" + payload;
}

Checkpoint deserialize_checkpoint(std::string_view bytes, const std::optional<ModelConfig>& expected) {
  const std::size_t eol = bytes.find('\n');
  if (eol == std::string_view::npos) throw ValidationError("checkpoint: missing header line");
  json header;
  try {
    header = json::parse(bytes.substr(0, eol));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint: malformed header: ") + e.what());
  }
  if (header.value("format", "") != kCheckpointFormat) {
    throw ValidationError("checkpoint: unsupported format version");
  }
  const std::string_view payload = bytes.substr(eol + 1);
  if (payload.size() != header.at("payload_bytes").get<std::size_t>()) {
    throw ValidationError("checkpoint: payload length mismatch (truncated file?)");
  }
  if (hex64(fnv1a64(payload)) != header.at("checksum").get<std::string>()) {
    throw ValidationError("checkpoint: payload checksum mismatch");
  }

  Checkpoint cp;
  const ModelConfig config = model_from_json(header.at("model"));
  if (expected && !same_architecture(config, *expected)) {
    throw ValidationError("checkpoint: architecture does not match the requested model configuration");
  }
  cp.meta.seed = header.at("seed").get<std::uint64_t>();
  cp.meta.config_hash = header.at("config_hash").get<std::string>();
  cp.meta.split_fraction = header.at("split_fraction").get<double>();
  // Rebuild the shapes from the architecture, then fill from the payload.
  cp.model = ModelState::initialize(config, 0);
  cp.pi = PiModel::initialize(header.at("pi_input_dim").get<std::size_t>(), 0);

  const auto& tensors = header.at("tensors");
  std::size_t pos = 0;
  std::size_t ti = 0;
  for (auto* block : std::vector<diff::ParamBlock*>{&cp.model.encoder, &cp.model.head0, &cp.model.head1, &cp.pi.block}) {
    for (auto& t : block->tensors()) {
      if (ti >= tensors.size()) throw ValidationError("checkpoint: tensor list too short");
      const auto& tj = tensors[ti++];
      if (tj.at("block").get<std::string>() != block->name() || tj.at("name").get<std::string>() != t.name ||
          tj.at("rows").get<Eigen::Index>() != t.value.rows() || tj.at("cols").get<Eigen::Index>() != t.value.cols()) {
        throw ValidationError("checkpoint: tensor " + block->name() + "." + t.name + " has unexpected shape");
      }
      for (Eigen::Index k = 0; k < t.value.size(); ++k) {
        t.value.data()[k] = read_le(payload, pos);
        pos += 8;
      }
    }
  }
  if (ti != tensors.size() || pos != payload.size()) throw ValidationError("checkpoint: extra tensors");
  cp.pi.adam = diff::AdamState::for_block(cp.pi.block);
  return cp;
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& model, const PiModel& pi,
                     const CheckpointMeta& meta) {
  write_file(path, serialize_checkpoint(model, pi, meta));
}

Checkpoint restore_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  try {
    return deserialize_checkpoint(read_file(path), expected);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace netfx
