#include "netfx/config.hpp"

#include <set>

#include "netfx/tsv.hpp"

namespace netfx {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw ValidationError("config line " + std::to_string(line) + ": " + what);
}

}  // namespace

IniFile IniFile::parse(std::string_view text) {
  IniFile ini;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = trim(text.substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) fail(line_no, "empty section name");
      ini.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(line_no, "expected key = value");
    if (section.empty()) fail(line_no, "key outside of any [section]");
    const std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) fail(line_no, "empty key");
    auto& sec = ini.sections_[section];
    if (sec.count(key)) fail(line_no, "duplicate key '" + key + "' in [" + section + "]");
    sec.emplace(key, std::move(value));
  }
  return ini;
}

bool IniFile::has(std::string_view section, std::string_view key) const {
  return get(section, key).has_value();
}

std::optional<std::string> IniFile::get(std::string_view section, std::string_view key) const {
  auto s = sections_.find(std::string(section));
  if (s == sections_.end()) return std::nullopt;
  auto k = s->second.find(std::string(key));
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

namespace {

// Typed reads over an IniFile that remember which keys were consumed so
// leftovers can be reported as unknown.
class Reader {
 public:
  explicit Reader(const IniFile& ini) : ini_(ini) {}

  template <typename T>
  void read(const char* section, const char* key, T& out) {
    used_.insert(std::string(section) + "." + key);
    auto v = ini_.get(section, key);
    if (!v) return;
    try {
      out = convert<T>(*v);
    } catch (const ValidationError& e) {
      throw ValidationError("config [" + std::string(section) + "] " + key + ": " + e.what());
    }
  }

  void reject_unknown() const {
    for (const auto& [section, keys] : ini_.sections()) {
      bool known_section = false;
      for (const auto& u : used_) {
        if (u.compare(0, section.size() + 1, section + ".") == 0) known_section = true;
      }
      if (!known_section) throw ValidationError("config: unknown section [" + section + "]");
      for (const auto& [key, value] : keys) {
        if (!used_.count(section + "." + key)) {
          throw ValidationError("config: unknown key '" + key + "' in [" + section + "]");
        }
      }
    }
  }

 private:
  template <typename T>
  static T convert(const std::string& v) {
    if constexpr (std::is_same_v<T, bool>) {
      if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
      if (v == "false" || v == "0" || v == "no" || v == "off") return false;
      throw ValidationError("expected a boolean, got '" + v + "'");
    } else if constexpr (std::is_same_v<T, double>) {
      return parse_double(v);
    } else if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else {
      const long long x = parse_int(v);
      if constexpr (std::is_unsigned_v<T>) {
        if (x < 0) throw ValidationError("expected a nonnegative integer, got '" + v + "'");
      }
      return static_cast<T>(x);
    }
  }

  const IniFile& ini_;
  std::set<std::string> used_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

}  // namespace

std::string RunConfig::hash() const {
  return hex64(fnv1a64(text + "\nseed=" + std::to_string(seed)));
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir,
                           std::optional<std::uint64_t> seed_override) {
  const IniFile ini = IniFile::parse(text);
  Reader r(ini);
  RunConfig c;
  c.text = std::string(text);

  r.read("run", "seed", c.seed);
  if (seed_override) c.seed = *seed_override;

  std::string graph = "erdos_renyi", graph_path;
  r.read("graph", "source", graph);
  r.read("graph", "path", graph_path);
  r.read("graph", "nodes", c.bench.nodes);
  r.read("graph", "mean_degree", c.bench.mean_degree);
  r.read("graph", "attach", c.bench.attach);
  if (graph == "edge_list") {
    c.bench.graph = GraphSource::kEdgeList;
    if (graph_path.empty()) throw ValidationError("config [graph] source = edge_list needs path");
    c.bench.edge_list = resolve(base_dir, graph_path);
  } else if (graph == "erdos_renyi") {
    c.bench.graph = GraphSource::kErdosRenyi;
  } else if (graph == "barabasi_albert") {
    c.bench.graph = GraphSource::kBarabasiAlbert;
  } else if (graph == "cycle") {
    c.bench.graph = GraphSource::kCycle;
  } else {
    throw ValidationError("config [graph] source: unknown value '" + graph + "'");
  }

  std::string features = "spectral", feature_path;
  r.read("features", "source", features);
  r.read("features", "path", feature_path);
  r.read("features", "dim", c.bench.dim);
  if (features == "spectral") {
    c.bench.features = FeatureSource::kSpectral;
  } else if (features == "file") {
    c.bench.features = FeatureSource::kFile;
    if (feature_path.empty()) throw ValidationError("config [features] source = file needs path");
    c.bench.feature_file = resolve(base_dir, feature_path);
  } else if (features == "constant") {
    c.bench.features = FeatureSource::kConstant;
  } else {
    throw ValidationError("config [features] source: unknown value '" + features + "'");
  }

  auto& p = c.bench.priors;
  r.read("generator", "alpha0_sd", p.alpha0_sd);
  r.read("generator", "alpha1_sd", p.alpha1_sd);
  r.read("generator", "alpha2_mean", p.alpha2_mean);
  r.read("generator", "alpha2_sd", p.alpha2_sd);
  r.read("generator", "interference_scale", p.interference_scale);
  r.read("generator", "noise_sd", p.noise_sd);
  r.read("generator", "gibbs_sweeps", c.bench.gibbs_sweeps);
  r.read("generator", "gibbs_burn_in", c.bench.gibbs_burn_in);
  if (p.interference_scale < 0.0) throw ValidationError("config: interference_scale must be nonnegative");
  if (p.noise_sd < 0.0) throw ValidationError("config: noise_sd must be nonnegative");

  auto& t = c.train;
  r.read("train", "outer_epochs", t.outer_epochs);
  r.read("train", "pi_epochs_per_outer", t.pi_epochs_per_outer);
  r.read("train", "lr_outcome", t.lr_outcome);
  r.read("train", "lr_pi", t.lr_pi);
  r.read("train", "clip_eps", t.clip_eps);
  r.read("train", "normalize_weights", t.normalize_weights);
  r.read("train", "use_attention", t.use_attention);
  r.read("train", "use_weights", t.use_weights);
  r.read("train", "split_fraction", t.split_fraction);
  r.read("train", "dropout", t.dropout);
  r.read("train", "dropout_rate", t.dropout_rate);
  t.validate();

  std::string z_eval = "realized";
  r.read("eval", "repetitions", c.experiment.repetitions);
  r.read("eval", "z_eval", z_eval);
  r.read("eval", "jobs", c.experiment.jobs);
  if (z_eval != "realized") c.experiment.z_eval.fixed = parse_double(z_eval);
  if (c.experiment.repetitions < 1) throw ValidationError("config: repetitions must be positive");
  if (c.experiment.jobs < 1) throw ValidationError("config: jobs must be positive");

  std::size_t corrupt = 0;
  bool has_corrupt = ini.has("gradcheck", "corrupt_coordinate");
  r.read("gradcheck", "nodes", c.gradcheck.nodes);
  r.read("gradcheck", "h", c.gradcheck.h);
  r.read("gradcheck", "tol", c.gradcheck.tol);
  r.read("gradcheck", "max_coords_per_tensor", c.gradcheck.max_coords_per_tensor);
  r.read("gradcheck", "corrupt_coordinate", corrupt);
  if (has_corrupt) c.gradcheck.corrupt_coordinate = corrupt;

  r.reject_unknown();

  c.bench.seed = c.seed;
  c.train.seed = c.seed;
  c.experiment.train = c.train;
  c.experiment.master_seed = c.seed;
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  const std::string text = read_file(path);
  try {
    return parse_run_config(text, path.parent_path(), seed_override);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace netfx
