#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "netfx/common.hpp"
#include "netfx/diffcore.hpp"
#include "netfx/graph.hpp"

namespace netfx {

/// Sparse row-stochastic matrix over a neighbor structure: row i holds the
/// weights a_ij for j in index.cols[offsets[i]..offsets[i+1]).
struct AttentionMap {
  diff::SegmentIndex index;
  Vector weights;

  std::size_t rows() const { return index.rows(); }
  /// Max |row sum - 1| over rows.
  double max_row_error() const;
  /// Throws ValidationError unless weights are positive, rows sum to 1
  /// within `tol`, and the support equals `net`'s neighbor lists.
  void validate(const Network& net, double tol = 1e-12) const;
};

/// Neighbor-only index (support N(i)).
diff::SegmentIndex neighbor_index(const Network& net);
/// Neighbors plus the node itself (support N(i) ∪ {i}), sorted by id.
diff::SegmentIndex self_loop_index(const Network& net);

AttentionMap uniform_attention(const diff::SegmentIndex& index);

/// z_i = sum_j a_ij t_j.
Vector compute_exposure(const AttentionMap& attention, const Vector& t);
/// x̄_i = sum_j a_ij x_j.
Matrix neighbor_mean(const AttentionMap& attention, const Matrix& x);

/// Rows: d leading non-trivial eigenvectors of D^-1/2 A D^-1/2, columns
/// centered, rows scaled to unit norm. Dense eigendecomposition, O(n^3).
Matrix spectral_embed(const Network& net, std::size_t d);

/// softmax over k in N(i) of cos(x_i, x_k).
AttentionMap ground_truth_attention(const Matrix& x, const Network& net);

void validate_covariates(const Matrix& x, std::size_t n);

struct OracleParams {
  Vector alpha0;  // d
  Vector alpha1;  // d
  double alpha2 = 0.0;
  Vector beta0;  // d, treated arm, entries in [1, 2]
  Vector beta1;  // d, control arm, entries in [0, 1]
  double beta2 = 0.0;
  double interference_scale = 1.0;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;

  double spillover_coef() const { return interference_scale * beta2; }
  void validate(std::size_t d) const;
};

/// Distributions the generator draws OracleParams from.
struct ParamPriors {
  double alpha0_sd = 1.0;
  double alpha1_sd = 1.0;
  double alpha2_mean = 0.0;
  double alpha2_sd = 1.0;
  double interference_scale = 1.0;
  double noise_sd = 0.0;
};

OracleParams draw_params(std::size_t d, const ParamPriors& priors, std::uint64_t seed);

struct GibbsOptions {
  int sweeps = 20;
  int burn_in = 10;
  std::uint64_t seed = 0;
  /// Starting state; defaults to Bernoulli(0.5) draws from the seed stream.
  std::optional<Vector> initial;
};

/// Sequential-scan Gibbs sampler over binary treatments with logistic
/// conditionals s_i = alpha0.x_i + alpha1.x̄_i + alpha2 z_i.
Vector gibbs_sample_treatments(const Network& net, const Matrix& x, const AttentionMap& attention,
                               const OracleParams& params, const GibbsOptions& options);

Vector generate_outcomes(const Matrix& x, const AttentionMap& attention, const Vector& t,
                         const Vector& z, const OracleParams& params);

struct Effects {
  Vector de;
  Vector se;
  Vector te;
};

/// Closed-form potential outcomes of the generating model (noise excluded).
class Oracle {
 public:
  Oracle() = default;
  Oracle(OracleParams params, AttentionMap attention, const Matrix& x);

  const OracleParams& params() const { return params_; }
  const AttentionMap& attention() const { return attention_; }
  std::size_t size() const { return static_cast<std::size_t>(treated_base_.size()); }

  double potential_outcome(NodeId i, double t, double z) const;
  Vector potential_outcomes(const Vector& t, const Vector& z) const;
  Effects effects(const Vector& z_eval) const;

 private:
  OracleParams params_;
  AttentionMap attention_;
  Vector treated_base_;  // beta0 . (x_i + x̄_i)
  Vector control_base_;  // beta1 . (x_i + x̄_i)
};

Effects oracle_effects(const Oracle& oracle, const Vector& z_eval);

struct Dataset {
  Network net;
  Matrix x;
  Vector t;
  Vector y;
  Vector z_true;  // generator only; empty for external data

  std::size_t size() const { return net.num_nodes(); }
  void validate() const;
};

enum class GraphSource { kEdgeList, kErdosRenyi, kBarabasiAlbert, kCycle };
enum class FeatureSource { kSpectral, kFile, kConstant };

struct BenchmarkConfig {
  GraphSource graph = GraphSource::kErdosRenyi;
  std::filesystem::path edge_list;
  std::size_t nodes = 1000;
  double mean_degree = 4.0;
  std::size_t attach = 2;  // Barabasi-Albert edges per new node

  FeatureSource features = FeatureSource::kSpectral;
  std::filesystem::path feature_file;
  std::size_t dim = 10;

  ParamPriors priors;
  int gibbs_sweeps = 20;
  int gibbs_burn_in = 10;
  std::uint64_t seed = 0;
};

struct Benchmark {
  Dataset data;
  Oracle oracle;
};

Benchmark generate_benchmark(const BenchmarkConfig& config);

Matrix load_features(const std::filesystem::path& path, std::size_t n);

/// Bundle layout: edges.tsv, features.tsv, data.tsv, attention.tsv,
/// oracle.json, config.ini (verbatim echo of `config_text`).
void write_bundle(const std::filesystem::path& dir, const Benchmark& bench,
                  const std::string& config_text);
Benchmark read_bundle(const std::filesystem::path& dir);

}  // namespace netfx
