#pragma once

// Shared fixtures for the unit tests.

#include <filesystem>
#include <random>
#include <string>

#include "netfx/common.hpp"
#include "netfx/graph.hpp"

namespace netfx::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("netfx_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = normal(rng);
  return m;
}

inline Network star_graph(std::size_t leaves) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t k = 1; k <= leaves; ++k) edges.emplace_back(0, static_cast<NodeId>(k));
  return Network::from_edges(leaves + 1, edges);
}

inline Vector binary(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index k = 0;
  for (double x : values) v(k++) = x;
  return v;
}

}  // namespace netfx::testing

namespace netfx::testing {

/// Binary (r, t, z) drawn from an explicit 8-cell joint table, with the
/// exact density ratio p(r)p(t)p(z)/p(r,t,z) by enumeration.
struct DiscreteToy {
  // p[r][t][z]; r and t are associated, z leans on both.
  double p[2][2][2] = {{{0.20, 0.08}, {0.06, 0.10}}, {{0.07, 0.08}, {0.11, 0.30}}};

  /// corr(t, z) = 0.5 exactly: t ~ Bern(1/2), z | t ~ Bern(1/4 + t/2),
  /// r | z ~ Bern(0.3 + 0.4 z).
  static DiscreteToy strong_tz() {
    DiscreteToy toy;
    const double tz[2][2] = {{0.375, 0.125}, {0.125, 0.375}};
    for (int t = 0; t < 2; ++t) {
      for (int z = 0; z < 2; ++z) {
        const double r1 = 0.3 + 0.4 * z;
        toy.p[1][t][z] = tz[t][z] * r1;
        toy.p[0][t][z] = tz[t][z] * (1.0 - r1);
      }
    }
    return toy;
  }

  double marginal_r(int r) const { return p[r][0][0] + p[r][0][1] + p[r][1][0] + p[r][1][1]; }
  double marginal_t(int t) const { return p[0][t][0] + p[0][t][1] + p[1][t][0] + p[1][t][1]; }
  double marginal_z(int z) const { return p[0][0][z] + p[0][1][z] + p[1][0][z] + p[1][1][z]; }
  double ratio(int r, int t, int z) const {
    return marginal_r(r) * marginal_t(t) * marginal_z(z) / p[r][t][z];
  }

  struct Sample {
    Matrix r;  // n x 1
    Vector t;
    Vector z;
    Vector true_ratio;
  };

  Sample draw(std::size_t n, std::uint64_t seed) const {
    Rng rng(seed);
    std::discrete_distribution<int> cell({p[0][0][0], p[0][0][1], p[0][1][0], p[0][1][1], p[1][0][0],
                                          p[1][0][1], p[1][1][0], p[1][1][1]});
    const auto nn = static_cast<Eigen::Index>(n);
    Sample s{Matrix(nn, 1), Vector(nn), Vector(nn), Vector(nn)};
    for (Eigen::Index i = 0; i < nn; ++i) {
      const int c = cell(rng);
      const int r = c >> 2, t = (c >> 1) & 1, z = c & 1;
      s.r(i, 0) = r;
      s.t[i] = t;
      s.z[i] = z;
      s.true_ratio[i] = ratio(r, t, z);
    }
    return s;
  }
};

}  // namespace netfx::testing
