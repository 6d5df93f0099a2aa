#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "netfx/common.hpp"

namespace netfx {

/// Undirected simple graph stored as sorted neighbor lists (CSR layout).
/// Immutable after construction.
class Network {
 public:
  Network() = default;

  /// Builds from an edge list; each undirected edge may appear once or in
  /// both directions. Throws ValidationError on self-loops, negative or
  /// out-of-range ids. Duplicate edges are merged.
  static Network from_edges(std::size_t n, std::span<const std::pair<NodeId, NodeId>> edges);

  std::size_t num_nodes() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_edges() const { return targets_.size() / 2; }
  std::size_t degree(NodeId i) const { return offsets_[i + 1] - offsets_[i]; }

  std::span<const NodeId> neighbors(NodeId i) const {
    return {targets_.data() + offsets_[i], degree(i)};
  }
  bool has_edge(NodeId i, NodeId j) const;

  /// Row offsets into the flat directed-edge arrays (size n + 1).
  std::span<const std::size_t> offsets() const { return offsets_; }
  /// Flat neighbor ids; entries offsets[i]..offsets[i+1] belong to row i.
  std::span<const NodeId> targets() const { return targets_; }

  /// Each undirected edge once, min id first, sorted.
  std::vector<std::pair<NodeId, NodeId>> canonical_edges() const;

  /// Throws ValidationError naming the first degree-0 node.
  void require_no_isolated() const;

  bool operator==(const Network&) const = default;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> targets_;
};

struct DegreeStats {
  std::size_t min = 0;
  std::size_t max = 0;
  double mean = 0.0;
  std::size_t isolated = 0;
};

DegreeStats degree_stats(const Network& net);

Network parse_edge_list(std::string_view text);
Network load_edge_list(const std::filesystem::path& path);
std::string format_edge_list(const Network& net);
void save_edge_list(const Network& net, const std::filesystem::path& path);

// Built-in random graph sources for benchmark generation.
/// G(n, m) with m = round(n * mean_degree / 2); nodes left isolated are then
/// joined to one uniformly chosen node so every node has a neighbor.
Network erdos_renyi_graph(std::size_t n, double mean_degree, std::uint64_t seed);
Network barabasi_albert_graph(std::size_t n, std::size_t m, std::uint64_t seed);
Network cycle_graph(std::size_t n);

}  // namespace netfx
