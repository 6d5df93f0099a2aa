#include "netfx/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace netfx {

Network Network::from_edges(std::size_t n, std::span<const std::pair<NodeId, NodeId>> edges) {
  std::vector<std::vector<NodeId>> adj(n);
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0) {
      throw ValidationError("negative node id in edge " + std::to_string(u) + "-" + std::to_string(v));
    }
    if (static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n) {
      throw ValidationError("node id out of range in edge " + std::to_string(u) + "-" +
                            std::to_string(v));
    }
    if (u == v) throw ValidationError("self-loop on node " + std::to_string(u));
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  Network net;
  net.offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = adj[i];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    net.offsets_[i + 1] = net.offsets_[i] + row.size();
  }
  net.targets_.reserve(net.offsets_[n]);
  for (const auto& row : adj) net.targets_.insert(net.targets_.end(), row.begin(), row.end());
  return net;
}

bool Network::has_edge(NodeId i, NodeId j) const {
  auto row = neighbors(i);
  return std::binary_search(row.begin(), row.end(), j);
}

std::vector<std::pair<NodeId, NodeId>> Network::canonical_edges() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  out.reserve(num_edges());
  for (NodeId i = 0; i < static_cast<NodeId>(num_nodes()); ++i) {
    for (NodeId j : neighbors(i)) {
      if (i < j) out.emplace_back(i, j);
    }
  }
  return out;
}

void Network::require_no_isolated() const {
  for (NodeId i = 0; i < static_cast<NodeId>(num_nodes()); ++i) {
    if (degree(i) == 0) {
      throw ValidationError("isolated node " + std::to_string(i) +
                            ": peer exposure is undefined for nodes without neighbors");
    }
  }
}

DegreeStats degree_stats(const Network& net) {
  DegreeStats s;
  const std::size_t n = net.num_nodes();
  if (n == 0) return s;
  s.min = net.degree(0);
  std::size_t total = 0;
  for (NodeId i = 0; i < static_cast<NodeId>(n); ++i) {
    const std::size_t d = net.degree(i);
    s.min = std::min(s.min, d);
    s.max = std::max(s.max, d);
    total += d;
    if (d == 0) ++s.isolated;
  }
  s.mean = static_cast<double>(total) / static_cast<double>(n);
  return s;
}

namespace {

[[noreturn]] void parse_fail(std::size_t line, std::size_t col, const std::string& what) {
  throw ValidationError("edge list line " + std::to_string(line) + ", column " +
                        std::to_string(col) + ": " + what);
}

}  // namespace

Network parse_edge_list(std::string_view text) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  long long max_id = -1;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    ++line_no;
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    long long ids[2];
    int found = 0;
    std::size_t c = 0;
    while (c < line.size()) {
      if (line[c] == ' ' || line[c] == '\t') {
        ++c;
        continue;
      }
      if (line[c] == '#') {
        if (found == 0) break;
        parse_fail(line_no, c + 1, "comment inside an edge");
      }
      if (found == 2) parse_fail(line_no, c + 1, "more than two fields");
      std::size_t end = c;
      while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
      std::string_view tok = line.substr(c, end - c);
      long long v = 0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        parse_fail(line_no, c + 1, "expected integer node id, got '" + std::string(tok) + "'");
      }
      if (v < 0) parse_fail(line_no, c + 1, "negative node id " + std::to_string(v));
      if (v > 0x7fffffff) parse_fail(line_no, c + 1, "node id too large");
      ids[found++] = v;
      c = end;
    }
    if (found == 0) {
      if (eol == text.size()) break;
      continue;
    }
    if (found == 1) parse_fail(line_no, line.size() + 1, "expected two node ids");
    if (ids[0] == ids[1]) parse_fail(line_no, 1, "self-loop on node " + std::to_string(ids[0]));
    edges.emplace_back(static_cast<NodeId>(ids[0]), static_cast<NodeId>(ids[1]));
    max_id = std::max({max_id, ids[0], ids[1]});
    if (eol == text.size()) break;
  }
  return Network::from_edges(static_cast<std::size_t>(max_id + 1), edges);
}

Network load_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open edge list " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_edge_list(ss.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string format_edge_list(const Network& net) {
  std::string out;
  for (auto [u, v] : net.canonical_edges()) {
    out += std::to_string(u);
    out += '\t';
    out += std::to_string(v);
    out += '\n';
  }
  return out;
}

void save_edge_list(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << format_edge_list(net);
}

Network erdos_renyi_graph(std::size_t n, double mean_degree, std::uint64_t seed) {
  if (n < 2) throw ValidationError("graph needs at least 2 nodes");
  const double max_edges = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const auto m = static_cast<std::size_t>(std::llround(0.5 * mean_degree * static_cast<double>(n)));
  if (m == 0 || static_cast<double>(m) > max_edges) {
    throw ValidationError("mean_degree out of range for n=" + std::to_string(n));
  }
  Rng rng(seed);
  std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(n - 1));
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(m);
  // G(n, m): rejection sampling of distinct edges; cheap for sparse graphs.
  std::vector<std::vector<NodeId>> adj(n);
  while (edges.size() < m) {
    NodeId u = pick(rng), v = pick(rng);
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    auto& row = adj[u];
    if (std::find(row.begin(), row.end(), v) != row.end()) continue;
    row.push_back(v);
    edges.emplace_back(u, v);
  }
  std::vector<std::size_t> degree(n, 0);
  for (auto [u, v] : edges) {
    ++degree[u];
    ++degree[v];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (degree[i] > 0) continue;
    NodeId j = pick(rng);
    while (static_cast<std::size_t>(j) == i) j = pick(rng);
    edges.emplace_back(static_cast<NodeId>(i), j);
    ++degree[i];
    ++degree[j];
  }
  return Network::from_edges(n, edges);
}

Network barabasi_albert_graph(std::size_t n, std::size_t m, std::uint64_t seed) {
  if (m < 1 || n <= m) throw ValidationError("barabasi_albert requires 1 <= m < n");
  Rng rng(seed);
  std::vector<std::pair<NodeId, NodeId>> edges;
  // Endpoint pool: each node appears once per incident edge, so uniform
  // picks from it are degree-proportional.
  std::vector<NodeId> pool;
  // Seed with a star on the first m + 1 nodes so every node has degree >= 1.
  for (std::size_t j = 0; j < m; ++j) {
    edges.emplace_back(static_cast<NodeId>(m), static_cast<NodeId>(j));
    pool.push_back(static_cast<NodeId>(m));
    pool.push_back(static_cast<NodeId>(j));
  }
  for (std::size_t v = m + 1; v < n; ++v) {
    std::vector<NodeId> chosen;
    while (chosen.size() < m) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      NodeId u = pool[pick(rng)];
      if (std::find(chosen.begin(), chosen.end(), u) == chosen.end()) chosen.push_back(u);
    }
    for (NodeId u : chosen) {
      edges.emplace_back(static_cast<NodeId>(v), u);
      pool.push_back(static_cast<NodeId>(v));
      pool.push_back(u);
    }
  }
  return Network::from_edges(n, edges);
}

Network cycle_graph(std::size_t n) {
  if (n < 3) throw ValidationError("cycle needs at least 3 nodes");
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t i = 0; i < n; ++i) {
    edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>((i + 1) % n));
  }
  return Network::from_edges(n, edges);
}

}  // namespace netfx
