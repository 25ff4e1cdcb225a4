#include "stgl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace stgl {

void Graph::rebuild_neighbor_index() {
  neighbor_in.assign(n_nodes, {});
  for (const Edge& e : edges) {
    neighbor_in[e.dst].emplace_back(e.src, e.weight);
  }
  for (auto& nbrs : neighbor_in) {
    std::sort(nbrs.begin(), nbrs.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  }
}

void Graph::validate() const {
  std::set<std::pair<int, int>> seen;
  for (const Edge& e : edges) {
    if (e.src < 0 || e.src >= n_nodes || e.dst < 0 || e.dst >= n_nodes) {
      throw std::invalid_argument("graph: node index out of range");
    }
    if (!seen.insert({e.src, e.dst}).second) {
      throw std::invalid_argument("graph: duplicate edge (" +
                                  std::to_string(e.src) + "," +
                                  std::to_string(e.dst) + ")");
    }
  }
  if (!directed) {
    for (const Edge& e : edges) {
      if (e.src != e.dst && !seen.count({e.dst, e.src})) {
        throw std::invalid_argument("graph: undirected edge list not symmetric-closed");
      }
    }
  }
}

Graph build_community_graph(int n_communities, int community_size,
                            int bridges_per_community, double intra_density,
                            uint64_t seed) {
  if (n_communities < 1 || community_size < 1) {
    throw std::invalid_argument("build_community_graph: sizes must be positive");
  }
  if (!(intra_density > 0.0) || intra_density > 1.0) {
    throw std::invalid_argument("build_community_graph: intra_density must be in (0,1]");
  }
  if (bridges_per_community < 0) {
    throw std::invalid_argument("build_community_graph: bridges must be >= 0");
  }

  const int n = n_communities * community_size;
  Graph g;
  g.n_nodes = n;
  g.directed = false;

  std::set<std::pair<int, int>> pairs;  // canonical (min,max) pairs, self included
  auto add_pair = [&pairs](int u, int v) {
    pairs.insert({std::min(u, v), std::max(u, v)});
  };

  for (int i = 0; i < n; ++i) add_pair(i, i);  // self-loops on every node

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  for (int c = 0; c < n_communities; ++c) {
    const int base = c * community_size;
    for (int u = 0; u < community_size; ++u) {
      for (int v = u + 1; v < community_size; ++v) {
        if (intra_density >= 1.0 || unif(rng) < intra_density) {
          add_pair(base + u, base + v);
        }
      }
    }
  }

  if (n_communities > 1) {
    std::uniform_int_distribution<int> pick(0, community_size - 1);
    for (int c = 0; c < n_communities; ++c) {
      const int next = (c + 1) % n_communities;
      for (int k = 0; k < bridges_per_community; ++k) {
        // redraw on collision so the bridge count is exact
        for (int attempt = 0; attempt < 1000; ++attempt) {
          int u = c * community_size + pick(rng);
          int v = next * community_size + pick(rng);
          if (!pairs.count({std::min(u, v), std::max(u, v)})) {
            add_pair(u, v);
            break;
          }
        }
      }
    }
  }

  for (const auto& [u, v] : pairs) {
    g.edges.push_back({u, v, 1.0});
    if (u != v) g.edges.push_back({v, u, 1.0});
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.dst, a.src) < std::tie(b.dst, b.src);
  });
  g.rebuild_neighbor_index();
  return g;
}

NormMode norm_mode_from_string(const std::string& s) {
  if (s == "none") return NormMode::none;
  if (s == "symmetric") return NormMode::symmetric;
  if (s == "row") return NormMode::row;
  if (s == "spectral") return NormMode::spectral;
  throw std::invalid_argument("unknown normalization mode: " + s);
}

std::string to_string(NormMode m) {
  switch (m) {
    case NormMode::none: return "none";
    case NormMode::symmetric: return "symmetric";
    case NormMode::row: return "row";
    case NormMode::spectral: return "spectral";
  }
  return "?";
}

double spectral_radius(const Graph& g, int iterations) {
  MatD x = MatD::Ones(g.n_nodes, 1);
  x /= x.norm();
  double radius = 0.0;
  for (int it = 0; it < iterations; ++it) {
    MatD y = matpow_apply(g, x, 1);
    radius = y.norm();
    if (radius == 0.0) return 0.0;
    x = y / radius;
  }
  return radius;
}

Graph normalize_adjacency(const Graph& g, NormMode mode) {
  if (mode == NormMode::none) return g;

  if (mode == NormMode::spectral) {
    const double radius = spectral_radius(g);
    if (radius <= 0.0) {
      throw std::invalid_argument("normalize_adjacency: zero spectral radius");
    }
    Graph out = g;
    for (Edge& e : out.edges) e.weight /= radius;
    out.rebuild_neighbor_index();
    return out;
  }

  VecD deg = VecD::Zero(g.n_nodes);
  for (const Edge& e : g.edges) deg[e.dst] += e.weight;
  for (int i = 0; i < g.n_nodes; ++i) {
    if (deg[i] <= 0.0) {
      throw std::invalid_argument("normalize_adjacency: node " + std::to_string(i) +
                                  " has zero weighted degree");
    }
  }

  Graph out = g;
  for (Edge& e : out.edges) {
    if (mode == NormMode::row) {
      e.weight /= deg[e.dst];
    } else {
      e.weight /= std::sqrt(deg[e.dst] * deg[e.src]);
    }
  }
  out.rebuild_neighbor_index();
  return out;
}

MatD matpow_apply(const Graph& g, const MatD& x, int power) {
  if (x.rows() != g.n_nodes) {
    throw std::invalid_argument("matpow_apply: row count " + std::to_string(x.rows()) +
                                " != n_nodes " + std::to_string(g.n_nodes));
  }
  if (power < 0) throw std::invalid_argument("matpow_apply: negative power");
  MatD y = x;
  MatD next(x.rows(), x.cols());
  for (int p = 0; p < power; ++p) {
    next.setZero();
    for (int i = 0; i < g.n_nodes; ++i) {
      for (const auto& [j, w] : g.neighbor_in[i]) {
        next.row(i) += w * y.row(j);
      }
    }
    y.swap(next);
  }
  return y;
}

void save_edge_csv(const Graph& g, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "src,dst,weight\n";
  f.precision(17);
  for (const Edge& e : g.edges) {
    f << e.src << ',' << e.dst << ',' << e.weight << '\n';
  }
}

Graph load_edge_csv(const std::string& path, int n_nodes, bool directed) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  Graph g;
  g.n_nodes = n_nodes;
  g.directed = directed;
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error(path + ": empty edge file");
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c)) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed edge row");
    }
    Edge e{std::stoi(a), std::stoi(b), std::stod(c)};
    if (e.src < 0 || e.src >= n_nodes || e.dst < 0 || e.dst >= n_nodes) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": edge references unknown node");
    }
    g.edges.push_back(e);
  }
  g.validate();
  g.rebuild_neighbor_index();
  return g;
}

}  // namespace stgl
