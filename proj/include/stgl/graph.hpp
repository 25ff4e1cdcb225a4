#pragma once

#include "stgl/common.hpp"

#include <utility>
#include <vector>

namespace stgl {

struct Edge {
  int src = 0;
  int dst = 0;
  double weight = 1.0;
};

/// Weighted graph with per-node incoming-neighbor index. Immutable after
/// construction; safe to share across concurrent readers.
struct Graph {
  int n_nodes = 0;
  bool directed = false;
  std::vector<Edge> edges;  // directed storage; symmetric-closed when undirected
  // neighbor_in[i] enumerates (j, w_ji) for every stored edge j -> i.
  std::vector<std::vector<std::pair<int, double>>> neighbor_in;

  void rebuild_neighbor_index();
  void validate() const;
};

inline constexpr int kDefaultBridges = 1;
inline constexpr double kDefaultIntraDensity = 0.6;

// Communities of `community_size` nodes each, self-loop on every node,
// intra-community edges sampled at `intra_density`, consecutive communities
// joined in a ring by `bridges_per_community` random cross edges. Weights
// are all 1 before normalization. Defaults land near 200 non-self edges for
// (20, 6), the scale used by the synthetic benchmark.
Graph build_community_graph(int n_communities, int community_size,
                            int bridges_per_community, double intra_density,
                            uint64_t seed);

enum class NormMode { none, symmetric, row, spectral };

NormMode norm_mode_from_string(const std::string& s);
std::string to_string(NormMode m);

// Rescales edge weights: symmetric -> w/sqrt(d_i d_j), row -> w/d_i (d =
// weighted degree, self-loops included), spectral -> w/lambda_max (the
// standard stabilization for graph polynomial filters). Throws on a
// zero-degree node (degree modes only).
Graph normalize_adjacency(const Graph& g, NormMode mode);

// Largest-magnitude eigenvalue of the adjacency operator, by power
// iteration.
double spectral_radius(const Graph& g, int iterations = 200);

// A^power * X by repeated sparse neighbor aggregation, where
// (A X)_i = sum_{(j,w) in neighbor_in[i]} w * x_j. power 0 is the identity.
MatD matpow_apply(const Graph& g, const MatD& x, int power);

// Edge-list CSV, header `src,dst,weight`. Node count comes from a sidecar
// metadata file, so isolated trailing nodes survive the round trip.
void save_edge_csv(const Graph& g, const std::string& path);
Graph load_edge_csv(const std::string& path, int n_nodes, bool directed);

}  // namespace stgl
