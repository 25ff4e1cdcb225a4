#pragma once

#include "stgl/model.hpp"
#include "stgl/trainer.hpp"

#include <functional>

namespace stgl::testing {

// Two nodes, edges both ways; optional self-loops. Handy for hand-checkable
// aggregation arithmetic.
inline Graph two_node_graph(bool self_loops) {
  Graph g;
  g.n_nodes = 2;
  g.directed = false;
  g.edges = {{0, 1, 1.0}, {1, 0, 1.0}};
  if (self_loops) {
    g.edges.push_back({0, 0, 1.0});
    g.edges.push_back({1, 1, 1.0});
  }
  g.rebuild_neighbor_index();
  return g;
}

inline Graph random_graph(int n, double density, uint64_t seed, bool self_loops = true) {
  Graph g;
  g.n_nodes = n;
  g.directed = false;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    if (self_loops) g.edges.push_back({i, i, 1.0});
    for (int j = i + 1; j < n; ++j) {
      if (unif(rng) < density) {
        g.edges.push_back({i, j, 1.0});
        g.edges.push_back({j, i, 1.0});
      }
    }
  }
  g.rebuild_neighbor_index();
  return g;
}

template <typename S>
Mat<S> random_mat(Eigen::Index r, Eigen::Index c, uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-scale, scale);
  Mat<S> m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = static_cast<S>(unif(rng));
  return m;
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int checked = 0;
};

/// Central-difference check of every trainable parameter coordinate against
/// the tape gradient. `build` constructs the scalar loss on a fresh tape;
/// parameters must already exist in the store (run `build` once beforehand
/// or pass a store pre-seeded by a forward pass).
inline GradCheckResult check_gradients(
    ParamStore<double>& store,
    const std::function<Tape<double>::NodeId(Tape<double>&)>& build,
    double h = 1e-4, double rtol = 1e-3, double atol = 1e-5) {
  {
    Tape<double> tape(&store);
    auto loss = build(tape);
    store.zero_grads();
    tape.backward(loss);
  }
  std::map<std::string, MatD> grads;
  for (auto& [name, e] : store.entries()) {
    if (e.trainable) grads[name] = e.grad;
  }

  auto eval = [&]() {
    Tape<double> tape(&store);
    return tape.val(build(tape))(0, 0);
  };

  GradCheckResult res;
  for (auto& [name, e] : store.entries()) {
    if (!e.trainable) continue;
    for (Eigen::Index i = 0; i < e.value.rows(); ++i) {
      for (Eigen::Index j = 0; j < e.value.cols(); ++j) {
        const double keep = e.value(i, j);
        e.value(i, j) = keep + h;
        const double fp = eval();
        e.value(i, j) = keep - h;
        const double fm = eval();
        e.value(i, j) = keep;
        const double fd = (fp - fm) / (2 * h);
        const double an = grads.at(name)(i, j);
        const double err = std::abs(fd - an);
        const double rel = err / std::max({std::abs(fd), std::abs(an), atol / rtol});
        if (rel > res.max_rel_err) {
          res.max_rel_err = rel;
          res.worst_param = name;
        }
        ++res.checked;
      }
    }
  }
  return res;
}

inline SeriesDataset toy_dataset(int T, int n_nodes, uint64_t seed, double scale = 1.0) {
  SeriesDataset ds;
  ds.n_nodes = n_nodes;
  ds.d_x = 1;
  ds.values = random_mat<double>(T, n_nodes, seed, scale);
  ds.exogenous.resize(T, 0);
  return ds;
}

}  // namespace stgl::testing
