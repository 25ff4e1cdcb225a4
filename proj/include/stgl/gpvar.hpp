#pragma once

#include "stgl/common.hpp"
#include "stgl/dataset.hpp"
#include "stgl/graph.hpp"

#include <vector>

namespace stgl {

/// Graph polynomial VAR coefficients plus node-wise gains. The plain variant
/// fixes a = b = 0.5; the -L variant draws them U(-2, 2) to inject local
/// effects.
struct GpvarParams {
  MatD theta;  // Q x L filter coefficients
  VecD a;      // length N
  VecD b;      // length N
  double sigma = 0.4;

  int Q() const { return static_cast<int>(theta.rows()); }
  int L() const { return static_cast<int>(theta.cols()); }
  void validate(int n_nodes) const;
};

GpvarParams default_gpvarl_params(const Graph& g, uint64_t seed);
GpvarParams default_gpvar_params(const Graph& g);

inline constexpr int kDefaultBurnIn = 100;

// One step of the recursion given the most recent frames (newest last):
//   H   = sum_{q=1..Q} sum_{l=1..L} theta(q,l) A^{l-1} frames[end-(q-1)]
//   out = a (.) tanh(H) + b (.) tanh(frames[end-1])
// i.e. the graph filter reads the last Q frames and the skip term reads the
// frame one step older than the newest. Adding N(0, sigma^2) noise to `out`
// yields the next frame.
VecD gpvar_step_mean(const GpvarParams& p, const Graph& g,
                     const std::vector<VecD>& frames);

// Iterates the process from N(0, sigma^2) initial frames, discards
// `burn_in` frames, returns `steps` frames with d_x = 1. Deterministic in
// (params, graph, seed); throws with the step index if a value blows up.
SeriesDataset simulate(const GpvarParams& p, const Graph& g, int steps,
                       int burn_in, uint64_t seed);

// Conditional mean of the next frame from a (Q+1)-frame window (newest
// last); the residual against the realized next frame is exactly the noise.
VecD optimal_predict(const GpvarParams& p, const Graph& g,
                     const std::vector<VecD>& recent);

// MAE of optimal_predict over targets in [t_begin, t_end); the analytic
// expectation is sigma * sqrt(2/pi).
double optimal_mae(const GpvarParams& p, const Graph& g, const SeriesDataset& ds,
                   int t_begin, int t_end);

double optimal_mae_expected(double sigma);

}  // namespace stgl
