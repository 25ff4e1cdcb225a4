#include "stgl/gpvar.hpp"

#include <cmath>
#include <numbers>

namespace stgl {

void GpvarParams::validate(int n_nodes) const {
  if (theta.rows() < 1 || theta.cols() < 1) {
    throw std::invalid_argument("gpvar: theta must be non-empty");
  }
  if (a.size() != n_nodes || b.size() != n_nodes) {
    throw std::invalid_argument("gpvar: a/b length must equal n_nodes");
  }
  if (sigma < 0.0) throw std::invalid_argument("gpvar: sigma must be >= 0");
}

namespace {

MatD reference_theta() {
  MatD theta(2, 3);
  theta << 2.5, -2.0, -0.5,
           1.0,  3.0,  0.0;
  return theta;
}

}  // namespace

GpvarParams default_gpvarl_params(const Graph& g, uint64_t seed) {
  GpvarParams p;
  p.theta = reference_theta();
  p.sigma = 0.4;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  p.a.resize(g.n_nodes);
  p.b.resize(g.n_nodes);
  for (int i = 0; i < g.n_nodes; ++i) p.a[i] = unif(rng);
  for (int i = 0; i < g.n_nodes; ++i) p.b[i] = unif(rng);
  return p;
}

GpvarParams default_gpvar_params(const Graph& g) {
  GpvarParams p;
  p.theta = reference_theta();
  p.sigma = 0.4;
  p.a = VecD::Constant(g.n_nodes, 0.5);
  p.b = VecD::Constant(g.n_nodes, 0.5);
  return p;
}

VecD gpvar_step_mean(const GpvarParams& p, const Graph& g,
                     const std::vector<VecD>& frames) {
  const int Q = p.Q(), L = p.L();
  if (static_cast<int>(frames.size()) < Q + 1) {
    throw std::invalid_argument("gpvar: window shorter than required order Q+1");
  }
  const int last = static_cast<int>(frames.size()) - 1;
  VecD h = VecD::Zero(g.n_nodes);
  MatD frame(g.n_nodes, 1);
  for (int q = 1; q <= Q; ++q) {
    frame.col(0) = frames[last - (q - 1)];
    for (int l = 1; l <= L; ++l) {
      if (l > 1) frame = matpow_apply(g, frame, 1);
      h += p.theta(q - 1, l - 1) * frame.col(0);
    }
  }
  return p.a.array() * h.array().tanh() +
         p.b.array() * frames[last - 1].array().tanh();
}

SeriesDataset simulate(const GpvarParams& p, const Graph& g, int steps,
                       int burn_in, uint64_t seed) {
  p.validate(g.n_nodes);
  if (steps < 1) throw std::invalid_argument("simulate: steps must be >= 1");
  if (burn_in < 0) throw std::invalid_argument("simulate: burn_in must be >= 0");

  const int Q = p.Q();
  const int hist = Q + 1;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<VecD> frames;
  frames.reserve(hist + 1);
  for (int i = 0; i < hist; ++i) {
    VecD f(g.n_nodes);
    for (int n = 0; n < g.n_nodes; ++n) f[n] = p.sigma * noise(rng);
    frames.push_back(std::move(f));
  }

  SeriesDataset ds;
  ds.n_nodes = g.n_nodes;
  ds.d_x = 1;
  ds.values.resize(steps, g.n_nodes);
  ds.exogenous.resize(steps, 0);

  for (int t = 0; t < burn_in + steps; ++t) {
    VecD next = gpvar_step_mean(p, g, frames);
    if (p.sigma > 0.0) {
      for (int n = 0; n < g.n_nodes; ++n) next[n] += p.sigma * noise(rng);
    }
    if (!next.allFinite()) {
      throw std::runtime_error("simulate: non-finite value at step " + std::to_string(t));
    }
    if (t >= burn_in) ds.values.row(t - burn_in) = next.transpose();
    frames.erase(frames.begin());
    frames.push_back(std::move(next));
  }
  return ds;
}

VecD optimal_predict(const GpvarParams& p, const Graph& g,
                     const std::vector<VecD>& recent) {
  return gpvar_step_mean(p, g, recent);
}

double optimal_mae(const GpvarParams& p, const Graph& g, const SeriesDataset& ds,
                   int t_begin, int t_end) {
  const int Q = p.Q();
  const int first = std::max(t_begin, Q + 1);
  double abs_sum = 0.0;
  long count = 0;
  std::vector<VecD> recent(Q + 1);
  for (int t = first; t < t_end; ++t) {
    for (int k = 0; k <= Q; ++k) recent[k] = ds.values.row(t - 1 - Q + k).transpose();
    VecD pred = gpvar_step_mean(p, g, recent);
    abs_sum += (ds.values.row(t).transpose() - pred).cwiseAbs().sum();
    count += g.n_nodes;
  }
  if (count == 0) throw std::invalid_argument("optimal_mae: empty evaluation range");
  return abs_sum / static_cast<double>(count);
}

double optimal_mae_expected(double sigma) {
  return sigma * std::sqrt(2.0 / std::numbers::pi);
}

}  // namespace stgl
