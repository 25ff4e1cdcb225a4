#pragma once

#include "stgl/tape.hpp"

namespace stgl {

/// y = x W (+ b). Parameters live at name/W and name/b, created on first use
/// with U(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights and zero biases.
template <typename S>
typename Tape<S>::NodeId dense(Tape<S>& t, typename Tape<S>::NodeId x,
                               const std::string& name, Eigen::Index out_dim,
                               bool bias = true) {
  auto w = t.param(name + "/W", t.val(x).cols(), out_dim, InitKind::fan_in_uniform);
  auto y = t.matmul(x, w);
  if (bias) {
    auto b = t.param(name + "/b", 1, out_dim, InitKind::zeros);
    y = t.add_rowvec(y, b);
  }
  return y;
}

/// Three-gate recurrence, applied node-wise with shared weights:
///   r  = sigmoid(W1 [x || h]),  o = sigmoid(W2 [x || h])
///   c  = tanh(W3 [x || r.h])
///   h' = o.h + (1 - o).c
template <typename S>
typename Tape<S>::NodeId gru_cell(Tape<S>& t, typename Tape<S>::NodeId x,
                                  typename Tape<S>::NodeId h_prev,
                                  const std::string& name) {
  if (t.val(x).rows() != t.val(h_prev).rows()) {
    throw std::invalid_argument("gru_cell: row counts differ");
  }
  const Eigen::Index d_h = t.val(h_prev).cols();
  auto xh = t.concat_cols({x, h_prev});
  auto r = t.sigmoid(dense(t, xh, name + "/W1", d_h));
  auto o = t.sigmoid(dense(t, xh, name + "/W2", d_h));
  auto c = t.tanh_(dense(t, t.concat_cols({x, t.mul(r, h_prev)}), name + "/W3", d_h));
  auto keep = t.mul(o, h_prev);
  auto gate = t.affine(o, S(-1), S(1));  // 1 - o
  return t.add(keep, t.mul(gate, c));
}

/// h'_i = xi(W1 h_i + mean_{j in N(i)} W2 h_j). The mean is unweighted by
/// default (weights can be folded in via `weighted`); an empty neighborhood
/// contributes the zero vector.
template <typename S>
typename Tape<S>::NodeId mp_isotropic(Tape<S>& t, typename Tape<S>::NodeId h,
                                      const Graph* g, int n_blocks,
                                      const std::string& name, Eigen::Index out_dim,
                                      Act act = Act::elu, bool weighted = false) {
  auto self_term = dense(t, h, name + "/W1", out_dim, /*bias=*/true);
  auto agg = t.graph_mean(h, g, n_blocks, weighted);
  auto nbr_term = dense(t, agg, name + "/W2", out_dim, /*bias=*/false);
  return t.activation(t.add(self_term, nbr_term), act);
}

/// Gated anisotropic operator:
///   m_{j->i} = W2 xi(W1 [h_i || h_j || a_ji])
///   alpha_{j->i} = sigmoid(W0 m_{j->i})
///   h'_i = xi(W3 h_i + sum_j alpha_{j->i} m_{j->i})
template <typename S>
typename Tape<S>::NodeId mp_anisotropic(Tape<S>& t, typename Tape<S>::NodeId h,
                                        const Graph* g, int n_blocks,
                                        const std::string& name, Eigen::Index out_dim,
                                        Act act = Act::elu) {
  auto ef = t.edge_concat(h, g, n_blocks);
  auto hidden = t.activation(dense(t, ef, name + "/W1", out_dim), act);
  auto msg = dense(t, hidden, name + "/W2", out_dim, /*bias=*/false);
  auto logit = dense(t, msg, name + "/W0", 1, /*bias=*/false);
  auto alpha = t.sigmoid(logit);
  auto gated = t.mul_colvec(msg, alpha);
  auto agg = t.edge_scatter(gated, g, n_blocks);
  auto self_term = dense(t, h, name + "/W3", out_dim, /*bias=*/true);
  return t.activation(t.add(self_term, agg), act);
}

}  // namespace stgl
