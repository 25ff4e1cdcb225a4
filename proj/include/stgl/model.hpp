#pragma once

#include "stgl/embeddings.hpp"
#include "stgl/nn.hpp"

#include <set>

namespace stgl {

enum class Family { TTS, TAS, RNN, FCRNN, LOCALRNN };
enum class MpKind { iso, aniso, none };
enum class Site { encoder, decoder };

Family family_from_string(const std::string& s);
MpKind mp_kind_from_string(const std::string& s);
std::string to_string(Family f);
std::string to_string(MpKind k);

struct ModelConfig {
  Family family = Family::TTS;
  MpKind mp_kind = MpKind::iso;
  int mp_layers = 2;   // MP layers after the GRU (TTS) / recurrent cells (TAS)
  int hidden = 16;     // d_h
  int window = 6;      // W
  int horizon = 1;     // H
  int embedding_dim = 0;  // d_v, 0 = none
  std::set<Site> embedding_at;
  std::set<Site> local_weights_at;
  int d_x = 1;
  int d_u = 0;
  Act activation = Act::elu;
  bool weighted_mean = false;  // fold edge weights into the isotropic mean
  std::size_t local_param_budget = 50'000'000;

  bool uses_embeddings() const { return !embedding_at.empty(); }
  void validate(int n_nodes) const;

  // Closed-form trainable-parameter count of the backbone (embedding table
  // excluded; see embedding_param_count).
  std::size_t backbone_param_count(int n_nodes) const;
  std::size_t embedding_param_count(int n_nodes, EmbMode mode, int n_clusters) const;
};

/// Assembled mini-batch. `steps` holds the window inputs [x || u] oldest
/// first; rows are window-major, node-minor (row w*N + n). FCRNN batches
/// flatten all nodes into one row per window instead.
template <typename S>
struct Batch {
  std::vector<Mat<S>> steps;
  std::vector<Mat<S>> targets;  // one per horizon step, same row layout
  int n_windows = 0;
  int nodes_per_window = 0;
  int real_nodes = 0;  // graph node count; differs from nodes_per_window for FCRNN
};

/// H-step predictions for one window, aligned to targets t..t+H.
struct Forecast {
  int n_nodes = 0;
  int horizon = 0;
  int d_x = 1;
  MatD data;  // n_nodes x (horizon * d_x)

  double at(int node, int h, int c = 0) const { return data(node, h * d_x + c); }
  void check_finite() const {
    if (!data.allFinite()) throw std::runtime_error("forecast contains non-finite values");
  }
};

// Elementwise sum combinator for hybrid global-local predictions.
Forecast hybrid_sum_forward(const Forecast& global_part, const Forecast& local_part);

namespace detail {

template <typename S>
std::vector<int> tile_node_indices(int n_nodes, int n_windows) {
  std::vector<int> idx(static_cast<size_t>(n_nodes) * n_windows);
  for (int w = 0; w < n_windows; ++w)
    for (int n = 0; n < n_nodes; ++n) idx[static_cast<size_t>(w) * n_nodes + n] = n;
  return idx;
}

}  // namespace detail

/// Builds the taped forward pass for one mini-batch and returns the horizon
/// prediction nodes (each rows x d_x in the batch layout). Parameter names
/// are stable across calls, so the same store serves training, evaluation
/// and checkpointing.
template <typename S>
std::vector<typename Tape<S>::NodeId> model_forward(
    Tape<S>& t, const ModelConfig& cfg, const Graph* g,
    const EmbeddingTable<S>* emb, const Batch<S>& batch, Phase phase,
    std::mt19937_64* rng) {
  using NodeId = typename Tape<S>::NodeId;
  const int B = batch.n_windows;
  const int N = batch.nodes_per_window;
  const Eigen::Index rows = static_cast<Eigen::Index>(B) * N;
  const int W = static_cast<int>(batch.steps.size());
  if (W < 1) throw std::invalid_argument("model_forward: empty window");
  const Eigen::Index d_h = cfg.hidden;

  NodeId emb_rows = -1;
  if (cfg.uses_embeddings()) {
    if (emb == nullptr) throw std::invalid_argument("model_forward: embedding table missing");
    if (emb->n_nodes != N) {
      throw std::invalid_argument("model_forward: embedding table has " +
                                  std::to_string(emb->n_nodes) + " rows, graph has " +
                                  std::to_string(N));
    }
    NodeId table = emb->rows_node(t, phase, rng);
    emb_rows = t.gather_rows(table, detail::tile_node_indices<S>(N, B));
  }

  auto encode_step = [&](const Mat<S>& x) -> NodeId {
    NodeId in = t.input(x);
    if (cfg.local_weights_at.count(Site::encoder)) {
      NodeId out = -1;
      for (int n = 0; n < N; ++n) {
        std::vector<int> idx(B);
        for (int w = 0; w < B; ++w) idx[w] = w * N + n;
        NodeId xi = t.gather_rows(in, idx);
        NodeId hi = dense(t, xi, "enc/node" + std::to_string(n), d_h);
        NodeId sc = t.scatter_rows(hi, idx, rows);
        out = (out < 0) ? sc : t.add(out, sc);
      }
      return out;
    }
    if (emb_rows >= 0 && cfg.embedding_at.count(Site::encoder)) {
      in = t.concat_cols({in, emb_rows});
    }
    return dense(t, in, "enc", d_h);
  };

  NodeId hL = -1;
  if (cfg.family == Family::LOCALRNN) {
    // disjoint parameter namespaces per node
    std::vector<NodeId> preds(cfg.horizon, -1);
    for (int n = 0; n < N; ++n) {
      const std::string base = "node" + std::to_string(n) + "/";
      std::vector<int> idx(B);
      for (int w = 0; w < B; ++w) idx[w] = w * N + n;
      NodeId h = t.input(Mat<S>::Zero(B, d_h));
      for (int s = 0; s < W; ++s) {
        NodeId xs = t.gather_rows(t.input(batch.steps[s]), idx);
        NodeId enc = dense(t, xs, base + "enc", d_h);
        h = gru_cell(t, enc, h, base + "gru");
      }
      NodeId z = t.activation(dense(t, h, base + "dec", d_h), cfg.activation);
      for (int k = 0; k < cfg.horizon; ++k) {
        NodeId y = dense(t, z, base + "dec/h" + std::to_string(k), cfg.d_x);
        NodeId sc = t.scatter_rows(y, idx, rows);
        preds[k] = (preds[k] < 0) ? sc : t.add(preds[k], sc);
      }
    }
    return preds;
  }

  if (cfg.family == Family::TAS) {
    const int n_cells = std::max(1, cfg.mp_layers);
    std::vector<NodeId> state(n_cells);
    for (int l = 0; l < n_cells; ++l) state[l] = t.input(Mat<S>::Zero(rows, d_h));
    auto gate_mp = [&](NodeId z, const std::string& name) -> NodeId {
      if (cfg.mp_kind == MpKind::aniso) {
        return mp_anisotropic(t, z, g, B, name, d_h, cfg.activation);
      }
      return mp_isotropic(t, z, g, B, name, d_h, cfg.activation, cfg.weighted_mean);
    };
    for (int s = 0; s < W; ++s) {
      NodeId x = encode_step(batch.steps[s]);
      for (int l = 0; l < n_cells; ++l) {
        const std::string base = "tas" + std::to_string(l);
        NodeId h = state[l];
        NodeId xh = t.concat_cols({x, h});
        NodeId r = t.sigmoid(gate_mp(xh, base + "/r"));
        NodeId o = t.sigmoid(gate_mp(xh, base + "/o"));
        NodeId c = t.tanh_(gate_mp(t.concat_cols({x, t.mul(r, h)}), base + "/c"));
        NodeId h_new = t.add(t.mul(o, h), t.mul(t.affine(o, S(-1), S(1)), c));
        state[l] = h_new;
        x = h_new;
      }
    }
    hL = state[n_cells - 1];
  } else {
    // TTS / RNN / FCRNN share the node-wise recurrence
    NodeId h = t.input(Mat<S>::Zero(rows, d_h));
    for (int s = 0; s < W; ++s) {
      h = gru_cell(t, encode_step(batch.steps[s]), h, "gru");
    }
    if (cfg.family == Family::TTS) {
      for (int l = 0; l < cfg.mp_layers; ++l) {
        const std::string name = "mp" + std::to_string(l);
        if (cfg.mp_kind == MpKind::aniso) {
          h = mp_anisotropic(t, h, g, B, name, d_h, cfg.activation);
        } else {
          h = mp_isotropic(t, h, g, B, name, d_h, cfg.activation, cfg.weighted_mean);
        }
      }
    }
    hL = h;
  }

  // decoder: z = xi(W_dec [hL (|| v)]); one linear head per horizon step
  NodeId dec_in = hL;
  if (emb_rows >= 0 && cfg.embedding_at.count(Site::decoder)) {
    dec_in = t.concat_cols({dec_in, emb_rows});
  }
  NodeId z = t.activation(dense(t, dec_in, "dec", d_h), cfg.activation);

  const Eigen::Index out_dim =
      (cfg.family == Family::FCRNN)
          ? static_cast<Eigen::Index>(cfg.d_x) * batch.real_nodes
          : static_cast<Eigen::Index>(cfg.d_x);
  std::vector<NodeId> preds;
  preds.reserve(cfg.horizon);
  for (int k = 0; k < cfg.horizon; ++k) {
    const std::string head = "dec/h" + std::to_string(k);
    if (cfg.local_weights_at.count(Site::decoder)) {
      NodeId yk = -1;
      for (int n = 0; n < N; ++n) {
        std::vector<int> idx(B);
        for (int w = 0; w < B; ++w) idx[w] = w * N + n;
        NodeId zi = t.gather_rows(z, idx);
        NodeId yi = dense(t, zi, head + "/node" + std::to_string(n), out_dim);
        NodeId sc = t.scatter_rows(yi, idx, rows);
        yk = (yk < 0) ? sc : t.add(yk, sc);
      }
      preds.push_back(yk);
    } else {
      preds.push_back(dense(t, z, head, out_dim));
    }
  }
  return preds;
}

/// Single-window forecast with frozen parameters (B = 1, eval phase).
Forecast forward(const ModelConfig& cfg, const Graph& g,
                 const EmbeddingTable<float>* emb, ParamStore<float>& store,
                 const MatD& window_values, const MatD& window_exog);

}  // namespace stgl
