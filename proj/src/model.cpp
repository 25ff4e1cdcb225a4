#include "stgl/model.hpp"

namespace stgl {

Family family_from_string(const std::string& s) {
  if (s == "tts") return Family::TTS;
  if (s == "tas") return Family::TAS;
  if (s == "rnn") return Family::RNN;
  if (s == "fcrnn") return Family::FCRNN;
  if (s == "localrnn") return Family::LOCALRNN;
  throw std::invalid_argument("unknown model family: " + s);
}

MpKind mp_kind_from_string(const std::string& s) {
  if (s == "iso") return MpKind::iso;
  if (s == "aniso") return MpKind::aniso;
  if (s == "none") return MpKind::none;
  throw std::invalid_argument("unknown mp kind: " + s);
}

std::string to_string(Family f) {
  switch (f) {
    case Family::TTS: return "tts";
    case Family::TAS: return "tas";
    case Family::RNN: return "rnn";
    case Family::FCRNN: return "fcrnn";
    case Family::LOCALRNN: return "localrnn";
  }
  return "?";
}

std::string to_string(MpKind k) {
  switch (k) {
    case MpKind::iso: return "iso";
    case MpKind::aniso: return "aniso";
    case MpKind::none: return "none";
  }
  return "?";
}

void ModelConfig::validate(int n_nodes) const {
  if (hidden < 1 || window < 1 || horizon < 1 || d_x < 1 || d_u < 0) {
    throw std::invalid_argument("model config: bad dimensions");
  }
  if (!embedding_at.empty() && embedding_dim <= 0) {
    throw std::invalid_argument("model config: embedding sites set but d_v = 0");
  }
  for (Site s : embedding_at) {
    if (local_weights_at.count(s)) {
      throw std::invalid_argument(
          "model config: embeddings and local weights requested at the same site");
    }
  }
  switch (family) {
    case Family::FCRNN:
      if (!embedding_at.empty() || !local_weights_at.empty() || mp_kind != MpKind::none) {
        throw std::invalid_argument("model config: fcrnn forbids embeddings, local weights and MP");
      }
      break;
    case Family::LOCALRNN:
      if (!embedding_at.empty()) {
        throw std::invalid_argument("model config: localrnn forbids embeddings");
      }
      if (mp_kind != MpKind::none) {
        throw std::invalid_argument("model config: localrnn does not use MP");
      }
      if (backbone_param_count(n_nodes) > local_param_budget) {
        throw std::invalid_argument(
            "model config: localrnn parameter count " +
            std::to_string(backbone_param_count(n_nodes)) + " exceeds budget " +
            std::to_string(local_param_budget));
      }
      break;
    case Family::RNN:
      if (mp_kind != MpKind::none) {
        throw std::invalid_argument("model config: rnn family does not use MP");
      }
      break;
    case Family::TTS:
      if (mp_kind == MpKind::none) {
        throw std::invalid_argument("model config: tts requires an MP kind");
      }
      if (mp_layers < 0) throw std::invalid_argument("model config: mp_layers < 0");
      break;
    case Family::TAS:
      if (mp_kind == MpKind::none) {
        throw std::invalid_argument("model config: tas requires an MP kind");
      }
      if (mp_layers < 1) throw std::invalid_argument("model config: tas needs >= 1 cell");
      break;
  }
}

namespace {

std::size_t dense_count(std::size_t in, std::size_t out, bool bias) {
  return in * out + (bias ? out : 0);
}

std::size_t mp_count(MpKind kind, std::size_t d_in, std::size_t d_h) {
  if (kind == MpKind::iso) {
    return dense_count(d_in, d_h, true) + dense_count(d_in, d_h, false);
  }
  // W1 [h_i || h_j || a_ji] -> d_h, W2 d_h -> d_h, W0 gate, W3 self term
  return dense_count(2 * d_in + 1, d_h, true) + dense_count(d_h, d_h, false) +
         dense_count(d_h, 1, false) + dense_count(d_in, d_h, true);
}

}  // namespace

std::size_t ModelConfig::backbone_param_count(int n_nodes) const {
  const std::size_t N = static_cast<std::size_t>(n_nodes);
  const std::size_t dh = hidden, dx = d_x, du = d_u, dv = embedding_dim, H = horizon;
  const std::size_t gru = 3 * dense_count(2 * dh, dh, true);

  if (family == Family::LOCALRNN) {
    return N * (dense_count(dx + du, dh, true) + gru + dense_count(dh, dh, true) +
                H * dense_count(dh, dx, true));
  }

  std::size_t total = 0;
  if (family == Family::FCRNN) {
    total += dense_count(N * (dx + du), dh, true);
  } else if (local_weights_at.count(Site::encoder)) {
    total += N * dense_count(dx + du, dh, true);
  } else {
    const std::size_t d_in = dx + du + (embedding_at.count(Site::encoder) ? dv : 0);
    total += dense_count(d_in, dh, true);
  }

  if (family == Family::TTS) {
    total += gru;
    total += static_cast<std::size_t>(mp_layers) * mp_count(mp_kind, dh, dh);
  } else if (family == Family::TAS) {
    total += static_cast<std::size_t>(std::max(1, mp_layers)) * 3 * mp_count(mp_kind, 2 * dh, dh);
  } else {
    total += gru;  // RNN / FCRNN core
  }

  const std::size_t d_dec = dh + (embedding_at.count(Site::decoder) ? dv : 0);
  total += dense_count(d_dec, dh, true);
  const std::size_t out = (family == Family::FCRNN) ? N * dx : dx;
  if (local_weights_at.count(Site::decoder)) {
    total += N * H * dense_count(dh, out, true);
  } else {
    total += H * dense_count(dh, out, true);
  }
  return total;
}

std::size_t ModelConfig::embedding_param_count(int n_nodes, EmbMode mode,
                                               int n_clusters) const {
  const std::size_t N = static_cast<std::size_t>(n_nodes);
  const std::size_t dv = embedding_dim;
  if (embedding_at.empty()) return 0;
  switch (mode) {
    case EmbMode::plain: return N * dv;
    case EmbMode::variational: return 2 * N * dv;
    case EmbMode::clustered:
      return N * dv + static_cast<std::size_t>(n_clusters) * dv +
             N * static_cast<std::size_t>(n_clusters);
  }
  return 0;
}

Forecast hybrid_sum_forward(const Forecast& global_part, const Forecast& local_part) {
  if (global_part.n_nodes != local_part.n_nodes ||
      global_part.horizon != local_part.horizon || global_part.d_x != local_part.d_x) {
    throw std::invalid_argument("hybrid_sum_forward: forecast shapes differ");
  }
  Forecast out = global_part;
  out.data += local_part.data;
  return out;
}

Forecast forward(const ModelConfig& cfg, const Graph& g,
                 const EmbeddingTable<float>* emb, ParamStore<float>& store,
                 const MatD& window_values, const MatD& window_exog) {
  const int N = g.n_nodes;
  const int W = static_cast<int>(window_values.rows());
  if (W != cfg.window) {
    throw std::invalid_argument("forward: window length " + std::to_string(W) +
                                " != configured " + std::to_string(cfg.window));
  }
  if (window_values.cols() != static_cast<Eigen::Index>(N) * cfg.d_x) {
    throw std::invalid_argument("forward: window has wrong node/channel count");
  }

  Batch<float> batch;
  batch.n_windows = 1;
  batch.real_nodes = N;
  const bool fc = cfg.family == Family::FCRNN;
  batch.nodes_per_window = fc ? 1 : N;
  for (int s = 0; s < W; ++s) {
    if (fc) {
      MatF step(1, N * (cfg.d_x + cfg.d_u));
      for (int c = 0; c < N * cfg.d_x; ++c) step(0, c) = static_cast<float>(window_values(s, c));
      for (int c = 0; c < N * cfg.d_u; ++c)
        step(0, N * cfg.d_x + c) = static_cast<float>(window_exog(s, c));
      batch.steps.push_back(std::move(step));
    } else {
      MatF step(N, cfg.d_x + cfg.d_u);
      for (int n = 0; n < N; ++n) {
        for (int c = 0; c < cfg.d_x; ++c)
          step(n, c) = static_cast<float>(window_values(s, n * cfg.d_x + c));
        for (int c = 0; c < cfg.d_u; ++c)
          step(n, cfg.d_x + c) = static_cast<float>(window_exog(s, n * cfg.d_u + c));
      }
      batch.steps.push_back(std::move(step));
    }
  }

  Tape<float> tape(&store);
  auto preds = model_forward(tape, cfg, &g, emb, batch, Phase::eval, nullptr);

  Forecast f;
  f.n_nodes = N;
  f.horizon = cfg.horizon;
  f.d_x = cfg.d_x;
  f.data.resize(N, static_cast<Eigen::Index>(cfg.horizon) * cfg.d_x);
  for (int k = 0; k < cfg.horizon; ++k) {
    const MatF& p = tape.val(preds[k]);
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < cfg.d_x; ++c) {
        f.data(n, static_cast<Eigen::Index>(k) * cfg.d_x + c) =
            fc ? p(0, n * cfg.d_x + c) : p(n, c);
      }
    }
  }
  f.check_finite();
  return f;
}

}  // namespace stgl
