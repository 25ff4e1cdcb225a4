#include "stgl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>

namespace stgl {

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "mae") return LossKind::mae;
  if (s == "mse") return LossKind::mse;
  throw std::invalid_argument("unknown loss: " + s);
}

RegKind reg_kind_from_string(const std::string& s) {
  if (s == "none") return RegKind::none;
  if (s == "variational") return RegKind::variational;
  if (s == "clustering") return RegKind::clustering;
  throw std::invalid_argument("unknown regularization: " + s);
}

std::string to_string(LossKind k) { return k == LossKind::mae ? "mae" : "mse"; }

std::string to_string(RegKind k) {
  switch (k) {
    case RegKind::none: return "none";
    case RegKind::variational: return "variational";
    case RegKind::clustering: return "clustering";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (lr < 0) throw std::invalid_argument("train config: lr must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (max_epochs < 0) throw std::invalid_argument("train config: max_epochs must be >= 0");
  if (patience > max_epochs && max_epochs > 0) {
    throw std::invalid_argument("train config: patience must be <= max_epochs");
  }
  if (val_stride < 1) throw std::invalid_argument("train config: val_stride must be >= 1");
}

WindowIndex window_index_range(const SeriesDataset& ds, int W, int H, int t_begin,
                               int t_end, SplitTag tag) {
  if (W < 1 || H < 1) throw std::invalid_argument("window index: W and H must be >= 1");
  WindowIndex idx;
  idx.data = &ds;
  idx.tag = tag;
  idx.W = W;
  idx.H = H;
  t_begin = std::max(t_begin, 0);
  t_end = std::min(t_end, ds.T());
  for (int t = t_begin + W; t + H <= t_end; ++t) idx.anchors.push_back(t);
  return idx;
}

Splits make_splits(const SeriesDataset& ds, int W, int H,
                   const std::array<double, 3>& fractions) {
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("make_splits: fractions must sum to 1");
  }
  const int T = ds.T();
  const int t1 = static_cast<int>(std::llround(fractions[0] * T));
  const int t2 = t1 + static_cast<int>(std::llround(fractions[1] * T));
  Splits s;
  s.train = window_index_range(ds, W, H, 0, t1, SplitTag::train);
  s.val = window_index_range(ds, W, H, t1, t2, SplitTag::val);
  s.test = window_index_range(ds, W, H, t2, T, SplitTag::test);
  for (const WindowIndex* idx : {&s.train, &s.val, &s.test}) {
    if (idx->anchors.empty()) {
      throw std::invalid_argument("make_splits: a split is too short for one window");
    }
  }
  return s;
}

double loss_mae(const MatD& pred, const MatD& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("loss_mae: shape mismatch");
  }
  return (pred - target).cwiseAbs().mean();
}

double loss_mse(const MatD& pred, const MatD& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("loss_mse: shape mismatch");
  }
  return (pred - target).array().square().mean();
}

Batch<float> assemble_batch(const ModelConfig& cfg, const SeriesDataset& ds,
                            const std::vector<int>& anchors, bool with_targets) {
  if (ds.d_x != cfg.d_x || ds.d_u != cfg.d_u) {
    throw std::invalid_argument("assemble_batch: dataset channels (" +
                                std::to_string(ds.d_x) + "," + std::to_string(ds.d_u) +
                                ") do not match model config");
  }
  const int N = ds.n_nodes;
  const int B = static_cast<int>(anchors.size());
  const int W = cfg.window;
  const bool fc = cfg.family == Family::FCRNN;

  Batch<float> batch;
  batch.n_windows = B;
  batch.real_nodes = N;
  batch.nodes_per_window = fc ? 1 : N;
  const Eigen::Index rows = fc ? B : static_cast<Eigen::Index>(B) * N;

  for (int s = 0; s < W; ++s) {
    MatF step(rows, fc ? N * (cfg.d_x + cfg.d_u) : cfg.d_x + cfg.d_u);
    for (int w = 0; w < B; ++w) {
      const int t = anchors[w] - W + s;
      if (fc) {
        for (int c = 0; c < N * cfg.d_x; ++c) step(w, c) = static_cast<float>(ds.values(t, c));
        for (int c = 0; c < N * cfg.d_u; ++c)
          step(w, N * cfg.d_x + c) = static_cast<float>(ds.exogenous(t, c));
      } else {
        for (int n = 0; n < N; ++n) {
          const Eigen::Index r = static_cast<Eigen::Index>(w) * N + n;
          for (int c = 0; c < cfg.d_x; ++c)
            step(r, c) = static_cast<float>(ds.values(t, n * cfg.d_x + c));
          for (int c = 0; c < cfg.d_u; ++c)
            step(r, cfg.d_x + c) = static_cast<float>(ds.exogenous(t, n * cfg.d_u + c));
        }
      }
    }
    batch.steps.push_back(std::move(step));
  }

  if (with_targets) {
    for (int k = 0; k < cfg.horizon; ++k) {
      MatF tg(rows, fc ? N * cfg.d_x : cfg.d_x);
      for (int w = 0; w < B; ++w) {
        const int t = anchors[w] + k;
        if (fc) {
          for (int c = 0; c < N * cfg.d_x; ++c) tg(w, c) = static_cast<float>(ds.values(t, c));
        } else {
          for (int n = 0; n < N; ++n) {
            const Eigen::Index r = static_cast<Eigen::Index>(w) * N + n;
            for (int c = 0; c < cfg.d_x; ++c)
              tg(r, c) = static_cast<float>(ds.values(t, n * cfg.d_x + c));
          }
        }
      }
      batch.targets.push_back(std::move(tg));
    }
  }
  return batch;
}

namespace {

struct AdamState {
  MatF m;
  MatF v;
};

// Taped forecast loss over all horizon steps. `per_window` switches the
// normalizer from every scalar entry (metric-style mean) to per-window sums
// (the squared-error objective of the variational scheme).
Tape<float>::NodeId forecast_loss(Tape<float>& tape,
                                  const std::vector<Tape<float>::NodeId>& preds,
                                  const Batch<float>& batch, LossKind kind,
                                  bool per_window) {
  Tape<float>::NodeId total = -1;
  long entries = 0;
  for (size_t k = 0; k < preds.size(); ++k) {
    auto diff = tape.sub(preds[k], tape.input(batch.targets[k]));
    auto term = tape.sum_all(kind == LossKind::mae ? tape.abs_(diff) : tape.square(diff));
    total = (total < 0) ? term : tape.add(total, term);
    entries += tape.val(preds[k]).size();
  }
  const double denom = per_window ? batch.n_windows : static_cast<double>(entries);
  return tape.affine(total, static_cast<float>(1.0 / denom));
}

double run_validation(const ModelConfig& mcfg, ParamStore<float>& store,
                      const std::vector<SourceBinding>& sources, int stride,
                      int eval_batch) {
  double acc = 0.0;
  int n = 0;
  for (const auto& src : sources) {
    if (src.val_idx == nullptr || src.val_idx->anchors.empty()) continue;
    WindowIndex thin = *src.val_idx;
    if (stride > 1) {
      thin.anchors.clear();
      for (size_t i = 0; i < src.val_idx->anchors.size(); i += stride) {
        thin.anchors.push_back(src.val_idx->anchors[i]);
      }
    }
    acc += evaluate(mcfg, store, *src.graph, src.table, thin, eval_batch).mae;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("train: no validation anchors");
  return acc / n;
}

}  // namespace

TrainReport train(const ModelConfig& mcfg, ParamStore<float>& store,
                  const std::vector<SourceBinding>& sources, const TrainConfig& tcfg) {
  tcfg.validate();
  if (sources.empty()) throw std::invalid_argument("train: no sources");
  for (const auto& src : sources) {
    mcfg.validate(src.graph->n_nodes);
    if (src.data->d_x != mcfg.d_x || src.data->d_u != mcfg.d_u) {
      throw std::invalid_argument("train: heterogeneous channel counts across sources");
    }
    if (mcfg.uses_embeddings() && src.table == nullptr) {
      throw std::invalid_argument("train: model uses embeddings but a source has no table");
    }
  }

  const auto t_start = std::chrono::steady_clock::now();
  auto batch_rng = make_rng(derive_seed(tcfg.seed, "batch"));
  auto sample_rng = make_rng(derive_seed(tcfg.seed, "regsample"));

  TrainReport report;
  report.source_batches.assign(sources.size(), 0);
  std::map<std::string, AdamState> adam;
  long adam_t = 0;
  std::map<std::string, MatF> best_snapshot = store.snapshot_values();
  int wait = 0;

  // full-pass deck: (source, anchor) pairs reshuffled every epoch
  std::vector<std::pair<int, int>> deck;
  if (tcfg.batches_per_epoch == 0) {
    for (size_t s = 0; s < sources.size(); ++s) {
      for (int a : sources[s].train_idx->anchors) deck.emplace_back(static_cast<int>(s), a);
    }
  }

  for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
    const double lr_e =
        tcfg.lr_halving_period > 0
            ? tcfg.lr * std::pow(2.0, -static_cast<double>(epoch / tcfg.lr_halving_period))
            : tcfg.lr;

    double loss_acc = 0.0;
    int n_batches = 0;

    auto run_batch = [&](int src_id, const std::vector<int>& anchors) {
      const SourceBinding& src = sources[src_id];
      Batch<float> batch = assemble_batch(mcfg, *src.data, anchors, true);
      Tape<float> tape(&store);
      auto preds = model_forward(tape, mcfg, src.graph, src.table, batch, Phase::train,
                                 &sample_rng);
      const bool variational = tcfg.reg == RegKind::variational;
      auto loss = forecast_loss(tape, preds, batch,
                                variational ? LossKind::mse : tcfg.loss, variational);
      if (variational) {
        loss = tape.add(loss, tape.affine(src.table->kl_term(tape),
                                          static_cast<float>(tcfg.beta)));
      } else if (tcfg.reg == RegKind::clustering) {
        loss = tape.add(loss,
                        tape.affine(src.table->clustering_loss(tape, tcfg.reg_samples,
                                                               sample_rng),
                                    static_cast<float>(tcfg.lambda)));
      }
      const double loss_val = tape.val(loss)(0, 0);
      if (!std::isfinite(loss_val)) {
        throw std::runtime_error("train: non-finite loss " + std::to_string(loss_val) +
                                 " at epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(n_batches));
      }
      store.zero_grads();
      tape.backward(loss);

      // clip at global norm, then the adaptive update
      double norm_sq = 0.0;
      for (const auto& [name, e] : store.entries()) {
        if (e.trainable) norm_sq += e.grad.cast<double>().squaredNorm();
      }
      const double norm = std::sqrt(norm_sq);
      const float clip_scale =
          (tcfg.grad_clip > 0 && norm > tcfg.grad_clip)
              ? static_cast<float>(tcfg.grad_clip / norm)
              : 1.0f;
      ++adam_t;
      const double bc1 = 1.0 - std::pow(tcfg.adam_beta1, adam_t);
      const double bc2 = 1.0 - std::pow(tcfg.adam_beta2, adam_t);
      for (auto& [name, e] : store.entries()) {
        if (!e.trainable) continue;
        AdamState& st = adam[name];
        if (st.m.size() == 0) {
          st.m = MatF::Zero(e.value.rows(), e.value.cols());
          st.v = MatF::Zero(e.value.rows(), e.value.cols());
        }
        MatF g = e.grad * clip_scale;
        st.m = static_cast<float>(tcfg.adam_beta1) * st.m +
               static_cast<float>(1.0 - tcfg.adam_beta1) * g;
        st.v = static_cast<float>(tcfg.adam_beta2) * st.v +
               (static_cast<float>(1.0 - tcfg.adam_beta2) * g.array().square()).matrix();
        e.value.array() -= static_cast<float>(lr_e) *
                           (st.m.array() / static_cast<float>(bc1)) /
                           ((st.v.array() / static_cast<float>(bc2)).sqrt() +
                            static_cast<float>(tcfg.adam_eps));
      }
      loss_acc += loss_val;
      ++report.source_batches[src_id];
      ++n_batches;
    };

    if (tcfg.batches_per_epoch > 0) {
      std::uniform_int_distribution<int> pick_src(0, static_cast<int>(sources.size()) - 1);
      for (int b = 0; b < tcfg.batches_per_epoch; ++b) {
        const int s = sources.size() == 1 ? 0 : pick_src(batch_rng);
        const auto& anchors = sources[s].train_idx->anchors;
        std::uniform_int_distribution<size_t> pick(0, anchors.size() - 1);
        std::vector<int> chosen(tcfg.batch_size);
        for (int i = 0; i < tcfg.batch_size; ++i) chosen[i] = anchors[pick(batch_rng)];
        run_batch(s, chosen);
      }
    } else {
      std::shuffle(deck.begin(), deck.end(), batch_rng);
      size_t pos = 0;
      while (pos < deck.size()) {
        const int s = deck[pos].first;
        std::vector<int> chosen;
        while (pos < deck.size() && deck[pos].first == s &&
               static_cast<int>(chosen.size()) < tcfg.batch_size) {
          chosen.push_back(deck[pos].second);
          ++pos;
        }
        run_batch(s, chosen);
      }
    }

    const double val_mae =
        run_validation(mcfg, store, sources, tcfg.val_stride, tcfg.eval_batch);
    if (!std::isnan(tcfg.noise_floor_mae) && val_mae < tcfg.noise_floor_mae) {
      throw std::runtime_error("train: validation MAE " + std::to_string(val_mae) +
                               " fell below the noise floor " +
                               std::to_string(tcfg.noise_floor_mae));
    }
    report.curve.push_back({n_batches ? loss_acc / n_batches : 0.0, val_mae, lr_e});
    report.total_batches += n_batches;
    if (tcfg.verbose_every > 0 && epoch % tcfg.verbose_every == 0) {
      std::fprintf(stderr, "epoch %d: train %.4f val %.4f lr %.4g\n", epoch,
                   report.curve.back().train_loss, val_mae, lr_e);
    }

    if (val_mae < report.best_val_mae) {
      report.best_val_mae = val_mae;
      report.best_epoch = epoch;
      best_snapshot = store.snapshot_values();
      wait = 0;
    } else {
      ++wait;
      if (wait >= tcfg.patience) {
        report.stopped_early = true;
        break;
      }
    }
  }

  if (tcfg.max_epochs == 0) {
    report.best_val_mae = run_validation(mcfg, store, sources, tcfg.val_stride,
                                         tcfg.eval_batch);
    report.best_epoch = -1;
  } else {
    store.restore_values(best_snapshot);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

Metrics evaluate(const ModelConfig& mcfg, ParamStore<float>& store, const Graph& g,
                 const EmbeddingTable<float>* emb, const WindowIndex& idx,
                 int eval_batch) {
  if (idx.data == nullptr || idx.anchors.empty()) {
    throw std::invalid_argument("evaluate: empty window index");
  }
  Metrics m;
  m.per_horizon_mae.assign(mcfg.horizon, 0.0);
  std::vector<long> h_count(mcfg.horizon, 0);
  double abs_acc = 0.0, sq_acc = 0.0;

  for (size_t pos = 0; pos < idx.anchors.size(); pos += eval_batch) {
    const size_t end = std::min(pos + eval_batch, idx.anchors.size());
    std::vector<int> anchors(idx.anchors.begin() + pos, idx.anchors.begin() + end);
    Batch<float> batch = assemble_batch(mcfg, *idx.data, anchors, true);
    Tape<float> tape(&store);
    auto preds = model_forward(tape, mcfg, &g, emb, batch, Phase::eval, nullptr);
    for (int k = 0; k < mcfg.horizon; ++k) {
      const MatF& p = tape.val(preds[k]);
      const MatF& t = batch.targets[k];
      const double abs_k = (p - t).cast<double>().cwiseAbs().sum();
      abs_acc += abs_k;
      sq_acc += (p - t).cast<double>().array().square().sum();
      m.per_horizon_mae[k] += abs_k;
      h_count[k] += p.size();
      m.count += p.size();
    }
  }
  for (int k = 0; k < mcfg.horizon; ++k) m.per_horizon_mae[k] /= h_count[k];
  m.mae = abs_acc / m.count;
  m.mse = sq_acc / m.count;
  return m;
}

}  // namespace stgl
