#pragma once

#include "stgl/dataset.hpp"
#include "stgl/model.hpp"

#include <array>
#include <cmath>

namespace stgl {

enum class LossKind { mae, mse };
enum class RegKind { none, variational, clustering };
enum class SplitTag { train, val, test };

LossKind loss_kind_from_string(const std::string& s);
RegKind reg_kind_from_string(const std::string& s);
std::string to_string(LossKind k);
std::string to_string(RegKind k);

struct TrainConfig {
  int batch_size = 128;
  int max_epochs = 200;
  int batches_per_epoch = 0;  // 0 = one full shuffled pass per epoch
  double lr = 0.01;
  int lr_halving_period = 50;  // epochs; 0 disables the schedule
  int patience = 50;
  LossKind loss = LossKind::mae;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  RegKind reg = RegKind::none;
  double beta = 0.05;    // variational KL weight
  double lambda = 0.5;   // clustering weight
  double tau = 1.0;      // Gumbel-softmax temperature
  int clusters = 10;     // K
  int reg_samples = 1;   // Monte-Carlo samples of the clustering loss
  double grad_clip = 5.0;
  // Sanity gate: abort if validation MAE drops below this (indicates
  // leakage on synthetic data with a known noise floor). NaN disables.
  double noise_floor_mae = std::nan("");
  int val_stride = 1;   // thin the early-stopping validation pass
  int eval_batch = 512;
  int verbose_every = 0;  // print epoch stats to stderr every N epochs (0 = quiet)

  void validate() const;
};

/// Valid anchor times t for a dataset slice: inputs [t-W, t) and targets
/// [t, t+H) both exist and stay inside the slice.
struct WindowIndex {
  const SeriesDataset* data = nullptr;
  std::vector<int> anchors;
  SplitTag tag = SplitTag::train;
  int W = 1;
  int H = 1;
};

struct Splits {
  WindowIndex train, val, test;
};

WindowIndex window_index_range(const SeriesDataset& ds, int W, int H, int t_begin,
                               int t_end, SplitTag tag);

// Sequential partition of the time axis by `fractions`; windows never cross
// a split boundary.
Splits make_splits(const SeriesDataset& ds, int W, int H,
                   const std::array<double, 3>& fractions);

// Plain (non-taped) metrics over equal-shaped arrays.
double loss_mae(const MatD& pred, const MatD& target);
double loss_mse(const MatD& pred, const MatD& target);

struct Metrics {
  double mae = 0.0;
  double mse = 0.0;
  std::vector<double> per_horizon_mae;
  long count = 0;  // scalar error terms aggregated
};

struct EpochStats {
  double train_loss = 0.0;
  double val_mae = 0.0;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> curve;
  int best_epoch = -1;
  double best_val_mae = std::numeric_limits<double>::infinity();
  double wall_seconds = 0.0;
  long total_batches = 0;
  std::vector<long> source_batches;  // batches drawn per source
  bool stopped_early = false;
};

/// One spatiotemporal collection bound to the shared backbone. Multi-source
/// training passes several; mini-batches never mix nodes across sources.
struct SourceBinding {
  const SeriesDataset* data = nullptr;
  const Graph* graph = nullptr;
  const WindowIndex* train_idx = nullptr;
  const WindowIndex* val_idx = nullptr;
  EmbeddingTable<float>* table = nullptr;  // null for embedding-free models
};

Batch<float> assemble_batch(const ModelConfig& cfg, const SeriesDataset& ds,
                            const std::vector<int>& anchors, bool with_targets);

/// Mini-batch gradient descent with the adaptive optimizer, halving lr
/// schedule and patience-based early stopping; restores the best-validation
/// parameters before returning. Deterministic under TrainConfig::seed.
TrainReport train(const ModelConfig& mcfg, ParamStore<float>& store,
                  const std::vector<SourceBinding>& sources, const TrainConfig& tcfg);

/// Full deterministic pass, eval-phase embeddings, no gradient recording.
Metrics evaluate(const ModelConfig& mcfg, ParamStore<float>& store, const Graph& g,
                 const EmbeddingTable<float>* emb, const WindowIndex& idx,
                 int eval_batch = 512);

}  // namespace stgl
