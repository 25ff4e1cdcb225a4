#pragma once

#include "stgl/checkpoint.hpp"
#include "stgl/trainer.hpp"

namespace stgl {

enum class Strategy { zero_shot, full_finetune, embedding_only };

Strategy strategy_from_string(const std::string& s);
std::string to_string(Strategy s);

// Fine-tune data budgets as fractions of the target series; presets mirror
// the day/week sweep used on 5-minute traffic data.
double budget_fraction_from_preset(const std::string& name);

struct TransferPlan {
  Strategy strategy = Strategy::embedding_only;
  double budget_fraction = 0.10;  // train span; an equal span after it is validation
  TrainConfig finetune;           // epochs 2000, lr 1e-3 fixed, patience 100

  TransferPlan();
};

/// Everything adapt() needs to rebuild the source model around a new node
/// set: architecture, embedding structure, and the trained parameters.
struct TransferSetup {
  ModelConfig model;
  EmbMode emb_mode = EmbMode::plain;
  int n_clusters = 10;
  double tau = 1.0;
  // Shared centroid parameter name for clustered tables ("" = per-table).
  std::string centroid_name;
  std::map<std::string, MatF> checkpoint;
};

struct AdaptOutcome {
  Metrics target_test;
  TrainReport report;
  std::size_t trained_params = 0;
  ParamStore<float> store;
  EmbeddingTable<float> table;
  bool has_table = false;
  WindowIndex test_idx;
};

/// Rebuilds the checkpointed model for the target collection under the
/// plan's strategy:
///  - zero_shot:       fresh embedding table, no updates;
///  - full_finetune:   everything trainable;
///  - embedding_only:  backbone frozen, fresh table fitted (variational:
///    fresh (mu, sigma) and no KL; clustered: centroids frozen, lambda 10).
AdaptOutcome adapt(const TransferSetup& setup, const SeriesDataset& target,
                   const Graph& target_graph, const TransferPlan& plan, uint64_t seed);

struct RetentionDelta {
  int source = 0;
  double mae_before = 0.0;
  double mae_after = 0.0;
  double delta = 0.0;
};

/// Re-evaluates the adapted backbone with the original source embedding
/// tables on the source test splits.
std::vector<RetentionDelta> source_retention_check(
    const TransferSetup& setup, AdaptOutcome& adapted,
    const std::vector<const SeriesDataset*>& sources,
    const std::vector<const Graph*>& graphs,
    const std::vector<WindowIndex>& test_indices);

/// Multi-source training: each mini-batch comes from one uniformly chosen
/// collection; global parameters are shared, embedding tables are
/// per-source. Thin alias over the trainer core, which already never mixes
/// nodes across sources.
TrainReport train_multi_source(const ModelConfig& mcfg, ParamStore<float>& store,
                               const std::vector<SourceBinding>& sources,
                               const TrainConfig& tcfg);

}  // namespace stgl
