#pragma once

#include "stgl/expconfig.hpp"

namespace stgl {

/// Synthetic collection: normalized community graph, process parameters and
/// the simulated series. Seeds are split per subsystem from the experiment
/// seed (graph / gains / noise), so e.g. two sources share a topology recipe
/// but draw independent local gains.
struct GeneratedData {
  Graph graph;
  GpvarParams params;
  SeriesDataset data;
};

GeneratedData generate_synthetic(const ExperimentConfig& cfg, uint64_t seed);

// Loads whatever the process section points at: a generated dataset
// directory (with its edges.csv) or user CSVs.
struct LoadedData {
  Graph graph;
  SeriesDataset data;
};
LoadedData load_from_config(const ExperimentConfig& cfg);

struct RunArtifacts {
  TrainReport report;
  Metrics test;
  ParamStore<float> store;
  EmbeddingTable<float> table;
  bool has_table = false;
};

/// End-to-end single-collection run: splits, optional embedding table,
/// training, test evaluation. `store_seed_salt` lets callers run several
/// seeds of the same config.
RunArtifacts run_training(const ExperimentConfig& cfg, const SeriesDataset& ds,
                          const Graph& g, uint64_t seed);

/// Writes report.json, curves.csv, model.ckpt and config.resolved.json.
void write_run_outputs(const std::string& dir, const ExperimentConfig& cfg,
                       const RunArtifacts& run);

/// Embedding dump: node_id, v_0..v_{d-1} (+ cluster_argmax when clustered).
void dump_embeddings_csv(const std::string& path,
                         const std::map<std::string, MatF>& checkpoint,
                         const std::string& prefix);

std::string default_output_root();

/// Source model for the transfer workflow: shared backbone trained on
/// several synthetic collections, one embedding table per source
/// (emb/src0..), centroids shared under emb/shared/C in clustered mode.
struct MultiSourceArtifacts {
  std::vector<GeneratedData> sources;
  std::vector<Splits> splits;
  std::vector<EmbeddingTable<float>> tables;
  ParamStore<float> store;
  TrainReport report;
  EmbMode emb_mode = EmbMode::plain;
  ModelConfig model;
  int clusters = 10;
  double tau = 1.0;

  TransferSetup transfer_setup() const;
};

MultiSourceArtifacts train_synthetic_sources(const ExperimentConfig& cfg, int n_sources,
                                             uint64_t seed);

}  // namespace stgl
