#pragma once

#include "stgl/gpvar.hpp"
#include "stgl/transfer.hpp"

#include "json.hpp"

#include <vector>

namespace stgl {

using json = nlohmann::json;

/// Declarative experiment document: sections graph / process / model /
/// train / transfer / sweep / output / seed. Unknown keys are rejected;
/// parsing yields both typed configs and a fully resolved JSON copy that is
/// written beside every run's outputs.
struct ExperimentConfig {
  uint64_t seed = 0;
  std::string output = "runs/out";

  // graph
  int communities = 20;
  int community_size = 6;
  int bridges = kDefaultBridges;
  double intra_density = kDefaultIntraDensity;
  NormMode normalize = NormMode::symmetric;

  // process
  std::string process_kind = "gpvarl";  // gpvar | gpvarl | dir | csv
  int steps = 30000;
  int burn_in = kDefaultBurnIn;
  double sigma = 0.4;
  std::string dataset_dir;
  std::string values_csv;
  std::string edges_csv;
  bool csv_has_header = true;
  bool nan_mask = true;
  bool csv_directed = false;

  ModelConfig model;
  TrainConfig train;

  // transfer
  bool has_transfer = false;
  TransferPlan plan;
  std::string source_run;  // run directory holding checkpoint + resolved config
  std::string budget_preset = "1-week";
  std::vector<std::string> budget_sweep;

  // sweep
  std::vector<int> sweep_windows{2, 6, 12, 24};
  std::vector<int> sweep_hidden{16, 32, 64};
  int sweep_parallel = 2;
  bool sweep_embeddings = false;

  json resolved;

  EmbMode table_mode() const {
    switch (train.reg) {
      case RegKind::variational: return EmbMode::variational;
      case RegKind::clustering: return EmbMode::clustered;
      default: return EmbMode::plain;
    }
  }
};

std::vector<std::string> model_preset_names();
json model_preset(const std::string& name);

ExperimentConfig parse_experiment_config(const json& doc);
ExperimentConfig load_experiment_config(const std::string& path);

json train_report_json(const TrainReport& report);
json metrics_json(const Metrics& m);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace stgl
