#include "stgl/transfer.hpp"

namespace stgl {

Strategy strategy_from_string(const std::string& s) {
  if (s == "zero_shot") return Strategy::zero_shot;
  if (s == "full_finetune") return Strategy::full_finetune;
  if (s == "embedding_only") return Strategy::embedding_only;
  throw std::invalid_argument("unknown transfer strategy: " + s);
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::zero_shot: return "zero_shot";
    case Strategy::full_finetune: return "full_finetune";
    case Strategy::embedding_only: return "embedding_only";
  }
  return "?";
}

double budget_fraction_from_preset(const std::string& name) {
  if (name == "1-day") return 0.015;
  if (name == "3-day") return 0.04;
  if (name == "1-week") return 0.10;
  if (name == "2-week") return 0.20;
  throw std::invalid_argument("unknown budget preset: " + name +
                              " (use 1-day, 3-day, 1-week or 2-week)");
}

TransferPlan::TransferPlan() {
  finetune.max_epochs = 2000;
  finetune.lr = 0.001;
  finetune.lr_halving_period = 0;
  finetune.patience = 100;
  finetune.batches_per_epoch = 0;  // full pass
  finetune.batch_size = 128;
}

AdaptOutcome adapt(const TransferSetup& setup, const SeriesDataset& target,
                   const Graph& target_graph, const TransferPlan& plan, uint64_t seed) {
  const ModelConfig& mcfg = setup.model;
  mcfg.validate(target_graph.n_nodes);
  if (plan.strategy == Strategy::embedding_only && !mcfg.uses_embeddings()) {
    throw std::invalid_argument("adapt: embedding_only requires a model with embedding sites");
  }
  if (!(plan.budget_fraction > 0.0) || plan.budget_fraction > 0.4) {
    throw std::invalid_argument("adapt: budget fraction must be in (0, 0.4]");
  }

  AdaptOutcome out;
  out.store = ParamStore<float>(derive_seed(seed, "adapt_init"));
  apply_checkpoint(out.store, setup.checkpoint);

  if (mcfg.uses_embeddings()) {
    out.table = init_table(setup.emb_mode, target_graph.n_nodes, mcfg.embedding_dim,
                           setup.n_clusters, setup.tau, out.store,
                           derive_seed(seed, "target_table"), "emb/target",
                           setup.centroid_name);
    out.has_table = true;
  }

  TrainConfig ft = plan.finetune;
  ft.seed = derive_seed(seed, "finetune");
  if (setup.emb_mode == EmbMode::variational) {
    ft.reg = RegKind::none;  // regularization loss removed at fine-tuning
  } else if (setup.emb_mode == EmbMode::clustered) {
    ft.reg = RegKind::clustering;
    ft.lambda = 10.0;
  }

  if (plan.strategy == Strategy::embedding_only) {
    for (auto& [name, e] : out.store.entries()) {
      e.trainable = name.rfind("emb/target", 0) == 0;
    }
    if (setup.emb_mode == EmbMode::clustered) {
      out.store.at(out.table.centroids()).trainable = false;  // C stays fixed
    }
  }

  // budget spans: [0, fT) train, [fT, 2fT) validation; test is the fixed
  // trailing 20% so budgets stay comparable
  const int T = target.T();
  const int span = static_cast<int>(std::llround(plan.budget_fraction * T));
  WindowIndex train_idx = window_index_range(target, mcfg.window, mcfg.horizon, 0, span,
                                             SplitTag::train);
  WindowIndex val_idx = window_index_range(target, mcfg.window, mcfg.horizon, span,
                                           2 * span, SplitTag::val);
  out.test_idx = window_index_range(target, mcfg.window, mcfg.horizon,
                                    static_cast<int>(std::llround(0.8 * T)), T,
                                    SplitTag::test);
  if (train_idx.anchors.empty() || val_idx.anchors.empty()) {
    throw std::invalid_argument("adapt: budget too small for one window");
  }

  out.trained_params = out.store.total_params(/*trainable_only=*/true);

  if (plan.strategy != Strategy::zero_shot) {
    std::vector<SourceBinding> bind{{&target, &target_graph, &train_idx, &val_idx,
                                     out.has_table ? &out.table : nullptr}};
    out.report = train(mcfg, out.store, bind, ft);
  } else {
    out.trained_params = 0;
  }

  out.target_test = evaluate(mcfg, out.store, target_graph,
                             out.has_table ? &out.table : nullptr, out.test_idx);
  return out;
}

std::vector<RetentionDelta> source_retention_check(
    const TransferSetup& setup, AdaptOutcome& adapted,
    const std::vector<const SeriesDataset*>& sources,
    const std::vector<const Graph*>& graphs,
    const std::vector<WindowIndex>& test_indices) {
  if (sources.size() != graphs.size() || sources.size() != test_indices.size()) {
    throw std::invalid_argument("source_retention_check: list sizes differ");
  }
  // pristine source model
  ParamStore<float> before(0);
  apply_checkpoint(before, setup.checkpoint);

  std::vector<RetentionDelta> out;
  for (size_t k = 0; k < sources.size(); ++k) {
    RetentionDelta d;
    d.source = static_cast<int>(k);
    EmbeddingTable<float> table;
    EmbeddingTable<float>* tp = nullptr;
    if (setup.model.uses_embeddings()) {
      table.mode = setup.emb_mode;
      table.n_nodes = graphs[k]->n_nodes;
      table.dim = setup.model.embedding_dim;
      table.n_clusters = setup.n_clusters;
      table.tau = setup.tau;
      table.prefix = "emb/src" + std::to_string(k);
      table.centroid_name = setup.centroid_name;
      tp = &table;
    }
    d.mae_before = evaluate(setup.model, before, *graphs[k], tp, test_indices[k]).mae;
    d.mae_after = evaluate(setup.model, adapted.store, *graphs[k], tp, test_indices[k]).mae;
    d.delta = d.mae_after - d.mae_before;
    out.push_back(d);
  }
  return out;
}

TrainReport train_multi_source(const ModelConfig& mcfg, ParamStore<float>& store,
                               const std::vector<SourceBinding>& sources,
                               const TrainConfig& tcfg) {
  return train(mcfg, store, sources, tcfg);
}

}  // namespace stgl
