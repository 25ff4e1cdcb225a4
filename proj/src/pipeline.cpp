#include "stgl/pipeline.hpp"

#include "stgl/checkpoint.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace stgl {

namespace fs = std::filesystem;

GeneratedData generate_synthetic(const ExperimentConfig& cfg, uint64_t seed) {
  GeneratedData out;
  Graph raw = build_community_graph(cfg.communities, cfg.community_size, cfg.bridges,
                                    cfg.intra_density, derive_seed(seed, "graph"));
  out.graph = normalize_adjacency(raw, cfg.normalize);
  if (cfg.process_kind == "gpvar") {
    out.params = default_gpvar_params(out.graph);
    out.params.sigma = cfg.sigma;
  } else if (cfg.process_kind == "gpvarl") {
    out.params = default_gpvarl_params(out.graph, derive_seed(seed, "gains"));
    out.params.sigma = cfg.sigma;
  } else {
    throw std::invalid_argument("generate_synthetic: process kind is " + cfg.process_kind);
  }
  out.data = simulate(out.params, out.graph, cfg.steps, cfg.burn_in,
                      derive_seed(seed, "noise"));
  return out;
}

LoadedData load_from_config(const ExperimentConfig& cfg) {
  LoadedData out;
  if (cfg.process_kind == "dir") {
    if (cfg.dataset_dir.empty()) {
      throw std::invalid_argument("process.kind 'dir' needs process.dataset_dir");
    }
    out.data = load_dataset(cfg.dataset_dir);
    json meta = json::parse(load_dataset_metadata(cfg.dataset_dir));
    const bool directed = meta.value("directed", false);
    out.graph = load_edge_csv(cfg.dataset_dir + "/edges.csv", out.data.n_nodes, directed);
  } else if (cfg.process_kind == "csv") {
    if (cfg.values_csv.empty() || cfg.edges_csv.empty()) {
      throw std::invalid_argument("process.kind 'csv' needs values_csv and edges_csv");
    }
    out.data = load_values_csv(cfg.values_csv, cfg.csv_has_header, cfg.nan_mask);
    out.graph = load_edge_csv(cfg.edges_csv, out.data.n_nodes, cfg.csv_directed);
    out.graph = normalize_adjacency(out.graph, cfg.normalize);
  } else {
    GeneratedData gen = generate_synthetic(cfg, cfg.seed);
    out.graph = std::move(gen.graph);
    out.data = std::move(gen.data);
  }
  return out;
}

RunArtifacts run_training(const ExperimentConfig& cfg, const SeriesDataset& ds,
                          const Graph& g, uint64_t seed) {
  ModelConfig mcfg = cfg.model;
  mcfg.validate(g.n_nodes);

  RunArtifacts run;
  run.store = ParamStore<float>(derive_seed(seed, "init"));
  if (mcfg.uses_embeddings()) {
    run.table = init_table<float>(cfg.table_mode(), g.n_nodes, mcfg.embedding_dim,
                                  cfg.train.clusters, cfg.train.tau, run.store,
                                  derive_seed(seed, "table"));
    run.has_table = true;
  }

  Splits splits = make_splits(ds, mcfg.window, mcfg.horizon, {0.7, 0.1, 0.2});
  TrainConfig tcfg = cfg.train;
  tcfg.seed = derive_seed(seed, "train");
  std::vector<SourceBinding> bind{{&ds, &g, &splits.train, &splits.val,
                                   run.has_table ? &run.table : nullptr}};
  run.report = train(mcfg, run.store, bind, tcfg);
  run.test = evaluate(mcfg, run.store, g, run.has_table ? &run.table : nullptr,
                      splits.test, tcfg.eval_batch);
  return run;
}

void write_run_outputs(const std::string& dir, const ExperimentConfig& cfg,
                       const RunArtifacts& run) {
  fs::create_directories(dir);
  write_text_file(dir + "/config.resolved.json", cfg.resolved.dump(2) + "\n");

  json report = train_report_json(run.report);
  report["test"] = metrics_json(run.test);
  write_text_file(dir + "/report.json", report.dump(2) + "\n");

  std::string curves = "epoch,train_loss,val_mae,lr\n";
  for (size_t e = 0; e < run.report.curve.size(); ++e) {
    const auto& s = run.report.curve[e];
    curves += std::to_string(e) + "," + std::to_string(s.train_loss) + "," +
              std::to_string(s.val_mae) + "," + std::to_string(s.lr) + "\n";
  }
  write_text_file(dir + "/curves.csv", curves);
  save_checkpoint(dir + "/model.ckpt", run.store);
}

void dump_embeddings_csv(const std::string& path,
                         const std::map<std::string, MatF>& checkpoint,
                         const std::string& prefix) {
  const bool variational = checkpoint.count(prefix + "/mu") > 0;
  const std::string main = variational ? prefix + "/mu" : prefix + "/V";
  auto it = checkpoint.find(main);
  if (it == checkpoint.end()) {
    throw std::runtime_error("no embedding table '" + prefix + "' in checkpoint");
  }
  const MatF& v = it->second;
  const bool clustered = checkpoint.count(prefix + "/S") > 0;

  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "node_id";
  for (Eigen::Index c = 0; c < v.cols(); ++c) f << ",v_" << c;
  if (clustered) f << ",cluster_argmax";
  f << "\n";
  f.precision(8);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    f << i;
    for (Eigen::Index c = 0; c < v.cols(); ++c) f << "," << v(i, c);
    if (clustered) {
      Eigen::Index k;
      checkpoint.at(prefix + "/S").row(i).maxCoeff(&k);
      f << "," << k;
    }
    f << "\n";
  }
}

std::string default_output_root() {
  const char* env = std::getenv("STGL_OUT_ROOT");
  return env ? env : "";
}

TransferSetup MultiSourceArtifacts::transfer_setup() const {
  TransferSetup setup;
  setup.model = model;
  setup.emb_mode = emb_mode;
  setup.n_clusters = clusters;
  setup.tau = tau;
  if (emb_mode == EmbMode::clustered) setup.centroid_name = "emb/shared/C";
  for (const auto& [name, e] : store.entries()) setup.checkpoint[name] = e.value;
  return setup;
}

MultiSourceArtifacts train_synthetic_sources(const ExperimentConfig& cfg, int n_sources,
                                             uint64_t seed) {
  MultiSourceArtifacts ms;
  ms.model = cfg.model;
  ms.emb_mode = cfg.table_mode();
  ms.clusters = cfg.train.clusters;
  ms.tau = cfg.train.tau;
  ms.store = ParamStore<float>(derive_seed(seed, "init"));

  ms.sources.reserve(n_sources);
  for (int k = 0; k < n_sources; ++k) {
    ms.sources.push_back(
        generate_synthetic(cfg, derive_seed(seed, "source" + std::to_string(k))));
  }
  const std::string centroid =
      ms.emb_mode == EmbMode::clustered ? "emb/shared/C" : "";
  for (int k = 0; k < n_sources; ++k) {
    ms.model.validate(ms.sources[k].graph.n_nodes);
    ms.splits.push_back(make_splits(ms.sources[k].data, ms.model.window, ms.model.horizon,
                                    {0.7, 0.1, 0.2}));
    if (ms.model.uses_embeddings()) {
      ms.tables.push_back(init_table<float>(
          ms.emb_mode, ms.sources[k].graph.n_nodes, ms.model.embedding_dim, ms.clusters,
          ms.tau, ms.store, derive_seed(seed, "table" + std::to_string(k)),
          "emb/src" + std::to_string(k), centroid));
    }
  }

  std::vector<SourceBinding> bind;
  for (int k = 0; k < n_sources; ++k) {
    bind.push_back({&ms.sources[k].data, &ms.sources[k].graph, &ms.splits[k].train,
                    &ms.splits[k].val,
                    ms.model.uses_embeddings() ? &ms.tables[k] : nullptr});
  }
  TrainConfig tcfg = cfg.train;
  tcfg.seed = derive_seed(seed, "train");
  ms.report = train_multi_source(ms.model, ms.store, bind, tcfg);
  return ms;
}

}  // namespace stgl
