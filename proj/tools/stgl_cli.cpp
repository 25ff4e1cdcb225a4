#include "stgl/checkpoint.hpp"
#include "stgl/pipeline.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

using namespace stgl;
namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out;
  bool force = false;
  int64_t seed = -1;  // -1 = take from config
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config (JSON)")->required();
  cmd->add_option("--out", opts.out, "output directory (overrides config)");
  cmd->add_option("--seed", opts.seed, "root seed (overrides config)");
  cmd->add_flag("--force", opts.force, "overwrite an existing output directory");
}

ExperimentConfig load_cfg(const CommonOpts& opts) {
  std::ifstream f(opts.config_path);
  if (!f) throw std::runtime_error("cannot read config " + opts.config_path);
  json doc = json::parse(f);
  if (opts.seed >= 0) doc["seed"] = static_cast<uint64_t>(opts.seed);
  ExperimentConfig cfg = parse_experiment_config(doc);
  if (!opts.out.empty()) {
    cfg.output = opts.out;
    cfg.resolved["output"] = opts.out;
  }
  const std::string root = default_output_root();
  if (!root.empty() && !fs::path(cfg.output).is_absolute()) {
    cfg.output = (fs::path(root) / cfg.output).string();
  }
  return cfg;
}

void prepare_dir(const std::string& dir, bool force) {
  if (fs::exists(dir)) {
    if (!force) {
      throw std::runtime_error("output directory " + dir +
                               " exists (pass --force to overwrite)");
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

json gpvar_params_json(const GpvarParams& p) {
  json theta = json::array();
  for (int q = 0; q < p.Q(); ++q) {
    json row = json::array();
    for (int l = 0; l < p.L(); ++l) row.push_back(p.theta(q, l));
    theta.push_back(row);
  }
  std::vector<double> a(p.a.data(), p.a.data() + p.a.size());
  std::vector<double> b(p.b.data(), p.b.data() + p.b.size());
  return {{"theta", theta}, {"a", a}, {"b", b}, {"sigma", p.sigma}};
}

int cmd_generate(const CommonOpts& opts, int steps_override, int burn_in_override,
                 bool csv_export) {
  ExperimentConfig cfg = load_cfg(opts);
  if (steps_override > 0) cfg.steps = steps_override;
  if (burn_in_override >= 0) cfg.burn_in = burn_in_override;
  prepare_dir(cfg.output, opts.force);

  GeneratedData gen = generate_synthetic(cfg, cfg.seed);
  json meta = {{"seed", cfg.seed},
               {"process", cfg.process_kind},
               {"directed", false},
               {"graph", cfg.resolved.at("graph")},
               {"params", gpvar_params_json(gen.params)}};
  save_dataset(cfg.output, gen.data, meta.dump());
  save_edge_csv(gen.graph, cfg.output + "/edges.csv");
  write_text_file(cfg.output + "/config.resolved.json", cfg.resolved.dump(2) + "\n");
  if (csv_export) export_values_csv(gen.data, cfg.output + "/values.csv");

  const int t0 = static_cast<int>(0.8 * gen.data.T());
  const double opt = optimal_mae(gen.params, gen.graph, gen.data, t0, gen.data.T());
  std::cout << "dataset: T=" << gen.data.T() << " N=" << gen.data.n_nodes
            << " optimal one-step MAE ~ " << opt << " (analytic "
            << optimal_mae_expected(gen.params.sigma) << ")\n"
            << "written to " << cfg.output << "\n";
  return 0;
}

int cmd_train(const CommonOpts& opts) {
  ExperimentConfig cfg = load_cfg(opts);
  prepare_dir(cfg.output, opts.force);
  LoadedData data = load_from_config(cfg);
  RunArtifacts run = run_training(cfg, data.data, data.graph, cfg.seed);
  write_run_outputs(cfg.output, cfg, run);
  if (run.has_table) {
    auto params = load_checkpoint(cfg.output + "/model.ckpt");
    dump_embeddings_csv(cfg.output + "/embeddings.csv", params, "emb");
  }
  std::cout << "best val MAE " << run.report.best_val_mae << " (epoch "
            << run.report.best_epoch << "), test MAE " << run.test.mae << "\n"
            << "run written to " << cfg.output << "\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& run_dir) {
  ExperimentConfig cfg = load_cfg(opts);
  LoadedData data = load_from_config(cfg);
  ModelConfig mcfg = cfg.model;
  mcfg.validate(data.graph.n_nodes);

  ParamStore<float> store(0);
  apply_checkpoint(store, load_checkpoint(run_dir + "/model.ckpt"));
  EmbeddingTable<float> table;
  EmbeddingTable<float>* tp = nullptr;
  if (mcfg.uses_embeddings()) {
    table.mode = cfg.table_mode();
    table.n_nodes = data.graph.n_nodes;
    table.dim = mcfg.embedding_dim;
    table.n_clusters = cfg.train.clusters;
    table.tau = cfg.train.tau;
    tp = &table;
  }
  Splits splits = make_splits(data.data, mcfg.window, mcfg.horizon, {0.7, 0.1, 0.2});
  Metrics m = evaluate(mcfg, store, data.graph, tp, splits.test, cfg.train.eval_batch);
  std::cout << metrics_json(m).dump(2) << "\n";
  return 0;
}

int cmd_sweep(const CommonOpts& opts) {
  ExperimentConfig cfg = load_cfg(opts);
  prepare_dir(cfg.output, opts.force);
  LoadedData data = load_from_config(cfg);

  struct Cell {
    int W, dh;
    double mae = std::nan("");
    std::string error;
  };
  std::vector<Cell> cells;
  for (int W : cfg.sweep_windows)
    for (int dh : cfg.sweep_hidden) cells.push_back({W, dh, std::nan(""), ""});

  std::mutex mu;
  size_t next = 0;
  auto worker = [&]() {
    for (;;) {
      size_t mine;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= cells.size()) return;
        mine = next++;
      }
      Cell& cell = cells[mine];
      try {
        ExperimentConfig cc = cfg;
        cc.model.window = cell.W;
        cc.model.hidden = cell.dh;
        const uint64_t cell_seed = derive_seed(
            cfg.seed, "sweep/W" + std::to_string(cell.W) + "/h" + std::to_string(cell.dh));
        RunArtifacts run = run_training(cc, data.data, data.graph, cell_seed);
        cell.mae = run.test.mae;
        {
          std::lock_guard<std::mutex> lock(mu);
          std::cout << "cell W=" << cell.W << " d_h=" << cell.dh << " -> test MAE "
                    << cell.mae << "\n";
        }
      } catch (const std::exception& e) {
        cell.error = e.what();
        std::lock_guard<std::mutex> lock(mu);
        std::cout << "cell W=" << cell.W << " d_h=" << cell.dh << " failed: " << cell.error
                  << "\n";
      }
    }
  };
  const int n_workers = std::max(1, cfg.sweep_parallel);
  std::vector<std::thread> pool;
  for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  std::string csv = "W";
  for (int dh : cfg.sweep_hidden) csv += ",d_h=" + std::to_string(dh);
  csv += "\n";
  size_t k = 0;
  for (int W : cfg.sweep_windows) {
    csv += std::to_string(W);
    for (size_t j = 0; j < cfg.sweep_hidden.size(); ++j, ++k) {
      csv += cells[k].error.empty() ? "," + std::to_string(cells[k].mae) : ",error";
    }
    csv += "\n";
  }
  write_text_file(cfg.output + "/sweep.csv", csv);
  write_text_file(cfg.output + "/config.resolved.json", cfg.resolved.dump(2) + "\n");
  json details = json::array();
  for (const Cell& c : cells) {
    details.push_back({{"W", c.W}, {"d_h", c.dh}, {"mae", c.mae}, {"error", c.error}});
  }
  write_text_file(cfg.output + "/sweep.json", details.dump(2) + "\n");
  std::cout << "sweep written to " << cfg.output << "\n";
  return 0;
}

int cmd_transfer(const CommonOpts& opts, int n_sources) {
  ExperimentConfig cfg = load_cfg(opts);
  if (!cfg.has_transfer) throw std::runtime_error("config has no transfer section");
  prepare_dir(cfg.output, opts.force);

  MultiSourceArtifacts ms = train_synthetic_sources(cfg, n_sources, cfg.seed);
  save_checkpoint(cfg.output + "/source.ckpt", ms.store);
  TransferSetup setup = ms.transfer_setup();

  GeneratedData target = generate_synthetic(cfg, derive_seed(cfg.seed, "target"));

  std::vector<std::string> budgets = cfg.budget_sweep;
  if (budgets.empty()) {
    budgets.push_back(cfg.budget_preset.empty() ? "custom" : cfg.budget_preset);
  }
  json reports = json::array();
  for (const std::string& budget : budgets) {
    TransferPlan plan = cfg.plan;
    if (budget != "custom") plan.budget_fraction = budget_fraction_from_preset(budget);
    AdaptOutcome out = adapt(setup, target.data, target.graph, plan,
                             derive_seed(cfg.seed, "adapt/" + budget));

    std::vector<const SeriesDataset*> src_data;
    std::vector<const Graph*> src_graphs;
    std::vector<WindowIndex> src_tests;
    for (size_t k = 0; k < ms.sources.size(); ++k) {
      src_data.push_back(&ms.sources[k].data);
      src_graphs.push_back(&ms.sources[k].graph);
      src_tests.push_back(ms.splits[k].test);
    }
    auto deltas = source_retention_check(setup, out, src_data, src_graphs, src_tests);
    json dj = json::array();
    for (const auto& d : deltas) {
      dj.push_back({{"source", d.source},
                    {"mae_before", d.mae_before},
                    {"mae_after", d.mae_after},
                    {"delta", d.delta}});
    }
    json rep = {{"strategy", to_string(plan.strategy)},
                {"budget", budget},
                {"budget_fraction", plan.budget_fraction},
                {"trained_params", out.trained_params},
                {"target_test", metrics_json(out.target_test)},
                {"epochs_to_best", out.report.best_epoch},
                {"source_retention", dj}};
    if (plan.strategy != Strategy::zero_shot) {
      save_checkpoint(cfg.output + "/adapted_" + budget + ".ckpt", out.store);
    }
    reports.push_back(rep);
    std::cout << "budget " << budget << ": target test MAE " << out.target_test.mae
              << " (trained params " << out.trained_params << ")\n";
  }
  write_text_file(cfg.output + "/transfer_report.json", reports.dump(2) + "\n");
  write_text_file(cfg.output + "/config.resolved.json", cfg.resolved.dump(2) + "\n");
  std::cout << "transfer report written to " << cfg.output << "\n";
  return 0;
}

int cmd_inspect(const std::string& checkpoint, const std::string& out,
                const std::string& prefix) {
  auto params = load_checkpoint(checkpoint);
  dump_embeddings_csv(out, params, prefix);
  std::cout << "embeddings written to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatiotemporal graph forecasting experiments"};
  app.require_subcommand(1);

  CommonOpts gen_opts, train_opts, eval_opts, sweep_opts, transfer_opts;
  int gen_steps = 0, gen_burn_in = -1, n_sources = 3;
  bool gen_csv = false;
  std::string eval_run, inspect_ckpt, inspect_out = "embeddings.csv",
                        inspect_prefix = "emb";

  auto* generate = app.add_subcommand("generate", "simulate a synthetic dataset");
  add_common(generate, gen_opts);
  generate->add_option("--steps", gen_steps, "override process.steps");
  generate->add_option("--burn-in", gen_burn_in, "override process.burn_in");
  generate->add_flag("--csv", gen_csv, "also export values.csv");

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, train_opts);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
  add_common(evaluate_cmd, eval_opts);
  evaluate_cmd->add_option("--run", eval_run, "run directory with model.ckpt")->required();

  auto* sweep = app.add_subcommand("sweep", "window/capacity grid");
  add_common(sweep, sweep_opts);

  auto* transfer = app.add_subcommand("transfer", "multi-source training + adaptation");
  add_common(transfer, transfer_opts);
  transfer->add_option("--sources", n_sources, "number of synthetic source collections");

  auto* inspect = app.add_subcommand("inspect-embeddings", "dump a table to CSV");
  inspect->add_option("--checkpoint", inspect_ckpt, "checkpoint file")->required();
  inspect->add_option("--out", inspect_out, "output CSV path");
  inspect->add_option("--prefix", inspect_prefix, "table parameter prefix");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(gen_opts, gen_steps, gen_burn_in, gen_csv);
    if (train->parsed()) return cmd_train(train_opts);
    if (evaluate_cmd->parsed()) return cmd_evaluate(eval_opts, eval_run);
    if (sweep->parsed()) return cmd_sweep(sweep_opts);
    if (transfer->parsed()) return cmd_transfer(transfer_opts, n_sources);
    if (inspect->parsed()) return cmd_inspect(inspect_ckpt, inspect_out, inspect_prefix);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
