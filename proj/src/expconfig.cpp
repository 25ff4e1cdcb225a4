#include "stgl/expconfig.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace stgl {

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& context) {
  if (!j.is_object()) throw std::invalid_argument("config: " + context + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw std::invalid_argument("config: unknown key '" + key + "' in " + context);
    }
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (j.contains(key)) return j.at(key).get<T>();
  return fallback;
}

std::set<Site> sites_from_json(const json& arr, const std::string& context) {
  std::set<Site> out;
  for (const auto& s : arr) {
    const std::string name = s.get<std::string>();
    if (name == "encoder") {
      out.insert(Site::encoder);
    } else if (name == "decoder") {
      out.insert(Site::decoder);
    } else {
      throw std::invalid_argument("config: bad site '" + name + "' in " + context);
    }
  }
  return out;
}

json sites_to_json(const std::set<Site>& sites) {
  json arr = json::array();
  if (sites.count(Site::encoder)) arr.push_back("encoder");
  if (sites.count(Site::decoder)) arr.push_back("decoder");
  return arr;
}

}  // namespace

std::vector<std::string> model_preset_names() {
  return {"fcrnn",          "rnn_global",      "rnn_emb",        "local_rnns",
          "tts_iso_global", "tts_iso_emb",     "tts_aniso_global", "tts_aniso_emb",
          "tas_iso_global", "tas_iso_emb",     "tas_aniso_global", "tas_aniso_emb"};
}

json model_preset(const std::string& name) {
  json m = {{"hidden", 16}, {"window", 6}, {"horizon", 1}, {"d_x", 1}, {"d_u", 0}};
  auto with_emb = [&m]() {
    m["embedding_dim"] = 8;
    m["embedding_at"] = {"encoder", "decoder"};
  };
  if (name == "fcrnn") {
    m["family"] = "fcrnn";
    m["mp_kind"] = "none";
  } else if (name == "rnn_global" || name == "rnn_emb") {
    m["family"] = "rnn";
    m["mp_kind"] = "none";
    if (name == "rnn_emb") with_emb();
  } else if (name == "local_rnns") {
    m["family"] = "localrnn";
    m["mp_kind"] = "none";
  } else if (name.rfind("tts_", 0) == 0 || name.rfind("tas_", 0) == 0) {
    const bool tts = name.rfind("tts_", 0) == 0;
    m["family"] = tts ? "tts" : "tas";
    m["mp_layers"] = tts ? 2 : 1;
    if (name.find("_iso_") != std::string::npos) {
      m["mp_kind"] = "iso";
    } else if (name.find("_aniso_") != std::string::npos) {
      m["mp_kind"] = "aniso";
    } else {
      throw std::invalid_argument("unknown model preset: " + name);
    }
    if (name.size() >= 4 && name.substr(name.size() - 4) == "_emb") with_emb();
  } else {
    throw std::invalid_argument("unknown model preset: " + name);
  }
  return m;
}

ExperimentConfig parse_experiment_config(const json& doc) {
  check_keys(doc, {"seed", "output", "graph", "process", "model", "train", "transfer",
                   "sweep"},
             "top level");
  ExperimentConfig cfg;
  cfg.seed = get_or<uint64_t>(doc, "seed", 0);
  cfg.output = get_or<std::string>(doc, "output", cfg.output);

  if (doc.contains("graph")) {
    const json& g = doc.at("graph");
    check_keys(g, {"communities", "community_size", "bridges", "intra_density", "normalize"},
               "graph");
    cfg.communities = get_or(g, "communities", cfg.communities);
    cfg.community_size = get_or(g, "community_size", cfg.community_size);
    cfg.bridges = get_or(g, "bridges", cfg.bridges);
    cfg.intra_density = get_or(g, "intra_density", cfg.intra_density);
    cfg.normalize = norm_mode_from_string(
        get_or<std::string>(g, "normalize", to_string(cfg.normalize)));
  }

  if (doc.contains("process")) {
    const json& p = doc.at("process");
    check_keys(p, {"kind", "steps", "burn_in", "sigma", "dataset_dir", "values_csv",
                   "edges_csv", "csv_has_header", "nan_mask", "directed"},
               "process");
    cfg.process_kind = get_or<std::string>(p, "kind", cfg.process_kind);
    if (cfg.process_kind != "gpvar" && cfg.process_kind != "gpvarl" &&
        cfg.process_kind != "dir" && cfg.process_kind != "csv") {
      throw std::invalid_argument("config: unknown process kind " + cfg.process_kind);
    }
    cfg.steps = get_or(p, "steps", cfg.steps);
    cfg.burn_in = get_or(p, "burn_in", cfg.burn_in);
    cfg.sigma = get_or(p, "sigma", cfg.sigma);
    cfg.dataset_dir = get_or<std::string>(p, "dataset_dir", "");
    cfg.values_csv = get_or<std::string>(p, "values_csv", "");
    cfg.edges_csv = get_or<std::string>(p, "edges_csv", "");
    cfg.csv_has_header = get_or(p, "csv_has_header", cfg.csv_has_header);
    cfg.nan_mask = get_or(p, "nan_mask", cfg.nan_mask);
    cfg.csv_directed = get_or(p, "directed", cfg.csv_directed);
  }

  json m = json::object();
  if (doc.contains("model")) {
    const json& raw = doc.at("model");
    check_keys(raw, {"preset", "family", "mp_kind", "mp_layers", "hidden", "window",
                     "horizon", "embedding_dim", "embedding_at", "local_weights_at",
                     "d_x", "d_u", "activation", "weighted_mean", "local_param_budget"},
               "model");
    if (raw.contains("preset")) m = model_preset(raw.at("preset").get<std::string>());
    for (const auto& [key, value] : raw.items()) {
      if (key != "preset") m[key] = value;
    }
  }
  cfg.model.family = family_from_string(get_or<std::string>(m, "family", "tts"));
  cfg.model.mp_kind = mp_kind_from_string(
      get_or<std::string>(m, "mp_kind", cfg.model.family == Family::TTS ||
                                                cfg.model.family == Family::TAS
                                            ? "iso"
                                            : "none"));
  cfg.model.mp_layers = get_or(m, "mp_layers", cfg.model.family == Family::TAS ? 1 : 2);
  cfg.model.hidden = get_or(m, "hidden", 16);
  cfg.model.window = get_or(m, "window", 6);
  cfg.model.horizon = get_or(m, "horizon", 1);
  cfg.model.embedding_dim = get_or(m, "embedding_dim", 0);
  if (m.contains("embedding_at")) {
    cfg.model.embedding_at = sites_from_json(m.at("embedding_at"), "model.embedding_at");
  }
  if (m.contains("local_weights_at")) {
    cfg.model.local_weights_at =
        sites_from_json(m.at("local_weights_at"), "model.local_weights_at");
  }
  cfg.model.d_x = get_or(m, "d_x", 1);
  cfg.model.d_u = get_or(m, "d_u", 0);
  cfg.model.activation = act_from_string(get_or<std::string>(m, "activation", "elu"));
  cfg.model.weighted_mean = get_or(m, "weighted_mean", false);
  cfg.model.local_param_budget =
      get_or<std::size_t>(m, "local_param_budget", cfg.model.local_param_budget);

  if (doc.contains("train")) {
    const json& t = doc.at("train");
    check_keys(t, {"batch_size", "max_epochs", "batches_per_epoch", "lr",
                   "lr_halving_period", "patience", "loss", "reg", "beta", "lambda",
                   "tau", "clusters", "reg_samples", "grad_clip", "val_stride",
                   "noise_floor", "eval_batch", "verbose_every"},
               "train");
    TrainConfig& tc = cfg.train;
    tc.batch_size = get_or(t, "batch_size", tc.batch_size);
    tc.max_epochs = get_or(t, "max_epochs", tc.max_epochs);
    tc.batches_per_epoch = get_or(t, "batches_per_epoch", tc.batches_per_epoch);
    tc.lr = get_or(t, "lr", tc.lr);
    tc.lr_halving_period = get_or(t, "lr_halving_period", tc.lr_halving_period);
    tc.patience = get_or(t, "patience", tc.patience);
    tc.loss = loss_kind_from_string(get_or<std::string>(t, "loss", to_string(tc.loss)));
    tc.reg = reg_kind_from_string(get_or<std::string>(t, "reg", to_string(tc.reg)));
    tc.beta = get_or(t, "beta", tc.beta);
    tc.lambda = get_or(t, "lambda", tc.lambda);
    tc.tau = get_or(t, "tau", tc.tau);
    tc.clusters = get_or(t, "clusters", tc.clusters);
    tc.reg_samples = get_or(t, "reg_samples", tc.reg_samples);
    tc.grad_clip = get_or(t, "grad_clip", tc.grad_clip);
    tc.val_stride = get_or(t, "val_stride", tc.val_stride);
    tc.eval_batch = get_or(t, "eval_batch", tc.eval_batch);
    tc.verbose_every = get_or(t, "verbose_every", tc.verbose_every);
    if (t.contains("noise_floor") && !t.at("noise_floor").is_null()) {
      tc.noise_floor_mae = t.at("noise_floor").get<double>();
    }
  }
  cfg.train.seed = derive_seed(cfg.seed, "train");

  if (doc.contains("transfer")) {
    const json& tr = doc.at("transfer");
    check_keys(tr, {"strategy", "budget", "budget_fraction", "budget_sweep", "source_run",
                    "finetune"},
               "transfer");
    cfg.has_transfer = true;
    cfg.plan.strategy =
        strategy_from_string(get_or<std::string>(tr, "strategy", "embedding_only"));
    if (tr.contains("budget")) {
      cfg.budget_preset = tr.at("budget").get<std::string>();
      cfg.plan.budget_fraction = budget_fraction_from_preset(cfg.budget_preset);
    }
    if (tr.contains("budget_fraction")) {
      cfg.plan.budget_fraction = tr.at("budget_fraction").get<double>();
      cfg.budget_preset = "";
    }
    if (tr.contains("budget_sweep")) {
      for (const auto& b : tr.at("budget_sweep")) {
        cfg.budget_sweep.push_back(b.get<std::string>());
      }
    }
    cfg.source_run = get_or<std::string>(tr, "source_run", "");
    if (tr.contains("finetune")) {
      const json& ft = tr.at("finetune");
      check_keys(ft, {"batch_size", "max_epochs", "batches_per_epoch", "lr", "patience",
                      "val_stride"},
                 "transfer.finetune");
      TrainConfig& f = cfg.plan.finetune;
      f.batch_size = get_or(ft, "batch_size", f.batch_size);
      f.max_epochs = get_or(ft, "max_epochs", f.max_epochs);
      f.batches_per_epoch = get_or(ft, "batches_per_epoch", f.batches_per_epoch);
      f.lr = get_or(ft, "lr", f.lr);
      f.patience = get_or(ft, "patience", f.patience);
      f.val_stride = get_or(ft, "val_stride", f.val_stride);
    }
  }

  if (doc.contains("sweep")) {
    const json& s = doc.at("sweep");
    check_keys(s, {"windows", "hidden", "parallel", "embeddings"}, "sweep");
    if (s.contains("windows")) cfg.sweep_windows = s.at("windows").get<std::vector<int>>();
    if (s.contains("hidden")) cfg.sweep_hidden = s.at("hidden").get<std::vector<int>>();
    cfg.sweep_parallel = get_or(s, "parallel", cfg.sweep_parallel);
    cfg.sweep_embeddings = get_or(s, "embeddings", cfg.sweep_embeddings);
  }

  // fully resolved echo
  json r;
  r["seed"] = cfg.seed;
  r["output"] = cfg.output;
  r["graph"] = {{"communities", cfg.communities},
                {"community_size", cfg.community_size},
                {"bridges", cfg.bridges},
                {"intra_density", cfg.intra_density},
                {"normalize", to_string(cfg.normalize)}};
  r["process"] = {{"kind", cfg.process_kind}, {"steps", cfg.steps},
                  {"burn_in", cfg.burn_in},   {"sigma", cfg.sigma},
                  {"dataset_dir", cfg.dataset_dir}, {"values_csv", cfg.values_csv},
                  {"edges_csv", cfg.edges_csv}, {"csv_has_header", cfg.csv_has_header},
                  {"nan_mask", cfg.nan_mask}, {"directed", cfg.csv_directed}};
  r["model"] = {{"family", to_string(cfg.model.family)},
                {"mp_kind", to_string(cfg.model.mp_kind)},
                {"mp_layers", cfg.model.mp_layers},
                {"hidden", cfg.model.hidden},
                {"window", cfg.model.window},
                {"horizon", cfg.model.horizon},
                {"embedding_dim", cfg.model.embedding_dim},
                {"embedding_at", sites_to_json(cfg.model.embedding_at)},
                {"local_weights_at", sites_to_json(cfg.model.local_weights_at)},
                {"d_x", cfg.model.d_x},
                {"d_u", cfg.model.d_u},
                {"activation", to_string(cfg.model.activation)},
                {"weighted_mean", cfg.model.weighted_mean}};
  r["train"] = {{"batch_size", cfg.train.batch_size},
                {"max_epochs", cfg.train.max_epochs},
                {"batches_per_epoch", cfg.train.batches_per_epoch},
                {"lr", cfg.train.lr},
                {"lr_halving_period", cfg.train.lr_halving_period},
                {"patience", cfg.train.patience},
                {"loss", to_string(cfg.train.loss)},
                {"reg", to_string(cfg.train.reg)},
                {"beta", cfg.train.beta},
                {"lambda", cfg.train.lambda},
                {"tau", cfg.train.tau},
                {"clusters", cfg.train.clusters},
                {"reg_samples", cfg.train.reg_samples},
                {"grad_clip", cfg.train.grad_clip},
                {"val_stride", cfg.train.val_stride}};
  if (cfg.has_transfer) {
    r["transfer"] = {{"strategy", to_string(cfg.plan.strategy)},
                     {"budget", cfg.budget_preset},
                     {"budget_fraction", cfg.plan.budget_fraction},
                     {"source_run", cfg.source_run},
                     {"finetune",
                      {{"batch_size", cfg.plan.finetune.batch_size},
                       {"max_epochs", cfg.plan.finetune.max_epochs},
                       {"lr", cfg.plan.finetune.lr},
                       {"patience", cfg.plan.finetune.patience}}}};
  }
  r["sweep"] = {{"windows", cfg.sweep_windows},
                {"hidden", cfg.sweep_hidden},
                {"parallel", cfg.sweep_parallel},
                {"embeddings", cfg.sweep_embeddings}};
  cfg.resolved = r;
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config " + path);
  json doc = json::parse(f);
  return parse_experiment_config(doc);
}

json train_report_json(const TrainReport& report) {
  json curve = json::array();
  for (const auto& e : report.curve) {
    curve.push_back({{"train_loss", e.train_loss}, {"val_mae", e.val_mae}, {"lr", e.lr}});
  }
  return {{"best_epoch", report.best_epoch},
          {"best_val_mae", report.best_val_mae},
          {"epochs_run", report.curve.size()},
          {"total_batches", report.total_batches},
          {"stopped_early", report.stopped_early},
          {"wall_seconds", report.wall_seconds},
          {"curve", curve}};
}

json metrics_json(const Metrics& m) {
  return {{"mae", m.mae}, {"mse", m.mse}, {"per_horizon_mae", m.per_horizon_mae},
          {"count", m.count}};
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << content;
}

}  // namespace stgl
