#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "stgl/pipeline.hpp"

#include "helpers.hpp"

using namespace stgl;

namespace {

struct Tiny {
  Graph g;
  SeriesDataset ds;
  Splits splits;
  ModelConfig model;
  TrainConfig tcfg;

  Tiny(int n_nodes = 3, int T = 120, uint64_t seed = 1) {
    g = normalize_adjacency(testing::random_graph(n_nodes, 0.8, seed),
                            NormMode::symmetric);
    ds = testing::toy_dataset(T, n_nodes, seed + 1);
    model.family = Family::TTS;
    model.mp_kind = MpKind::iso;
    model.mp_layers = 1;
    model.hidden = 4;
    model.window = 2;
    model.horizon = 1;
    splits = make_splits(ds, model.window, model.horizon, {0.7, 0.1, 0.2});
    tcfg.batch_size = 16;
    tcfg.max_epochs = 5;
    tcfg.patience = 5;
    tcfg.batches_per_epoch = 4;
    tcfg.lr = 0.01;
    tcfg.seed = 9;
    tcfg.eval_batch = 64;
  }

  std::vector<SourceBinding> bind(EmbeddingTable<float>* table = nullptr) {
    return {{&ds, &g, &splits.train, &splits.val, table}};
  }
};

}  // namespace

TEST_CASE("train: lr = 0 leaves parameters untouched") {
  Tiny t;
  t.tcfg.lr = 0.0;
  ParamStore<float> store(2);
  train(t.model, store, t.bind(), t.tcfg);
  auto snap = store.snapshot_values();
  t.tcfg.max_epochs = 3;
  t.tcfg.patience = 3;
  TrainReport r = train(t.model, store, t.bind(), t.tcfg);
  for (const auto& [name, v] : store.snapshot_values()) {
    CHECK((v - snap.at(name)).cwiseAbs().maxCoeff() == 0.0f);
  }
  CHECK(r.curve.size() > 0);
}

TEST_CASE("train: loss is non-increasing on a single repeated batch") {
  Tiny t(3, 60, 4);
  // train split smaller than one batch -> every epoch sees the same batch
  t.tcfg.batch_size = 256;
  t.tcfg.batches_per_epoch = 0;
  t.tcfg.max_epochs = 10;
  t.tcfg.patience = 10;
  t.tcfg.lr = 1e-3;
  ParamStore<float> store(3);
  TrainReport r = train(t.model, store, t.bind(), t.tcfg);
  REQUIRE(r.curve.size() == 10);
  for (size_t e = 1; e < r.curve.size(); ++e) {
    CHECK(r.curve[e].train_loss <= r.curve[e - 1].train_loss + 1e-7);
  }
}

TEST_CASE("train: lr schedule halves exactly on the period") {
  Tiny t;
  t.tcfg.max_epochs = 10;
  t.tcfg.patience = 10;
  t.tcfg.lr_halving_period = 3;
  t.tcfg.lr = 0.02;
  ParamStore<float> store(4);
  TrainReport r = train(t.model, store, t.bind(), t.tcfg);
  REQUIRE(r.curve.size() == 10);
  for (int e = 0; e < 10; ++e) {
    CHECK(r.curve[e].lr == doctest::Approx(0.02 * std::pow(2.0, -(e / 3))).epsilon(1e-12));
  }
}

TEST_CASE("train: early stopping restores the best-validation parameters") {
  Tiny t(4, 150, 7);
  t.tcfg.max_epochs = 12;
  t.tcfg.patience = 12;
  t.tcfg.lr = 0.05;  // noisy enough that val moves around
  ParamStore<float> a(5);
  TrainReport ra = train(t.model, a, t.bind(), t.tcfg);
  // deterministic rerun truncated right after the best epoch
  ParamStore<float> b(5);
  TrainConfig tb = t.tcfg;
  tb.max_epochs = ra.best_epoch + 1;
  tb.patience = tb.max_epochs;
  TrainReport rb = train(t.model, b, t.bind(), tb);
  CHECK(rb.best_epoch == ra.best_epoch);
  for (const auto& [name, v] : a.snapshot_values()) {
    CHECK((v - b.at(name).value).cwiseAbs().maxCoeff() == 0.0f);
  }
  // and the recorded best really is the curve minimum
  double lo = 1e300;
  for (const auto& e : ra.curve) lo = std::min(lo, e.val_mae);
  CHECK(ra.best_val_mae == doctest::Approx(lo));
}

TEST_CASE("train: patience triggers an early stop") {
  Tiny t;
  t.tcfg.max_epochs = 40;
  t.tcfg.patience = 3;
  t.tcfg.lr = 0.0;  // val can never improve after epoch 0
  ParamStore<float> store(6);
  TrainReport r = train(t.model, store, t.bind(), t.tcfg);
  CHECK(r.stopped_early);
  CHECK(r.curve.size() == 4);  // epoch 0 best, then 3 waits
  CHECK(r.best_epoch == 0);
}

TEST_CASE("train: deterministic under seed") {
  Tiny t;
  ParamStore<float> a(7), b(7), c(7);
  TrainReport ra = train(t.model, a, t.bind(), t.tcfg);
  TrainReport rb = train(t.model, b, t.bind(), t.tcfg);
  REQUIRE(ra.curve.size() == rb.curve.size());
  for (size_t e = 0; e < ra.curve.size(); ++e) {
    CHECK(ra.curve[e].val_mae == rb.curve[e].val_mae);
    CHECK(ra.curve[e].train_loss == rb.curve[e].train_loss);
  }
  TrainConfig other = t.tcfg;
  other.seed = 10;
  TrainReport rc = train(t.model, c, t.bind(), other);
  CHECK(ra.curve.back().val_mae != rc.curve.back().val_mae);
}

TEST_CASE("train: noise-floor guard aborts") {
  Tiny t;
  t.tcfg.noise_floor_mae = 10.0;  // every val MAE is below this
  ParamStore<float> store(8);
  CHECK_THROWS_WITH_AS(train(t.model, store, t.bind(), t.tcfg),
                       doctest::Contains("noise floor"), std::runtime_error);
}

TEST_CASE("train: non-finite loss aborts with diagnostics") {
  Tiny t;
  t.tcfg.lr = 1e12;
  t.tcfg.grad_clip = 0.0;
  t.tcfg.loss = LossKind::mse;
  t.tcfg.max_epochs = 30;
  t.tcfg.patience = 30;
  ParamStore<float> store(9);
  CHECK_THROWS_WITH_AS(train(t.model, store, t.bind(), t.tcfg),
                       doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("train: max_epochs 0 evaluates the initialized model") {
  Tiny t;
  t.tcfg.max_epochs = 0;
  ParamStore<float> store(10);
  // params do not exist before the first forward; run one forward to create
  Batch<float> warm = assemble_batch(t.model, t.ds, {t.splits.train.anchors[0]}, true);
  {
    Tape<float> tape(&store);
    (void)model_forward<float>(tape, t.model, &t.g, nullptr, warm, Phase::eval, nullptr);
  }
  auto snap = store.snapshot_values();
  TrainReport r = train(t.model, store, t.bind(), t.tcfg);
  CHECK(r.best_epoch == -1);
  CHECK(r.curve.empty());
  CHECK(std::isfinite(r.best_val_mae));
  for (const auto& [name, v] : store.snapshot_values()) {
    CHECK((v - snap.at(name)).cwiseAbs().maxCoeff() == 0.0f);
  }
}

TEST_CASE("evaluate: determinism and the per-horizon identity") {
  Tiny t;
  t.model.horizon = 3;
  t.splits = make_splits(t.ds, t.model.window, t.model.horizon, {0.7, 0.1, 0.2});
  ParamStore<float> store(11);
  train(t.model, store, t.bind(), t.tcfg);
  Metrics m1 = evaluate(t.model, store, t.g, nullptr, t.splits.test);
  Metrics m2 = evaluate(t.model, store, t.g, nullptr, t.splits.test);
  CHECK(m1.mae == m2.mae);
  CHECK(m1.mse == m2.mse);
  REQUIRE(m1.per_horizon_mae.size() == 3);
  double avg = 0.0;
  for (double v : m1.per_horizon_mae) avg += v;
  avg /= 3.0;
  CHECK(std::abs(avg - m1.mae) < 1e-9);
}

TEST_CASE("multi-source: uniform sampling and no node mixing") {
  // two sources with different node counts; any cross-source batch would
  // break the row-count contract inside assemble_batch
  Graph g2 = normalize_adjacency(testing::random_graph(2, 1.0, 1), NormMode::symmetric);
  Graph g3 = normalize_adjacency(testing::random_graph(3, 1.0, 2), NormMode::symmetric);
  SeriesDataset d2 = testing::toy_dataset(40, 2, 3);
  SeriesDataset d3 = testing::toy_dataset(40, 3, 4);
  Splits s2 = make_splits(d2, 2, 1, {0.7, 0.1, 0.2});
  Splits s3 = make_splits(d3, 2, 1, {0.7, 0.1, 0.2});

  ModelConfig m;
  m.family = Family::RNN;
  m.mp_kind = MpKind::none;
  m.hidden = 2;
  m.window = 2;

  TrainConfig tc;
  tc.batch_size = 1;
  tc.max_epochs = 1;
  tc.patience = 1;
  tc.batches_per_epoch = 10000;
  tc.lr = 0.0;
  tc.seed = 5;

  ParamStore<float> store(12);
  std::vector<SourceBinding> bind{{&d2, &g2, &s2.train, &s2.val, nullptr},
                                  {&d3, &g3, &s3.train, &s3.val, nullptr}};
  TrainReport r = train_multi_source(m, store, bind, tc);
  REQUIRE(r.source_batches.size() == 2);
  CHECK(r.source_batches[0] + r.source_batches[1] == 10000);
  // binomial(10^4, 1/2): 3 sigma = 150
  CHECK(std::abs(r.source_batches[0] - 5000) < 150);

  SeriesDataset bad = d3;
  bad.d_x = 2;  // heterogeneous channels rejected
  bad.values.resize(40, 6);
  bad.values.setZero();
  std::vector<SourceBinding> badbind{{&d2, &g2, &s2.train, &s2.val, nullptr},
                                     {&bad, &g3, &s3.train, &s3.val, nullptr}};
  CHECK_THROWS(train_multi_source(m, store, badbind, tc));
}

TEST_CASE("multi-source: single source behaves exactly like train") {
  Tiny t;
  ParamStore<float> a(13), b(13);
  TrainReport ra = train(t.model, a, t.bind(), t.tcfg);
  TrainReport rb = train_multi_source(t.model, b, t.bind(), t.tcfg);
  REQUIRE(ra.curve.size() == rb.curve.size());
  for (size_t e = 0; e < ra.curve.size(); ++e) {
    CHECK(ra.curve[e].val_mae == rb.curve[e].val_mae);
  }
}

// ---------------------------------------------------------------------------
// transfer mechanics on tiny synthetic collections

namespace {

ExperimentConfig tiny_transfer_config(RegKind reg) {
  json doc = {
      {"seed", 21},
      {"graph", {{"communities", 2}, {"community_size", 3}, {"intra_density", 1.0}}},
      {"process", {{"kind", "gpvarl"}, {"steps", 400}, {"burn_in", 20}}},
      {"model", {{"preset", "tts_iso_emb"}, {"hidden", 4}, {"window", 2},
                 {"embedding_dim", 3}}},
      {"train", {{"batch_size", 32}, {"max_epochs", 2}, {"patience", 2},
                 {"batches_per_epoch", 4}, {"reg", to_string(reg)}, {"clusters", 2}}}};
  return parse_experiment_config(doc);
}

}  // namespace

TEST_CASE("adapt: embedding_only freezes the backbone exactly") {
  ExperimentConfig cfg = tiny_transfer_config(RegKind::none);
  MultiSourceArtifacts ms = train_synthetic_sources(cfg, 2, cfg.seed);
  TransferSetup setup = ms.transfer_setup();
  GeneratedData target = generate_synthetic(cfg, derive_seed(cfg.seed, "tgt"));

  TransferPlan plan;
  plan.strategy = Strategy::embedding_only;
  plan.budget_fraction = 0.2;
  plan.finetune.max_epochs = 3;
  plan.finetune.patience = 3;
  plan.finetune.batch_size = 16;

  AdaptOutcome out = adapt(setup, target.data, target.graph, plan, 31);
  // trained exactly N' * d_v parameters
  CHECK(out.trained_params == static_cast<std::size_t>(target.graph.n_nodes) * 3);
  // every global parameter bitwise unchanged, frozen grads identically zero
  for (const auto& [name, e] : out.store.entries()) {
    if (name.rfind("emb/target", 0) == 0) continue;
    CHECK((e.value - setup.checkpoint.at(name)).cwiseAbs().maxCoeff() == 0.0f);
    CHECK(e.grad.cwiseAbs().maxCoeff() == 0.0f);
  }
  // and the new table did move
  CHECK(out.store.at("emb/target/V").grad.size() > 0);

  // retention deltas are exactly zero under a frozen backbone
  std::vector<const SeriesDataset*> src{&ms.sources[0].data, &ms.sources[1].data};
  std::vector<const Graph*> gr{&ms.sources[0].graph, &ms.sources[1].graph};
  std::vector<WindowIndex> te{ms.splits[0].test, ms.splits[1].test};
  for (const auto& d : source_retention_check(setup, out, src, gr, te)) {
    CHECK(d.delta == 0.0);
  }
}

TEST_CASE("adapt: zero fine-tune steps equals zero_shot") {
  ExperimentConfig cfg = tiny_transfer_config(RegKind::none);
  MultiSourceArtifacts ms = train_synthetic_sources(cfg, 2, cfg.seed);
  TransferSetup setup = ms.transfer_setup();
  GeneratedData target = generate_synthetic(cfg, derive_seed(cfg.seed, "tgt"));

  TransferPlan zs;
  zs.strategy = Strategy::zero_shot;
  zs.budget_fraction = 0.2;
  TransferPlan none;
  none.strategy = Strategy::embedding_only;
  none.budget_fraction = 0.2;
  none.finetune.max_epochs = 0;
  none.finetune.patience = 0;

  AdaptOutcome a = adapt(setup, target.data, target.graph, zs, 33);
  AdaptOutcome b = adapt(setup, target.data, target.graph, none, 33);
  CHECK(a.target_test.mae == b.target_test.mae);
  CHECK(a.trained_params == 0);
}

TEST_CASE("adapt: variational and clustered table handling") {
  // variational: fresh (mu, sigma) with the reference init, KL removed
  ExperimentConfig vcfg = tiny_transfer_config(RegKind::variational);
  MultiSourceArtifacts vms = train_synthetic_sources(vcfg, 2, vcfg.seed);
  TransferSetup vsetup = vms.transfer_setup();
  GeneratedData target = generate_synthetic(vcfg, derive_seed(vcfg.seed, "tgt"));

  TransferPlan plan;
  plan.strategy = Strategy::embedding_only;
  plan.budget_fraction = 0.2;
  plan.finetune.max_epochs = 0;  // inspect the initialization itself
  plan.finetune.patience = 0;
  AdaptOutcome vout = adapt(vsetup, target.data, target.graph, plan, 35);
  CHECK(vout.store.at("emb/target/mu").value.cwiseAbs().maxCoeff() <= 0.01f);
  const MatF sig = vout.store.at("emb/target/log_sigma").value.array().exp();
  CHECK((sig.array() - 0.2f).abs().maxCoeff() < 1e-6f);
  // trained-parameter accounting: N' * 2 * d_v
  TransferPlan train_plan = plan;
  train_plan.finetune.max_epochs = 1;
  train_plan.finetune.patience = 1;
  AdaptOutcome vtrained = adapt(vsetup, target.data, target.graph, train_plan, 35);
  CHECK(vtrained.trained_params == static_cast<std::size_t>(target.graph.n_nodes) * 2 * 3);

  // clustered: centroids come frozen from the source model
  ExperimentConfig ccfg = tiny_transfer_config(RegKind::clustering);
  MultiSourceArtifacts cms = train_synthetic_sources(ccfg, 2, ccfg.seed);
  TransferSetup csetup = cms.transfer_setup();
  AdaptOutcome cout = adapt(csetup, target.data, target.graph, train_plan, 36);
  CHECK((cout.store.at("emb/shared/C").value - csetup.checkpoint.at("emb/shared/C"))
            .cwiseAbs()
            .maxCoeff() == 0.0f);
  // N' * d_v embeddings + N' * K scores trainable
  CHECK(cout.trained_params ==
        static_cast<std::size_t>(target.graph.n_nodes) * 3 +
            static_cast<std::size_t>(target.graph.n_nodes) * 2);
}

TEST_CASE("adapt: embedding_only requires embedding sites") {
  ExperimentConfig cfg = tiny_transfer_config(RegKind::none);
  cfg.model.embedding_at.clear();
  cfg.model.embedding_dim = 0;
  MultiSourceArtifacts ms = train_synthetic_sources(cfg, 1, cfg.seed);
  TransferSetup setup = ms.transfer_setup();
  GeneratedData target = generate_synthetic(cfg, 77);
  TransferPlan plan;
  plan.strategy = Strategy::embedding_only;
  CHECK_THROWS(adapt(setup, target.data, target.graph, plan, 1));
}

TEST_CASE("budget presets") {
  CHECK(budget_fraction_from_preset("1-week") == doctest::Approx(0.10));
  CHECK(budget_fraction_from_preset("1-day") < budget_fraction_from_preset("3-day"));
  CHECK(budget_fraction_from_preset("2-week") == doctest::Approx(0.20));
  CHECK_THROWS(budget_fraction_from_preset("fortnight"));
}
