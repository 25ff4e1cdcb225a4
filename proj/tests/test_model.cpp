#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "stgl/model.hpp"
#include "stgl/trainer.hpp"

#include "helpers.hpp"

using namespace stgl;
using testing::random_mat;

namespace {

ModelConfig toy_config(Family fam, MpKind mp, bool emb) {
  ModelConfig cfg;
  cfg.family = fam;
  cfg.mp_kind = mp;
  cfg.mp_layers = fam == Family::TAS ? 1 : 2;
  cfg.hidden = 5;
  cfg.window = 3;
  cfg.horizon = 2;
  if (emb) {
    cfg.embedding_dim = 3;
    cfg.embedding_at = {Site::encoder, Site::decoder};
  }
  return cfg;
}

Batch<double> toy_batch(const ModelConfig& cfg, const Graph& g, int B, uint64_t seed) {
  Batch<double> b;
  b.n_windows = B;
  b.real_nodes = g.n_nodes;
  const bool fc = cfg.family == Family::FCRNN;
  b.nodes_per_window = fc ? 1 : g.n_nodes;
  const Eigen::Index rows = fc ? B : static_cast<Eigen::Index>(B) * g.n_nodes;
  const Eigen::Index in_cols = fc ? g.n_nodes * (cfg.d_x + cfg.d_u) : cfg.d_x + cfg.d_u;
  const Eigen::Index out_cols = fc ? g.n_nodes * cfg.d_x : cfg.d_x;
  for (int s = 0; s < cfg.window; ++s) {
    b.steps.push_back(random_mat<double>(rows, in_cols, seed + s));
  }
  for (int k = 0; k < cfg.horizon; ++k) {
    b.targets.push_back(random_mat<double>(rows, out_cols, seed + 100 + k));
  }
  return b;
}

}  // namespace

TEST_CASE("model config validation") {
  Graph g = testing::random_graph(4, 0.5, 1);
  ModelConfig cfg = toy_config(Family::TTS, MpKind::iso, true);
  cfg.validate(g.n_nodes);

  ModelConfig bad = cfg;
  bad.embedding_dim = 0;
  CHECK_THROWS(bad.validate(g.n_nodes));  // sites set but d_v = 0

  bad = cfg;
  bad.local_weights_at = {Site::encoder};
  CHECK_THROWS(bad.validate(g.n_nodes));  // same-site clash

  bad = toy_config(Family::FCRNN, MpKind::none, false);
  bad.embedding_at = {Site::encoder};
  bad.embedding_dim = 3;
  CHECK_THROWS(bad.validate(g.n_nodes));

  ModelConfig budget = toy_config(Family::LOCALRNN, MpKind::none, false);
  budget.local_param_budget = 10;
  CHECK_THROWS(budget.validate(g.n_nodes));
}

TEST_CASE("forward output shape contract") {
  Graph g = normalize_adjacency(testing::random_graph(6, 0.5, 2), NormMode::symmetric);
  for (bool emb : {false, true}) {
    for (auto [fam, mp] : std::vector<std::pair<Family, MpKind>>{
             {Family::TTS, MpKind::iso},
             {Family::TAS, MpKind::aniso},
             {Family::RNN, MpKind::none},
             {Family::FCRNN, MpKind::none},
             {Family::LOCALRNN, MpKind::none}}) {
      if (emb && (fam == Family::FCRNN || fam == Family::LOCALRNN)) continue;
      ModelConfig cfg = toy_config(fam, mp, emb);
      ParamStore<float> store(derive_seed(3, to_string(fam)));
      EmbeddingTable<float> table;
      if (emb) table = init_table<float>(EmbMode::plain, 6, 3, 1, 1.0, store, 4);
      MatD win = random_mat<double>(cfg.window, 6, 50);
      MatD exog(cfg.window, 0);
      Forecast f = forward(cfg, g, emb ? &table : nullptr, store, win, exog);
      CHECK(f.n_nodes == 6);
      CHECK(f.horizon == 2);
      CHECK(f.d_x == 1);
      CHECK(f.data.rows() == 6);
      CHECK(f.data.cols() == 2);
      f.check_finite();
    }
  }
}

TEST_CASE("encoder variants: widths and per-node weights") {
  Graph g = testing::two_node_graph(true);
  // embedding concatenation widens the encoder input to d_x + d_u + d_v
  ModelConfig cfg = toy_config(Family::TTS, MpKind::iso, true);
  ParamStore<float> store(5);
  auto table = init_table<float>(EmbMode::plain, 2, 3, 1, 1.0, store, 6);
  MatD win = random_mat<double>(cfg.window, 2, 51);
  MatD exog(cfg.window, 0);
  (void)forward(cfg, g, &table, store, win, exog);
  CHECK(store.at("enc/W").value.rows() == cfg.d_x + cfg.d_u + cfg.embedding_dim);
  CHECK(store.at("dec/W").value.rows() == cfg.hidden + cfg.embedding_dim);

  // distinct per-node weights produce distinct outputs on identical inputs
  ModelConfig local = toy_config(Family::RNN, MpKind::none, false);
  local.local_weights_at = {Site::encoder};
  ParamStore<float> store2(7);
  MatD same_rows = MatD::Ones(local.window, 2);
  (void)forward(local, g, nullptr, store2, same_rows, exog);
  store2.at("enc/node0/W").value.setConstant(1.0f);
  store2.at("enc/node1/W").value.setConstant(2.0f);
  Forecast f = forward(local, g, nullptr, store2, same_rows, exog);
  CHECK(std::abs(f.at(0, 0) - f.at(1, 0)) > 1e-6);
}

TEST_CASE("encoder: identity-padded weights pass inputs through") {
  Graph g;
  g.n_nodes = 1;
  g.rebuild_neighbor_index();
  ParamStore<double> store(8);
  Tape<double> t(&store);
  MatD x(1, 1);
  x << 0.7;
  auto enc = dense(t, t.input(x), "enc", 4);
  store.at("enc/W").value.setZero();
  store.at("enc/W").value(0, 0) = 1.0;
  Tape<double> t2(&store);
  auto enc2 = dense(t2, t2.input(x), "enc", 4);
  CHECK(t2.val(enc2)(0, 0) == doctest::Approx(0.7));
  CHECK(t2.val(enc2).cwiseAbs().sum() == doctest::Approx(0.7));
  (void)enc;
}

TEST_CASE("stmp_tts: zero MP layers return the recurrent state") {
  Graph g = testing::random_graph(4, 0.6, 9);
  ModelConfig cfg = toy_config(Family::TTS, MpKind::iso, false);
  cfg.mp_layers = 0;
  ModelConfig rnn = toy_config(Family::RNN, MpKind::none, false);
  ParamStore<float> s1(11), s2(11);  // same init stream -> same parameters
  MatD win = random_mat<double>(cfg.window, 4, 52);
  MatD exog(cfg.window, 0);
  Forecast a = forward(cfg, g, nullptr, s1, win, exog);
  Forecast b = forward(rnn, g, nullptr, s2, win, exog);
  CHECK((a.data - b.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stmp_tts: edgeless graph keeps nodes independent") {
  Graph g;
  g.n_nodes = 3;
  g.rebuild_neighbor_index();
  ModelConfig cfg = toy_config(Family::TTS, MpKind::iso, false);
  ParamStore<float> store(12);
  MatD win = random_mat<double>(cfg.window, 3, 53);
  MatD exog(cfg.window, 0);
  Forecast base = forward(cfg, g, nullptr, store, win, exog);
  // changing node 2's inputs must not move node 0/1 predictions
  MatD win2 = win;
  win2.col(2).array() += 0.5;
  Forecast mod = forward(cfg, g, nullptr, store, win2, exog);
  CHECK((base.data.row(0) - mod.data.row(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((base.data.row(1) - mod.data.row(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((base.data.row(2) - mod.data.row(2)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("stmp_tas: zero gates halve the state, edgeless reduces to gated rnn") {
  Graph g;
  g.n_nodes = 2;
  g.rebuild_neighbor_index();  // edgeless: MP degenerates to the dense term
  ModelConfig cfg = toy_config(Family::TAS, MpKind::iso, false);
  cfg.window = 1;
  ParamStore<float> store(13);
  MatD win = random_mat<double>(1, 2, 54);
  MatD exog(1, 0);
  (void)forward(cfg, g, nullptr, store, win, exog);
  for (auto& [name, e] : store.entries()) e.value.setZero();
  Forecast f = forward(cfg, g, nullptr, store, win, exog);
  // state stays zero when every gate parameter is zero: h' = 0.5 * 0
  CHECK(f.data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decoder: horizon heads are independent") {
  Graph g = testing::random_graph(3, 0.6, 14);
  ModelConfig cfg = toy_config(Family::TTS, MpKind::iso, false);
  ParamStore<float> store(15);
  MatD win = random_mat<double>(cfg.window, 3, 55);
  MatD exog(cfg.window, 0);
  Forecast before = forward(cfg, g, nullptr, store, win, exog);
  store.at("dec/h1/W").value.array() += 0.25f;
  Forecast after = forward(cfg, g, nullptr, store, win, exog);
  for (int n = 0; n < 3; ++n) {
    CHECK(before.at(n, 0) == after.at(n, 0));  // step 1 bitwise unchanged
    CHECK(before.at(n, 1) != after.at(n, 1));
  }
}

TEST_CASE("hybrid_sum_forward") {
  Forecast a;
  a.n_nodes = 2;
  a.horizon = 1;
  a.data = random_mat<double>(2, 1, 56);
  Forecast zero = a;
  zero.data.setZero();
  CHECK((hybrid_sum_forward(a, zero).data - a.data).cwiseAbs().maxCoeff() == 0.0);
  Forecast neg = a;
  neg.data = -a.data;
  CHECK(hybrid_sum_forward(a, neg).data.cwiseAbs().maxCoeff() == 0.0);
  Forecast b = a;
  b.data = random_mat<double>(2, 1, 57);
  CHECK((hybrid_sum_forward(a, b).data - hybrid_sum_forward(b, a).data)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  Forecast bad = a;
  bad.horizon = 2;
  bad.data.resize(2, 2);
  CHECK_THROWS(hybrid_sum_forward(a, bad));
}

TEST_CASE("parameter accounting matches the closed form") {
  Graph g = testing::random_graph(5, 0.6, 16);
  for (bool emb : {false, true}) {
    for (auto [fam, mp] : std::vector<std::pair<Family, MpKind>>{
             {Family::TTS, MpKind::iso},
             {Family::TTS, MpKind::aniso},
             {Family::TAS, MpKind::iso},
             {Family::TAS, MpKind::aniso},
             {Family::RNN, MpKind::none},
             {Family::FCRNN, MpKind::none},
             {Family::LOCALRNN, MpKind::none}}) {
      if (emb && (fam == Family::FCRNN || fam == Family::LOCALRNN)) continue;
      ModelConfig cfg = toy_config(fam, mp, emb);
      ParamStore<float> store(17);
      EmbeddingTable<float> table;
      if (emb) table = init_table<float>(EmbMode::plain, 5, 3, 1, 1.0, store, 18);
      MatD win = random_mat<double>(cfg.window, 5, 58);
      MatD exog(cfg.window, 0);
      (void)forward(cfg, g, emb ? &table : nullptr, store, win, exog);
      const std::size_t expected =
          cfg.backbone_param_count(5) + cfg.embedding_param_count(5, EmbMode::plain, 1);
      INFO(to_string(fam), " ", to_string(mp), " emb=", emb);
      CHECK(store.total_params() == expected);
    }
  }

  // local-weight variants on both sites
  for (auto site : {Site::encoder, Site::decoder}) {
    ModelConfig cfg = toy_config(Family::TTS, MpKind::iso, false);
    cfg.local_weights_at = {site};
    ParamStore<float> store(19);
    MatD win = random_mat<double>(cfg.window, 5, 59);
    MatD exog(cfg.window, 0);
    (void)forward(cfg, g, nullptr, store, win, exog);
    CHECK(store.total_params() == cfg.backbone_param_count(5));
  }

  // variational and clustered table sizes
  ModelConfig cfg = toy_config(Family::TTS, MpKind::iso, true);
  CHECK(cfg.embedding_param_count(5, EmbMode::variational, 1) == 2u * 5 * 3);
  CHECK(cfg.embedding_param_count(5, EmbMode::clustered, 4) == 5u * 3 + 4 * 3 + 5 * 4);
}

TEST_CASE("parameter ordering mirrors the capacity table") {
  // global < embeddings << per-node weights, traffic-sized configuration
  ModelConfig global;
  global.family = Family::TTS;
  global.mp_kind = MpKind::iso;
  global.hidden = 64;
  global.window = 12;
  global.horizon = 12;
  const int N = 325;
  const std::size_t n_global = global.backbone_param_count(N);

  ModelConfig emb = global;
  emb.embedding_dim = 32;
  emb.embedding_at = {Site::encoder, Site::decoder};
  const std::size_t n_emb =
      emb.backbone_param_count(N) + emb.embedding_param_count(N, EmbMode::plain, 1);

  ModelConfig local = global;
  local.local_weights_at = {Site::encoder, Site::decoder};
  const std::size_t n_local = local.backbone_param_count(N);

  CHECK(n_global < n_emb);
  CHECK(n_emb < n_local);
  CHECK(n_local > 5 * n_emb);  // per-node weights dominate by a wide margin
  // embeddings add exactly N*d_v plus the widened dense maps
  const std::size_t widened = 32u * 64 + 32u * 64;  // encoder + decoder input widths
  CHECK(n_emb - n_global == static_cast<std::size_t>(N) * 32 + widened);
}

TEST_CASE("model families: end-to-end finite differences on a toy graph") {
  Graph g = normalize_adjacency(testing::random_graph(6, 0.5, 21), NormMode::symmetric);
  for (auto [fam, mp] : std::vector<std::pair<Family, MpKind>>{
           {Family::TTS, MpKind::iso},
           {Family::TTS, MpKind::aniso},
           {Family::TAS, MpKind::iso},
           {Family::TAS, MpKind::aniso}}) {
    ModelConfig cfg = toy_config(fam, mp, true);
    ParamStore<double> store(derive_seed(22, to_string(fam) + to_string(mp)));
    auto table = init_table<double>(EmbMode::plain, 6, 3, 1, 1.0, store, 23);
    Batch<double> batch = toy_batch(cfg, g, 2, 60);
    auto build = [&](Tape<double>& t) {
      auto preds = model_forward(t, cfg, &g, &table, batch, Phase::train, nullptr);
      Tape<double>::NodeId loss = -1;
      for (size_t k = 0; k < preds.size(); ++k) {
        auto term = t.sum_all(t.abs_(t.sub(preds[k], t.input(batch.targets[k]))));
        loss = loss < 0 ? term : t.add(loss, term);
      }
      return t.affine(loss, 1.0 / 24);
    };
    auto res = testing::check_gradients(store, build);
    INFO(to_string(fam), "/", to_string(mp), " worst=", res.worst_param);
    CHECK(res.max_rel_err < 1e-3);
    CHECK(res.checked > 100);
  }
}

TEST_CASE("permutation equivariance of global models") {
  Graph g = normalize_adjacency(testing::random_graph(6, 0.5, 24), NormMode::symmetric);
  std::vector<int> perm{4, 2, 0, 5, 1, 3};
  Graph pg;
  pg.n_nodes = 6;
  for (const Edge& e : g.edges) pg.edges.push_back({perm[e.src], perm[e.dst], e.weight});
  pg.rebuild_neighbor_index();

  for (auto [fam, mp] : std::vector<std::pair<Family, MpKind>>{
           {Family::TTS, MpKind::iso},
           {Family::TTS, MpKind::aniso},
           {Family::TAS, MpKind::iso},
           {Family::RNN, MpKind::none}}) {
    ModelConfig cfg = toy_config(fam, mp, false);
    ParamStore<float> store(derive_seed(25, to_string(fam) + to_string(mp)));
    MatD win = random_mat<double>(cfg.window, 6, 61);
    MatD pwin(cfg.window, 6);
    for (int n = 0; n < 6; ++n) pwin.col(perm[n]) = win.col(n);
    MatD exog(cfg.window, 0);
    Forecast f = forward(cfg, g, nullptr, store, win, exog);
    Forecast pf = forward(cfg, pg, nullptr, store, pwin, exog);
    for (int n = 0; n < 6; ++n) {
      CHECK((f.data.row(n) - pf.data.row(perm[n])).cwiseAbs().maxCoeff() < 1e-6);
    }
  }

  // with embeddings: equivariance holds when table rows are permuted too
  ModelConfig cfg = toy_config(Family::TTS, MpKind::iso, true);
  ParamStore<float> store(26);
  auto table = init_table<float>(EmbMode::plain, 6, 3, 1, 1.0, store, 27);
  MatD win = random_mat<double>(cfg.window, 6, 62);
  MatD exog(cfg.window, 0);
  Forecast f = forward(cfg, g, &table, store, win, exog);

  MatF v = store.at("emb/V").value;
  MatF pv(6, 3);
  for (int n = 0; n < 6; ++n) pv.row(perm[n]) = v.row(n);
  store.at("emb/V").value = pv;
  MatD pwin(cfg.window, 6);
  for (int n = 0; n < 6; ++n) pwin.col(perm[n]) = win.col(n);
  Forecast pf = forward(cfg, pg, &table, store, pwin, exog);
  for (int n = 0; n < 6; ++n) {
    CHECK((f.data.row(n) - pf.data.row(perm[n])).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("bounded inputs produce finite outputs across random draws") {
  Graph g = normalize_adjacency(testing::random_graph(4, 0.6, 28), NormMode::symmetric);
  ModelConfig cfg = toy_config(Family::TTS, MpKind::aniso, false);
  cfg.window = 2;
  MatD exog(cfg.window, 0);
  for (int draw = 0; draw < 1000; ++draw) {
    ParamStore<float> store(derive_seed(29, std::to_string(draw)));
    MatD win = random_mat<double>(cfg.window, 4, 1000 + draw, 10.0);  // |x| <= 10
    Forecast f = forward(cfg, g, nullptr, store, win, exog);
    f.check_finite();
  }
}

TEST_CASE("embedding table row-count mismatch is rejected") {
  Graph g = testing::random_graph(4, 0.5, 30);
  ModelConfig cfg = toy_config(Family::TTS, MpKind::iso, true);
  ParamStore<float> store(31);
  auto table = init_table<float>(EmbMode::plain, 6, 3, 1, 1.0, store, 32);  // 6 != 4
  MatD win = random_mat<double>(cfg.window, 4, 63);
  MatD exog(cfg.window, 0);
  CHECK_THROWS(forward(cfg, g, &table, store, win, exog));
}
