#pragma once

#include "stgl/tape.hpp"

namespace stgl {

enum class EmbMode { plain, variational, clustered };
enum class Phase { train, eval };

EmbMode emb_mode_from_string(const std::string& s);
std::string to_string(EmbMode m);

/// Per-node learned vectors. Plain tables expose V directly; variational
/// tables hold (mu, log_sigma) of a diagonal-Gaussian posterior and expose a
/// reparameterized sample during training; clustered tables add centroids C
/// and assignment scores S.
///
/// Parameters live in the ParamStore under `prefix` so that a table travels
/// with checkpoints and can be frozen or swapped independently of the
/// backbone.
template <typename S>
class EmbeddingTable {
 public:
  EmbMode mode = EmbMode::plain;
  int n_nodes = 0;
  int dim = 0;
  int n_clusters = 1;
  double tau = 1.0;
  std::string prefix = "emb";
  // Clustered tables may share one centroid matrix (multi-source training,
  // frozen centroids at fine-tuning). Empty means prefix + "/C".
  std::string centroid_name;

  std::string centroids() const {
    return centroid_name.empty() ? prefix + "/C" : centroid_name;
  }

  void create_params(ParamStore<S>& store, uint64_t seed) const {
    if (dim <= 0) throw std::invalid_argument("embedding: d_v must be positive");
    std::mt19937_64 rng(seed);
    const double delta = 1.0 / std::sqrt(static_cast<double>(dim));
    // Existing entries (shared centroids, checkpointed tables) are kept.
    auto fill = [&rng, &store](const std::string& name, Eigen::Index r, Eigen::Index c,
                               double lo, double hi) {
      const bool fresh = !store.contains(name);
      auto& e = store.get_or_create(name, r, c, InitKind::zeros);
      if (!fresh) return;
      std::uniform_real_distribution<double> u(lo, hi);
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) e.value(i, j) = static_cast<S>(u(rng));
    };
    if (mode == EmbMode::variational) {
      fill(prefix + "/mu", n_nodes, dim, -0.01, 0.01);
      const bool fresh = !store.contains(prefix + "/log_sigma");
      auto& ls = store.get_or_create(prefix + "/log_sigma", n_nodes, dim, InitKind::zeros);
      if (fresh) ls.value.setConstant(static_cast<S>(std::log(0.2)));
      return;
    }
    fill(prefix + "/V", n_nodes, dim, -delta, delta);
    if (mode == EmbMode::clustered) {
      if (n_clusters < 1) throw std::invalid_argument("embedding: K must be >= 1");
      fill(centroids(), n_clusters, dim, -delta, delta);
      fill(prefix + "/S", n_nodes, n_clusters, 0.0, 1.0);
    }
  }

  std::vector<std::string> param_names() const {
    if (mode == EmbMode::variational) return {prefix + "/mu", prefix + "/log_sigma"};
    if (mode == EmbMode::clustered) return {prefix + "/V", centroids(), prefix + "/S"};
    return {prefix + "/V"};
  }

  /// Taped N x d_v view of the table: V for plain/clustered, mu at eval,
  /// mu + sigma .* eps (reparameterized) during variational training.
  typename Tape<S>::NodeId rows_node(Tape<S>& t, Phase phase, std::mt19937_64* rng) const {
    const std::string lead = mode == EmbMode::variational ? prefix + "/mu" : prefix + "/V";
    if (!t.store().contains(lead)) {
      throw std::invalid_argument("embedding table '" + prefix + "' not initialized");
    }
    if (mode != EmbMode::variational) return t.param(prefix + "/V", n_nodes, dim);
    auto mu = t.param(prefix + "/mu", n_nodes, dim);
    if (phase == Phase::eval) return mu;
    if (rng == nullptr) throw std::invalid_argument("variational train phase needs an RNG");
    auto sigma = t.exp_(t.param(prefix + "/log_sigma", n_nodes, dim));
    Mat<S> eps(n_nodes, dim);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index i = 0; i < eps.rows(); ++i)
      for (Eigen::Index j = 0; j < eps.cols(); ++j) eps(i, j) = static_cast<S>(gauss(*rng));
    return t.add(mu, t.mul(sigma, t.input(std::move(eps))));
  }

  /// Non-taped single row, used for inspection and tests.
  Eigen::RowVectorXd row(const ParamStore<S>& store, int i, Phase phase,
                         std::mt19937_64* rng = nullptr) const {
    if (i < 0 || i >= n_nodes) throw std::out_of_range("embedding row index");
    if (mode != EmbMode::variational) {
      return store.at(prefix + "/V").value.row(i).template cast<double>();
    }
    Eigen::RowVectorXd mu = store.at(prefix + "/mu").value.row(i).template cast<double>();
    if (phase == Phase::eval) return mu;
    if (rng == nullptr) throw std::invalid_argument("variational train phase needs an RNG");
    Eigen::RowVectorXd sg =
        store.at(prefix + "/log_sigma").value.row(i).template cast<double>().array().exp();
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int j = 0; j < dim; ++j) mu[j] += sg[j] * gauss(*rng);
    return mu;
  }

  /// Closed-form KL(q || N(0, I)) summed over nodes and dims:
  /// 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2). Unscaled; the trainer
  /// applies beta.
  typename Tape<S>::NodeId kl_term(Tape<S>& t) const {
    if (mode != EmbMode::variational) {
      throw std::invalid_argument("kl_term: table is not variational");
    }
    auto mu = t.param(prefix + "/mu", n_nodes, dim);
    auto ls = t.param(prefix + "/log_sigma", n_nodes, dim);
    auto var = t.exp_(t.affine(ls, S(2)));                    // sigma^2
    auto inner = t.sub(t.add(t.square(mu), var), t.affine(ls, S(2), S(1)));
    return t.affine(t.sum_all(inner), S(0.5));
  }

  /// Monte-Carlo estimate of E_M || V - M C ||_F with M rows drawn by
  /// straight-through Gumbel-softmax at temperature tau from logits S.
  typename Tape<S>::NodeId clustering_loss(Tape<S>& t, int n_samples,
                                           std::mt19937_64& rng) const {
    if (mode != EmbMode::clustered) {
      throw std::invalid_argument("clustering_loss: table is not clustered");
    }
    if (n_samples < 1) throw std::invalid_argument("clustering_loss: n_samples >= 1");
    auto v = t.param(prefix + "/V", n_nodes, dim);
    auto c = t.param(centroids(), n_clusters, dim);
    auto scores = t.param(prefix + "/S", n_nodes, n_clusters);

    std::uniform_real_distribution<double> unif(1e-12, 1.0);
    typename Tape<S>::NodeId total = -1;
    for (int s = 0; s < n_samples; ++s) {
      Mat<S> gumbel(n_nodes, n_clusters);
      for (Eigen::Index i = 0; i < gumbel.rows(); ++i)
        for (Eigen::Index j = 0; j < gumbel.cols(); ++j)
          gumbel(i, j) = static_cast<S>(-std::log(-std::log(unif(rng))));
      // Gumbel-max on S/tau samples Categorical(softmax(S/tau)) exactly;
      // the softmax over the same perturbed logits is the relaxation the
      // gradient flows through.
      auto perturbed = t.add(t.affine(scores, S(1.0 / tau)), t.input(gumbel));
      auto soft = t.softmax_rows(perturbed);
      Mat<S> hard = Mat<S>::Zero(n_nodes, n_clusters);
      for (Eigen::Index i = 0; i < hard.rows(); ++i) {
        Eigen::Index k;
        t.val(soft).row(i).maxCoeff(&k);
        hard(i, k) = S(1);
      }
      auto assign = t.straight_through(soft, std::move(hard));
      auto dist = t.frob_norm(t.sub(v, t.matmul(assign, c)));
      total = (total < 0) ? dist : t.add(total, dist);
    }
    return t.affine(total, S(1.0 / n_samples));
  }

  /// Hard cluster argmax per node (clustered mode).
  std::vector<int> cluster_argmax(const ParamStore<S>& store) const {
    if (mode != EmbMode::clustered) {
      throw std::invalid_argument("cluster_argmax: table is not clustered");
    }
    const Mat<S>& sc = store.at(prefix + "/S").value;
    std::vector<int> out(n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
      Eigen::Index k;
      sc.row(i).maxCoeff(&k);
      out[i] = static_cast<int>(k);
    }
    return out;
  }
};

/// Builds a table and creates its parameters per the reference recipe:
/// V, C ~ U(-Delta, Delta) with Delta = 1/sqrt(d_v), S ~ U(0, 1);
/// variational: mu ~ U(-0.01, 0.01), sigma = 0.2.
template <typename S>
EmbeddingTable<S> init_table(EmbMode mode, int n_nodes, int dim, int n_clusters,
                             double tau, ParamStore<S>& store, uint64_t seed,
                             const std::string& prefix = "emb",
                             const std::string& centroid_name = "") {
  EmbeddingTable<S> tb;
  tb.mode = mode;
  tb.n_nodes = n_nodes;
  tb.dim = dim;
  tb.n_clusters = n_clusters;
  tb.tau = tau;
  tb.prefix = prefix;
  tb.centroid_name = centroid_name;
  tb.create_params(store, seed);
  return tb;
}

}  // namespace stgl
