#pragma once

#include "stgl/common.hpp"
#include "stgl/graph.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace stgl {

enum class InitKind { zeros, fan_in_uniform };

enum class Act { identity, elu, relu, tanh_act };

Act act_from_string(const std::string& s);
std::string to_string(Act a);

template <typename S>
struct ParamEntry {
  Mat<S> value;
  Mat<S> grad;
  bool trainable = true;
};

/// Named, shaped parameter arrays with gradient slots. Parameters are
/// created lazily on first use; a later request with a different shape is an
/// error. The store owns the initializer RNG so that parameter creation
/// order (fixed by the forward pass) fully determines the initial values.
template <typename S>
class ParamStore {
 public:
  explicit ParamStore(uint64_t init_seed = 0) : init_rng_(init_seed) {}

  ParamEntry<S>& get_or_create(const std::string& name, Eigen::Index rows,
                               Eigen::Index cols, InitKind kind) {
    auto it = entries_.find(name);
    if (it != entries_.end()) {
      ParamEntry<S>& e = it->second;
      if (e.value.rows() != rows || e.value.cols() != cols) {
        throw std::invalid_argument("param '" + name + "' shape mismatch: have " +
                                    shape_str(e.value) + ", requested (" +
                                    std::to_string(rows) + "," + std::to_string(cols) + ")");
      }
      return e;
    }
    ParamEntry<S> e;
    e.value.resize(rows, cols);
    switch (kind) {
      case InitKind::zeros:
        e.value.setZero();
        break;
      case InitKind::fan_in_uniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
        std::uniform_real_distribution<double> unif(-bound, bound);
        for (Eigen::Index i = 0; i < rows; ++i)
          for (Eigen::Index j = 0; j < cols; ++j)
            e.value(i, j) = static_cast<S>(unif(init_rng_));
        break;
      }
    }
    e.grad = Mat<S>::Zero(rows, cols);
    return entries_.emplace(name, std::move(e)).first->second;
  }

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  ParamEntry<S>& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("unknown param '" + name + "'");
    return it->second;
  }
  const ParamEntry<S>& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("unknown param '" + name + "'");
    return it->second;
  }

  void zero_grads() {
    for (auto& [name, e] : entries_) e.grad.setZero();
  }

  std::size_t total_params(bool trainable_only = false) const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) {
      if (!trainable_only || e.trainable) n += static_cast<std::size_t>(e.value.size());
    }
    return n;
  }

  std::map<std::string, Mat<S>> snapshot_values() const {
    std::map<std::string, Mat<S>> snap;
    for (const auto& [name, e] : entries_) snap.emplace(name, e.value);
    return snap;
  }

  void restore_values(const std::map<std::string, Mat<S>>& snap) {
    for (const auto& [name, v] : snap) at(name).value = v;
  }

  // entries in deterministic (lexicographic) order
  std::map<std::string, ParamEntry<S>>& entries() { return entries_; }
  const std::map<std::string, ParamEntry<S>>& entries() const { return entries_; }

  std::mt19937_64& init_rng() { return init_rng_; }

 private:
  static std::string shape_str(const Mat<S>& m) {
    return "(" + std::to_string(m.rows()) + "," + std::to_string(m.cols()) + ")";
  }

  std::map<std::string, ParamEntry<S>> entries_;
  std::mt19937_64 init_rng_;
};

/// Reverse-mode tape. Forward values are computed eagerly; each recorded
/// node carries a closure that accumulates into its inputs' gradients.
/// backward() traverses the records in exact reverse order, then clears the
/// tape. Gradients of parameters land in the ParamStore.
template <typename S>
class Tape {
 public:
  using NodeId = int;

  explicit Tape(ParamStore<S>* store) : store_(store) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Mat<S>& val(NodeId id) const { return nodes_[check(id)].value; }
  const Mat<S>& grad_of(NodeId id) const { return nodes_[check(id)].grad; }
  std::size_t size() const { return nodes_.size(); }
  ParamStore<S>& store() { return *store_; }

  void clear() { nodes_.clear(); }

  NodeId input(Mat<S> v) {
    return push(std::move(v), false, {});
  }

  NodeId param(const std::string& name, Eigen::Index rows, Eigen::Index cols,
               InitKind kind = InitKind::fan_in_uniform) {
    ParamEntry<S>& e = store_->get_or_create(name, rows, cols, kind);
    ParamEntry<S>* ep = &e;
    NodeId id = push(e.value, e.trainable, [ep](Tape& t, NodeId self) {
      ep->grad += t.nodes_[self].grad;
    });
    return id;
  }

  NodeId matmul(NodeId a, NodeId b) {
    const Mat<S>& A = val(a);
    const Mat<S>& B = val(b);
    if (A.cols() != B.rows()) throw std::invalid_argument("matmul: inner dims differ");
    Mat<S> y = A * B;
    return push(std::move(y), needs(a) || needs(b), [a, b](Tape& t, NodeId self) {
      const Mat<S>& g = t.nodes_[self].grad;
      if (t.needs(a)) t.grad_ref(a).noalias() += g * t.val(b).transpose();
      if (t.needs(b)) t.grad_ref(b).noalias() += t.val(a).transpose() * g;
    });
  }

  NodeId add(NodeId a, NodeId b) {
    same_shape(a, b, "add");
    Mat<S> y = val(a) + val(b);
    return push(std::move(y), needs(a) || needs(b), [a, b](Tape& t, NodeId self) {
      const Mat<S>& g = t.nodes_[self].grad;
      if (t.needs(a)) t.grad_ref(a) += g;
      if (t.needs(b)) t.grad_ref(b) += g;
    });
  }

  NodeId sub(NodeId a, NodeId b) {
    same_shape(a, b, "sub");
    Mat<S> y = val(a) - val(b);
    return push(std::move(y), needs(a) || needs(b), [a, b](Tape& t, NodeId self) {
      const Mat<S>& g = t.nodes_[self].grad;
      if (t.needs(a)) t.grad_ref(a) += g;
      if (t.needs(b)) t.grad_ref(b) -= g;
    });
  }

  NodeId mul(NodeId a, NodeId b) {
    same_shape(a, b, "mul");
    Mat<S> y = val(a).cwiseProduct(val(b));
    return push(std::move(y), needs(a) || needs(b), [a, b](Tape& t, NodeId self) {
      const Mat<S>& g = t.nodes_[self].grad;
      if (t.needs(a)) t.grad_ref(a).array() += g.array() * t.val(b).array();
      if (t.needs(b)) t.grad_ref(b).array() += g.array() * t.val(a).array();
    });
  }

  // y = alpha * a + beta
  NodeId affine(NodeId a, S alpha, S beta = S(0)) {
    Mat<S> y = (val(a).array() * alpha + beta).matrix();
    return push(std::move(y), needs(a), [a, alpha](Tape& t, NodeId self) {
      if (t.needs(a)) t.grad_ref(a) += alpha * t.nodes_[self].grad;
    });
  }

  // broadcast a 1 x d row (bias) over all rows of a
  NodeId add_rowvec(NodeId a, NodeId row) {
    if (val(row).rows() != 1 || val(row).cols() != val(a).cols()) {
      throw std::invalid_argument("add_rowvec: bias shape mismatch");
    }
    Mat<S> y = val(a).rowwise() + val(row).row(0);
    return push(std::move(y), needs(a) || needs(row), [a, row](Tape& t, NodeId self) {
      const Mat<S>& g = t.nodes_[self].grad;
      if (t.needs(a)) t.grad_ref(a) += g;
      if (t.needs(row)) t.grad_ref(row).row(0) += g.colwise().sum();
    });
  }

  // y_ij = a_ij * c_i with c an (n x 1) column node
  NodeId mul_colvec(NodeId a, NodeId c) {
    if (val(c).cols() != 1 || val(c).rows() != val(a).rows()) {
      throw std::invalid_argument("mul_colvec: column shape mismatch");
    }
    Mat<S> y = val(a).array().colwise() * val(c).col(0).array();
    return push(std::move(y), needs(a) || needs(c), [a, c](Tape& t, NodeId self) {
      const Mat<S>& g = t.nodes_[self].grad;
      if (t.needs(a)) t.grad_ref(a).array() += g.array().colwise() * t.val(c).col(0).array();
      if (t.needs(c))
        t.grad_ref(c).col(0) += (g.array() * t.val(a).array()).rowwise().sum().matrix();
    });
  }

  NodeId sigmoid(NodeId a) {
    Mat<S> y = (S(1) / (S(1) + (-val(a).array()).exp())).matrix();
    return push(std::move(y), needs(a), [a](Tape& t, NodeId self) {
      if (!t.needs(a)) return;
      const auto& y = t.nodes_[self].value.array();
      t.grad_ref(a).array() += t.nodes_[self].grad.array() * y * (S(1) - y);
    });
  }

  NodeId tanh_(NodeId a) {
    Mat<S> y = val(a).array().tanh().matrix();
    return push(std::move(y), needs(a), [a](Tape& t, NodeId self) {
      if (!t.needs(a)) return;
      const auto& y = t.nodes_[self].value.array();
      t.grad_ref(a).array() += t.nodes_[self].grad.array() * (S(1) - y * y);
    });
  }

  NodeId exp_(NodeId a) {
    Mat<S> y = val(a).array().exp().matrix();
    return push(std::move(y), needs(a), [a](Tape& t, NodeId self) {
      if (!t.needs(a)) return;
      t.grad_ref(a).array() += t.nodes_[self].grad.array() * t.nodes_[self].value.array();
    });
  }

  NodeId square(NodeId a) {
    Mat<S> y = val(a).array().square().matrix();
    return push(std::move(y), needs(a), [a](Tape& t, NodeId self) {
      if (!t.needs(a)) return;
      t.grad_ref(a).array() += t.nodes_[self].grad.array() * S(2) * t.val(a).array();
    });
  }

  NodeId abs_(NodeId a) {
    Mat<S> y = val(a).array().abs().matrix();
    return push(std::move(y), needs(a), [a](Tape& t, NodeId self) {
      if (!t.needs(a)) return;
      t.grad_ref(a).array() +=
          t.nodes_[self].grad.array() * t.val(a).array().sign();
    });
  }

  NodeId activation(NodeId a, Act act) {
    switch (act) {
      case Act::identity: return a;
      case Act::tanh_act: return tanh_(a);
      case Act::relu: {
        Mat<S> y = val(a).array().max(S(0)).matrix();
        return push(std::move(y), needs(a), [a](Tape& t, NodeId self) {
          if (!t.needs(a)) return;
          t.grad_ref(a).array() += t.nodes_[self].grad.array() *
                                   (t.val(a).array() > S(0)).template cast<S>();
        });
      }
      case Act::elu: {
        Mat<S> y = (val(a).array() > S(0))
                       .select(val(a).array(), val(a).array().exp() - S(1))
                       .matrix();
        return push(std::move(y), needs(a), [a](Tape& t, NodeId self) {
          if (!t.needs(a)) return;
          const auto& x = t.val(a).array();
          const auto& y = t.nodes_[self].value.array();
          // d elu = 1 for x > 0, exp(x) = y + 1 otherwise
          t.grad_ref(a).array() += t.nodes_[self].grad.array() *
                                   (x > S(0)).select(Mat<S>::Ones(x.rows(), x.cols()).array(),
                                                     y + S(1));
        });
      }
    }
    throw std::logic_error("unreachable activation");
  }

  NodeId concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    Eigen::Index rows = val(parts[0]).rows(), cols = 0;
    bool any = false;
    for (NodeId p : parts) {
      if (val(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
      cols += val(p).cols();
      any = any || needs(p);
    }
    Mat<S> y(rows, cols);
    Eigen::Index off = 0;
    for (NodeId p : parts) {
      y.middleCols(off, val(p).cols()) = val(p);
      off += val(p).cols();
    }
    std::vector<NodeId> ps = parts;
    return push(std::move(y), any, [ps](Tape& t, NodeId self) {
      const Mat<S>& g = t.nodes_[self].grad;
      Eigen::Index off = 0;
      for (NodeId p : ps) {
        Eigen::Index w = t.val(p).cols();
        if (t.needs(p)) t.grad_ref(p) += g.middleCols(off, w);
        off += w;
      }
    });
  }

  NodeId slice_cols(NodeId a, Eigen::Index start, Eigen::Index n) {
    if (start < 0 || start + n > val(a).cols()) {
      throw std::invalid_argument("slice_cols: out of range");
    }
    Mat<S> y = val(a).middleCols(start, n);
    return push(std::move(y), needs(a), [a, start, n](Tape& t, NodeId self) {
      if (t.needs(a)) t.grad_ref(a).middleCols(start, n) += t.nodes_[self].grad;
    });
  }

  NodeId gather_rows(NodeId a, std::vector<int> idx) {
    const Mat<S>& A = val(a);
    Mat<S> y(static_cast<Eigen::Index>(idx.size()), A.cols());
    for (size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0 || idx[r] >= A.rows()) {
        throw std::out_of_range("gather_rows: index out of range");
      }
      y.row(static_cast<Eigen::Index>(r)) = A.row(idx[r]);
    }
    auto ip = std::make_shared<std::vector<int>>(std::move(idx));
    return push(std::move(y), needs(a), [a, ip](Tape& t, NodeId self) {
      if (!t.needs(a)) return;
      const Mat<S>& g = t.nodes_[self].grad;
      Mat<S>& ga = t.grad_ref(a);
      for (size_t r = 0; r < ip->size(); ++r) {
        ga.row((*ip)[r]) += g.row(static_cast<Eigen::Index>(r));
      }
    });
  }

  // out has n_rows rows, out.row(idx[r]) = a.row(r); unlisted rows are zero.
  // Target indices must be distinct.
  NodeId scatter_rows(NodeId a, std::vector<int> idx, Eigen::Index n_rows) {
    const Mat<S>& A = val(a);
    if (static_cast<Eigen::Index>(idx.size()) != A.rows()) {
      throw std::invalid_argument("scatter_rows: index count != rows");
    }
    Mat<S> y = Mat<S>::Zero(n_rows, A.cols());
    for (size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0 || idx[r] >= n_rows) throw std::out_of_range("scatter_rows: bad index");
      y.row(idx[r]) = A.row(static_cast<Eigen::Index>(r));
    }
    auto ip = std::make_shared<std::vector<int>>(std::move(idx));
    return push(std::move(y), needs(a), [a, ip](Tape& t, NodeId self) {
      if (!t.needs(a)) return;
      const Mat<S>& g = t.nodes_[self].grad;
      Mat<S>& ga = t.grad_ref(a);
      for (size_t r = 0; r < ip->size(); ++r) {
        ga.row(static_cast<Eigen::Index>(r)) += g.row((*ip)[r]);
      }
    });
  }

  NodeId softmax_rows(NodeId a) {
    Mat<S> y = val(a);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      Eigen::Array<S, Eigen::Dynamic, 1> row = y.row(i).transpose().array();
      row -= row.maxCoeff();
      row = row.exp();
      y.row(i) = (row / row.sum()).matrix().transpose();
    }
    return push(std::move(y), needs(a), [a](Tape& t, NodeId self) {
      if (!t.needs(a)) return;
      const Mat<S>& y = t.nodes_[self].value;
      const Mat<S>& g = t.nodes_[self].grad;
      Mat<S>& ga = t.grad_ref(a);
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        S dot = y.row(i).dot(g.row(i));
        ga.row(i).array() += y.row(i).array() * (g.row(i).array() - dot);
      }
    });
  }

  // Forward takes `hard`; gradient is passed through to `soft` unchanged.
  NodeId straight_through(NodeId soft, Mat<S> hard) {
    same_shape_mat(val(soft), hard, "straight_through");
    return push(std::move(hard), needs(soft), [soft](Tape& t, NodeId self) {
      if (t.needs(soft)) t.grad_ref(soft) += t.nodes_[self].grad;
    });
  }

  NodeId sum_all(NodeId a) {
    // 64-bit accumulation regardless of S
    double acc = val(a).template cast<double>().sum();
    Mat<S> y(1, 1);
    y(0, 0) = static_cast<S>(acc);
    return push(std::move(y), needs(a), [a](Tape& t, NodeId self) {
      if (t.needs(a)) t.grad_ref(a).array() += t.nodes_[self].grad(0, 0);
    });
  }

  NodeId mean_all(NodeId a) {
    return affine(sum_all(a), S(1.0 / static_cast<double>(val(a).size())));
  }

  NodeId frob_norm(NodeId a) {
    double acc = val(a).template cast<double>().array().square().sum();
    Mat<S> y(1, 1);
    y(0, 0) = static_cast<S>(std::sqrt(acc));
    return push(std::move(y), needs(a), [a](Tape& t, NodeId self) {
      if (!t.needs(a)) return;
      S norm = t.nodes_[self].value(0, 0);
      if (norm <= S(0)) return;  // subgradient 0 at the origin
      t.grad_ref(a) += (t.nodes_[self].grad(0, 0) / norm) * t.val(a);
    });
  }

  // Blockwise neighbor-mean aggregation. x has n_blocks stacked blocks of
  // g.n_nodes rows; within each block
  //   out_i = (1/|N(i)|) sum_{j in N(i)} x_j          (unweighted)
  //   out_i = (1/sum_j w_ji) sum_{j} w_ji x_j          (weighted)
  // Empty neighborhoods produce the zero row.
  NodeId graph_mean(NodeId x, const Graph* g, int n_blocks, bool weighted) {
    const Mat<S>& X = val(x);
    const Eigen::Index n = g->n_nodes;
    if (X.rows() != n * n_blocks) throw std::invalid_argument("graph_mean: row mismatch");
    Mat<S> y = Mat<S>::Zero(X.rows(), X.cols());
    auto coeffs = std::make_shared<std::vector<std::pair<int, S>>>();
    auto offsets = std::make_shared<std::vector<int>>(n + 1, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& nbrs = g->neighbor_in[i];
      double denom = 0.0;
      if (weighted) {
        for (const auto& [j, w] : nbrs) denom += w;
      } else {
        denom = static_cast<double>(nbrs.size());
      }
      if (denom != 0.0) {
        for (const auto& [j, w] : nbrs) {
          coeffs->emplace_back(j, static_cast<S>((weighted ? w : 1.0) / denom));
        }
      }
      (*offsets)[i + 1] = static_cast<int>(coeffs->size());
    }
    for (int b = 0; b < n_blocks; ++b) {
      const Eigen::Index base = static_cast<Eigen::Index>(b) * n;
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int k = (*offsets)[i]; k < (*offsets)[i + 1]; ++k) {
          y.row(base + i) += (*coeffs)[k].second * X.row(base + (*coeffs)[k].first);
        }
      }
    }
    return push(std::move(y), needs(x),
                [x, n, n_blocks, coeffs, offsets](Tape& t, NodeId self) {
      if (!t.needs(x)) return;
      const Mat<S>& gy = t.nodes_[self].grad;
      Mat<S>& gx = t.grad_ref(x);
      for (int b = 0; b < n_blocks; ++b) {
        const Eigen::Index base = static_cast<Eigen::Index>(b) * n;
        for (Eigen::Index i = 0; i < n; ++i) {
          for (int k = (*offsets)[i]; k < (*offsets)[i + 1]; ++k) {
            gx.row(base + (*coeffs)[k].first) += (*coeffs)[k].second * gy.row(base + i);
          }
        }
      }
    });
  }

  // Per-edge feature rows [h_i || h_j || a_ji] for every stored edge j -> i,
  // enumerated destination-major, repeated per block.
  NodeId edge_concat(NodeId h, const Graph* g, int n_blocks) {
    const Mat<S>& H = val(h);
    const Eigen::Index n = g->n_nodes;
    if (H.rows() != n * n_blocks) throw std::invalid_argument("edge_concat: row mismatch");
    const Eigen::Index d = H.cols();
    Eigen::Index n_edges = 0;
    for (const auto& nbrs : g->neighbor_in) n_edges += static_cast<Eigen::Index>(nbrs.size());
    Mat<S> y(n_edges * n_blocks, 2 * d + 1);
    for (int b = 0; b < n_blocks; ++b) {
      const Eigen::Index nbase = static_cast<Eigen::Index>(b) * n;
      Eigen::Index e = static_cast<Eigen::Index>(b) * n_edges;
      for (Eigen::Index i = 0; i < n; ++i) {
        for (const auto& [j, w] : g->neighbor_in[i]) {
          y.row(e).segment(0, d) = H.row(nbase + i);
          y.row(e).segment(d, d) = H.row(nbase + j);
          y(e, 2 * d) = static_cast<S>(w);
          ++e;
        }
      }
    }
    return push(std::move(y), needs(h), [h, g, n, n_blocks, d, n_edges](Tape& t, NodeId self) {
      if (!t.needs(h)) return;
      const Mat<S>& gy = t.nodes_[self].grad;
      Mat<S>& gh = t.grad_ref(h);
      for (int b = 0; b < n_blocks; ++b) {
        const Eigen::Index nbase = static_cast<Eigen::Index>(b) * n;
        Eigen::Index e = static_cast<Eigen::Index>(b) * n_edges;
        for (Eigen::Index i = 0; i < n; ++i) {
          for (const auto& [j, w] : g->neighbor_in[i]) {
            (void)w;
            gh.row(nbase + i) += gy.row(e).segment(0, d);
            gh.row(nbase + j) += gy.row(e).segment(d, d);
            ++e;
          }
        }
      }
    });
  }

  // Sums per-edge rows into their destination nodes (reverse of edge_concat
  // enumeration). msg has n_blocks stacked blocks of E rows.
  NodeId edge_scatter(NodeId msg, const Graph* g, int n_blocks) {
    const Mat<S>& M = val(msg);
    const Eigen::Index n = g->n_nodes;
    Eigen::Index n_edges = 0;
    for (const auto& nbrs : g->neighbor_in) n_edges += static_cast<Eigen::Index>(nbrs.size());
    if (M.rows() != n_edges * n_blocks) throw std::invalid_argument("edge_scatter: row mismatch");
    Mat<S> y = Mat<S>::Zero(n * n_blocks, M.cols());
    for (int b = 0; b < n_blocks; ++b) {
      const Eigen::Index nbase = static_cast<Eigen::Index>(b) * n;
      Eigen::Index e = static_cast<Eigen::Index>(b) * n_edges;
      for (Eigen::Index i = 0; i < n; ++i) {
        for (size_t k = 0; k < g->neighbor_in[i].size(); ++k) {
          y.row(nbase + i) += M.row(e++);
        }
      }
    }
    return push(std::move(y), needs(msg), [msg, g, n, n_blocks, n_edges](Tape& t, NodeId self) {
      if (!t.needs(msg)) return;
      const Mat<S>& gy = t.nodes_[self].grad;
      Mat<S>& gm = t.grad_ref(msg);
      for (int b = 0; b < n_blocks; ++b) {
        const Eigen::Index nbase = static_cast<Eigen::Index>(b) * n;
        Eigen::Index e = static_cast<Eigen::Index>(b) * n_edges;
        for (Eigen::Index i = 0; i < n; ++i) {
          for (size_t k = 0; k < g->neighbor_in[i].size(); ++k) {
            gm.row(e++) += gy.row(nbase + i);
          }
        }
      }
    });
  }

  /// Reverse sweep from a scalar loss node; accumulates parameter gradients
  /// into the store and clears the tape.
  void backward(NodeId loss) {
    if (val(loss).rows() != 1 || val(loss).cols() != 1) {
      throw std::invalid_argument("backward: loss node is not a scalar");
    }
    grad_ref(loss)(0, 0) = S(1);
    for (NodeId id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.grad.size() == 0 || !n.back) continue;
      n.back(*this, id);
    }
    clear();
  }

  bool needs(NodeId id) const { return nodes_[check(id)].needs_grad; }

  Mat<S>& grad_ref(NodeId id) {
    Node& n = nodes_[check(id)];
    if (n.grad.size() == 0) n.grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

 private:
  struct Node {
    Mat<S> value;
    Mat<S> grad;
    std::function<void(Tape&, NodeId)> back;
    bool needs_grad = false;
  };

  NodeId check(NodeId id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
      throw std::out_of_range("tape: bad node id");
    }
    return id;
  }

  static void same_shape_mat(const Mat<S>& a, const Mat<S>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
  }

  void same_shape(NodeId a, NodeId b, const char* op) {
    same_shape_mat(val(a), val(b), op);
  }

  NodeId push(Mat<S> value, bool needs_grad, std::function<void(Tape&, NodeId)> back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  ParamStore<S>* store_;
};

}  // namespace stgl
