#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace stgl {

// Row-major throughout: batches are stacked along rows and the graph ops
// gather/scatter whole rows, which keeps those accesses contiguous.
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using VecD = Eigen::VectorXd;

// All randomness in a run flows from one root seed, split per subsystem so
// that e.g. changing the batching stream does not disturb the process draw.
uint64_t derive_seed(uint64_t root, const std::string& domain);

inline std::mt19937_64 make_rng(uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace stgl
