#include "stgl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace stgl {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'G', 'C'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore<float>& store) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(kMagic, 4);
  put<uint32_t>(f, kVersion);
  put<uint64_t>(f, store.entries().size());
  for (const auto& [name, e] : store.entries()) {
    put<uint32_t>(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<uint32_t>(f, 2);
    put<uint64_t>(f, static_cast<uint64_t>(e.value.rows()));
    put<uint64_t>(f, static_cast<uint64_t>(e.value.cols()));
    f.write(reinterpret_cast<const char*>(e.value.data()),
            static_cast<std::streamsize>(sizeof(float) * e.value.size()));
  }
}

std::map<std::string, MatF> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error(path + ": not a checkpoint file");
  }
  const uint32_t version = get<uint32_t>(f);
  if (version != kVersion) {
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version));
  }
  const uint64_t count = get<uint64_t>(f);
  std::map<std::string, MatF> params;
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t len = get<uint32_t>(f);
    std::string name(len, '\0');
    f.read(name.data(), len);
    const uint32_t rank = get<uint32_t>(f);
    if (rank != 2) throw std::runtime_error(path + ": unexpected rank " + std::to_string(rank));
    const auto rows = static_cast<Eigen::Index>(get<uint64_t>(f));
    const auto cols = static_cast<Eigen::Index>(get<uint64_t>(f));
    MatF m(rows, cols);
    f.read(reinterpret_cast<char*>(m.data()),
           static_cast<std::streamsize>(sizeof(float) * m.size()));
    if (!f) throw std::runtime_error(path + ": truncated payload for " + name);
    params.emplace(std::move(name), std::move(m));
  }
  return params;
}

void apply_checkpoint(ParamStore<float>& store, const std::map<std::string, MatF>& params,
                      const std::map<std::string, std::pair<Eigen::Index, Eigen::Index>>&
                          expect) {
  for (const auto& [name, shape] : expect) {
    auto it = params.find(name);
    if (it == params.end()) {
      throw std::runtime_error("checkpoint: missing parameter " + name);
    }
    if (it->second.rows() != shape.first || it->second.cols() != shape.second) {
      throw std::runtime_error("checkpoint: parameter " + name + " has shape (" +
                               std::to_string(it->second.rows()) + "," +
                               std::to_string(it->second.cols()) + "), expected (" +
                               std::to_string(shape.first) + "," +
                               std::to_string(shape.second) + ")");
    }
  }
  for (const auto& [name, value] : params) {
    auto& e = store.get_or_create(name, value.rows(), value.cols(), InitKind::zeros);
    e.value = value;
    e.grad = MatF::Zero(value.rows(), value.cols());
  }
}

}  // namespace stgl
