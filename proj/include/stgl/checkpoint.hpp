#pragma once

#include "stgl/tape.hpp"

#include <map>
#include <string>

namespace stgl {

// Container file: magic "STGC", u32 version, u64 record count, then per
// parameter: u32 name length, name bytes, u32 rank, u64 dims, little-endian
// f32 payload.
void save_checkpoint(const std::string& path, const ParamStore<float>& store);

std::map<std::string, MatF> load_checkpoint(const std::string& path);

// Replaces store contents with the checkpoint. When `expect` is non-empty,
// every listed name must be present with the given (rows, cols) shape.
void apply_checkpoint(ParamStore<float>& store, const std::map<std::string, MatF>& params,
                      const std::map<std::string, std::pair<Eigen::Index, Eigen::Index>>&
                          expect = {});

}  // namespace stgl
