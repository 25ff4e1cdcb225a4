#pragma once

#include "stgl/common.hpp"

#include <optional>
#include <string>

namespace stgl {

/// Node-time array of observations plus optional exogenous channels.
/// Frames are rows: values(t, n*d_x + c). Kept in double in memory; the
/// on-disk format is 32-bit float.
struct SeriesDataset {
  MatD values;     // T x (N * d_x)
  MatD exogenous;  // T x (N * d_u), 0 columns when absent
  int n_nodes = 0;
  int d_x = 1;
  int d_u = 0;

  int T() const { return static_cast<int>(values.rows()); }
  double value(int t, int node, int c = 0) const { return values(t, node * d_x + c); }
  void check_finite() const;
};

// Directory layout: `values` (flat little-endian f32, time-major T*N*d_x),
// `metadata.json`, optional `exogenous` (f32, T*N*d_u), optional `edges.csv`.
void save_dataset(const std::string& dir, const SeriesDataset& ds,
                  const std::string& extra_metadata_json = "{}");
SeriesDataset load_dataset(const std::string& dir);
std::string load_dataset_metadata(const std::string& dir);

// One row per time step, columns node_0..node_{N-1} (first channel only).
void export_values_csv(const SeriesDataset& ds, const std::string& path);

// Generic loader for user-supplied data. NaN cells require the mask flag;
// masked NaNs are zero-filled and the binary mask is appended as an
// exogenous channel.
SeriesDataset load_values_csv(const std::string& path, bool has_header,
                              bool nan_mask_channel);

}  // namespace stgl
