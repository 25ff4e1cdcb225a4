#include "stgl/dataset.hpp"

#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

namespace stgl {

namespace fs = std::filesystem;
using nlohmann::json;

void SeriesDataset::check_finite() const {
  if (!values.allFinite() || (exogenous.size() > 0 && !exogenous.allFinite())) {
    throw std::runtime_error("dataset contains non-finite entries");
  }
}

namespace {

void write_f32(const std::string& path, const MatD& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  std::vector<float> buf(m.cols());
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) buf[c] = static_cast<float>(m(t, c));
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
}

MatD read_f32(const std::string& path, Eigen::Index rows, Eigen::Index cols) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  MatD m(rows, cols);
  std::vector<float> buf(cols);
  for (Eigen::Index t = 0; t < rows; ++t) {
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw std::runtime_error(path + ": truncated payload");
    for (Eigen::Index c = 0; c < cols; ++c) m(t, c) = buf[c];
  }
  return m;
}

}  // namespace

void save_dataset(const std::string& dir, const SeriesDataset& ds,
                  const std::string& extra_metadata_json) {
  fs::create_directories(dir);
  write_f32(dir + "/values", ds.values);
  if (ds.d_u > 0) write_f32(dir + "/exogenous", ds.exogenous);

  json meta = json::parse(extra_metadata_json);
  meta["T"] = ds.T();
  meta["n_nodes"] = ds.n_nodes;
  meta["d_x"] = ds.d_x;
  meta["d_u"] = ds.d_u;
  std::ofstream f(dir + "/metadata.json");
  f << meta.dump(2) << "\n";
}

std::string load_dataset_metadata(const std::string& dir) {
  std::ifstream f(dir + "/metadata.json");
  if (!f) throw std::runtime_error("cannot read " + dir + "/metadata.json");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

SeriesDataset load_dataset(const std::string& dir) {
  json meta = json::parse(load_dataset_metadata(dir));
  SeriesDataset ds;
  ds.n_nodes = meta.at("n_nodes").get<int>();
  ds.d_x = meta.at("d_x").get<int>();
  ds.d_u = meta.at("d_u").get<int>();
  const int T = meta.at("T").get<int>();
  ds.values = read_f32(dir + "/values", T, static_cast<Eigen::Index>(ds.n_nodes) * ds.d_x);
  if (ds.d_u > 0) {
    ds.exogenous = read_f32(dir + "/exogenous", T, static_cast<Eigen::Index>(ds.n_nodes) * ds.d_u);
  } else {
    ds.exogenous.resize(T, 0);
  }
  ds.check_finite();
  return ds;
}

void export_values_csv(const SeriesDataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (int n = 0; n < ds.n_nodes; ++n) f << (n ? "," : "") << "node_" << n;
  f << "\n";
  f.precision(9);
  for (int t = 0; t < ds.T(); ++t) {
    for (int n = 0; n < ds.n_nodes; ++n) {
      f << (n ? "," : "") << ds.value(t, n);
    }
    f << "\n";
  }
}

SeriesDataset load_values_csv(const std::string& path, bool has_header,
                              bool nan_mask_channel) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::string line;
  std::vector<std::vector<double>> rows;
  int lineno = 0;
  if (has_header && std::getline(f, line)) ++lineno;
  size_t width = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell == "nan" || cell == "NaN" || cell.empty()) {
        row.push_back(std::nan(""));
      } else {
        row.push_back(std::stod(cell));
      }
    }
    if (width == 0) width = row.size();
    if (row.size() != width) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": ragged row (" +
                               std::to_string(row.size()) + " cells, expected " +
                               std::to_string(width) + ")");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty() || width == 0) throw std::runtime_error(path + ": no data rows");

  SeriesDataset ds;
  ds.n_nodes = static_cast<int>(width);
  ds.d_x = 1;
  ds.values.resize(static_cast<Eigen::Index>(rows.size()), width);
  MatD mask = MatD::Zero(static_cast<Eigen::Index>(rows.size()), width);
  bool any_nan = false;
  for (size_t t = 0; t < rows.size(); ++t) {
    for (size_t n = 0; n < width; ++n) {
      double v = rows[t][n];
      if (std::isnan(v)) {
        any_nan = true;
        if (!nan_mask_channel) {
          throw std::runtime_error(path + ": NaN cell at row " + std::to_string(t) +
                                   " without an imputation-mask channel enabled");
        }
        ds.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n)) = 0.0;
        mask(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n)) = 1.0;
      } else {
        ds.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n)) = v;
      }
    }
  }
  if (nan_mask_channel && any_nan) {
    ds.d_u = 1;
    ds.exogenous = mask;
  } else {
    ds.exogenous.resize(ds.values.rows(), 0);
  }
  return ds;
}

}  // namespace stgl
