#pragma once

// Model archive: a directory holding manifest.json and one little-endian f32
// tensor file per matrix.

#include "midfeat/codebook.hpp"
#include "midfeat/embedding.hpp"
#include "midfeat/features.hpp"
#include "midfeat/wordrep.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

namespace midfeat {

inline constexpr int kArchiveVersion = 1;
inline constexpr const char* kArchiveFormat = "midfeat-archive";

/// Tensors (row-major, stored as f32) plus free-form JSON metadata.
class Archive {
 public:
  nlohmann::json meta = nlohmann::json::object();  // components, hyperparameters, flags

  void put(const std::string& name, const Matrix& m) {
    check_name(name);
    tensors_[name] = Tensor{m.rows(), m.cols(), to_row_major(m)};
  }
  void put(const std::string& name, const RowMatrix& m) {
    check_name(name);
    tensors_[name] = Tensor{m.rows(), m.cols(), std::vector<double>(m.data(), m.data() + m.size())};
  }
  void put(const std::string& name, const Vector& v) {
    check_name(name);
    tensors_[name] = Tensor{v.size(), 1, std::vector<double>(v.data(), v.data() + v.size())};
  }

  bool has(const std::string& name) const { return tensors_.count(name) > 0; }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : tensors_) out.push_back(k);
    return out;
  }

  Matrix matrix(const std::string& name) const {
    const Tensor& t = get(name);
    Matrix m(t.rows, t.cols);
    for (Eigen::Index i = 0; i < t.rows; ++i)
      for (Eigen::Index j = 0; j < t.cols; ++j) m(i, j) = t.values[static_cast<std::size_t>(i * t.cols + j)];
    return m;
  }
  RowMatrix row_matrix(const std::string& name) const {
    const Tensor& t = get(name);
    return Eigen::Map<const RowMatrix>(t.values.data(), t.rows, t.cols);
  }
  Vector vector(const std::string& name) const {
    const Tensor& t = get(name);
    if (t.cols != 1) throw FormatError("archive tensor '" + name + "' is not a vector");
    return Eigen::Map<const Vector>(t.values.data(), t.rows);
  }

  void save(const std::filesystem::path& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = kArchiveFormat;
    manifest["version"] = kArchiveVersion;
    manifest["meta"] = meta;
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& [name, t] : tensors_) {
      const std::string file = name + ".f32";
      write_tensor(dir / file, t);
      tensors[name] = {{"file", file}, {"shape", {t.rows, t.cols}}, {"dtype", "f32le"}};
    }
    manifest["tensors"] = tensors;
    std::ofstream out(dir / "manifest.json");
    if (!out) throw FormatError("cannot write archive manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
  }

  static Archive load(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw FormatError("archive manifest missing in " + dir.string());
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("archive manifest is not valid JSON: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != kArchiveFormat) throw FormatError("not a model archive: " + dir.string());
    if (!manifest.contains("version") || manifest["version"] != kArchiveVersion) {
      throw FormatError("unsupported archive version " + manifest.value("version", nlohmann::json()).dump() +
                        " (expected " + std::to_string(kArchiveVersion) + ")");
    }
    Archive a;
    a.meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& [name, info] : manifest.at("tensors").items()) {
      const auto shape = info.at("shape");
      Tensor t{shape.at(0).get<Eigen::Index>(), shape.at(1).get<Eigen::Index>(), {}};
      t.values = read_tensor(dir / info.at("file").get<std::string>(), t.rows * t.cols, name);
      a.tensors_[name] = std::move(t);
    }
    return a;
  }

  static void write_f32le(std::ostream& out, double v) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    const char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                       static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    out.write(b, 4);
  }

 private:
  struct Tensor {
    Eigen::Index rows = 0, cols = 0;
    std::vector<double> values;  // row-major
  };
  std::map<std::string, Tensor> tensors_;

  static void check_name(const std::string& name) {
    if (name.empty() || name.find_first_of("/\\") != std::string::npos) {
      throw InvalidInput("bad archive tensor name '" + name + "'");
    }
  }
  static std::vector<double> to_row_major(const Matrix& m) {
    std::vector<double> v(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
    return v;
  }
  const Tensor& get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw FormatError("archive has no tensor '" + name + "'");
    return it->second;
  }
  static void write_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    for (double v : t.values) write_f32le(out, v);
    if (!out) throw FormatError("short write to " + path.string());
  }
  static std::vector<double> read_tensor(const std::filesystem::path& path, Eigen::Index count,
                                         const std::string& name) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("archive tensor file missing for '" + name + "': " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto expected = static_cast<std::size_t>(count) * 4;
    if (bytes.size() != expected) {
      throw FormatError("archive tensor '" + name + "' has " + std::to_string(bytes.size()) + " bytes, expected " +
                        std::to_string(expected));
    }
    std::vector<double> v(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto* b = reinterpret_cast<const unsigned char*>(bytes.data() + 4 * i);
      const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
      v[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    return v;
  }
};

// ---------------------------------------------------------------------------
// Component (de)serialization under a name prefix.

inline void put_pca(Archive& a, const std::string& p, const PcaModel& m) {
  a.put(p + ".mean", m.mean);
  a.put(p + ".basis", m.basis);
  a.put(p + ".eigenvalues", m.eigenvalues);
  a.meta["components"][p] = {{"type", "pca"}, {"input_dim", m.input_dim()}, {"output_dim", m.output_dim()},
                             {"total_variance", m.total_variance}};
}

inline PcaModel get_pca(const Archive& a, const std::string& p) {
  PcaModel m;
  m.mean = a.vector(p + ".mean");
  m.basis = a.matrix(p + ".basis");
  m.eigenvalues = a.vector(p + ".eigenvalues");
  m.total_variance = a.meta.at("components").at(p).at("total_variance").get<double>();
  if (m.basis.rows() != m.mean.size()) throw FormatError(p + ": basis/mean dimension mismatch");
  return m;
}

inline void put_gmm(Archive& a, const std::string& p, const GmmModel& m) {
  a.put(p + ".weights", m.weights);
  a.put(p + ".means", m.means);
  a.put(p + ".variances", m.variances);
  a.meta["components"][p] = {{"type", "gmm"}, {"components", m.components()}, {"dim", m.dim()}};
}

inline GmmModel get_gmm(const Archive& a, const std::string& p) {
  GmmModel m;
  m.weights = a.vector(p + ".weights");
  m.means = a.row_matrix(p + ".means");
  m.variances = a.row_matrix(p + ".variances");
  if (m.means.rows() != m.weights.size() || m.variances.rows() != m.weights.size() ||
      m.variances.cols() != m.means.cols()) {
    throw FormatError(p + ": inconsistent GMM shapes");
  }
  return m;
}

inline void put_cca(Archive& a, const std::string& p, const CcaModel& m) {
  a.put(p + ".U", m.U);
  if (m.V.size() > 0) a.put(p + ".V", m.V);
  if (m.centered) {
    a.put(p + ".x_mean", m.x_mean);
    if (m.y_mean.size() > 0) a.put(p + ".y_mean", m.y_mean);
  }
  a.put(p + ".correlations", m.correlations);
  a.meta["components"][p] = {{"type", "cca"},          {"input_dim", m.input_dim()}, {"K", m.dim()},
                             {"eta", m.eta},           {"eta_used_x", m.eta_used_x}, {"eta_used_y", m.eta_used_y},
                             {"centered", m.centered}, {"has_v", m.V.size() > 0}};
}

inline CcaModel get_cca(const Archive& a, const std::string& p) {
  const auto& info = a.meta.at("components").at(p);
  CcaModel m;
  m.U = a.matrix(p + ".U");
  m.V = info.value("has_v", false) ? a.matrix(p + ".V") : Matrix(0, m.U.cols());
  m.centered = info.at("centered").get<bool>();
  m.x_mean = m.centered ? a.vector(p + ".x_mean") : Vector::Zero(m.U.rows());
  m.y_mean = m.centered && a.has(p + ".y_mean") ? a.vector(p + ".y_mean") : Vector::Zero(m.V.rows());
  m.correlations = a.vector(p + ".correlations");
  m.eta = info.at("eta").get<double>();
  m.eta_used_x = info.value("eta_used_x", m.eta);
  m.eta_used_y = info.value("eta_used_y", m.eta);
  return m;
}

inline void put_attributes(Archive& a, const std::string& p, const AttributeModel& m) {
  a.put(p + ".W", m.W);
  a.put(p + ".bias", m.bias);
  std::vector<int> deg;
  for (std::size_t i = 0; i < m.degenerate.size(); ++i)
    if (m.degenerate[i]) deg.push_back(static_cast<int>(i));
  a.meta["components"][p] = {{"type", "attributes"}, {"lambda", m.lambda}, {"degenerate", deg}};
}

inline AttributeModel get_attributes(const Archive& a, const std::string& p) {
  const auto& info = a.meta.at("components").at(p);
  AttributeModel m;
  m.W = a.matrix(p + ".W");
  m.bias = a.vector(p + ".bias");
  m.lambda = info.at("lambda").get<double>();
  m.degenerate.assign(static_cast<std::size_t>(m.W.cols()), false);
  for (int i : info.at("degenerate")) m.degenerate.at(static_cast<std::size_t>(i)) = true;
  return m;
}

inline void put_subspace(Archive& a, const std::string& p, const CommonSubspace& cs) {
  put_cca(a, p, cs.cca);
  a.meta["components"][p]["string_levels"] = cs.strings.levels;
  a.meta["components"][p]["case_sensitive"] = cs.strings.case_sensitive;
}

inline CommonSubspace get_subspace(const Archive& a, const std::string& p) {
  CommonSubspace cs;
  cs.cca = get_cca(a, p);
  const auto& info = a.meta.at("components").at(p);
  cs.strings.levels = info.at("string_levels").get<std::vector<int>>();
  cs.strings.case_sensitive = info.at("case_sensitive").get<bool>();
  return cs;
}

}  // namespace midfeat
