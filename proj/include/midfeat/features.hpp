#pragma once

// Dense multi-scale SIFT-like descriptors and PCA.

#include "midfeat/image.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <numbers>

namespace midfeat {

inline constexpr int kSiftDim = 128;

struct DenseSiftParams {
  std::vector<int> scales{12, 16, 24, 32, 40, 48};  // patch sides, multiples of 4
  int step = 2;
  double magnif = 3.0;  // pre-smoothing sigma = bin / magnif (0 disables smoothing)
};

/// One descriptor: patch center, patch side, values.
struct LocalDescriptor {
  double cx = 0;
  double cy = 0;
  int scale = 0;
  Vector v;
};

/// All descriptors of an image, one row per patch. Flat patches are kept as
/// zero rows so the grid stays regular.
struct DescriptorSet {
  std::vector<Point> centers;
  std::vector<int> scales;
  RowMatrix values;  // n x 128

  Eigen::Index size() const { return values.rows(); }
  bool is_flat(Eigen::Index i) const { return values.row(i).squaredNorm() == 0.0; }
  LocalDescriptor at(Eigen::Index i) const {
    return {centers[i].x, centers[i].y, scales[i], values.row(i).transpose()};
  }
};

namespace detail {

/// Per-pixel gradient energy split over 8 orientation bins (linear interpolation).
inline std::vector<std::array<double, 8>> orientation_energy(const GrayImage& img) {
  const int W = img.width(), H = img.height();
  std::vector<std::array<double, 8>> energy(static_cast<size_t>(W) * H);
  constexpr double kBinWidth = 2.0 * std::numbers::pi / 8.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double gx = 0.5 * (img.at_clamped(x + 1, y) - img.at_clamped(x - 1, y));
      const double gy = 0.5 * (img.at_clamped(x, y + 1) - img.at_clamped(x, y - 1));
      auto& e = energy[static_cast<size_t>(y) * W + x];
      e.fill(0.0);
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag == 0) continue;
      double theta = std::atan2(gy, gx);
      if (theta < 0) theta += 2.0 * std::numbers::pi;
      const double o = theta / kBinWidth;
      const int o0 = static_cast<int>(std::floor(o)) % 8;
      const double f = o - std::floor(o);
      e[o0] += mag * (1.0 - f);
      e[(o0 + 1) % 8] += mag * f;
    }
  }
  return energy;
}

// Spatial weights of patch-relative pixel u: up to two bins with
// Gaussian-times-linear weights.
struct AxisWeight {
  int bin[2];
  double w[2];
};

inline std::vector<AxisWeight> axis_weights(int side) {
  const double bin = side / 4.0;
  const double sigma = side / 2.0;
  std::vector<AxisWeight> out(side);
  for (int u = 0; u < side; ++u) {
    const double pos = u + 0.5;
    const double g = std::exp(-0.5 * (pos - 0.5 * side) * (pos - 0.5 * side) / (sigma * sigma));
    const double b = pos / bin - 0.5;
    const int b0 = static_cast<int>(std::floor(b));
    const double f = b - b0;
    AxisWeight aw{{b0, b0 + 1}, {g * (1.0 - f), g * f}};
    for (int k = 0; k < 2; ++k) {
      if (aw.bin[k] < 0 || aw.bin[k] > 3) aw.w[k] = 0.0, aw.bin[k] = 0;
    }
    out[u] = aw;
  }
  return out;
}

// Raw descriptor norms below this (relative to the patch area) are treated as flat.
inline constexpr double kFlatEps = 1e-9;

inline void normalize_sift(std::span<double> d, int side) {
  double n2 = 0;
  for (double v : d) n2 += v * v;
  if (std::sqrt(n2) <= kFlatEps * side * side) {
    std::fill(d.begin(), d.end(), 0.0);
    return;
  }
  double inv = 1.0 / std::sqrt(n2);
  n2 = 0;
  for (double& v : d) {
    v = std::min(v * inv, 0.2);
    n2 += v * v;
  }
  inv = 1.0 / std::sqrt(n2);
  for (double& v : d) v *= inv;
}

}  // namespace detail

/// Number of patch positions along one axis.
constexpr int dense_positions(int extent, int side, int step) {
  return extent < side ? 0 : (extent - side) / step + 1;
}

/// Dense descriptors on a regular grid per scale (scales in the given order,
/// row-major top-left corners within a scale). 4x4 spatial x 8 orientation
/// bins, Gaussian weighted (sigma = side/2), trilinear binning, l2 / clip 0.2 /
/// l2. Flat patches give zero rows.
inline DescriptorSet extract_dense(const GrayImage& image, const DenseSiftParams& params) {
  if (params.step < 1) throw InvalidInput("dense step must be >= 1");
  for (int s : params.scales) {
    if (s < 4 || s % 4 != 0) throw InvalidInput("patch sides must be positive multiples of 4");
  }
  const int W = image.width(), H = image.height();
  Eigen::Index total = 0;
  for (int s : params.scales) {
    total += static_cast<Eigen::Index>(dense_positions(W, s, params.step)) * dense_positions(H, s, params.step);
  }
  DescriptorSet out;
  out.values.setZero(total, kSiftDim);
  out.centers.reserve(total);
  out.scales.reserve(total);
  if (total == 0) return out;

  Eigen::Index row = 0;
  for (int s : params.scales) {
    const int nx = dense_positions(W, s, params.step);
    const int ny = dense_positions(H, s, params.step);
    if (nx == 0 || ny == 0) continue;
    const double sigma = params.magnif > 0 ? std::sqrt(std::max(0.0, std::pow(s / 4.0 / params.magnif, 2) - 0.25)) : 0.0;
    const auto energy = detail::orientation_energy(gaussian_blur(image, sigma));
    const auto weights = detail::axis_weights(s);

    // For each patch column: per image row, a 4 (x bins) x 8 histogram; then
    // the patch descriptor is a weighted sum of s consecutive rows.
    std::vector<std::array<double, 32>> row_hist(H);
    const Eigen::Index first = row;
    for (int ix = 0; ix < nx; ++ix) {
      const int x0 = ix * params.step;
      for (int y = 0; y < H; ++y) {
        auto& h = row_hist[y];
        h.fill(0.0);
        const auto* e_row = &energy[static_cast<size_t>(y) * W + x0];
        for (int u = 0; u < s; ++u) {
          const auto& e = e_row[u];
          const auto& aw = weights[u];
          for (int k = 0; k < 2; ++k) {
            const double w = aw.w[k];
            if (w == 0) continue;
            double* dst = &h[aw.bin[k] * 8];
            for (int o = 0; o < 8; ++o) dst[o] += w * e[o];
          }
        }
      }
      for (int iy = 0; iy < ny; ++iy) {
        const int y0 = iy * params.step;
        double* d = out.values.row(first + static_cast<Eigen::Index>(iy) * nx + ix).data();
        for (int v = 0; v < s; ++v) {
          const auto& aw = weights[v];
          const auto& h = row_hist[y0 + v];
          for (int k = 0; k < 2; ++k) {
            const double w = aw.w[k];
            if (w == 0) continue;
            double* dst = d + aw.bin[k] * 32;
            for (int j = 0; j < 32; ++j) dst[j] += w * h[j];
          }
        }
        detail::normalize_sift({d, kSiftDim}, s);
      }
    }
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix) {
        out.centers.push_back({ix * params.step + 0.5 * s, iy * params.step + 0.5 * s});
        out.scales.push_back(s);
      }
    row += static_cast<Eigen::Index>(nx) * ny;
  }
  return out;
}

// ---------------------------------------------------------------------------
// PCA

struct PcaModel {
  Vector mean;         // D
  Matrix basis;        // D x d, orthonormal columns, decreasing variance
  Vector eigenvalues;  // d retained variances
  double total_variance = 0;

  Eigen::Index input_dim() const { return mean.size(); }
  Eigen::Index output_dim() const { return basis.cols(); }
  double explained_variance_ratio() const {
    return total_variance > 0 ? eigenvalues.sum() / total_variance : 0.0;
  }
};

namespace detail {

/// Flip each column so its largest-magnitude entry is positive.
inline void fix_column_signs(Matrix& m, Matrix* companion = nullptr) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    Eigen::Index imax = 0;
    m.col(j).cwiseAbs().maxCoeff(&imax);
    if (m(imax, j) < 0) {
      m.col(j) *= -1.0;
      if (companion) companion->col(j) *= -1.0;
    }
  }
}

inline PcaModel pca_from_covariance(PcaModel model, const Matrix& cov, double raw_energy, Eigen::Index out_dim) {
  const Eigen::Index D = cov.rows();
  model.total_variance = std::max(0.0, cov.trace());
  if (model.total_variance <= 1e-14 * std::max(1.0, raw_energy)) {
    throw InvalidInput("PCA input is degenerate (zero variance)");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("PCA eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  model.basis.resize(D, out_dim);
  model.eigenvalues.resize(out_dim);
  for (Eigen::Index j = 0; j < out_dim; ++j) {
    model.basis.col(j) = eig.eigenvectors().col(D - 1 - j);
    model.eigenvalues(j) = std::max(0.0, eig.eigenvalues()(D - 1 - j));
  }
  fix_column_signs(model.basis);
  return model;
}

}  // namespace detail

/// PCA from the covariance of dense symmetric moments. `scatter` is the
/// uncentered sum of outer products, `sum` the row sum, `n` the row count.
inline PcaModel fit_pca_from_moments(const Matrix& scatter, const Vector& sum, double n, Eigen::Index out_dim) {
  const Eigen::Index D = sum.size();
  if (out_dim < 1 || out_dim > D) throw InvalidInput("PCA output dimension must be in [1, input dim]");
  if (n <= out_dim) throw InvalidInput("PCA needs more samples than output dimensions");
  PcaModel model;
  model.mean = sum / n;
  Matrix cov = scatter / n - model.mean * model.mean.transpose();
  cov = 0.5 * (cov + cov.transpose());
  return detail::pca_from_covariance(std::move(model), cov, scatter.trace() / n, out_dim);
}

inline PcaModel fit_pca(const RowMatrix& samples, Eigen::Index out_dim) {
  const Eigen::Index D = samples.cols();
  if (out_dim < 1 || out_dim > D) throw InvalidInput("PCA output dimension must be in [1, input dim]");
  if (samples.rows() <= out_dim) throw InvalidInput("PCA needs more samples than output dimensions");
  const double n = static_cast<double>(samples.rows());
  PcaModel model;
  model.mean = samples.colwise().mean().transpose();
  const RowMatrix centered = samples.rowwise() - model.mean.transpose();
  Matrix cov = centered.transpose() * centered / n;
  return detail::pca_from_covariance(std::move(model), cov, samples.squaredNorm() / n, out_dim);
}
inline Vector apply_pca(const Vector& v, const PcaModel& model) {
  if (v.size() != model.input_dim()) throw DimensionMismatch("apply_pca", model.input_dim(), v.size());
  return model.basis.transpose() * (v - model.mean);
}

/// Row-wise projection.
inline RowMatrix apply_pca(const RowMatrix& rows, const PcaModel& model) {
  if (rows.cols() != model.input_dim()) throw DimensionMismatch("apply_pca", model.input_dim(), rows.cols());
  RowMatrix out = (rows.rowwise() - model.mean.transpose()) * model.basis;
  return out;
}

inline void quantize_f32(PcaModel& m) {
  quantize_f32(m.mean);
  quantize_f32(m.basis);
  quantize_f32(m.eigenvalues);
}

}  // namespace midfeat
