#pragma once

// Random fixtures shared by the unit tests and the acceptance binary.

#include "midfeat/codebook.hpp"
#include "midfeat/features.hpp"
#include "midfeat/supervision.hpp"

namespace midfeat::testing {

inline RowMatrix random_normal(Eigen::Index n, Eigen::Index d, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  RowMatrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = g(rng);
  return x;
}

inline GmmModel random_gmm(Eigen::Index G, Eigen::Index d, Rng& rng) {
  std::uniform_real_distribution<double> u(0.3, 1.0), var(0.4, 2.0);
  std::normal_distribution<double> g;
  GmmModel m;
  m.weights.resize(G);
  for (auto& w : m.weights) w = u(rng);
  m.weights /= m.weights.sum();
  m.means.resize(G, d);
  m.variances.resize(G, d);
  for (Eigen::Index k = 0; k < G; ++k)
    for (Eigen::Index j = 0; j < d; ++j) {
      m.means(k, j) = g(rng);
      m.variances(k, j) = var(rng);
    }
  return m;
}

/// Mean per-sample log-likelihood, computed directly with log-sum-exp.
inline double reference_log_likelihood(const GmmModel& m, const RowMatrix& x) {
  const double log2pi = std::log(2 * std::numbers::pi);
  double total = 0;
  std::vector<double> terms(static_cast<size_t>(m.components()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.components(); ++k) {
      double t = std::log(m.weights(k));
      for (Eigen::Index j = 0; j < m.dim(); ++j) {
        const double v = m.variances(k, j), dlt = x(i, j) - m.means(k, j);
        t -= 0.5 * (log2pi + std::log(v) + dlt * dlt / v);
      }
      terms[static_cast<size_t>(k)] = t;
    }
    const double mx = *std::max_element(terms.begin(), terms.end());
    double s = 0;
    for (double t : terms) s += std::exp(t - mx);
    total += mx + std::log(s);
  }
  return total / static_cast<double>(x.rows());
}

/// Central finite differences of the mean log-likelihood w.r.t. means and
/// standard deviations, scaled by sigma / sqrt(w) and sigma / sqrt(2 w).
inline Vector finite_difference_fv(const GmmModel& m, const RowMatrix& x, double h = 1e-5) {
  const Eigen::Index G = m.components(), d = m.dim();
  Vector fd(2 * G * d);
  for (Eigen::Index k = 0; k < G; ++k)
    for (Eigen::Index j = 0; j < d; ++j) {
      const double sd = std::sqrt(m.variances(k, j));
      GmmModel a = m, b = m;
      a.means(k, j) += h;
      b.means(k, j) -= h;
      const double dmu = (reference_log_likelihood(a, x) - reference_log_likelihood(b, x)) / (2 * h);
      a = m;
      b = m;
      a.variances(k, j) = (sd + h) * (sd + h);
      b.variances(k, j) = (sd - h) * (sd - h);
      const double dsd = (reference_log_likelihood(a, x) - reference_log_likelihood(b, x)) / (2 * h);
      fd(k * d + j) = dmu * sd / std::sqrt(m.weights(k));
      fd(G * d + k * d + j) = dsd * sd / std::sqrt(2 * m.weights(k));
    }
  return fd;
}

/// Identity-like PCA from D inputs to d outputs: keeps the first d coordinates.
inline PcaModel truncation_pca(Eigen::Index D, Eigen::Index d) {
  PcaModel p;
  p.mean = Vector::Zero(D);
  p.basis = Matrix::Identity(D, d);
  p.eigenvalues = Vector::Ones(d);
  p.total_variance = static_cast<double>(D);
  return p;
}

/// Descriptor set on a regular grid with random unit-norm values.
inline DescriptorSet random_descriptors(int width, int height, int step, Eigen::Index D, Rng& rng) {
  DescriptorSet ds;
  std::normal_distribution<double> g;
  for (int y = step / 2; y < height; y += step)
    for (int x = step / 2; x < width; x += step) {
      ds.centers.push_back({x + 0.5, y + 0.5});
      ds.scales.push_back(16);
    }
  ds.values.resize(static_cast<Eigen::Index>(ds.centers.size()), D);
  for (Eigen::Index i = 0; i < ds.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < D; ++j) ds.values(i, j) = std::abs(g(rng));
    ds.values.row(i).normalize();
  }
  return ds;
}

/// Label by counting unit cells on a grid scaled by R, where every region
/// boundary is an integer.
inline Vector pixel_count_label(const BBox& block, const std::vector<CharAnnotation>& chars, int R) {
  Vector y = Vector::Zero(label_dim(R));
  const long bx0 = static_cast<long>(block.x) * R, bx1 = static_cast<long>(block.right()) * R;
  const long by0 = static_cast<long>(block.y) * R, by1 = static_cast<long>(block.bottom()) * R;
  for (const auto& ch : chars) {
    const int c = *char_index(ch.label);
    const BBox& b = ch.bbox;
    for (int ry = 0; ry < R; ++ry)
      for (int rx = 0; rx < R; ++rx) {
        // Region [x*R + w*rx, x*R + w*(rx+1)) in scaled units.
        const long x0 = static_cast<long>(b.x) * R + static_cast<long>(b.w) * rx, x1 = x0 + b.w;
        const long y0 = static_cast<long>(b.y) * R + static_cast<long>(b.h) * ry, y1 = y0 + b.h;
        long inside = 0;
        for (long py = y0; py < y1; ++py)
          for (long px = x0; px < x1; ++px) inside += (px >= bx0 && px < bx1 && py >= by0 && py < by1);
        const double frac = static_cast<double>(inside) / static_cast<double>(b.w * b.h);
        double& dst = y((ry * R + rx) * kAlphabetSize + c);
        dst = std::max(dst, frac);
      }
  }
  return y;
}

/// Random block and annotations on a 120 x 160 canvas, with repeated labels.
inline std::pair<BBox, std::vector<CharAnnotation>> random_label_case(Rng& rng) {
  std::uniform_int_distribution<int> n_chars(0, 5), label(0, 5), side(4, 40), pos(0, 110), bside(8, 48);
  std::vector<CharAnnotation> chars;
  const int n = n_chars(rng);
  for (int i = 0; i < n; ++i) {
    const int w = side(rng), h = side(rng);
    chars.push_back({index_char(label(rng) * 7), BBox{pos(rng), pos(rng) % 80, w, h}});
  }
  const int s = bside(rng);
  return {BBox{pos(rng), pos(rng) % 70, s, s}, chars};
}

}  // namespace midfeat::testing
