#pragma once

// Fisher-vector encoding: gradients w.r.t. means and variances, spatial
// pyramids, and normalization.

#include "midfeat/codebook.hpp"
#include "midfeat/features.hpp"

namespace midfeat {

enum class FvNorm { kRawSum, kAveraged, kL2, kPowerL2 };

inline const char* fv_norm_name(FvNorm n) {
  switch (n) {
    case FvNorm::kRawSum: return "raw-sum";
    case FvNorm::kAveraged: return "averaged";
    case FvNorm::kL2: return "l2";
    case FvNorm::kPowerL2: return "power+l2";
  }
  return "?";
}

/// Spatial pyramid layout: rows x cols equal cells, row-major.
struct PyramidGrid {
  int rows = 1;
  int cols = 1;

  int cells() const { return rows * cols; }
  friend bool operator==(const PyramidGrid&, const PyramidGrid&) = default;
};

inline constexpr PyramidGrid kNoPyramid{1, 1};
inline constexpr PyramidGrid kPyramid2x2{2, 2};
inline constexpr PyramidGrid kPyramid2x6{2, 6};

inline std::string pyramid_tag(const PyramidGrid& g) {
  if (g == kNoPyramid) return "none";
  return std::to_string(g.rows) + "x" + std::to_string(g.cols);
}

/// Accepts "none", "2x2" and "2x6".
inline PyramidGrid parse_pyramid(std::string_view tag) {
  if (tag == "none") return kNoPyramid;
  if (tag == "2x2") return kPyramid2x2;
  if (tag == "2x6") return kPyramid2x6;
  throw InvalidInput("unknown pyramid grid '" + std::string(tag) + "'");
}

struct FisherVector {
  Vector v;
  FvNorm norm = FvNorm::kRawSum;
  PyramidGrid grid = kNoPyramid;
};

constexpr Eigen::Index fv_dim(Eigen::Index d, Eigen::Index G, int cells = 1) { return 2 * d * G * cells; }

/// Per-GMM constants for accumulating FV contributions. Layout of one cell:
/// [mean gradients G x d | variance gradients G x d].
class FvEncoder {
 public:
  explicit FvEncoder(const GmmModel& gmm)
      : gmm_(&gmm), eval_(gmm), inv_sd_(gmm.variances.cwiseSqrt().cwiseInverse()) {
    const Eigen::Index G = gmm.components();
    mean_coef_.resize(G);
    var_coef_.resize(G);
    for (Eigen::Index k = 0; k < G; ++k) {
      mean_coef_(k) = 1.0 / std::sqrt(gmm.weights(k));
      var_coef_(k) = 1.0 / std::sqrt(2.0 * gmm.weights(k));
    }
  }

  Eigen::Index dim() const { return gmm_->dim(); }
  Eigen::Index components() const { return gmm_->components(); }
  Eigen::Index fv_size() const { return fv_dim(dim(), components()); }
  const GmmModel& gmm() const { return *gmm_; }

  void posteriors(const double* x, double* gamma) const { eval_.posteriors(x, gamma); }

  /// Adds the contribution of one descriptor with known posteriors. Components
  /// with exactly zero posterior contribute nothing and are skipped.
  void accumulate(const double* x, const double* gamma, double* out, double scale = 1.0) const {
    const Eigen::Index G = components(), d = dim();
    double* var_part = out + G * d;
    for (Eigen::Index k = 0; k < G; ++k) {
      const double g = gamma[k] * scale;
      if (g == 0.0) continue;
      const double* mu = gmm_->means.row(k).data();
      const double* is = inv_sd_.row(k).data();
      const double cm = g * mean_coef_(k), cv = g * var_coef_(k);
      double* om = out + k * d;
      double* ov = var_part + k * d;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double z = (x[j] - mu[j]) * is[j];
        om[j] += cm * z;
        ov[j] += cv * (z * z - 1.0);
      }
    }
  }

  /// Same, computing the posteriors into `gamma_scratch` first.
  void accumulate_fresh(const double* x, double* out, double* gamma_scratch) const {
    posteriors(x, gamma_scratch);
    accumulate(x, gamma_scratch, out, 1.0);
  }

 private:
  const GmmModel* gmm_;
  GmmEvaluator eval_;
  RowMatrix inv_sd_;
  Vector mean_coef_, var_coef_;
};

/// Encodes rows of `x` (already in GMM space). Empty input gives the zero vector.
inline FisherVector encode_fv(const RowMatrix& x, const GmmModel& gmm, FvNorm mode = FvNorm::kRawSum) {
  if (mode != FvNorm::kRawSum && mode != FvNorm::kAveraged) {
    throw InvalidInput("encode_fv mode must be raw-sum or averaged");
  }
  if (x.rows() > 0 && x.cols() != gmm.dim()) throw DimensionMismatch("encode_fv", gmm.dim(), x.cols());
  const FvEncoder enc(gmm);
  FisherVector fv{Vector::Zero(enc.fv_size()), mode, kNoPyramid};
  Vector gamma(gmm.components());
  for (Eigen::Index i = 0; i < x.rows(); ++i) enc.accumulate_fresh(x.row(i).data(), fv.v.data(), gamma.data());
  if (mode == FvNorm::kAveraged && x.rows() > 0) fv.v /= static_cast<double>(x.rows());
  return fv;
}

/// Pyramid cell of a point inside `region`; right and bottom edges fall in the last cell.
inline int pyramid_cell(double cx, double cy, double x0, double y0, double w, double h, const PyramidGrid& grid) {
  const int col = std::clamp(static_cast<int>(std::floor((cx - x0) * grid.cols / w)), 0, grid.cols - 1);
  const int row = std::clamp(static_cast<int>(std::floor((cy - y0) * grid.rows / h)), 0, grid.rows - 1);
  return row * grid.cols + col;
}

inline int pyramid_cell(const Point& c, const BBox& region, const PyramidGrid& grid) {
  return pyramid_cell(c.x, c.y, region.x, region.y, region.w, region.h, grid);
}

/// Raw-sum encoding per pyramid cell, concatenated in row-major cell order.
inline FisherVector encode_fv_spm(const RowMatrix& x, const std::vector<Point>& centers, const BBox& region,
                                  const GmmModel& gmm, const PyramidGrid& grid) {
  if (grid.rows < 1 || grid.cols < 1) throw InvalidInput("pyramid grid must have positive extent");
  if (static_cast<Eigen::Index>(centers.size()) != x.rows()) {
    throw DimensionMismatch("encode_fv_spm centers", x.rows(), static_cast<long>(centers.size()));
  }
  if (x.rows() > 0 && x.cols() != gmm.dim()) throw DimensionMismatch("encode_fv_spm", gmm.dim(), x.cols());
  const FvEncoder enc(gmm);
  const Eigen::Index cell_dim = enc.fv_size();
  FisherVector fv{Vector::Zero(cell_dim * grid.cells()), FvNorm::kRawSum, grid};
  Vector gamma(gmm.components());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Point& c = centers[i];
    if (c.x < region.x || c.x > region.right() || c.y < region.y || c.y > region.bottom()) {
      throw InvalidInput("encode_fv_spm: descriptor center outside the region");
    }
    const int cell = pyramid_cell(c, region, grid);
    enc.accumulate_fresh(x.row(i).data(), fv.v.data() + cell * cell_dim, gamma.data());
  }
  return fv;
}

inline FisherVector l2_normalize(FisherVector fv) {
  l2_normalize_inplace(fv.v);
  fv.norm = FvNorm::kL2;
  return fv;
}

/// Signed power sign(v)|v|^alpha, then l2.
inline FisherVector power_l2_normalize(FisherVector fv, double alpha = 0.5) {
  for (double& e : fv.v) e = std::copysign(std::pow(std::abs(e), alpha), e);
  l2_normalize_inplace(fv.v);
  fv.norm = FvNorm::kPowerL2;
  return fv;
}

inline void power_l2_normalize_inplace(Vector& v, double alpha = 0.5) {
  for (double& e : v) e = std::copysign(std::pow(std::abs(e), alpha), e);
  l2_normalize_inplace(v);
}

/// Non-flat descriptors of an image in GMM space with cached posteriors. Flat
/// (all-zero) SIFTs are dropped here: they are not valid samples.
struct EncodedDescriptors {
  std::vector<Point> centers;
  RowMatrix x;      // n x d (PCA space)
  RowMatrix gamma;  // n x G
  // Row order is by increasing center y, then x. The sort makes block
  // selection a range scan.
  std::vector<std::size_t> source_index;  // row in the originating DescriptorSet

  Eigen::Index size() const { return x.rows(); }

  /// First row whose center y is >= y.
  Eigen::Index lower_bound_y(double y) const {
    auto it = std::lower_bound(centers.begin(), centers.end(), y,
                               [](const Point& p, double v) { return p.y < v; });
    return static_cast<Eigen::Index>(it - centers.begin());
  }
};

/// Drops flat rows and projects the rest with PCA (no GMM step).
inline std::pair<RowMatrix, std::vector<Point>> project_descriptors(const DescriptorSet& ds, const PcaModel& pca,
                                                                    std::vector<std::size_t>* kept = nullptr) {
  std::vector<std::size_t> rows;
  rows.reserve(ds.size());
  for (Eigen::Index i = 0; i < ds.size(); ++i)
    if (!ds.is_flat(i)) rows.push_back(static_cast<std::size_t>(i));
  RowMatrix raw(static_cast<Eigen::Index>(rows.size()), ds.values.cols());
  std::vector<Point> centers(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    raw.row(static_cast<Eigen::Index>(r)) = ds.values.row(static_cast<Eigen::Index>(rows[r]));
    centers[r] = ds.centers[rows[r]];
  }
  RowMatrix x = rows.empty() ? RowMatrix(0, pca.output_dim()) : apply_pca(raw, pca);
  if (kept) *kept = std::move(rows);
  return {std::move(x), std::move(centers)};
}

inline EncodedDescriptors encode_descriptors(const DescriptorSet& ds, const PcaModel& pca, const GmmModel& gmm) {
  if (pca.output_dim() != gmm.dim()) throw DimensionMismatch("encode_descriptors", gmm.dim(), pca.output_dim());
  std::vector<std::size_t> kept;
  auto [x, centers] = project_descriptors(ds, pca, &kept);
  std::vector<std::size_t> order(centers.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return centers[a].y < centers[b].y || (centers[a].y == centers[b].y && centers[a].x < centers[b].x);
  });
  EncodedDescriptors out;
  out.x.resize(x.rows(), x.cols());
  out.gamma.resize(x.rows(), gmm.components());
  out.centers.resize(order.size());
  out.source_index.resize(order.size());
  const GmmEvaluator eval(gmm);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    out.x.row(i) = x.row(static_cast<Eigen::Index>(order[r]));
    out.centers[r] = centers[order[r]];
    out.source_index[r] = kept[order[r]];
    eval.posteriors(out.x.row(i).data(), out.gamma.row(i).data());
  }
  return out;
}

/// Raw-sum pyramid FV of the descriptors whose centers lie in the half-open
/// block [x, x+w) x [y, y+h). Uses cached posteriors.
inline void block_fv(const EncodedDescriptors& ed, const FvEncoder& enc, const BBox& block, const PyramidGrid& grid,
                     double* out, Eigen::Index* count = nullptr) {
  const Eigen::Index cell_dim = enc.fv_size();
  std::fill(out, out + cell_dim * grid.cells(), 0.0);
  Eigen::Index n = 0;
  const Eigen::Index end = ed.lower_bound_y(block.bottom());
  for (Eigen::Index i = ed.lower_bound_y(block.y); i < end; ++i) {
    const Point& c = ed.centers[i];
    if (c.x < block.x || c.x >= block.right()) continue;
    const int cell = pyramid_cell(c, block, grid);
    enc.accumulate(ed.x.row(i).data(), ed.gamma.row(i).data(), out + cell * cell_dim);
    ++n;
  }
  if (count) *count = n;
}

}  // namespace midfeat
