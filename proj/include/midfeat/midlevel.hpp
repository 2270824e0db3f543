#pragma once

// Mid-level block features: the direct per-block path and the integral-grid
// path that reproduces it exactly.

#include "midfeat/embedding.hpp"
#include "midfeat/fisher.hpp"

namespace midfeat {

struct BlockGridParams {
  std::vector<int> sizes{16, 24, 32, 40, 48};
  int step = 4;
  int cell = 4;  // p
};

/// Mid-level features of one image: one row per block.
struct MidLevelSet {
  std::vector<BBox> blocks;
  RowMatrix v;  // n x K, rows unit or zero

  Eigen::Index size() const { return v.rows(); }
};

/// Every block position of every size that fits, sizes ascending, row-major positions.
inline std::vector<BBox> enumerate_blocks(int width, int height, const std::vector<int>& sizes, int step) {
  if (step < 1) throw InvalidInput("block step must be >= 1");
  std::vector<int> sorted = sizes;
  std::sort(sorted.begin(), sorted.end());
  std::vector<BBox> out;
  for (int s : sorted) {
    for (int y = 0; y + s <= height; y += step)
      for (int x = 0; x + s <= width; x += step) out.push_back({x, y, s, s});
  }
  return out;
}

/// One block through the direct path: 2x2 pyramid FV, l2, project, l2. With
/// a centered model the FV is averaged before subtracting the mean, so that the
/// grid path can reproduce it from counts.
inline void naive_block_feature(const EncodedDescriptors& ed, const FvEncoder& enc, const CcaModel& emb,
                                const BBox& block, Vector& fv_scratch, double* out) {
  Eigen::Index count = 0;
  block_fv(ed, enc, block, kPyramid2x2, fv_scratch.data(), &count);
  const Eigen::Index K = emb.dim();
  Eigen::Map<Vector> o(out, K);
  if (count == 0) {
    o.setZero();
    return;
  }
  if (emb.centered) {
    fv_scratch /= static_cast<double>(count);
    fv_scratch -= emb.x_mean;
  } else {
    l2_normalize_inplace(fv_scratch);
  }
  o.noalias() = emb.U.transpose() * fv_scratch;
  l2_normalize_inplace(o);
}

inline MidLevelSet extract_naive(const EncodedDescriptors& ed, const GmmModel& block_gmm, const CcaModel& emb,
                                 int width, int height, const std::vector<int>& sizes, int step) {
  const FvEncoder enc(block_gmm);
  if (emb.input_dim() != enc.fv_size() * 4) throw DimensionMismatch("extract_naive", emb.input_dim(), enc.fv_size() * 4);
  MidLevelSet out;
  out.blocks = enumerate_blocks(width, height, sizes, step);
  out.v.resize(static_cast<Eigen::Index>(out.blocks.size()), emb.dim());
  Vector scratch(emb.input_dim());
  for (std::size_t b = 0; b < out.blocks.size(); ++b)
    naive_block_feature(ed, enc, emb, out.blocks[b], scratch, out.v.row(static_cast<Eigen::Index>(b)).data());
  return out;
}

inline MidLevelSet extract_naive(const GrayImage& image, const PcaModel& pca, const GmmModel& block_gmm,
                                 const CcaModel& emb, const std::vector<int>& sizes, int step,
                                 const DenseSiftParams& sift = DenseSiftParams{}) {
  const auto ed = encode_descriptors(extract_dense(image, sift), pca, block_gmm);
  return extract_naive(ed, block_gmm, emb, image.width(), image.height(), sizes, step);
}

// ---------------------------------------------------------------------------
// Integral grid

/// Operation counts used to check the cost model.
struct GridOpStats {
  std::int64_t descriptor_encodings = 0;  // FV accumulations while building cells
  std::int64_t projection_flops = 0;      // multiply-adds of the per-cell projection
  std::int64_t block_lookups = 0;         // prefix-sum vectors read by extract_fast
  std::int64_t block_vector_adds = 0;     // scalar adds/subs performed by extract_fast
  std::int64_t blocks = 0;
};

/// Prefix sums over the cell lattice of per-cell projected raw FVs. Channels:
/// 4K projected values then one descriptor-count channel. Entry (i, j) sums
/// cells [0, i) x [0, j); row/column 0 is the zero border.
class IntegralGrid {
 public:
  IntegralGrid() = default;
  IntegralGrid(int rows, int cols, int cell, Eigen::Index K)
      : rows_(rows), cols_(cols), cell_(cell), K_(K),
        data_(static_cast<Eigen::Index>(rows + 1) * (cols + 1), 4 * K + 1) {
    data_.setZero();
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int cell() const { return cell_; }
  Eigen::Index K() const { return K_; }
  Eigen::Index channels() const { return 4 * K_ + 1; }
  std::string image_id;
  Vector mean_correction;  // U^T x_mean (K) for centered models, empty otherwise

  /// Cumulative entry over cells [0, i) x [0, j).
  const double* at(int i, int j) const { return data_.row(static_cast<Eigen::Index>(i) * (cols_ + 1) + j).data(); }
  double* at(int i, int j) { return data_.row(static_cast<Eigen::Index>(i) * (cols_ + 1) + j).data(); }

  /// Inclusive cumulative value over cells a <= i, b <= j (cell coordinates).
  Eigen::Map<const Vector> cumulative(int i, int j) const { return {at(i + 1, j + 1), channels()}; }

 private:
  int rows_ = 0, cols_ = 0, cell_ = 4;
  Eigen::Index K_ = 0;
  RowMatrix data_;
};

/// Per-cell raw FVs (no pyramid, no normalization) of descriptors by center;
/// descriptors in the ragged right/bottom remainder are ignored.
struct CellFvs {
  int rows = 0, cols = 0;
  RowMatrix fv;   // (rows*cols) x (2 d G)
  Vector counts;  // rows*cols
};

inline CellFvs cell_fvs(const EncodedDescriptors& ed, const FvEncoder& enc, int width, int height, int p,
                        GridOpStats* stats = nullptr) {
  if (p < 1) throw InvalidInput("grid cell size must be >= 1");
  CellFvs c;
  c.rows = height / p;
  c.cols = width / p;
  c.fv = RowMatrix::Zero(static_cast<Eigen::Index>(c.rows) * c.cols, enc.fv_size());
  c.counts = Vector::Zero(static_cast<Eigen::Index>(c.rows) * c.cols);
  for (Eigen::Index i = 0; i < ed.size(); ++i) {
    const Point& pt = ed.centers[i];
    const int ci = static_cast<int>(std::floor(pt.y / p)), cj = static_cast<int>(std::floor(pt.x / p));
    if (ci < 0 || cj < 0 || ci >= c.rows || cj >= c.cols) continue;
    const Eigen::Index cell = static_cast<Eigen::Index>(ci) * c.cols + cj;
    enc.accumulate(ed.x.row(i).data(), ed.gamma.row(i).data(), c.fv.row(cell).data());
    c.counts(cell) += 1;
    if (stats) ++stats->descriptor_encodings;
  }
  return c;
}

/// Projects per-cell FVs with the rearranged projection (cells x 4K), then
/// builds 2-d prefix sums per channel.
inline IntegralGrid build_integral_grid(const EncodedDescriptors& ed, const GmmModel& block_gmm, const CcaModel& emb,
                                        int width, int height, int p, GridOpStats* stats = nullptr) {
  const FvEncoder enc(block_gmm);
  if (emb.input_dim() != enc.fv_size() * 4) {
    throw DimensionMismatch("build_integral_grid", emb.input_dim(), enc.fv_size() * 4);
  }
  const CellFvs c = cell_fvs(ed, enc, width, height, p, stats);
  const Matrix u_hat = rearrange_u(emb.U);
  const Eigen::Index K = emb.dim();
  RowMatrix g = c.fv * u_hat;  // cells x 4K
  if (stats) stats->projection_flops += static_cast<std::int64_t>(c.fv.rows()) * u_hat.rows() * u_hat.cols();

  IntegralGrid grid(c.rows, c.cols, p, K);
  if (emb.centered) grid.mean_correction = emb.U.transpose() * emb.x_mean;
  const Eigen::Index C = grid.channels();
  for (int i = 0; i < c.rows; ++i) {
    for (int j = 0; j < c.cols; ++j) {
      const Eigen::Index cell = static_cast<Eigen::Index>(i) * c.cols + j;
      double* dst = grid.at(i + 1, j + 1);
      const double* up = grid.at(i, j + 1);
      const double* left = grid.at(i + 1, j);
      const double* diag = grid.at(i, j);
      const double* src = g.row(cell).data();
      for (Eigen::Index ch = 0; ch < 4 * K; ++ch) dst[ch] = src[ch] + up[ch] + left[ch] - diag[ch];
      dst[C - 1] = c.counts(cell) + up[C - 1] + left[C - 1] - diag[C - 1];
    }
  }
  return grid;
}

inline IntegralGrid build_integral_grid(const GrayImage& image, const PcaModel& pca, const GmmModel& block_gmm,
                                        const CcaModel& emb, int p, const DenseSiftParams& sift = DenseSiftParams{},
                                        GridOpStats* stats = nullptr) {
  const auto ed = encode_descriptors(extract_dense(image, sift), pca, block_gmm);
  return build_integral_grid(ed, block_gmm, emb, image.width(), image.height(), p, stats);
}

/// Sum over cells [r0, r1) x [c0, c1) for channels [ch0, ch0 + n), added into out.
inline void region_sum_into(const IntegralGrid& g, int r0, int c0, int r1, int c1, Eigen::Index ch0, Eigen::Index n,
                            double* out) {
  const double* a = g.at(r1, c1) + ch0;
  const double* b = g.at(r0, c1) + ch0;
  const double* c = g.at(r1, c0) + ch0;
  const double* d = g.at(r0, c0) + ch0;
  for (Eigen::Index k = 0; k < n; ++k) out[k] += a[k] - b[k] - c[k] + d[k];
}

/// All channels over a pixel rectangle aligned to the cell lattice.
inline Vector region_sum(const IntegralGrid& g, const BBox& rect) {
  const int p = g.cell();
  if (rect.x % p || rect.y % p || rect.w % p || rect.h % p || rect.w <= 0 || rect.h <= 0) {
    throw InvalidInput("region_sum: rectangle not aligned to the cell lattice");
  }
  const int c0 = rect.x / p, r0 = rect.y / p, c1 = rect.right() / p, r1 = rect.bottom() / p;
  if (c0 < 0 || r0 < 0 || c1 > g.cols() || r1 > g.rows()) throw InvalidInput("region_sum: rectangle outside grid");
  Vector out = Vector::Zero(g.channels());
  region_sum_into(g, r0, c0, r1, c1, 0, g.channels(), out.data());
  return out;
}

/// Per block: the four quadrant sums, each restricted to its K-channel group,
/// added; mean correction by block count for centered models; l2.
inline MidLevelSet extract_fast(const IntegralGrid& g, const std::vector<int>& sizes, int step,
                                GridOpStats* stats = nullptr) {
  const int p = g.cell();
  if (step % p != 0) throw InvalidInput("extract_fast: step must be a multiple of the cell size");
  for (int s : sizes)
    if (s % (2 * p) != 0) throw InvalidInput("extract_fast: block sizes must be multiples of twice the cell size");
  const Eigen::Index K = g.K();
  MidLevelSet out;
  out.blocks = enumerate_blocks(g.cols() * p, g.rows() * p, sizes, step);
  out.v.setZero(static_cast<Eigen::Index>(out.blocks.size()), K);
  const bool centered = g.mean_correction.size() == K;
  const Eigen::Index count_ch = g.channels() - 1;
  for (std::size_t b = 0; b < out.blocks.size(); ++b) {
    const BBox& blk = out.blocks[b];
    double* o = out.v.row(static_cast<Eigen::Index>(b)).data();
    const int r0 = blk.y / p, c0 = blk.x / p, half = blk.w / (2 * p);
    for (int q = 0; q < 4; ++q) {
      const int qr = r0 + (q / 2) * half, qc = c0 + (q % 2) * half;
      region_sum_into(g, qr, qc, qr + half, qc + half, q * K, K, o);
    }
    double count = 0;
    region_sum_into(g, r0, c0, r0 + 2 * half, c0 + 2 * half, count_ch, 1, &count);
    Eigen::Map<Vector> v(o, K);
    if (count < 0.5) {
      // No descriptors: the exact result is zero.
      v.setZero();
    } else {
      if (centered) v -= count * g.mean_correction;
      l2_normalize_inplace(v);
    }
    if (stats) {
      stats->block_lookups += 4 * 4 + 4;
      stats->block_vector_adds += 4 * 4 * K + 4 + (centered ? K : 0);
      ++stats->blocks;
    }
  }
  return out;
}

}  // namespace midfeat
