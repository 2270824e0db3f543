#pragma once

// Regularized CCA (Cholesky whitening + SVD) and the quadrant rearrangement
// of the block projection.

#include "midfeat/core.hpp"
#include "midfeat/features.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

namespace midfeat {

/// Streaming second moments of paired views. Rows are buffered and folded in
/// with matrix products.
class CcaMoments {
 public:
  CcaMoments(Eigen::Index dx, Eigen::Index dy, Eigen::Index batch = 512)
      : dx_(dx), dy_(dy), batch_(batch), sxx_(Matrix::Zero(dx, dx)), sxy_(Matrix::Zero(dx, dy)),
        syy_(Matrix::Zero(dy, dy)), sx_(Vector::Zero(dx)), sy_(Vector::Zero(dy)), bx_(batch, dx), by_(batch, dy) {}

  void add(const Eigen::Ref<const RowMatrix>& x, const Eigen::Ref<const RowMatrix>& y) {
    if (x.rows() != y.rows()) throw DimensionMismatch("CcaMoments rows", x.rows(), y.rows());
    if (x.cols() != dx_) throw DimensionMismatch("CcaMoments x", dx_, x.cols());
    if (y.cols() != dy_) throw DimensionMismatch("CcaMoments y", dy_, y.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      bx_.row(fill_) = x.row(i);
      by_.row(fill_) = y.row(i);
      if (++fill_ == batch_) flush();
    }
  }

  /// Folds buffered rows into the sums.
  void flush() {
    if (fill_ == 0) return;
    const auto X = bx_.topRows(fill_);
    const auto Y = by_.topRows(fill_);
    sxx_.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
    syy_.selfadjointView<Eigen::Lower>().rankUpdate(Y.transpose());
    sxy_.noalias() += X.transpose() * Y;
    sx_ += X.colwise().sum().transpose();
    sy_ += Y.colwise().sum().transpose();
    n_ += static_cast<double>(fill_);
    fill_ = 0;
  }

  double count() { flush(); return n_; }
  Eigen::Index dx() const { return dx_; }
  Eigen::Index dy() const { return dy_; }

  // Full symmetric sums (flushes first).
  Matrix sxx() { flush(); return sxx_.selfadjointView<Eigen::Lower>(); }
  Matrix syy() { flush(); return syy_.selfadjointView<Eigen::Lower>(); }
  const Matrix& sxy() { flush(); return sxy_; }
  const Vector& sx() { flush(); return sx_; }
  const Vector& sy() { flush(); return sy_; }

 private:
  Eigen::Index dx_, dy_, batch_;
  Matrix sxx_, sxy_, syy_;
  Vector sx_, sy_;
  RowMatrix bx_, by_;
  Eigen::Index fill_ = 0;
  double n_ = 0;
};

struct CcaOptions {
  Eigen::Index K = 62;
  double eta = 1e-4;
  bool center = false;
};

/// Both projections of a CCA fit. Covariances are normalized by the row
/// count: U^T (C_xx + eta_used I) U = I.
struct CcaModel {
  Matrix U;             // Dx x K
  Matrix V;             // Dy x K
  Vector x_mean;        // Dx; zero when not centered
  Vector y_mean;        // Dy
  Vector correlations;  // K, non-increasing; eigenvalues are their squares
  double eta = 1e-4;
  double eta_used_x = 1e-4;
  double eta_used_y = 1e-4;
  bool centered = false;

  Eigen::Index input_dim() const { return U.rows(); }
  Eigen::Index dim() const { return U.cols(); }
  Vector eigenvalues() const { return correlations.cwiseAbs2(); }
};

namespace detail {

/// Cholesky factor of C + eta I with jitter escalation eta, 10 eta, 100 eta.
inline Eigen::LLT<Matrix> regularized_cholesky(const Matrix& C, double eta, double* used) {
  double e = eta;
  for (int attempt = 0; attempt < 3; ++attempt, e *= 10.0) {
    Matrix A = C;
    A.diagonal().array() += e;
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() == Eigen::Success) {
      // Eigen's LLT succeeds on some indefinite inputs; reject non-positive pivots.
      const auto& L = llt.matrixLLT();
      if ((L.diagonal().array() > 0).all() && L.allFinite()) {
        if (used) *used = e;
        return llt;
      }
    }
  }
  throw Error("CCA: covariance is not positive definite even with 100x jitter");
}

}  // namespace detail

/// CCA from accumulated moments. Solves
///   C_xy (C_yy + eta I)^-1 C_yx u = lambda (C_xx + eta I) u
/// by whitening both sides and taking the SVD of the whitened cross-covariance.
inline CcaModel fit_cca_from_moments(const Matrix& sxx, const Matrix& sxy, const Matrix& syy, const Vector& sx,
                                     const Vector& sy, double n, const CcaOptions& opts) {
  const Eigen::Index dx = sxx.rows(), dy = syy.rows();
  if (n < 1) throw InvalidInput("CCA: no samples");
  if (opts.K < 1) throw InvalidInput("CCA: K must be >= 1");
  if (opts.K > std::min(dx, dy)) throw InvalidInput("CCA: K exceeds min(Dx, Dy)");
  if (!(opts.eta > 0)) throw InvalidInput("CCA: eta must be positive");
  if (!sxx.allFinite() || !sxy.allFinite() || !syy.allFinite()) throw InvalidInput("CCA: non-finite input");

  CcaModel m;
  m.eta = opts.eta;
  m.centered = opts.center;
  Matrix cxx = sxx / n, cyy = syy / n, cxy = sxy / n;
  if (opts.center) {
    m.x_mean = sx / n;
    m.y_mean = sy / n;
    cxx -= m.x_mean * m.x_mean.transpose();
    cyy -= m.y_mean * m.y_mean.transpose();
    cxy -= m.x_mean * m.y_mean.transpose();
  } else {
    m.x_mean = Vector::Zero(dx);
    m.y_mean = Vector::Zero(dy);
  }
  const auto lx = detail::regularized_cholesky(cxx, opts.eta, &m.eta_used_x);
  const auto ly = detail::regularized_cholesky(cyy, opts.eta, &m.eta_used_y);

  // A = Lx^-1 C_xy Ly^-T
  Matrix A = lx.matrixL().solve(cxy);
  A = ly.matrixL().solve(A.transpose()).transpose();
  Eigen::BDCSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::Index K = opts.K;
  m.correlations = svd.singularValues().head(K);
  m.U = lx.matrixU().solve(svd.matrixU().leftCols(K));
  m.V = ly.matrixU().solve(svd.matrixV().leftCols(K));
  detail::fix_column_signs(m.U, &m.V);
  return m;
}

inline CcaModel fit_cca(CcaMoments& mom, const CcaOptions& opts) {
  const double n = mom.count();
  return fit_cca_from_moments(mom.sxx(), mom.sxy(), mom.syy(), mom.sx(), mom.sy(), n, opts);
}

inline CcaModel fit_cca(const RowMatrix& X, const RowMatrix& Y, const CcaOptions& opts) {
  if (X.rows() != Y.rows()) throw DimensionMismatch("fit_cca rows", X.rows(), Y.rows());
  if (!X.allFinite() || !Y.allFinite()) throw InvalidInput("CCA: non-finite input");
  CcaMoments mom(X.cols(), Y.cols());
  mom.add(X, Y);
  return fit_cca(mom, opts);
}

/// U^T (v - x_mean), then l2. The zero result stays zero.
inline Vector project(const Vector& v, const CcaModel& model) {
  if (v.size() != model.input_dim()) throw DimensionMismatch("project", model.input_dim(), v.size());
  Vector out = model.centered ? Vector(model.U.transpose() * (v - model.x_mean)) : Vector(model.U.transpose() * v);
  l2_normalize_inplace(out);
  return out;
}

/// Label-side counterpart of `project`.
inline Vector project_y(const Vector& v, const CcaModel& model) {
  if (v.size() != model.V.rows()) throw DimensionMismatch("project_y", model.V.rows(), v.size());
  Vector out = model.centered ? Vector(model.V.transpose() * (v - model.y_mean)) : Vector(model.V.transpose() * v);
  l2_normalize_inplace(out);
  return out;
}

/// Block q of rows of U (q in TL, TR, BL, BR order) becomes column group q.
inline Matrix rearrange_u(const Matrix& U) {
  if (U.rows() % 4 != 0) throw InvalidInput("rearrange_u: row count must be divisible by 4");
  const Eigen::Index q_rows = U.rows() / 4, K = U.cols();
  Matrix out(q_rows, 4 * K);
  for (Eigen::Index q = 0; q < 4; ++q) out.middleCols(q * K, K) = U.middleRows(q * q_rows, q_rows);
  return out;
}

/// Block projection without the CCA side: PCA of block FVs used as U, applied
/// without mean subtraction.
inline CcaModel model_from_basis(const Matrix& basis) {
  CcaModel m;
  m.U = basis;
  m.V.resize(0, basis.cols());
  m.x_mean = Vector::Zero(basis.rows());
  m.y_mean.resize(0);
  m.correlations = Vector::Zero(basis.cols());
  m.centered = false;
  return m;
}

inline void quantize_f32(CcaModel& m) {
  quantize_f32(m.U);
  quantize_f32(m.V);
  quantize_f32(m.x_mean);
  quantize_f32(m.y_mean);
  quantize_f32(m.correlations);
}

}  // namespace midfeat
