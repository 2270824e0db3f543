#pragma once

// Global word signatures, string attributes, ridge attribute predictors and
// the image/string common subspace.

#include "midfeat/embedding.hpp"
#include "midfeat/midlevel.hpp"

#include <Eigen/LU>

namespace midfeat {

enum class SignatureSource { kSupervisedMidlevel, kUnsupervisedMidlevel, kSiftBaseline, kConcatenated };

inline const char* source_name(SignatureSource s) {
  switch (s) {
    case SignatureSource::kSupervisedMidlevel: return "supervised-midlevel";
    case SignatureSource::kUnsupervisedMidlevel: return "unsupervised-midlevel";
    case SignatureSource::kSiftBaseline: return "sift-baseline";
    case SignatureSource::kConcatenated: return "concatenated";
  }
  return "?";
}

struct WordSignature {
  Vector v;
  SignatureSource source = SignatureSource::kSupervisedMidlevel;
};

/// Local features with (cx/W, cy/H) appended. Zero rows (descriptor-free
/// blocks) are dropped; they carry no appearance information.
struct AugmentedFeatures {
  RowMatrix x;  // n x (K + 2)
  std::vector<Point> centers;
};

inline AugmentedFeatures augment_xy(const RowMatrix& v, const std::vector<Point>& centers, int width, int height) {
  AugmentedFeatures out;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    if (v.row(i).squaredNorm() > 0) keep.push_back(i);
  out.x.resize(static_cast<Eigen::Index>(keep.size()), v.cols() + 2);
  out.centers.reserve(keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const auto i = keep[r];
    const auto row = static_cast<Eigen::Index>(r);
    out.x.row(row).head(v.cols()) = v.row(i);
    out.x(row, v.cols()) = centers[i].x / width;
    out.x(row, v.cols() + 1) = centers[i].y / height;
    out.centers.push_back(centers[i]);
  }
  return out;
}

inline AugmentedFeatures augment_xy(const MidLevelSet& f, int width, int height) {
  std::vector<Point> centers;
  centers.reserve(f.blocks.size());
  for (const auto& b : f.blocks) centers.push_back({b.center_x(), b.center_y()});
  return augment_xy(f.v, centers, width, height);
}

/// Dense SIFT reduced by PCA (flat patches dropped), xy-augmented.
inline AugmentedFeatures baseline_features(const DescriptorSet& ds, const PcaModel& pca62, int width, int height) {
  auto [x, centers] = project_descriptors(ds, pca62);
  return augment_xy(x, centers, width, height);
}

/// Pyramid FV over the image extent, power + l2 normalized.
inline WordSignature signature_from_features(const AugmentedFeatures& f, const GmmModel& global_gmm, int width,
                                             int height, const PyramidGrid& grid, SignatureSource source) {
  if (f.x.rows() > 0 && f.x.cols() != global_gmm.dim()) {
    throw DimensionMismatch("global signature", global_gmm.dim(), f.x.cols());
  }
  FisherVector fv = encode_fv_spm(f.x, f.centers, BBox{0, 0, width, height}, global_gmm, grid);
  return {power_l2_normalize(std::move(fv)).v, source};
}

inline WordSignature global_signature(const MidLevelSet& features, const GmmModel& global_gmm, int width, int height,
                                      const PyramidGrid& grid = kPyramid2x6,
                                      SignatureSource source = SignatureSource::kSupervisedMidlevel) {
  if (features.v.cols() + 2 != global_gmm.dim()) {
    throw DimensionMismatch("global_signature", global_gmm.dim(), features.v.cols() + 2);
  }
  return signature_from_features(augment_xy(features, width, height), global_gmm, width, height, grid, source);
}

inline WordSignature baseline_signature(const GrayImage& image, const PcaModel& pca62, const GmmModel& global_gmm,
                                        const PyramidGrid& grid = kPyramid2x6,
                                        const DenseSiftParams& sift = DenseSiftParams{}) {
  const auto f = baseline_features(extract_dense(image, sift), pca62, image.width(), image.height());
  return signature_from_features(f, global_gmm, image.width(), image.height(), grid, SignatureSource::kSiftBaseline);
}

/// Concatenation, re-normalized.
inline WordSignature concat_signatures(const WordSignature& a, const WordSignature& b) {
  WordSignature out{Vector(a.v.size() + b.v.size()), SignatureSource::kConcatenated};
  out.v << a.v, b.v;
  l2_normalize_inplace(out.v);
  return out;
}

// ---------------------------------------------------------------------------
// String attributes

struct StringEmbeddingOptions {
  std::vector<int> levels{1, 2, 3, 4};
  bool case_sensitive = false;
};

inline Eigen::Index string_embedding_dim(const std::vector<int>& levels) {
  Eigen::Index n = 0;
  for (int L : levels) n += static_cast<Eigen::Index>(L) * kAlphabetSize;
  return n;
}

/// Binary spatial-occurrence attributes. Attribute (L, j, c) sits at
/// offset(L) + j*62 + c and is set when an occurrence of c covers at least half
/// of its own span inside bin j of level L.
inline Vector string_embedding(std::string_view text, const StringEmbeddingOptions& opts = {}) {
  if (text.empty()) throw InvalidInput("string_embedding: empty string");
  if (!in_alphabet(text)) throw InvalidInput("string_embedding: character outside the alphabet in '" + std::string(text) + "'");
  for (int L : opts.levels)
    if (L < 1) throw InvalidInput("string_embedding: levels must be >= 1");
  const std::string s = opts.case_sensitive ? std::string(text) : fold_case(text);
  const long n = static_cast<long>(s.size());
  Vector b = Vector::Zero(string_embedding_dim(opts.levels));
  Eigen::Index offset = 0;
  for (int L : opts.levels) {
    // Integer units of 1/(n L): character i spans [iL, (i+1)L), bin j spans [jn, (j+1)n).
    for (long i = 0; i < n; ++i) {
      const int c = *char_index(s[static_cast<std::size_t>(i)]);
      for (long j = 0; j < L; ++j) {
        const long overlap = std::min((i + 1) * L, (j + 1) * n) - std::max(i * L, j * n);
        if (2 * overlap >= L) b(offset + j * kAlphabetSize + c) = 1.0;
      }
    }
    offset += static_cast<Eigen::Index>(L) * kAlphabetSize;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Ridge attribute predictors

struct AttributeModel {
  Matrix W;                  // D x A
  Vector bias;               // A
  std::vector<bool> degenerate;  // single-class training targets; constant predictor
  double lambda = 1.0;

  Eigen::Index input_dim() const { return W.rows(); }
  Eigen::Index attributes() const { return W.cols(); }
  Eigen::Index degenerate_count() const {
    return std::count(degenerate.begin(), degenerate.end(), true);
  }
};

/// Per-attribute ridge regression on {0,1} targets with an unpenalized bias.
/// Solved in the dual when D > N.
inline AttributeModel fit_attributes(const RowMatrix& S, const RowMatrix& T, double lambda) {
  if (S.rows() != T.rows()) throw DimensionMismatch("fit_attributes rows", S.rows(), T.rows());
  if (S.rows() < 1) throw InvalidInput("fit_attributes: no samples");
  if (!(lambda > 0)) throw InvalidInput("fit_attributes: lambda must be positive");
  const Eigen::Index N = S.rows(), D = S.cols(), A = T.cols();
  AttributeModel m;
  m.lambda = lambda;
  const Vector s_mean = S.colwise().mean().transpose();
  const Vector t_mean = T.colwise().mean().transpose();
  const RowMatrix Sc = S.rowwise() - s_mean.transpose();
  Matrix Tc = T.rowwise() - t_mean.transpose();
  m.degenerate.assign(A, false);
  for (Eigen::Index a = 0; a < A; ++a) {
    if ((T.col(a).array() == T(0, a)).all()) {
      m.degenerate[a] = true;
      Tc.col(a).setZero();
    }
  }
  if (D > N) {
    Matrix G = Sc * Sc.transpose();
    G.diagonal().array() += lambda;
    const Matrix alpha = G.llt().solve(Tc);
    m.W = Sc.transpose() * alpha;
  } else {
    Matrix G = Sc.transpose() * Sc;
    G.diagonal().array() += lambda;
    m.W = G.llt().solve(Sc.transpose() * Tc);
  }
  m.bias = t_mean - m.W.transpose() * s_mean;
  for (Eigen::Index a = 0; a < A; ++a) {
    if (m.degenerate[a]) {
      m.W.col(a).setZero();
      m.bias(a) = T(0, a);
    }
  }
  return m;
}

inline Vector attribute_scores(const Vector& s, const AttributeModel& m) {
  if (s.size() != m.input_dim()) throw DimensionMismatch("attribute_scores", m.input_dim(), s.size());
  return m.W.transpose() * s + m.bias;
}

inline RowMatrix attribute_scores(const RowMatrix& S, const AttributeModel& m) {
  if (S.cols() != m.input_dim()) throw DimensionMismatch("attribute_scores", m.input_dim(), S.cols());
  RowMatrix out = S * m.W;
  out.rowwise() += m.bias.transpose();
  return out;
}

/// Scores for each training row from a model fitted without that row's fold.
/// Folds are assigned round-robin.
inline RowMatrix out_of_fold_scores(const RowMatrix& S, const RowMatrix& T, double lambda, int folds) {
  if (folds < 2) throw InvalidInput("out_of_fold_scores: need at least two folds");
  const Eigen::Index N = S.rows();
  RowMatrix out(N, T.cols());
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> tr, te;
    for (Eigen::Index i = 0; i < N; ++i) (i % folds == f ? te : tr).push_back(i);
    if (te.empty()) continue;
    RowMatrix Str(static_cast<Eigen::Index>(tr.size()), S.cols()), Ttr(static_cast<Eigen::Index>(tr.size()), T.cols());
    for (std::size_t r = 0; r < tr.size(); ++r) {
      Str.row(static_cast<Eigen::Index>(r)) = S.row(tr[r]);
      Ttr.row(static_cast<Eigen::Index>(r)) = T.row(tr[r]);
    }
    const AttributeModel m = fit_attributes(Str, Ttr, lambda);
    for (Eigen::Index i : te) out.row(i) = attribute_scores(Vector(S.row(i).transpose()), m).transpose();
  }
  return out;
}

inline void quantize_f32(AttributeModel& m) {
  quantize_f32(m.W);
  quantize_f32(m.bias);
}

// ---------------------------------------------------------------------------
// Common subspace

struct CommonSubspace {
  CcaModel cca;  // x side: attribute scores, y side: string embeddings
  StringEmbeddingOptions strings;

  Eigen::Index dim() const { return cca.dim(); }

  Vector embed_image(const Vector& scores) const { return project(scores, cca); }
  Vector embed_string(std::string_view text) const { return project_y(string_embedding(text, strings), cca); }

  RowMatrix embed_images(const RowMatrix& scores) const {
    RowMatrix out(scores.rows(), dim());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) out.row(i) = embed_image(scores.row(i).transpose()).transpose();
    return out;
  }
};

inline CommonSubspace fit_common_subspace(const RowMatrix& scores, const RowMatrix& strings, Eigen::Index dim,
                                          double eta, const StringEmbeddingOptions& string_opts = {}) {
  CommonSubspace cs;
  cs.strings = string_opts;
  cs.cca = fit_cca(scores, strings, CcaOptions{dim, eta, true});
  return cs;
}

}  // namespace midfeat
