#include "midfeat/wordrep.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace midfeat;
using namespace midfeat::testing;

namespace {

Eigen::Index slot(int level_offset, int bin, char c) { return level_offset + bin * kAlphabetSize + *char_index(c); }

// Real-valued span rule, evaluated independently of the integer arithmetic.
Vector span_oracle(const std::string& s, const std::vector<int>& levels) {
  Vector b = Vector::Zero(string_embedding_dim(levels));
  const double n = static_cast<double>(s.size());
  Eigen::Index off = 0;
  for (int L : levels) {
    for (size_t i = 0; i < s.size(); ++i)
      for (int j = 0; j < L; ++j) {
        const double lo = std::max(i / n, static_cast<double>(j) / L);
        const double hi = std::min((i + 1) / n, static_cast<double>(j + 1) / L);
        if (hi - lo >= 0.5 / n - 1e-12) b(off + j * kAlphabetSize + *char_index(s[i])) = 1.0;
      }
    off += L * kAlphabetSize;
  }
  return b;
}

std::string random_word(Rng& rng) {
  static const std::string chars = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::uniform_int_distribution<int> len(1, 12), pick(0, static_cast<int>(chars.size()) - 1);
  std::string w(static_cast<size_t>(len(rng)), 'a');
  for (auto& c : w) c = chars[static_cast<size_t>(pick(rng))];
  return w;
}

}  // namespace

TEST(StringEmbedding, Examples) {
  StringEmbeddingOptions one;
  one.levels = {1};
  const Vector a = string_embedding("A", one);
  EXPECT_EQ(a.sum(), 1.0);
  EXPECT_EQ(a(*char_index('a')), 1.0);  // folded
  one.case_sensitive = true;
  EXPECT_EQ(string_embedding("A", one)(*char_index('A')), 1.0);
  one.case_sensitive = false;
  EXPECT_EQ(string_embedding("aa", one).sum(), 1.0);

  StringEmbeddingOptions two;
  two.levels = {2};
  const Vector ab = string_embedding("ab", two);
  EXPECT_EQ(ab.sum(), 2.0);
  EXPECT_EQ(ab(slot(0, 0, 'a')), 1.0);
  EXPECT_EQ(ab(slot(0, 1, 'b')), 1.0);
  // A middle character split evenly lands in both bins.
  const Vector abc = string_embedding("abc", two);
  EXPECT_EQ(abc(slot(0, 0, 'b')), 1.0);
  EXPECT_EQ(abc(slot(0, 1, 'b')), 1.0);
}

TEST(StringEmbedding, DimensionAndErrors) {
  EXPECT_EQ(string_embedding_dim({1, 2, 3, 4}), 620);
  EXPECT_EQ(string_embedding("hotel").size(), 620);
  EXPECT_THROW(string_embedding(""), InvalidInput);
  EXPECT_THROW(string_embedding("a b"), InvalidInput);
  EXPECT_EQ(string_embedding("Hotel"), string_embedding("hOTEL"));
}

TEST(StringEmbedding, MatchesSpanOracle) {
  Rng rng(1);
  for (int t = 0; t < 500; ++t) {
    const std::string w = random_word(rng);
    EXPECT_EQ(string_embedding(w), span_oracle(w, {1, 2, 3, 4})) << w;
  }
}

TEST(FitAttributes, NormalEquationOracle) {
  Rng rng(2);
  for (Eigen::Index D : {5, 15}) {  // primal and dual paths
    const RowMatrix S = random_normal(10, D, rng);
    RowMatrix T(10, 3);
    for (int i = 0; i < 10; ++i) T.row(i) << (i % 2), (i % 3 == 0), (S(i, 0) > 0);
    const double lambda = 0.7;
    const AttributeModel m = fit_attributes(S, T, lambda);
    // Augmented system with an unpenalized bias.
    Matrix A = Matrix::Zero(D + 1, D + 1);
    A.topLeftCorner(D, D) = S.transpose() * S;
    A.topLeftCorner(D, D).diagonal().array() += lambda;
    A.topRightCorner(D, 1) = S.colwise().sum().transpose();
    A.bottomLeftCorner(1, D) = S.colwise().sum();
    A(D, D) = 10;
    for (int a = 0; a < 3; ++a) {
      Vector rhs(D + 1);
      rhs.head(D) = S.transpose() * T.col(a);
      rhs(D) = T.col(a).sum();
      const Vector sol = A.fullPivLu().solve(rhs);
      EXPECT_LT((m.W.col(a) - sol.head(D)).cwiseAbs().maxCoeff(), 1e-6);
      EXPECT_NEAR(m.bias(a), sol(D), 1e-6);
    }
    const RowMatrix scores = attribute_scores(S, m);
    for (int i = 0; i < 10; ++i)
      EXPECT_LT((scores.row(i).transpose() - attribute_scores(Vector(S.row(i).transpose()), m)).norm(), 1e-12);
  }
}

TEST(FitAttributes, LargeLambdaGivesBias) {
  Rng rng(3);
  const RowMatrix S = random_normal(20, 4, rng);
  RowMatrix T(20, 2);
  for (int i = 0; i < 20; ++i) T.row(i) << (i < 5), (i % 2);
  const AttributeModel m = fit_attributes(S, T, 1e12);
  EXPECT_LT(m.W.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(m.bias(0), 0.25, 1e-9);
  EXPECT_NEAR(m.bias(1), 0.5, 1e-9);
}

TEST(FitAttributes, SeparableDataAndDegenerateAttributes) {
  Rng rng(4);
  const Eigen::Index N = 200, A = 12;
  RowMatrix T(N, A + 1);
  std::bernoulli_distribution bit(0.4);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index a = 0; a < A; ++a) T(i, a) = bit(rng);
    T(i, A) = 1.0;  // single class
  }
  RowMatrix S = random_normal(N, 40, rng, 0.05);
  S.leftCols(A) += 2.0 * T.leftCols(A);
  const AttributeModel m = fit_attributes(S, T, 1e-2);
  EXPECT_TRUE(m.degenerate[A]);
  EXPECT_EQ(m.degenerate_count(), 1);
  EXPECT_EQ(m.W.col(A).norm(), 0.0);
  EXPECT_EQ(m.bias(A), 1.0);
  const RowMatrix sc = attribute_scores(S, m);
  double correct = 0;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index a = 0; a < A; ++a) correct += ((sc(i, a) > 0.5) == (T(i, a) > 0.5));
  EXPECT_GE(correct / (N * A), 0.99);
  EXPECT_THROW(fit_attributes(S, T, 0.0), InvalidInput);
  EXPECT_THROW(fit_attributes(S, RowMatrix(T.topRows(10)), 1.0), DimensionMismatch);
}

TEST(OutOfFold, MatchesExplicitFoldModels) {
  Rng rng(5);
  const RowMatrix S = random_normal(23, 6, rng);
  RowMatrix T = (random_normal(23, 3, rng).array() > 0).cast<double>();
  const RowMatrix oof = out_of_fold_scores(S, T, 0.5, 5);
  for (int f = 0; f < 5; ++f) {
    std::vector<Eigen::Index> tr;
    for (Eigen::Index i = 0; i < 23; ++i)
      if (i % 5 != f) tr.push_back(i);
    const AttributeModel m =
        fit_attributes(S(tr, Eigen::all), T(tr, Eigen::all), 0.5);
    for (Eigen::Index i = f; i < 23; i += 5)
      EXPECT_LT((oof.row(i).transpose() - attribute_scores(Vector(S.row(i).transpose()), m)).norm(), 1e-12);
  }
  EXPECT_THROW(out_of_fold_scores(S, T, 0.5, 1), InvalidInput);
}

TEST(GlobalSignature, MatchesPerCellOracle) {
  Rng rng(6);
  const int W = 180, H = 60;
  MidLevelSet f;
  f.blocks = enumerate_blocks(W, H, {16, 32}, 8);
  f.v = random_normal(static_cast<Eigen::Index>(f.blocks.size()), 6, rng);
  for (Eigen::Index i = 0; i < f.v.rows(); ++i) f.v.row(i).normalize();
  f.v.row(3).setZero();  // descriptor-free block
  const GmmModel g = random_gmm(3, 8, rng);
  const WordSignature sig = global_signature(f, g, W, H, kPyramid2x6, SignatureSource::kSupervisedMidlevel);
  ASSERT_EQ(sig.v.size(), fv_dim(8, 3, 12));
  EXPECT_NEAR(sig.v.norm(), 1.0, 1e-12);

  Vector raw = Vector::Zero(sig.v.size());
  const Eigen::Index cd = fv_dim(8, 3);
  for (size_t b = 0; b < f.blocks.size(); ++b) {
    if (b == 3) continue;
    const double cx = f.blocks[b].center_x(), cy = f.blocks[b].center_y();
    const int col = std::min(5, static_cast<int>(cx / (W / 6.0)));
    const int row = std::min(1, static_cast<int>(cy / (H / 2.0)));
    RowMatrix x(1, 8);
    x << f.v.row(static_cast<Eigen::Index>(b)), cx / W, cy / H;
    raw.segment((row * 6 + col) * cd, cd) += encode_fv(x, g).v;
  }
  FisherVector fv{raw, FvNorm::kRawSum, kPyramid2x6};
  EXPECT_LT((power_l2_normalize(fv).v - sig.v).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(global_signature(f, random_gmm(3, 7, rng), W, H, kPyramid2x6, SignatureSource::kSupervisedMidlevel),
               DimensionMismatch);
}

TEST(GlobalSignature, ConfiguredDimensions) {
  EXPECT_EQ(fv_dim(62 + 2, 16, kPyramid2x6.cells()), 24576);
  Rng rng(7);
  MidLevelSet empty;
  empty.v.resize(0, 62);
  const WordSignature sig = global_signature(empty, random_gmm(16, 64, rng), 100, 60, kPyramid2x6,
                                             SignatureSource::kUnsupervisedMidlevel);
  EXPECT_EQ(sig.v.size(), 24576);
  EXPECT_EQ(sig.v.norm(), 0.0);
}

TEST(ConcatSignatures, DimsNormAndCosine) {
  Rng rng(8);
  WordSignature a{random_normal(50, 1, rng).col(0).normalized(), SignatureSource::kSiftBaseline};
  WordSignature b{random_normal(50, 1, rng).col(0).normalized(), SignatureSource::kSiftBaseline};
  const WordSignature aa = concat_signatures(a, a), bb = concat_signatures(b, b);
  EXPECT_EQ(aa.v.size(), 100);
  EXPECT_EQ(aa.source, SignatureSource::kConcatenated);
  EXPECT_NEAR(aa.v.norm(), 1.0, 1e-12);
  EXPECT_NEAR(aa.v.dot(bb.v), a.v.dot(b.v), 1e-12);
  WordSignature big{Vector::Zero(24576), SignatureSource::kSiftBaseline};
  big.v(0) = 1;
  EXPECT_EQ(concat_signatures(big, big).v.size(), 49152);
}

TEST(CommonSubspace, RanksMatchingTranscriptions) {
  Rng rng(9);
  std::vector<std::string> vocab;
  for (int i = 0; i < 120; ++i) vocab.push_back(random_word(rng));
  const StringEmbeddingOptions so;
  auto make = [&](int per, RowMatrix* scores, RowMatrix* strings, std::vector<std::string>* texts) {
    const Eigen::Index n = static_cast<Eigen::Index>(vocab.size()) * per;
    *scores = RowMatrix(n, 620);
    *strings = RowMatrix(n, 620);
    Eigen::Index r = 0;
    for (int p = 0; p < per; ++p)
      for (const auto& w : vocab) {
        const Vector e = string_embedding(w, so);
        strings->row(r) = e.transpose();
        scores->row(r) = e.transpose() + random_normal(1, 620, rng, 0.3);
        texts->push_back(w);
        ++r;
      }
  };
  RowMatrix S, Y, St, Yt;
  std::vector<std::string> texts, test_texts;
  make(4, &S, &Y, &texts);
  make(1, &St, &Yt, &test_texts);
  const CommonSubspace cs = fit_common_subspace(S, Y, 96, 1e-3, so);
  EXPECT_EQ(cs.dim(), 96);
  for (Eigen::Index k = 1; k < 96; ++k) EXPECT_GE(cs.cca.correlations(k - 1), cs.cca.correlations(k));
  const Vector hotel = cs.embed_string("hotel");
  EXPECT_NEAR(hotel.dot(cs.embed_string("hotel")), 1.0, 1e-12);
  EXPECT_NEAR(hotel.norm(), 1.0, 1e-12);
  const RowMatrix img = cs.embed_images(St);
  RowMatrix words(static_cast<Eigen::Index>(vocab.size()), 96);
  for (size_t i = 0; i < vocab.size(); ++i) words.row(static_cast<Eigen::Index>(i)) = cs.embed_string(vocab[i]).transpose();
  int above = 0;
  for (Eigen::Index i = 0; i < img.rows(); ++i) {
    const Vector sims = words * img.row(i).transpose();
    std::vector<double> others;
    for (Eigen::Index j = 0; j < sims.size(); ++j)
      if (j != i) others.push_back(sims(j));
    std::nth_element(others.begin(), others.begin() + others.size() / 2, others.end());
    above += sims(i) > others[others.size() / 2];
  }
  EXPECT_GE(above, static_cast<int>(0.9 * img.rows()));
}
