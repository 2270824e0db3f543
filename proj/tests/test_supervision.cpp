#include "midfeat/supervision.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace midfeat;
using namespace midfeat::testing;

namespace {

double entry(const Vector& y, int region, char c) { return y(region * kAlphabetSize + *char_index(c)); }

}  // namespace

TEST(SampleBlocks, InBoundsSquares) {
  Rng rng(1);
  const auto blocks = sample_blocks(300, 120, 150, {16, 24, 32, 40, 48}, rng);
  ASSERT_EQ(blocks.size(), 150u);
  for (const auto& b : blocks) {
    EXPECT_EQ(b.w, b.h);
    EXPECT_TRUE(b.inside(300, 120));
  }
}

TEST(SampleBlocks, UniquePlacementAndDeterminism) {
  Rng rng(2);
  for (const auto& b : sample_blocks(32, 32, 20, {32, 48}, rng)) EXPECT_EQ(b, (BBox{0, 0, 32, 32}));
  Rng a(3), b(3);
  EXPECT_EQ(sample_blocks(200, 90, 50, {16, 32}, a), sample_blocks(200, 90, 50, {16, 32}, b));
  Rng c(4);
  EXPECT_THROW(sample_blocks(20, 20, 5, {24, 32}, c), InvalidInput);
  EXPECT_THROW(sample_blocks(60, 60, 0, {24}, c), InvalidInput);
}

TEST(SampleBlocks, UsesEveryFittingSize) {
  Rng rng(5);
  std::map<int, int> seen;
  for (const auto& b : sample_blocks(200, 40, 2000, {16, 24, 32, 40, 48}, rng)) ++seen[b.w];
  EXPECT_EQ(seen.size(), 4u);  // 48 does not fit
  for (auto [s, n] : seen) EXPECT_GT(n, 400) << s;
}

TEST(BlockLabel, NoOverlapIsZero) {
  const std::vector<CharAnnotation> chars = {{'U', {20, 0, 20, 30}}};
  EXPECT_EQ(block_label({50, 0, 16, 16}, chars, 2), Vector::Zero(4 * 62));
  EXPECT_EQ(block_label({0, 0, 16, 16}, {}, 1), Vector::Zero(62));
  EXPECT_THROW(block_label({0, 0, 16, 16}, chars, 0), InvalidInput);
}

TEST(BlockLabel, HalfCoverage) {
  const std::vector<CharAnnotation> chars = {{'U', {20, 0, 20, 30}}};
  const Vector y1 = block_label({20, 0, 20, 15}, chars, 1);
  EXPECT_DOUBLE_EQ(entry(y1, 0, 'U'), 0.5);
  EXPECT_DOUBLE_EQ(y1.sum(), 0.5);
  const Vector y2 = block_label({20, 0, 20, 15}, chars, 2);
  EXPECT_DOUBLE_EQ(entry(y2, 0, 'U'), 1.0);
  EXPECT_DOUBLE_EQ(entry(y2, 1, 'U'), 1.0);
  EXPECT_DOUBLE_EQ(entry(y2, 2, 'U'), 0.0);
  EXPECT_DOUBLE_EQ(entry(y2, 3, 'U'), 0.0);
}

TEST(BlockLabel, MaxOverRepeatedCharacters) {
  const std::vector<CharAnnotation> chars = {{'A', {0, 0, 10, 10}}, {'A', {20, 0, 10, 10}}};
  const Vector y = block_label({7, 0, 21, 10}, chars, 1);
  EXPECT_DOUBLE_EQ(entry(y, 0, 'A'), 0.8);
  EXPECT_DOUBLE_EQ(y.sum(), 0.8);
}

TEST(BlockLabel, MatchesPixelCountingOracle) {
  Rng rng(6);
  for (int t = 0; t < 2000; ++t) {
    const auto [block, chars] = random_label_case(rng);
    const int R = 1 + t % 4;
    const Vector y = block_label(block, chars, R);
    const Vector o = pixel_count_label(block, chars, R);
    for (Eigen::Index i = 0; i < y.size(); ++i) ASSERT_NEAR(y(i), o(i), 1e-9 * std::max(1.0, o(i))) << t;
  }
}

TEST(BlockLabel, RangeAndFullCoverage) {
  Rng rng(7);
  for (int t = 0; t < 500; ++t) {
    const auto [block, chars] = random_label_case(rng);
    const int R = 1 + t % 4;
    const Vector y = block_label(block, chars, R);
    EXPECT_GE(y.minCoeff(), 0.0);
    EXPECT_LE(y.maxCoeff(), 1.0);
    for (const auto& ch : chars) {
      const bool inside = ch.bbox.x >= block.x && ch.bbox.right() <= block.right() && ch.bbox.y >= block.y &&
                          ch.bbox.bottom() <= block.bottom();
      if (inside) {
        for (int r = 0; r < R * R; ++r) EXPECT_EQ(entry(y, r, ch.label), 1.0);
      }
    }
  }
}

TEST(BlockLabel, MonotoneUnderEnlargement) {
  Rng rng(8);
  std::uniform_int_distribution<int> grow(0, 6);
  for (int t = 0; t < 500; ++t) {
    const auto [block, chars] = random_label_case(rng);
    const int R = 1 + t % 4;
    const int l = grow(rng), u = grow(rng);
    const BBox big{block.x - l, block.y - u, block.w + l + grow(rng), block.h + u + grow(rng)};
    const Vector small_y = block_label(block, chars, R), big_y = block_label(big, chars, R);
    EXPECT_TRUE(((big_y - small_y).array() >= -1e-15).all());
  }
}

TEST(TrainingViews, RowsAlignedAndNormalized) {
  Rng rng(9);
  SynthOptions so;
  so.per_word = 1;
  so.learn_per_word = 1;
  Corpus corpus = synth_corpus({"BUS", "hotel", "Taxi"}, so, rng);
  corpus = normalize_height(corpus, 60);
  DenseSiftParams sift;
  sift.scales = {16};
  sift.step = 4;
  RowMatrix all(0, 128);
  for (const auto& e : corpus.entries) {
    const auto ds = extract_dense(e.word.image, sift);
    all.conservativeResize(all.rows() + ds.size(), 128);
    all.bottomRows(ds.size()) = ds.values;
  }
  const PcaModel pca = fit_pca(all, 6);
  const GmmModel gmm = fit_gmm(apply_pca(all, pca), 2, 3);
  BlockSamplingOptions opts;
  opts.blocks_per_image = 25;
  const auto views = build_training_views(corpus, pca, gmm, 2, opts, sift);
  ASSERT_EQ(views.X.rows(), 75);
  ASSERT_EQ(views.Y.rows(), 75);
  EXPECT_EQ(views.X.cols(), fv_dim(6, 2, 4));
  EXPECT_EQ(views.Y.cols(), 4 * 62);
  for (Eigen::Index i = 0; i < 75; ++i) {
    const double n = views.X.row(i).norm();
    EXPECT_TRUE(n == 0.0 || std::abs(n - 1.0) < 1e-12);
  }
  // The label rows correspond to the sampled boxes of each image in order.
  for (std::size_t img = 0; img < 3; ++img) {
    Rng r = image_rng(opts.seed, img);
    const auto& e = corpus.entries[img];
    const auto boxes = sample_blocks(e.word.image.width(), e.word.image.height(), 25, opts.sizes, r);
    for (int b = 0; b < 25; ++b)
      EXPECT_EQ(views.Y.row(static_cast<Eigen::Index>(img) * 25 + b).transpose(), block_label(boxes[b], e.chars, 2));
  }
}
