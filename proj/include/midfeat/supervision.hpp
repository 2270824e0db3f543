#pragma once

// Training-block sampling and character-region overlap labels.

#include "midfeat/corpus.hpp"
#include "midfeat/fisher.hpp"

#include <functional>

namespace midfeat {

/// Label width for an R x R character-region split.
constexpr Eigen::Index label_dim(int R) { return static_cast<Eigen::Index>(R) * R * kAlphabetSize; }

/// `S` square blocks with side drawn uniformly from the sizes that fit and a
/// uniform top-left corner.
inline std::vector<BBox> sample_blocks(int width, int height, int S, const std::vector<int>& sizes, Rng& rng) {
  if (S < 1) throw InvalidInput("sample_blocks: S must be >= 1");
  std::vector<int> fitting;
  for (int s : sizes)
    if (s >= 1 && s <= width && s <= height) fitting.push_back(s);
  if (fitting.empty()) throw InvalidInput("sample_blocks: no block size fits the image");
  std::uniform_int_distribution<std::size_t> pick_size(0, fitting.size() - 1);
  std::vector<BBox> out;
  out.reserve(S);
  for (int i = 0; i < S; ++i) {
    const int s = fitting[pick_size(rng)];
    std::uniform_int_distribution<int> px(0, width - s), py(0, height - s);
    const int x = px(rng);
    const int y = py(rng);
    out.push_back({x, y, s, s});
  }
  return out;
}

namespace detail {

inline double interval_overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

}  // namespace detail

/// Overlap label: entry r*62 + c holds the largest covered fraction of region
/// r (row-major R x R split, real-valued boundaries) over the characters
/// labeled c.
inline Vector block_label(const BBox& block, const std::vector<CharAnnotation>& chars, int R) {
  if (R < 1) throw InvalidInput("block_label: R must be >= 1");
  Vector y = Vector::Zero(label_dim(R));
  for (const auto& ch : chars) {
    const auto c = char_index(ch.label);
    if (!c) throw InvalidInput(std::string("block_label: label outside the alphabet: ") + ch.label);
    const BBox& b = ch.bbox;
    if (b.w <= 0 || b.h <= 0) continue;
    for (int ry = 0; ry < R; ++ry) {
      const double y0 = b.y + b.h * static_cast<double>(ry) / R;
      const double y1 = b.y + b.h * static_cast<double>(ry + 1) / R;
      const double oy = detail::interval_overlap(block.y, block.bottom(), y0, y1);
      if (oy == 0) continue;
      for (int rx = 0; rx < R; ++rx) {
        const double x0 = b.x + b.w * static_cast<double>(rx) / R;
        const double x1 = b.x + b.w * static_cast<double>(rx + 1) / R;
        const double ox = detail::interval_overlap(block.x, block.right(), x0, x1);
        if (ox == 0) continue;
        const double frac = (ox * oy) / ((x1 - x0) * (y1 - y0));
        double& dst = y((ry * R + rx) * kAlphabetSize + *c);
        dst = std::max(dst, frac);
      }
    }
  }
  return y;
}

struct BlockSamplingOptions {
  int blocks_per_image = 150;
  std::vector<int> sizes{16, 24, 32, 40, 48};
  std::uint64_t seed = 7;
};

/// Per-image block generator; independent of the visit order of other images.
inline Rng image_rng(std::uint64_t seed, std::size_t image_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(image_index), 0x5b10c5u};
  return Rng(seq);
}

/// One image's training blocks: l2-normalized 2x2 pyramid FVs (rows of X)
/// and the sampled boxes.
struct ImageBlocks {
  std::vector<BBox> boxes;
  RowMatrix x;  // S x D_v
};

inline ImageBlocks image_training_blocks(const EncodedDescriptors& ed, const FvEncoder& enc, int width, int height,
                                         const BlockSamplingOptions& opts, Rng& rng) {
  ImageBlocks out;
  out.boxes = sample_blocks(width, height, opts.blocks_per_image, opts.sizes, rng);
  const Eigen::Index D = enc.fv_size() * kPyramid2x2.cells();
  out.x.resize(static_cast<Eigen::Index>(out.boxes.size()), D);
  for (std::size_t i = 0; i < out.boxes.size(); ++i) {
    double* row = out.x.row(static_cast<Eigen::Index>(i)).data();
    block_fv(ed, enc, out.boxes[i], kPyramid2x2, row);
    Eigen::Map<Vector> v(row, D);
    l2_normalize_inplace(v);
  }
  return out;
}

/// Paired views X (block FVs) and Y (labels), row-aligned.
struct TrainingViews {
  RowMatrix X;
  RowMatrix Y;
};

/// Callback receives one image's blocks plus one label row per block and
/// per requested R.
using TrainingBlockVisitor =
    std::function<void(std::size_t image, const ImageBlocks& blocks, const std::vector<RowMatrix>& labels)>;

/// Streams training blocks in corpus order, then sample order. `descriptors`
/// supplies each image's encoded descriptors.
inline void visit_training_blocks(const std::vector<const CorpusEntry*>& entries,
                                  const std::function<EncodedDescriptors(std::size_t)>& descriptors,
                                  const FvEncoder& enc, const std::vector<int>& Rs, const BlockSamplingOptions& opts,
                                  const TrainingBlockVisitor& visit) {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = *entries[i];
    Rng rng = image_rng(opts.seed, i);
    const EncodedDescriptors ed = descriptors(i);
    const ImageBlocks blocks =
        image_training_blocks(ed, enc, e.word.image.width(), e.word.image.height(), opts, rng);
    std::vector<RowMatrix> labels;
    for (int R : Rs) {
      RowMatrix Y(static_cast<Eigen::Index>(blocks.boxes.size()), label_dim(R));
      for (std::size_t b = 0; b < blocks.boxes.size(); ++b)
        Y.row(static_cast<Eigen::Index>(b)) = block_label(blocks.boxes[b], e.chars, R).transpose();
      labels.push_back(std::move(Y));
    }
    visit(i, blocks, labels);
  }
}

/// Materialized views; meant for small corpora (X is NS x D_v).
inline TrainingViews build_training_views(const Corpus& corpus, const PcaModel& pca, const GmmModel& block_gmm, int R,
                                          const BlockSamplingOptions& opts,
                                          const DenseSiftParams& sift = DenseSiftParams{}) {
  std::vector<const CorpusEntry*> entries;
  for (const auto& e : corpus.entries) entries.push_back(&e);
  const FvEncoder enc(block_gmm);
  TrainingViews views;
  const Eigen::Index D = enc.fv_size() * kPyramid2x2.cells();
  views.X.resize(0, D);
  views.Y.resize(0, label_dim(R));
  std::vector<RowMatrix> xs, ys;
  visit_training_blocks(
      entries,
      [&](std::size_t i) { return encode_descriptors(extract_dense(entries[i]->word.image, sift), pca, block_gmm); },
      enc, {R}, opts, [&](std::size_t, const ImageBlocks& b, const std::vector<RowMatrix>& labels) {
        xs.push_back(b.x);
        ys.push_back(labels[0]);
      });
  Eigen::Index n = 0;
  for (const auto& x : xs) n += x.rows();
  views.X.resize(n, D);
  views.Y.resize(n, label_dim(R));
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    views.X.middleRows(r, xs[i].rows()) = xs[i];
    views.Y.middleRows(r, ys[i].rows()) = ys[i];
    r += xs[i].rows();
  }
  return views;
}

}  // namespace midfeat
