#pragma once

// Retrieval and recognition metrics.

#include "midfeat/core.hpp"

#include <functional>
#include <map>
#include <numeric>

namespace midfeat {

/// Mean over relevant ranks r of precision at r. No relevant item gives nullopt
/// (the query is excluded, not scored).
inline std::optional<double> average_precision(const std::vector<bool>& relevant_in_rank_order) {
  double hits = 0, sum = 0;
  for (std::size_t r = 0; r < relevant_in_rank_order.size(); ++r) {
    if (!relevant_in_rank_order[r]) continue;
    hits += 1;
    sum += hits / static_cast<double>(r + 1);
  }
  if (hits == 0) return std::nullopt;
  return sum / hits;
}

struct RankedResult {
  std::string query;
  std::vector<std::string> ids;  // candidates, best first
  std::vector<double> scores;
  std::vector<bool> relevant;
};

/// Order candidates by descending score; ties by ascending id.
inline std::vector<std::size_t> rank_order(const std::vector<double>& scores, const std::vector<std::string>& ids) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  return order;
}

struct RetrievalScore {
  double map = 0;
  double p_at_1 = 0;
  std::size_t queries = 0;  // retained
  std::size_t skipped = 0;  // no relevant item
};

inline std::string relevance_key(std::string_view text, bool case_sensitive) {
  return case_sensitive ? std::string(text) : fold_case(text);
}

/// Mean AP and P@1 over ranked lists; lists without any relevant item are skipped.
inline RetrievalScore summarize(const std::vector<RankedResult>& results) {
  RetrievalScore s;
  for (const auto& r : results) {
    const auto ap = average_precision(r.relevant);
    if (!ap) {
      ++s.skipped;
      continue;
    }
    ++s.queries;
    s.map += *ap;
    s.p_at_1 += r.relevant.front() ? 1.0 : 0.0;
  }
  if (s.queries > 0) {
    s.map /= static_cast<double>(s.queries);
    s.p_at_1 /= static_cast<double>(s.queries);
  }
  return s;
}

/// Leave-one-out query-by-example with dot-product similarity (rows are unit
/// vectors, so this is the cosine).
inline RetrievalScore qbe_eval(const RowMatrix& embeddings, const std::vector<std::string>& texts,
                               const std::vector<std::string>& ids, bool case_sensitive = false,
                               std::vector<RankedResult>* details = nullptr) {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (n == 0) throw InvalidInput("qbe_eval: empty test set");
  if (texts.size() != n || ids.size() != n) throw DimensionMismatch("qbe_eval", static_cast<long>(n), static_cast<long>(texts.size()));
  const Matrix sim = embeddings * embeddings.transpose();
  std::vector<RankedResult> results;
  results.reserve(n);
  for (std::size_t q = 0; q < n; ++q) {
    const std::string key = relevance_key(texts[q], case_sensitive);
    std::vector<double> scores;
    std::vector<std::string> cand;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == q) continue;
      scores.push_back(sim(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(i)));
      cand.push_back(ids[i]);
      idx.push_back(i);
    }
    RankedResult r;
    r.query = ids[q];
    for (std::size_t o : rank_order(scores, cand)) {
      r.ids.push_back(cand[o]);
      r.scores.push_back(scores[o]);
      r.relevant.push_back(relevance_key(texts[idx[o]], case_sensitive) == key);
    }
    results.push_back(std::move(r));
  }
  const auto s = summarize(results);
  if (details) *details = std::move(results);
  return s;
}

/// Query-by-string: each unique (relevance-keyed) transcription queried once
/// against all images.
inline RetrievalScore qbs_eval(const std::function<Vector(const std::string&)>& embed_string,
                               const RowMatrix& image_embeddings, const std::vector<std::string>& texts,
                               const std::vector<std::string>& ids, bool case_sensitive = false,
                               std::vector<RankedResult>* details = nullptr) {
  const auto n = static_cast<std::size_t>(image_embeddings.rows());
  if (n == 0) throw InvalidInput("qbs_eval: empty test set");
  if (texts.size() != n || ids.size() != n) throw DimensionMismatch("qbs_eval", static_cast<long>(n), static_cast<long>(texts.size()));
  std::map<std::string, std::string> queries;  // key -> first transcription seen
  for (const auto& t : texts) queries.emplace(relevance_key(t, case_sensitive), t);
  std::vector<RankedResult> results;
  for (const auto& [key, text] : queries) {
    const Vector e = embed_string(case_sensitive ? text : key);
    const Vector sims = image_embeddings * e;
    std::vector<double> scores(sims.data(), sims.data() + sims.size());
    RankedResult r;
    r.query = key;
    for (std::size_t o : rank_order(scores, ids)) {
      r.ids.push_back(ids[o]);
      r.scores.push_back(scores[o]);
      r.relevant.push_back(relevance_key(texts[o], case_sensitive) == key);
    }
    results.push_back(std::move(r));
  }
  const auto s = summarize(results);
  if (details) *details = std::move(results);
  return s;
}

/// Lexicon-constrained recognition: argmax similarity over each image's
/// lexicon, ties broken lexicographically. Returns P@1.
inline double recognition_eval(const RowMatrix& image_embeddings, const std::vector<std::string>& truths,
                               const std::vector<std::vector<std::string>>& lexicons,
                               const std::function<Vector(const std::string&)>& embed_string,
                               bool case_sensitive = false, std::vector<std::string>* predictions = nullptr) {
  const auto n = static_cast<std::size_t>(image_embeddings.rows());
  if (n == 0) throw InvalidInput("recognition_eval: empty test set");
  if (truths.size() != n || lexicons.size() != n) throw DimensionMismatch("recognition_eval", static_cast<long>(n), static_cast<long>(truths.size()));
  std::map<std::string, Vector> cache;
  auto embedded = [&](const std::string& w) -> const Vector& {
    auto it = cache.find(w);
    if (it == cache.end()) it = cache.emplace(w, embed_string(w)).first;
    return it->second;
  };
  double correct = 0;
  if (predictions) predictions->clear();
  for (std::size_t i = 0; i < n; ++i) {
    const std::string truth = relevance_key(truths[i], case_sensitive);
    bool has_truth = false;
    std::string best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (const auto& w : lexicons[i]) {
      const std::string key = relevance_key(w, case_sensitive);
      has_truth = has_truth || key == truth;
      const double s = image_embeddings.row(static_cast<Eigen::Index>(i)).dot(embedded(key));
      if (s > best_score || (s == best_score && key < best)) {
        best_score = s;
        best = key;
      }
    }
    if (!has_truth) throw ProtocolError("recognition_eval: lexicon of image " + std::to_string(i) + " lacks its ground truth '" + truths[i] + "'");
    if (best == truth) correct += 1;
    if (predictions) predictions->push_back(best);
  }
  return correct / static_cast<double>(n);
}

}  // namespace midfeat
