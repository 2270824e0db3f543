#include "midfeat/experiment.hpp"

#include "midfeat/supervision.hpp"

#include <chrono>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

namespace midfeat {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

DenseSiftParams sift_params(const ExperimentConfig& cfg) {
  DenseSiftParams p;
  p.scales = cfg.sift_scales;
  p.step = cfg.sift_step;
  return p;
}

GmmOptions gmm_options(const ExperimentConfig& cfg) {
  GmmOptions o;
  o.iterations = cfg.gmm_iterations;
  o.restarts = cfg.gmm_restarts;
  o.tolerance = cfg.gmm_tolerance;
  return o;
}

template <typename T>
const T& require(const std::optional<T>& v, const char* what, Stage stage) {
  if (!v) throw StageError(stage_name(stage), std::string("requires ") + what + " (run the earlier stage first)");
  return *v;
}

/// Uniform subsample of rows without replacement (all rows when n >= rows).
RowMatrix sample_rows(const RowMatrix& x, Eigen::Index n, Rng& rng) {
  if (n >= x.rows()) return x;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < n; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, x.rows() - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  std::sort(idx.begin(), idx.begin() + n);
  RowMatrix out(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = x.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

RowMatrix stack_rows(const std::vector<RowMatrix>& parts, Eigen::Index cols) {
  Eigen::Index n = 0;
  for (const auto& p : parts) n += p.rows();
  RowMatrix out(n, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

/// Shared X moments plus one label view per R.
struct BlockMoments {
  Matrix sxx;
  Vector sx;
  std::vector<Matrix> sxy, syy;
  std::vector<Vector> sy;
  double n = 0;

  BlockMoments(Eigen::Index dx, const std::vector<int>& Rs) : sxx(Matrix::Zero(dx, dx)), sx(Vector::Zero(dx)) {
    for (int R : Rs) {
      sxy.push_back(Matrix::Zero(dx, label_dim(R)));
      syy.push_back(Matrix::Zero(label_dim(R), label_dim(R)));
      sy.push_back(Vector::Zero(label_dim(R)));
    }
  }

  void add(const RowMatrix& X, const std::vector<RowMatrix>& Ys) {
    sxx.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
    sx += X.colwise().sum().transpose();
    for (std::size_t r = 0; r < Ys.size(); ++r) {
      sxy[r].noalias() += X.transpose() * Ys[r];
      syy[r].selfadjointView<Eigen::Lower>().rankUpdate(Ys[r].transpose());
      sy[r] += Ys[r].colwise().sum().transpose();
    }
    n += static_cast<double>(X.rows());
  }

  Matrix full_sxx() const { return sxx.selfadjointView<Eigen::Lower>(); }
  Matrix full_syy(std::size_t r) const { return syy[r].selfadjointView<Eigen::Lower>(); }
};

std::vector<const CorpusEntry*> entries_of(const Corpus& corpus, Split s) {
  auto out = corpus.subset(s);
  if (out.empty()) throw InvalidInput(std::string("corpus has no ") + std::string(split_name(s)) + " images");
  return out;
}

RowMatrix string_targets(const std::vector<std::string>& texts, const StringEmbeddingOptions& opts) {
  RowMatrix T(static_cast<Eigen::Index>(texts.size()), string_embedding_dim(opts.levels));
  for (std::size_t i = 0; i < texts.size(); ++i) T.row(static_cast<Eigen::Index>(i)) = string_embedding(texts[i], opts).transpose();
  return T;
}

StringEmbeddingOptions string_options(const ExperimentConfig& cfg) {
  StringEmbeddingOptions o;
  o.levels = cfg.levels;
  o.case_sensitive = cfg.case_sensitive;
  return o;
}

}  // namespace

// ---------------------------------------------------------------------------

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kPca: return "pca";
    case Stage::kGmmBlock: return "gmm-block";
    case Stage::kEmbed: return "embed";
    case Stage::kGmmGlobal: return "gmm-global";
    case Stage::kAttributes: return "attributes";
    case Stage::kSubspace: return "subspace";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : all_stages())
    if (name == stage_name(s)) return s;
  throw InvalidInput("unknown stage '" + std::string(name) + "'");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> s = {Stage::kPca,       Stage::kGmmBlock,   Stage::kEmbed,
                                       Stage::kGmmGlobal, Stage::kAttributes, Stage::kSubspace};
  return s;
}

std::string supervised_name(int cr) { return "sup-cr" + std::to_string(cr); }

std::vector<FeatureSource> feature_sources(const ExperimentConfig& cfg) {
  std::vector<int> crs = cfg.cr;
  std::sort(crs.rbegin(), crs.rend());
  crs.erase(std::unique(crs.begin(), crs.end()), crs.end());
  std::vector<FeatureSource> out;
  for (int r : crs) out.push_back({supervised_name(r), SignatureSource::kSupervisedMidlevel, r});
  out.push_back({"unsup", SignatureSource::kUnsupervisedMidlevel, 0});
  out.push_back({"sift", SignatureSource::kSiftBaseline, 0});
  return out;
}

std::vector<std::string> attribute_inputs(const ExperimentConfig& cfg) {
  return {supervised_name(cfg.supervised_cr()), "concat"};
}

nlohmann::json Seeds::to_json() const {
  return {{"corpus", corpus},         {"blocks", blocks},       {"gmm", gmm},
          {"global_gmm", global_gmm}, {"subsample", subsample}, {"lexicon", lexicon}};
}

std::vector<std::string> synthetic_wordlist(int count) {
  const auto& base = default_wordlist();
  if (count < 1 || count > static_cast<int>(base.size())) {
    throw InvalidInput("corpus.words must be in [1, " + std::to_string(base.size()) + "]");
  }
  return {base.begin(), base.begin() + count};
}

Corpus make_corpus(const ExperimentConfig& cfg) {
  Corpus c;
  if (!cfg.corpus_dir.empty()) {
    c = load_corpus(cfg.corpus_dir);
  } else {
    SynthOptions opts;
    opts.per_word = cfg.per_word;
    opts.learn_per_word = cfg.learn_per_word;
    opts.train_per_word = cfg.train_per_word;
    opts.style.height = cfg.height;
    Rng rng(Seeds(cfg.seed).corpus);
    c = synth_corpus(synthetic_wordlist(cfg.words), opts, rng);
  }
  return normalize_height(c, cfg.height);
}

// ---------------------------------------------------------------------------
// Per-image features

ImageFeatures compute_image_features(const GrayImage& image, const TrainedModels& m, const ExperimentConfig& cfg) {
  ImageFeatures f;
  f.width = image.width();
  f.height = image.height();
  f.sift = extract_dense(image, sift_params(cfg));
  if (m.pca && m.block_gmm) f.encoded = encode_descriptors(f.sift, *m.pca, *m.block_gmm);
  return f;
}

MidLevelSet midlevel_features(const ImageFeatures& f, const TrainedModels& m, const CcaModel& emb,
                              const ExperimentConfig& cfg) {
  const IntegralGrid grid = build_integral_grid(f.encoded, *m.block_gmm, emb, f.width, f.height, cfg.cell);
  return extract_fast(grid, cfg.sizes, cfg.step);
}

AugmentedFeatures source_features(const ImageFeatures& f, const TrainedModels& m, const FeatureSource& src,
                                  const ExperimentConfig& cfg) {
  if (!src.midlevel()) {
    if (!m.pca_baseline) throw InvalidInput("baseline PCA missing");
    return baseline_features(f.sift, *m.pca_baseline, f.width, f.height);
  }
  auto it = m.block_embeddings.find(src.name);
  if (it == m.block_embeddings.end()) throw InvalidInput("no block embedding for source " + src.name);
  return augment_xy(midlevel_features(f, m, it->second, cfg), f.width, f.height);
}

std::map<std::string, Vector> image_signatures(const GrayImage& image, const TrainedModels& m,
                                               const ExperimentConfig& cfg) {
  const ImageFeatures f = compute_image_features(image, m, cfg);
  const PyramidGrid grid = parse_pyramid(cfg.pyramid);
  std::map<std::string, Vector> out;
  for (const auto& src : feature_sources(cfg)) {
    auto g = m.global_gmms.find(src.name);
    if (g == m.global_gmms.end()) throw InvalidInput("no global GMM for source " + src.name);
    const AugmentedFeatures af = source_features(f, m, src, cfg);
    FisherVector fv = encode_fv_spm(af.x, af.centers, BBox{0, 0, f.width, f.height}, g->second, grid);
    out[src.name] = power_l2_normalize(std::move(fv), cfg.power_alpha).v;
  }
  const std::string sup = supervised_name(cfg.supervised_cr());
  out["concat"] = concat_signatures({out.at("sift"), SignatureSource::kSiftBaseline},
                                    {out.at(sup), SignatureSource::kSupervisedMidlevel})
                      .v;
  return out;
}

// ---------------------------------------------------------------------------
// Stages

namespace {

void stage_pca(const Corpus& corpus, const ExperimentConfig& cfg, TrainedModels& m, const Logger& log) {
  Matrix scatter = Matrix::Zero(kSiftDim, kSiftDim);
  Vector sum = Vector::Zero(kSiftDim);
  double n = 0;
  for (const auto* e : entries_of(corpus, Split::kLearn)) {
    const DescriptorSet ds = extract_dense(e->word.image, sift_params(cfg));
    RowMatrix x(ds.size(), kSiftDim);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < ds.size(); ++i)
      if (!ds.is_flat(i)) x.row(r++) = ds.values.row(i);
    const auto rows = x.topRows(r);
    scatter.selfadjointView<Eigen::Lower>().rankUpdate(rows.transpose());
    sum += rows.colwise().sum().transpose();
    n += static_cast<double>(r);
  }
  scatter = Matrix(scatter.selfadjointView<Eigen::Lower>());
  m.pca = fit_pca_from_moments(scatter, sum, n, cfg.pca_dim);
  m.pca_baseline = fit_pca_from_moments(scatter, sum, n, cfg.K);
  quantize_f32(*m.pca);
  quantize_f32(*m.pca_baseline);
  m.info["pca"] = {{"descriptors", n}, {"explained_variance", m.pca->explained_variance_ratio()},
                   {"baseline_explained_variance", m.pca_baseline->explained_variance_ratio()}};
  say(log, "pca: " + std::to_string(static_cast<long>(n)) + " descriptors, explained variance " +
               std::to_string(m.pca->explained_variance_ratio()));
}

void stage_gmm_block(const Corpus& corpus, const ExperimentConfig& cfg, TrainedModels& m, const Logger& log) {
  const PcaModel& pca = require(m.pca, "the SIFT PCA", Stage::kGmmBlock);
  const auto learn = entries_of(corpus, Split::kLearn);
  const auto per_image = static_cast<Eigen::Index>((cfg.gmm_samples + learn.size() - 1) / learn.size());
  Rng rng(Seeds(cfg.seed).subsample);
  std::vector<RowMatrix> parts;
  for (const auto* e : learn) {
    auto [x, centers] = project_descriptors(extract_dense(e->word.image, sift_params(cfg)), pca);
    parts.push_back(sample_rows(x, per_image, rng));
  }
  const RowMatrix samples = stack_rows(parts, pca.output_dim());
  GmmFitTrace trace;
  m.block_gmm = fit_gmm(samples, cfg.block_gaussians, Seeds(cfg.seed).gmm, gmm_options(cfg), &trace);
  quantize_f32(*m.block_gmm);
  m.info["gmm_block"] = {{"samples", samples.rows()}, {"iterations", trace.log_likelihood.size()},
                         {"log_likelihood", trace.log_likelihood.empty() ? 0.0 : trace.log_likelihood.back()}};
  say(log, "gmm-block: " + std::to_string(samples.rows()) + " samples, " +
               std::to_string(trace.log_likelihood.size()) + " EM iterations");
}

void stage_embed(const Corpus& corpus, const ExperimentConfig& cfg, TrainedModels& m, const Logger& log) {
  const PcaModel& pca = require(m.pca, "the SIFT PCA", Stage::kEmbed);
  const GmmModel& gmm = require(m.block_gmm, "the block GMM", Stage::kEmbed);
  const auto learn = entries_of(corpus, Split::kLearn);
  const FvEncoder enc(gmm);
  const Eigen::Index D = enc.fv_size() * 4;
  std::vector<int> Rs = cfg.cr;
  std::sort(Rs.begin(), Rs.end());
  Rs.erase(std::unique(Rs.begin(), Rs.end()), Rs.end());
  BlockMoments mom(D, Rs);
  BlockSamplingOptions opts;
  opts.blocks_per_image = cfg.blocks_per_image;
  opts.sizes = cfg.train_sizes;
  opts.seed = Seeds(cfg.seed).blocks;
  std::size_t empty_blocks = 0;
  visit_training_blocks(
      learn,
      [&](std::size_t i) {
        return encode_descriptors(extract_dense(learn[i]->word.image, sift_params(cfg)), pca, gmm);
      },
      enc, Rs, opts, [&](std::size_t, const ImageBlocks& b, const std::vector<RowMatrix>& labels) {
        for (Eigen::Index r = 0; r < b.x.rows(); ++r) empty_blocks += b.x.row(r).squaredNorm() == 0 ? 1 : 0;
        mom.add(b.x, labels);
      });
  const Matrix sxx = mom.full_sxx();
  m.info["embed"] = {{"blocks", mom.n}, {"empty_blocks", empty_blocks}, {"dim", D}};
  for (std::size_t r = 0; r < Rs.size(); ++r) {
    CcaModel cca = fit_cca_from_moments(sxx, mom.sxy[r], mom.full_syy(r), mom.sx, mom.sy[r], mom.n,
                                        CcaOptions{cfg.K, cfg.eta, cfg.center});
    quantize_f32(cca);
    m.info["embed"]["correlations_" + supervised_name(Rs[r])] = std::vector<double>(
        cca.correlations.data(), cca.correlations.data() + std::min<Eigen::Index>(8, cca.correlations.size()));
    say(log, "embed: " + supervised_name(Rs[r]) + " top correlation " + std::to_string(cca.correlations(0)));
    m.block_embeddings[supervised_name(Rs[r])] = std::move(cca);
  }
  // Unsupervised counterpart: principal directions of the same block FVs.
  PcaModel block_pca = fit_pca_from_moments(sxx, mom.sx, mom.n, cfg.K);
  CcaModel unsup = model_from_basis(block_pca.basis);
  quantize_f32(unsup);
  m.block_embeddings["unsup"] = std::move(unsup);
  say(log, "embed: " + std::to_string(static_cast<long>(mom.n)) + " blocks, " + std::to_string(empty_blocks) +
               " without descriptors");
}

void stage_gmm_global(const Corpus& corpus, const ExperimentConfig& cfg, TrainedModels& m, const Logger& log) {
  require(m.pca, "the SIFT PCA", Stage::kGmmGlobal);
  require(m.block_gmm, "the block GMM", Stage::kGmmGlobal);
  const auto learn = entries_of(corpus, Split::kLearn);
  const auto sources = feature_sources(cfg);
  const auto per_image = static_cast<Eigen::Index>((cfg.global_samples + learn.size() - 1) / learn.size());
  Rng rng(Seeds(cfg.seed).subsample + 1);
  std::map<std::string, std::vector<RowMatrix>> parts;
  for (const auto* e : learn) {
    const ImageFeatures f = compute_image_features(e->word.image, m, cfg);
    for (const auto& src : sources) parts[src.name].push_back(sample_rows(source_features(f, m, src, cfg).x, per_image, rng));
  }
  nlohmann::json info = nlohmann::json::object();
  for (const auto& src : sources) {
    const RowMatrix samples = stack_rows(parts[src.name], cfg.K + 2);
    GmmFitTrace trace;
    GmmModel g = fit_gmm(samples, cfg.global_gaussians, Seeds(cfg.seed).global_gmm, gmm_options(cfg), &trace);
    quantize_f32(g);
    info[src.name] = {{"samples", samples.rows()}, {"iterations", trace.log_likelihood.size()}};
    m.global_gmms[src.name] = std::move(g);
    say(log, "gmm-global: " + src.name + " on " + std::to_string(samples.rows()) + " samples");
  }
  m.info["gmm_global"] = info;
}

void ensure_train_signatures(const Corpus& corpus, const ExperimentConfig& cfg, const TrainedModels& m,
                             TrainingCache& cache, Stage stage, const Logger& log) {
  if (!cache.train_signatures.empty()) return;
  require(m.pca, "the SIFT PCA", stage);
  require(m.block_gmm, "the block GMM", stage);
  if (m.global_gmms.empty()) throw StageError(stage_name(stage), "requires the global GMMs (run gmm-global first)");
  const auto train = entries_of(corpus, Split::kTrain);
  std::map<std::string, std::vector<Vector>> rows;
  cache.train_texts.clear();
  for (const auto* e : train) {
    for (auto& [name, v] : image_signatures(e->word.image, m, cfg)) rows[name].push_back(std::move(v));
    cache.train_texts.push_back(e->word.text);
  }
  for (auto& [name, vs] : rows) {
    RowMatrix S(static_cast<Eigen::Index>(vs.size()), vs.front().size());
    for (std::size_t i = 0; i < vs.size(); ++i) S.row(static_cast<Eigen::Index>(i)) = vs[i].transpose();
    cache.train_signatures[name] = std::move(S);
  }
  say(log, stage_name(stage) + std::string(": signatures for ") + std::to_string(train.size()) + " training images");
}

void stage_attributes(const Corpus& corpus, const ExperimentConfig& cfg, TrainedModels& m, TrainingCache& cache,
                      const Logger& log) {
  ensure_train_signatures(corpus, cfg, m, cache, Stage::kAttributes, log);
  const RowMatrix T = string_targets(cache.train_texts, string_options(cfg));
  nlohmann::json info = nlohmann::json::object();
  for (const auto& name : attribute_inputs(cfg)) {
    AttributeModel a = fit_attributes(cache.train_signatures.at(name), T, cfg.ridge_lambda);
    quantize_f32(a);
    info[name] = {{"attributes", a.attributes()}, {"degenerate", a.degenerate_count()}};
    say(log, "attributes: " + name + ", " + std::to_string(a.attributes() - a.degenerate_count()) +
                 " non-degenerate attributes");
    m.attributes[name] = std::move(a);
  }
  m.info["attributes"] = info;
}

void stage_subspace(const Corpus& corpus, const ExperimentConfig& cfg, TrainedModels& m, TrainingCache& cache,
                    const Logger& log) {
  ensure_train_signatures(corpus, cfg, m, cache, Stage::kSubspace, log);
  const auto sopts = string_options(cfg);
  const RowMatrix T = string_targets(cache.train_texts, sopts);
  nlohmann::json info = nlohmann::json::object();
  for (const auto& name : attribute_inputs(cfg)) {
    if (!m.attributes.count(name)) throw StageError("subspace", "requires attribute models (run attributes first)");
    // Held-out scores: in-sample ridge scores are overfit and would mislead the CCA.
    const RowMatrix scores = out_of_fold_scores(cache.train_signatures.at(name), T, cfg.ridge_lambda, cfg.oof_folds);
    const Eigen::Index dim = std::min<Eigen::Index>(cfg.out_dim, std::min(scores.cols(), T.cols()));
    CommonSubspace cs = fit_common_subspace(scores, T, dim, cfg.subspace_eta, sopts);
    quantize_f32(cs.cca);
    info[name] = {{"dim", cs.dim()}, {"top_correlation", cs.cca.correlations(0)}};
    say(log, "subspace: " + name + " top correlation " + std::to_string(cs.cca.correlations(0)));
    m.subspaces[name] = std::move(cs);
  }
  m.info["subspace"] = info;
}

}  // namespace

void run_stage(Stage stage, const Corpus& corpus, const ExperimentConfig& cfg, TrainedModels& m, const Logger& log,
               TrainingCache* cache) {
  TrainingCache local;
  TrainingCache& c = cache ? *cache : local;
  try {
    switch (stage) {
      case Stage::kPca: stage_pca(corpus, cfg, m, log); break;
      case Stage::kGmmBlock: stage_gmm_block(corpus, cfg, m, log); break;
      case Stage::kEmbed: stage_embed(corpus, cfg, m, log); break;
      case Stage::kGmmGlobal: stage_gmm_global(corpus, cfg, m, log); break;
      case Stage::kAttributes: stage_attributes(corpus, cfg, m, c, log); break;
      case Stage::kSubspace: stage_subspace(corpus, cfg, m, c, log); break;
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage_name(stage), e.what());
  }
}

TrainedModels train_models(const Corpus& corpus, const ExperimentConfig& cfg, const Logger& log) {
  validate(cfg);
  TrainedModels m;
  TrainingCache cache;
  nlohmann::json timings = nlohmann::json::object();
  for (Stage s : all_stages()) {
    const auto t0 = std::chrono::steady_clock::now();
    run_stage(s, corpus, cfg, m, log, &cache);
    timings[stage_name(s)] = seconds_since(t0);
  }
  m.info["timings"] = timings;
  return m;
}

// ---------------------------------------------------------------------------
// Archive

Archive to_archive(const TrainedModels& m, const ExperimentConfig& cfg) {
  Archive a;
  a.meta["hyperparameters"] = config_to_json(cfg);
  a.meta["training"] = m.info;
  a.meta["components"] = nlohmann::json::object();
  if (m.pca) put_pca(a, "pca", *m.pca);
  if (m.pca_baseline) put_pca(a, "pca_baseline", *m.pca_baseline);
  if (m.block_gmm) put_gmm(a, "gmm_block", *m.block_gmm);
  for (const auto& [k, v] : m.block_embeddings) put_cca(a, "embed_" + k, v);
  for (const auto& [k, v] : m.global_gmms) put_gmm(a, "gmm_global_" + k, v);
  for (const auto& [k, v] : m.attributes) put_attributes(a, "attributes_" + k, v);
  for (const auto& [k, v] : m.subspaces) put_subspace(a, "subspace_" + k, v);
  return a;
}

TrainedModels from_archive(const Archive& a) {
  TrainedModels m;
  m.info = a.meta.value("training", nlohmann::json::object());
  const auto comps = a.meta.value("components", nlohmann::json::object());
  auto strip = [](const std::string& s, const std::string& prefix) -> std::optional<std::string> {
    if (s.rfind(prefix, 0) == 0) return s.substr(prefix.size());
    return std::nullopt;
  };
  for (const auto& [name, info] : comps.items()) {
    if (name == "pca") {
      m.pca = get_pca(a, name);
    } else if (name == "pca_baseline") {
      m.pca_baseline = get_pca(a, name);
    } else if (name == "gmm_block") {
      m.block_gmm = get_gmm(a, name);
    } else if (auto k = strip(name, "embed_")) {
      m.block_embeddings[*k] = get_cca(a, name);
    } else if (auto k2 = strip(name, "gmm_global_")) {
      m.global_gmms[*k2] = get_gmm(a, name);
    } else if (auto k3 = strip(name, "attributes_")) {
      m.attributes[*k3] = get_attributes(a, name);
    } else if (auto k4 = strip(name, "subspace_")) {
      m.subspaces[*k4] = get_subspace(a, name);
    } else {
      throw FormatError("archive: unknown component '" + name + "'");
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<std::vector<std::string>> make_lexicons(const std::vector<std::string>& truths,
                                                    const std::vector<std::string>& vocabulary, int size,
                                                    std::uint64_t seed, bool case_sensitive) {
  std::set<std::string> uniq;
  for (const auto& w : vocabulary) uniq.insert(relevance_key(w, case_sensitive));
  const std::vector<std::string> vocab(uniq.begin(), uniq.end());
  std::vector<std::vector<std::string>> out;
  out.reserve(truths.size());
  for (std::size_t i = 0; i < truths.size(); ++i) {
    Rng rng = image_rng(seed, i);
    const std::string truth = relevance_key(truths[i], case_sensitive);
    std::vector<std::string> others;
    for (const auto& w : vocab)
      if (w != truth) others.push_back(w);
    std::shuffle(others.begin(), others.end(), rng);
    const auto keep = std::min<std::size_t>(others.size(), static_cast<std::size_t>(std::max(0, size - 1)));
    std::vector<std::string> lex{truth};
    lex.insert(lex.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(keep));
    std::sort(lex.begin(), lex.end());
    out.push_back(std::move(lex));
  }
  return out;
}

const ReportRow* Report::find(const std::string& source, const std::string& representation,
                              const std::string& task) const {
  for (const auto& r : rows)
    if (r.source == source && r.representation == representation && r.task == task) return &r;
  return nullptr;
}

nlohmann::json Report::to_json() const {
  nlohmann::json j;
  j["format"] = "midfeat-report";
  j["version"] = 1;
  j["config"] = config;
  j["seeds"] = seeds.to_json();
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(corpus_hash));
  j["corpus"] = {{"hash", hash}, {"splits", split_sizes}};
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"source", r.source},
                         {"representation", r.representation},
                         {"task", r.task},
                         {"map", r.map},
                         {"p_at_1", r.p_at_1},
                         {"queries", r.queries},
                         {"skipped", r.skipped}});
  }
  j["sweep"] = sweep;
  j["training"] = training;
  j["timings"] = timings;
  return j;
}

std::string Report::table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-16s %-11s %-9s %8s %8s %8s\n", "source", "repr", "task", "mAP", "P@1",
                "queries");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-16s %-11s %-9s %8.4f %8.4f %8zu\n", r.source.c_str(),
                  r.representation.c_str(), r.task.c_str(), r.map, r.p_at_1, r.queries);
    out << line;
  }
  for (const auto& s : sweep) {
    std::snprintf(line, sizeof(line), "sweep learn fraction %.2f (%d images): %s QBE mAP %.4f\n",
                  s.at("fraction").get<double>(), s.at("learn_images").get<int>(),
                  s.at("source").get<std::string>().c_str(), s.at("map").get<double>());
    out << line;
  }
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(corpus_hash));
  out << "corpus hash " << hash << "\n";
  return out.str();
}

Report evaluate_models(const TrainedModels& m, const Corpus& corpus, const ExperimentConfig& cfg, const Logger& log) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  Report rep;
  rep.config = config_to_json(cfg);
  rep.seeds = Seeds(cfg.seed);
  rep.corpus_hash = corpus_hash(corpus);
  for (Split s : {Split::kLearn, Split::kTrain, Split::kTest})
    rep.split_sizes[std::string(split_name(s))] = corpus.subset(s).size();
  rep.training = m.info;

  const auto test = entries_of(corpus, Split::kTest);
  std::vector<std::string> ids, texts;
  std::map<std::string, std::vector<Vector>> sig_rows;
  for (const auto* e : test) {
    ids.push_back(e->word.id);
    texts.push_back(e->word.text);
    try {
      for (auto& [name, v] : image_signatures(e->word.image, m, cfg)) sig_rows[name].push_back(std::move(v));
    } catch (const std::exception& ex) {
      throw StageError("evaluate", e->word.id + ": " + ex.what());
    }
  }
  std::map<std::string, RowMatrix> sigs;
  for (auto& [name, vs] : sig_rows) {
    RowMatrix S(static_cast<Eigen::Index>(vs.size()), vs.front().size());
    for (std::size_t i = 0; i < vs.size(); ++i) S.row(static_cast<Eigen::Index>(i)) = vs[i].transpose();
    sigs[name] = std::move(S);
  }
  rep.timings["test_signatures"] = seconds_since(t0);

  auto add_row = [&](const std::string& src, const std::string& repr, const std::string& task,
                     const RetrievalScore& s) {
    rep.rows.push_back({src, repr, task, s.map, s.p_at_1, s.queries, s.skipped});
  };
  std::vector<std::string> names;
  for (const auto& src : feature_sources(cfg)) names.push_back(src.name);
  names.push_back("concat");
  for (const auto& name : names) {
    add_row(name, "fv", "qbe", qbe_eval(sigs.at(name), texts, ids, cfg.case_sensitive));
    say(log, "evaluate: " + name + " fv qbe mAP " + std::to_string(rep.rows.back().map));
  }

  std::vector<std::string> vocabulary;
  for (const auto& e : corpus.entries) vocabulary.push_back(e.word.text);
  const auto lexicons = make_lexicons(texts, vocabulary, cfg.lexicon_size, rep.seeds.lexicon, cfg.case_sensitive);
  std::set<std::string> combined_set;
  for (const auto& lex : lexicons) combined_set.insert(lex.begin(), lex.end());
  const std::vector<std::vector<std::string>> combined(texts.size(),
                                                       std::vector<std::string>(combined_set.begin(), combined_set.end()));
  for (const auto& name : attribute_inputs(cfg)) {
    auto a = m.attributes.find(name);
    auto cs = m.subspaces.find(name);
    if (a == m.attributes.end() || cs == m.subspaces.end()) continue;
    const RowMatrix emb = cs->second.embed_images(attribute_scores(sigs.at(name), a->second));
    const auto embed_string = [&](const std::string& w) { return cs->second.embed_string(w); };
    add_row(name, "attributes", "qbe", qbe_eval(emb, texts, ids, cfg.case_sensitive));
    add_row(name, "attributes", "qbs", qbs_eval(embed_string, emb, texts, ids, cfg.case_sensitive));
    const double sl = recognition_eval(emb, texts, lexicons, embed_string, cfg.case_sensitive);
    const double cl = recognition_eval(emb, texts, combined, embed_string, cfg.case_sensitive);
    rep.rows.push_back({name, "attributes", "recog-sl", 0, sl, texts.size(), 0});
    rep.rows.push_back({name, "attributes", "recog-cl", 0, cl, texts.size(), 0});
    say(log, "evaluate: " + name + " attributes qbe mAP " + std::to_string(rep.find(name, "attributes", "qbe")->map) +
                 ", recognition P@1 " + std::to_string(sl));
  }
  rep.timings["evaluate"] = seconds_since(t0);
  return rep;
}

Report run_experiment(const ExperimentConfig& cfg, const Logger& log, TrainedModels* models_out,
                      const Corpus* corpus_in) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const Corpus corpus = corpus_in ? *corpus_in : make_corpus(cfg);
  validate(corpus);
  TrainedModels m = train_models(corpus, cfg, log);
  Report rep = evaluate_models(m, corpus, cfg, log);
  rep.timings["train"] = m.info.value("timings", nlohmann::json::object());

  // Training-size sweep: block-side models on a per-word prefix of the learn
  // split; the supervised FV QBE mAP is reported, not asserted.
  for (double frac : cfg.learn_fractions) {
    Corpus sub;
    std::map<std::string, int> seen;
    const int keep = std::max(1, static_cast<int>(std::ceil(frac * cfg.learn_per_word - 1e-9)));
    int learn_images = 0;
    for (const auto& e : corpus.entries) {
      if (e.split == Split::kLearn && seen[e.word.text]++ >= keep) continue;
      if (e.split == Split::kLearn) ++learn_images;
      sub.entries.push_back(e);
    }
    TrainedModels sm;
    for (Stage s : {Stage::kPca, Stage::kGmmBlock, Stage::kEmbed, Stage::kGmmGlobal}) run_stage(s, sub, cfg, sm, log);
    Report sr = evaluate_models(sm, sub, cfg, log);
    const std::string sup = supervised_name(cfg.supervised_cr());
    rep.sweep.push_back({{"fraction", frac}, {"learn_images", learn_images}, {"source", sup},
                         {"map", sr.find(sup, "fv", "qbe")->map}});
  }
  rep.timings["total"] = seconds_since(t0);
  if (models_out) *models_out = std::move(m);
  return rep;
}

}  // namespace midfeat
