#pragma once

// End-to-end training, evaluation and reporting.

#include "midfeat/archive.hpp"
#include "midfeat/config.hpp"
#include "midfeat/corpus.hpp"
#include "midfeat/eval.hpp"
#include "midfeat/midlevel.hpp"
#include "midfeat/wordrep.hpp"

#include <functional>
#include <map>
#include <optional>

namespace midfeat {

/// Failure inside one pipeline stage; what() starts with "[stage] ".
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& msg) : Error("[" + stage + "] " + msg), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

enum class Stage { kPca, kGmmBlock, kEmbed, kGmmGlobal, kAttributes, kSubspace };

const char* stage_name(Stage s);
Stage parse_stage(std::string_view name);
const std::vector<Stage>& all_stages();

/// A global-signature feature source. Mid-level sources carry a block embedding.
struct FeatureSource {
  std::string name;  // "sup-cr4", "sup-cr1", "unsup", "sift"
  SignatureSource kind;
  int cr = 0;  // supervised only

  bool midlevel() const { return kind != SignatureSource::kSiftBaseline; }
};

/// Supervised sources (largest R first), then unsupervised, then the SIFT baseline.
std::vector<FeatureSource> feature_sources(const ExperimentConfig& cfg);
std::string supervised_name(int cr);

/// Signature sets that get attribute models: the supervised mid-level FV and
/// its concatenation with the SIFT baseline.
std::vector<std::string> attribute_inputs(const ExperimentConfig& cfg);

struct TrainedModels {
  std::optional<PcaModel> pca;           // SIFT -> pca_dim
  std::optional<PcaModel> pca_baseline;  // SIFT -> K, for the baseline source
  std::optional<GmmModel> block_gmm;
  std::map<std::string, CcaModel> block_embeddings;  // by mid-level source name
  std::map<std::string, GmmModel> global_gmms;       // by source name
  std::map<std::string, AttributeModel> attributes;  // by attribute input name
  std::map<std::string, CommonSubspace> subspaces;   // by attribute input name
  nlohmann::json info = nlohmann::json::object();    // training statistics
};

Archive to_archive(const TrainedModels& m, const ExperimentConfig& cfg);
TrainedModels from_archive(const Archive& a);

using Logger = std::function<void(const std::string&)>;

/// Derived seeds, all recorded in the report.
struct Seeds {
  std::uint64_t corpus, blocks, gmm, global_gmm, subsample, lexicon;
  explicit Seeds(std::uint64_t base)
      : corpus(base), blocks(base + 1), gmm(base + 2), global_gmm(base + 3), subsample(base + 4), lexicon(base + 5) {}
  nlohmann::json to_json() const;
};

/// Synthesizes (or loads) and height-normalizes the corpus.
Corpus make_corpus(const ExperimentConfig& cfg);
std::vector<std::string> synthetic_wordlist(int count);

/// Per-image features shared by every source.
struct ImageFeatures {
  DescriptorSet sift;
  EncodedDescriptors encoded;  // for the block FVs
  int width = 0, height = 0;
};

ImageFeatures compute_image_features(const GrayImage& image, const TrainedModels& m, const ExperimentConfig& cfg);
MidLevelSet midlevel_features(const ImageFeatures& f, const TrainedModels& m, const CcaModel& emb,
                              const ExperimentConfig& cfg);
/// Augmented local features of one source before global encoding.
AugmentedFeatures source_features(const ImageFeatures& f, const TrainedModels& m, const FeatureSource& src,
                                  const ExperimentConfig& cfg);
/// Global signatures of every source plus "concat"; keys are source names.
std::map<std::string, Vector> image_signatures(const GrayImage& image, const TrainedModels& m,
                                               const ExperimentConfig& cfg);

/// Transient state shared between consecutive stages of one training run.
struct TrainingCache {
  std::map<std::string, RowMatrix> train_signatures;
  std::vector<std::string> train_texts;
};

void run_stage(Stage stage, const Corpus& corpus, const ExperimentConfig& cfg, TrainedModels& m,
               const Logger& log = {}, TrainingCache* cache = nullptr);
TrainedModels train_models(const Corpus& corpus, const ExperimentConfig& cfg, const Logger& log = {});

struct ReportRow {
  std::string source;          // feature source or attribute input
  std::string representation;  // "fv" or "attributes"
  std::string task;            // "qbe", "qbs", "recog-sl", "recog-cl"
  double map = 0;
  double p_at_1 = 0;
  std::size_t queries = 0;
  std::size_t skipped = 0;
};

struct Report {
  nlohmann::json config;
  Seeds seeds{0};
  std::uint64_t corpus_hash = 0;
  std::map<std::string, std::size_t> split_sizes;
  std::vector<ReportRow> rows;
  nlohmann::json sweep = nlohmann::json::array();
  nlohmann::json training = nlohmann::json::object();
  nlohmann::json timings = nlohmann::json::object();  // seconds; not deterministic

  const ReportRow* find(const std::string& source, const std::string& representation, const std::string& task) const;
  nlohmann::json to_json() const;
  std::string table() const;
};

/// Evaluates trained models on the test split.
Report evaluate_models(const TrainedModels& m, const Corpus& corpus, const ExperimentConfig& cfg,
                       const Logger& log = {});

/// Train on learn/train splits, evaluate on test; optional training-size sweep.
Report run_experiment(const ExperimentConfig& cfg, const Logger& log = {}, TrainedModels* models_out = nullptr,
                      const Corpus* corpus_in = nullptr);

/// Per-image lexicon: the ground truth plus distinct other vocabulary words.
std::vector<std::vector<std::string>> make_lexicons(const std::vector<std::string>& truths,
                                                    const std::vector<std::string>& vocabulary, int size,
                                                    std::uint64_t seed, bool case_sensitive);

}  // namespace midfeat
