#pragma once

// Experiment configuration: every default, a key=value file format with
// [section] headers, and JSON export.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace midfeat {

struct ExperimentConfig {
  // corpus
  std::string corpus_dir;  // empty: synthesize
  int words = 60;
  int per_word = 10;
  int learn_per_word = 3;
  int train_per_word = 3;
  int height = 120;
  std::uint64_t seed = 2024;

  // features
  std::vector<int> sift_scales{12, 16, 24, 32, 40, 48};
  int sift_step = 2;
  int pca_dim = 64;

  // codebook
  int block_gaussians = 8;
  int gmm_iterations = 100;
  int gmm_restarts = 3;
  double gmm_tolerance = 1e-6;
  int gmm_samples = 50000;

  // supervision
  int blocks_per_image = 150;
  std::vector<int> train_sizes{16, 24, 32, 40, 48};

  // embedding
  int K = 62;
  double eta = 1e-4;
  bool center = false;
  std::vector<int> cr{1, 4};

  // midlevel
  std::vector<int> sizes{16, 24, 32, 40, 48};
  int step = 4;
  int cell = 4;

  // wordrep
  int global_gaussians = 16;
  std::string pyramid = "2x6";
  double power_alpha = 0.5;
  int global_samples = 50000;
  std::vector<int> levels{1, 2, 3, 4};
  double ridge_lambda = 1.0;
  int oof_folds = 5;
  int out_dim = 96;
  double subspace_eta = 1e-3;

  // evaluation
  bool case_sensitive = false;
  int lexicon_size = 50;
  std::vector<double> learn_fractions;  // optional training-size sweep

  int supervised_cr() const;  // largest R in `cr`
};

/// Applies one `key = value` setting; keys may carry a section prefix
/// ("embedding.eta"). Unknown keys throw InvalidInput.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Parses a key=value file; blank lines and `#` comments skipped, `[section]`
/// lines prefix the following keys.
void apply_config_text(ExperimentConfig& cfg, const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// The resolved configuration in the same key=value format.
std::string config_to_text(const ExperimentConfig& cfg);

/// Throws InvalidInput on inconsistent settings (sizes vs. cell, splits, ...).
void validate(const ExperimentConfig& cfg);

}  // namespace midfeat
