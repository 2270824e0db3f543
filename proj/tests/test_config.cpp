#include "midfeat/experiment.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace midfeat;

TEST(Config, DefaultsMatchConfiguration) {
  const ExperimentConfig c;
  EXPECT_EQ(c.blocks_per_image, 150);
  EXPECT_EQ(c.eta, 1e-4);
  EXPECT_EQ(c.K, 62);
  EXPECT_EQ(c.step, 4);
  EXPECT_EQ(c.sizes, (std::vector<int>{16, 24, 32, 40, 48}));
  EXPECT_EQ(c.global_gaussians, 16);
  EXPECT_EQ(c.pyramid, "2x6");
  EXPECT_EQ(c.out_dim, 96);
  EXPECT_EQ(c.block_gaussians, 8);
  EXPECT_EQ(c.pca_dim, 64);
  EXPECT_EQ(c.supervised_cr(), 4);
  EXPECT_NO_THROW(validate(c));
}

TEST(Config, ParsesSectionsAndComments) {
  ExperimentConfig c;
  apply_config_text(c, R"(
# desk run
[corpus]
words = 12   # fewer words
seed = 99

[embedding]
eta = 1e-3
center = true
cr = [1, 2, 4]

[midlevel]
sizes = 16, 32
[wordrep]
pyramid = "2x2"
)");
  EXPECT_EQ(c.words, 12);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.eta, 1e-3);
  EXPECT_TRUE(c.center);
  EXPECT_EQ(c.cr, (std::vector<int>{1, 2, 4}));
  EXPECT_EQ(c.sizes, (std::vector<int>{16, 32}));
  EXPECT_EQ(c.train_sizes, (std::vector<int>{16, 24, 32, 40, 48}));  // section-qualified
  EXPECT_EQ(c.pyramid, "2x2");
}

TEST(Config, QualifiedAndBareKeys) {
  ExperimentConfig c;
  apply_setting(c, "supervision.sizes", "24,48");
  EXPECT_EQ(c.train_sizes, (std::vector<int>{24, 48}));
  EXPECT_EQ(c.sizes, (std::vector<int>{16, 24, 32, 40, 48}));
  apply_setting(c, "out_dim", "192");
  EXPECT_EQ(c.out_dim, 192);
  EXPECT_THROW(apply_setting(c, "nonsense", "1"), InvalidInput);
  EXPECT_THROW(apply_setting(c, "embedding.k", "many"), InvalidInput);
  EXPECT_THROW(apply_setting(c, "embedding.center", "maybe"), InvalidInput);
  EXPECT_THROW(apply_config_text(c, "[broken\nk=1"), InvalidInput);
  EXPECT_THROW(apply_config_text(c, "k 1"), InvalidInput);
}

TEST(Config, TextRoundTrip) {
  ExperimentConfig c;
  c.words = 7;
  c.eta = 3.5e-5;
  c.center = true;
  c.pyramid = "none";
  c.learn_fractions = {0.5, 1.0};
  c.corpus_dir = "/data/words";
  ExperimentConfig d;
  apply_config_text(d, config_to_text(c));
  EXPECT_EQ(config_to_json(c), config_to_json(d));
  EXPECT_EQ(config_to_text(c), config_to_text(d));
}

TEST(Config, ValidationRejectsInconsistentSettings) {
  ExperimentConfig c;
  c.step = 6;
  EXPECT_THROW(validate(c), InvalidInput);
  c = {};
  c.sizes = {12};
  EXPECT_THROW(validate(c), InvalidInput);
  c = {};
  c.K = 80;
  EXPECT_THROW(validate(c), InvalidInput);
  c = {};
  c.learn_per_word = 5;
  c.train_per_word = 5;
  EXPECT_THROW(validate(c), InvalidInput);
  c = {};
  c.pyramid = "3x3";
  EXPECT_THROW(validate(c), InvalidInput);
}

TEST(Config, LoadFromFile) {
  const auto p = std::filesystem::temp_directory_path() / "midfeat_config_test.conf";
  std::ofstream(p) << "[eval]\nlexicon_size = 20\ncase_sensitive = true\n";
  const ExperimentConfig c = load_config(p);
  EXPECT_EQ(c.lexicon_size, 20);
  EXPECT_TRUE(c.case_sensitive);
  EXPECT_THROW(load_config(p.string() + ".missing"), InvalidInput);
}

TEST(Stages, NamesRoundTrip) {
  for (Stage s : all_stages()) EXPECT_EQ(parse_stage(stage_name(s)), s);
  EXPECT_EQ(std::string(stage_name(Stage::kGmmBlock)), "gmm-block");
  EXPECT_THROW(parse_stage("fit"), InvalidInput);
}

TEST(Report, GoldenSchema) {
  Report r;
  r.config = config_to_json(ExperimentConfig{});
  r.seeds = Seeds(2024);
  r.corpus_hash = 0xabc;
  r.split_sizes = {{"learn", 3}, {"test", 4}};
  r.rows.push_back({"sup-cr4", "fv", "qbe", 0.5, 0.75, 8, 0});
  r.rows.push_back({"concat", "attributes", "recog-sl", 0.0, 0.9, 10, 0});
  nlohmann::json j = r.to_json();
  j.erase("config");  // covered by the configuration tests
  const nlohmann::json golden = nlohmann::json::parse(R"({
    "format": "midfeat-report",
    "version": 1,
    "seeds": {"corpus": 2024, "blocks": 2025, "gmm": 2026, "global_gmm": 2027, "subsample": 2028, "lexicon": 2029},
    "corpus": {"hash": "0000000000000abc", "splits": {"learn": 3, "test": 4}},
    "rows": [
      {"source": "sup-cr4", "representation": "fv", "task": "qbe", "map": 0.5, "p_at_1": 0.75, "queries": 8, "skipped": 0},
      {"source": "concat", "representation": "attributes", "task": "recog-sl", "map": 0.0, "p_at_1": 0.9, "queries": 10, "skipped": 0}
    ],
    "sweep": [],
    "training": {},
    "timings": {}
  })");
  EXPECT_EQ(j, golden) << j.dump(2);
  EXPECT_NE(r.find("sup-cr4", "fv", "qbe"), nullptr);
  EXPECT_EQ(r.find("sup-cr4", "fv", "qbs"), nullptr);
  EXPECT_NE(r.table().find("corpus hash 0000000000000abc"), std::string::npos);
}

TEST(Lexicons, ContainTruthAndAreDeterministic) {
  const std::vector<std::string> vocab = {"sun", "bus", "hotel", "taxi", "park", "bank", "cafe"};
  const auto a = make_lexicons({"SUN", "taxi"}, vocab, 4, 7, false);
  const auto b = make_lexicons({"SUN", "taxi"}, vocab, 4, 7, false);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 2u);
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].size(), 4u);
    EXPECT_TRUE(std::is_sorted(a[i].begin(), a[i].end()));
    EXPECT_EQ(std::set<std::string>(a[i].begin(), a[i].end()).size(), 4u);
  }
  EXPECT_NE(std::find(a[0].begin(), a[0].end(), "sun"), a[0].end());
  EXPECT_NE(std::find(a[1].begin(), a[1].end(), "taxi"), a[1].end());
}
