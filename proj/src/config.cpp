#include "midfeat/config.hpp"

#include "midfeat/core.hpp"
#include "midfeat/fisher.hpp"

#include <fstream>
#include <functional>
#include <sstream>

namespace midfeat {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) return s.substr(1, s.size() - 2);
  return s;
}

std::string strip_brackets(std::string s) {
  s = trim(s);
  if (!s.empty() && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  return s;
}

long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long out = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw InvalidInput("config " + key + ": not an integer: '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw InvalidInput("config " + key + ": not a number: '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw InvalidInput("config " + key + ": not a boolean: '" + v + "'");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(strip_brackets(v));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<nlohmann::json(const ExperimentConfig&)> get;
};

template <typename T>
Field int_field(std::string section, std::string key, T ExperimentConfig::*member) {
  return {section, key,
          [member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<T>(parse_long(k, v));
          },
          [member](const ExperimentConfig& c) { return nlohmann::json(c.*member); }};
}

Field double_field(std::string section, std::string key, double ExperimentConfig::*member) {
  return {section, key,
          [member](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*member = parse_double(k, v); },
          [member](const ExperimentConfig& c) { return nlohmann::json(c.*member); }};
}

Field bool_field(std::string section, std::string key, bool ExperimentConfig::*member) {
  return {section, key,
          [member](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*member = parse_bool(k, v); },
          [member](const ExperimentConfig& c) { return nlohmann::json(c.*member); }};
}

Field string_field(std::string section, std::string key, std::string ExperimentConfig::*member) {
  return {section, key,
          [member](ExperimentConfig& c, const std::string&, const std::string& v) { c.*member = unquote(v); },
          [member](const ExperimentConfig& c) { return nlohmann::json(c.*member); }};
}

Field int_list_field(std::string section, std::string key, std::vector<int> ExperimentConfig::*member) {
  return {section, key,
          [member](ExperimentConfig& c, const std::string&, const std::string& v) {
            c.*member = parse_int_list(strip_brackets(v));
          },
          [member](const ExperimentConfig& c) { return nlohmann::json(c.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      string_field("corpus", "dir", &ExperimentConfig::corpus_dir),
      int_field("corpus", "words", &ExperimentConfig::words),
      int_field("corpus", "per_word", &ExperimentConfig::per_word),
      int_field("corpus", "learn_per_word", &ExperimentConfig::learn_per_word),
      int_field("corpus", "train_per_word", &ExperimentConfig::train_per_word),
      int_field("corpus", "height", &ExperimentConfig::height),
      int_field("corpus", "seed", &ExperimentConfig::seed),
      int_list_field("features", "scales", &ExperimentConfig::sift_scales),
      int_field("features", "step", &ExperimentConfig::sift_step),
      int_field("features", "pca_dim", &ExperimentConfig::pca_dim),
      int_field("codebook", "block_gaussians", &ExperimentConfig::block_gaussians),
      int_field("codebook", "iterations", &ExperimentConfig::gmm_iterations),
      int_field("codebook", "restarts", &ExperimentConfig::gmm_restarts),
      double_field("codebook", "tolerance", &ExperimentConfig::gmm_tolerance),
      int_field("codebook", "samples", &ExperimentConfig::gmm_samples),
      int_field("supervision", "blocks_per_image", &ExperimentConfig::blocks_per_image),
      int_list_field("supervision", "sizes", &ExperimentConfig::train_sizes),
      int_field("embedding", "k", &ExperimentConfig::K),
      double_field("embedding", "eta", &ExperimentConfig::eta),
      bool_field("embedding", "center", &ExperimentConfig::center),
      int_list_field("embedding", "cr", &ExperimentConfig::cr),
      int_list_field("midlevel", "sizes", &ExperimentConfig::sizes),
      int_field("midlevel", "step", &ExperimentConfig::step),
      int_field("midlevel", "cell", &ExperimentConfig::cell),
      int_field("wordrep", "global_gaussians", &ExperimentConfig::global_gaussians),
      string_field("wordrep", "pyramid", &ExperimentConfig::pyramid),
      double_field("wordrep", "power_alpha", &ExperimentConfig::power_alpha),
      int_field("wordrep", "global_samples", &ExperimentConfig::global_samples),
      int_list_field("wordrep", "levels", &ExperimentConfig::levels),
      double_field("wordrep", "ridge_lambda", &ExperimentConfig::ridge_lambda),
      int_field("wordrep", "oof_folds", &ExperimentConfig::oof_folds),
      int_field("wordrep", "out_dim", &ExperimentConfig::out_dim),
      double_field("wordrep", "subspace_eta", &ExperimentConfig::subspace_eta),
      bool_field("eval", "case_sensitive", &ExperimentConfig::case_sensitive),
      int_field("eval", "lexicon_size", &ExperimentConfig::lexicon_size),
      {"eval", "learn_fractions",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.learn_fractions = parse_double_list(k, v);
       },
       [](const ExperimentConfig& c) { return nlohmann::json(c.learn_fractions); }},
  };
  return f;
}

}  // namespace

int ExperimentConfig::supervised_cr() const {
  return cr.empty() ? 1 : *std::max_element(cr.begin(), cr.end());
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const std::string k = trim(key), v = trim(value);
  for (const auto& f : fields()) {
    if (k == f.section + "." + f.key || k == f.key) {
      f.set(cfg, k, v);
      return;
    }
  }
  throw InvalidInput("unknown config key '" + k + "'");
}

void apply_config_text(ExperimentConfig& cfg, const std::string& text) {
  std::stringstream ss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw InvalidInput("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidInput("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    apply_setting(cfg, key, line.substr(eq + 1));
  }
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(base, ss.str());
  return base;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : fields()) j[f.section][f.key] = f.get(cfg);
  return j;
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << "\n";
      section = f.section;
      out << "[" << section << "]\n";
    }
    const auto v = f.get(cfg);
    out << f.key << " = ";
    if (v.is_array()) {
      std::string sep;
      for (const auto& e : v) out << std::exchange(sep, ",") << e.dump();
      out << "\n";
    } else if (v.is_string()) {
      out << '"' << v.get<std::string>() << "\"\n";
    } else {
      out << v.dump() << "\n";
    }
  }
  return out.str();
}

void validate(const ExperimentConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidInput("config: " + what);
  };
  need(c.words >= 1, "corpus.words must be >= 1");
  need(c.per_word >= 1, "corpus.per_word must be >= 1");
  need(c.learn_per_word >= 1 && c.train_per_word >= 1 && c.learn_per_word + c.train_per_word < c.per_word,
       "each word needs learn, train and test instances");
  need(c.height > 0, "corpus.height must be positive");
  need(!c.sift_scales.empty() && c.sift_step >= 1, "features.scales and features.step must be set");
  need(c.pca_dim >= 1 && c.pca_dim <= 128, "features.pca_dim must be in [1, 128]");
  need(c.block_gaussians >= 1 && c.global_gaussians >= 1, "Gaussian counts must be >= 1");
  need(c.blocks_per_image >= 1, "supervision.blocks_per_image must be >= 1");
  need(c.K >= 1 && c.K <= kAlphabetSize, "embedding.k must be in [1, 62]");
  need(c.eta > 0 && c.subspace_eta > 0, "regularizers must be positive");
  need(!c.cr.empty(), "embedding.cr must list at least one R");
  for (int r : c.cr) need(r >= 1, "embedding.cr entries must be >= 1");
  need(c.cell >= 1 && c.step % c.cell == 0, "midlevel.step must be a multiple of midlevel.cell");
  for (int s : c.sizes) need(s % (2 * c.cell) == 0, "midlevel.sizes must be multiples of twice the cell size");
  (void)parse_pyramid(c.pyramid);
  need(!c.levels.empty(), "wordrep.levels must be non-empty");
  need(c.ridge_lambda > 0, "wordrep.ridge_lambda must be positive");
  need(c.oof_folds >= 2, "wordrep.oof_folds must be >= 2");
  need(c.out_dim >= 1, "wordrep.out_dim must be >= 1");
  need(c.lexicon_size >= 1, "eval.lexicon_size must be >= 1");
  for (double f : c.learn_fractions) need(f > 0 && f <= 1, "eval.learn_fractions entries must be in (0, 1]");
}

}  // namespace midfeat
