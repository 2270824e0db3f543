// midfeat: corpus synthesis, staged training, extraction, evaluation.

#include "midfeat/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

using namespace midfeat;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> settings;  // key=value
  std::optional<int> blocks_per_image, k, step, global_gaussians, out_dim;
  std::optional<double> eta;
  std::optional<std::string> cr, sizes, pyramid;
  bool verbose = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "key=value configuration file")->check(CLI::ExistingFile);
  app->add_option("--set", c.settings, "override one setting, e.g. --set corpus.words=20");
  app->add_option("--blocks-per-image", c.blocks_per_image, "training blocks sampled per learn image");
  app->add_option("--eta", c.eta, "CCA ridge jitter");
  app->add_option("--cr", c.cr, "label-grid resolutions, e.g. 4 or 1,4");
  app->add_option("--k", c.k, "embedding dimension");
  app->add_option("--step", c.step, "block stride in pixels");
  app->add_option("--sizes", c.sizes, "block sides, e.g. 16,24,32,40,48");
  app->add_option("--global-gaussians", c.global_gaussians, "global GMM components");
  app->add_option("--pyramid", c.pyramid, "global pyramid: 2x6, 2x2 or none");
  app->add_option("--out-dim", c.out_dim, "common subspace dimension");
  app->add_flag("-v,--verbose", c.verbose, "log stage progress to stderr");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg;
  if (!c.config_path.empty()) cfg = load_config(c.config_path);
  auto set = [&](const char* key, const auto& v) {
    if (!v) return;
    if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, std::string>)
      apply_setting(cfg, key, *v);
    else
      apply_setting(cfg, key, std::to_string(*v));
  };
  set("supervision.blocks_per_image", c.blocks_per_image);
  set("embedding.k", c.k);
  set("midlevel.step", c.step);
  set("wordrep.global_gaussians", c.global_gaussians);
  set("wordrep.out_dim", c.out_dim);
  set("embedding.cr", c.cr);
  set("midlevel.sizes", c.sizes);
  set("wordrep.pyramid", c.pyramid);
  if (c.eta) {
    std::ostringstream s;
    s.precision(17);
    s << *c.eta;
    apply_setting(cfg, "embedding.eta", s.str());
  }
  for (const auto& kv : c.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidInput("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  validate(cfg);
  return cfg;
}

Logger make_logger(bool verbose) {
  if (!verbose) return {};
  const auto t0 = std::chrono::steady_clock::now();
  return [t0](const std::string& msg) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "[%8.1fs] %s\n", s, msg.c_str());
  };
}

Corpus corpus_for(const ExperimentConfig& cfg, const std::string& dir) {
  ExperimentConfig c = cfg;
  if (!dir.empty()) c.corpus_dir = dir;
  return make_corpus(c);
}

void write_json(const nlohmann::json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path);
  out << j.dump(2) << "\n";
}

GrayImage to_height(const GrayImage& img, int height) {
  CorpusEntry e;
  e.word.id = "input";
  e.word.image = img;
  return normalize_height(e, height).word.image;
}

const CcaModel& embedding_of(const TrainedModels& m, const std::string& source) {
  auto it = m.block_embeddings.find(source);
  if (it == m.block_embeddings.end()) {
    std::string have;
    for (const auto& [k, v] : m.block_embeddings) have += " " + k;
    throw InvalidInput("archive has no block embedding '" + source + "'; available:" + have);
  }
  return it->second;
}

double seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mid-level block features for word-image retrieval and recognition"};
  app.require_subcommand(1);
  Common common;
  std::string corpus_dir, models_dir, out_path, source = "sup-cr4";

  auto* synth = app.add_subcommand("synth", "render a synthetic word corpus");
  add_common(synth, common);
  synth->add_option("--out", out_path, "output corpus directory")->required();

  std::string stage_name_arg = "all";
  auto* train = app.add_subcommand("train", "run one training stage, or all of them, into a model archive");
  add_common(train, common);
  train->add_option("--stage", stage_name_arg, "pca|gmm-block|embed|gmm-global|attributes|subspace|all");
  train->add_option("--corpus", corpus_dir, "corpus directory (default: synthesize)");
  train->add_option("--models", models_dir, "model archive directory; updated in place")->required();

  std::string mode = "fast", image_path;
  auto* extract = app.add_subcommand("extract", "mid-level block features of one image");
  add_common(extract, common);
  extract->add_option("--mode", mode, "naive|fast")->check(CLI::IsMember({"naive", "fast"}));
  extract->add_option("--image", image_path, "input image (.png or .pgm)")->required()->check(CLI::ExistingFile);
  extract->add_option("--models", models_dir, "model archive directory")->required();
  extract->add_option("--source", source, "block embedding: sup-cr<R> or unsup");
  extract->add_option("--out", out_path, "output archive directory with tensors 'features' and 'blocks'")->required();

  std::string task = "qbe";
  auto* eval = app.add_subcommand("eval", "evaluate a trained archive on the test split");
  add_common(eval, common);
  eval->add_option("--task", task, "qbe|qbs|recog|all")->check(CLI::IsMember({"qbe", "qbs", "recog", "all"}));
  eval->add_option("--corpus", corpus_dir, "corpus directory (default: synthesize)");
  eval->add_option("--models", models_dir, "model archive directory")->required();
  eval->add_option("--out", out_path, "report JSON path (default: stdout)");

  int verify_images = 20;
  double tolerance = 1e-6;
  auto* verify = app.add_subcommand("verify", "property checks on a trained archive: fast vs naive, additivity, CCA identities");
  add_common(verify, common);
  verify->add_option("--corpus", corpus_dir, "corpus directory (default: synthesize)");
  verify->add_option("--models", models_dir, "model archive directory")->required();
  verify->add_option("--source", source, "block embedding: sup-cr<R> or unsup");
  verify->add_option("--images", verify_images, "number of images");
  verify->add_option("--tolerance", tolerance, "maximum l2 difference per block");

  int width = 300, repeats = 5;
  auto* bench = app.add_subcommand("bench", "time naive and fast extraction on one rendered word");
  add_common(bench, common);
  bench->add_option("--models", models_dir, "model archive directory")->required();
  bench->add_option("--source", source, "block embedding: sup-cr<R> or unsup");
  bench->add_option("--width", width, "image width in pixels");
  bench->add_option("--repeats", repeats, "fast extraction repetitions");

  std::string report_path;
  auto* experiment = app.add_subcommand("experiment", "train, evaluate and report in one run");
  add_common(experiment, common);
  experiment->add_option("--corpus", corpus_dir, "corpus directory (default: synthesize)");
  experiment->add_option("--models", models_dir, "also save the trained archive here");
  experiment->add_option("--out", report_path, "report JSON path");

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = resolve(common);
    const Logger log = make_logger(common.verbose);

    if (*synth) {
      const Corpus c = corpus_for(cfg, "");
      save_corpus(c, out_path);
      std::printf("wrote %zu images to %s (hash %016llx)\n", c.entries.size(), out_path.c_str(),
                  static_cast<unsigned long long>(corpus_hash(c)));
    } else if (*train) {
      const Corpus c = corpus_for(cfg, corpus_dir);
      validate(c);
      TrainedModels m;
      if (std::filesystem::exists(std::filesystem::path(models_dir) / "manifest.json"))
        m = from_archive(Archive::load(models_dir));
      const auto t0 = std::chrono::steady_clock::now();
      if (stage_name_arg == "all") {
        m = train_models(c, cfg, log);
      } else {
        run_stage(parse_stage(stage_name_arg), c, cfg, m, log);
      }
      to_archive(m, cfg).save(models_dir);
      std::printf("%s done in %.1fs, archive %s\n", stage_name_arg.c_str(), seconds(t0), models_dir.c_str());
    } else if (*extract) {
      const TrainedModels m = from_archive(Archive::load(models_dir));
      if (!m.pca || !m.block_gmm) throw InvalidInput("archive lacks the pca and gmm-block stages");
      const CcaModel& emb = embedding_of(m, source);
      const GrayImage img = to_height(read_image(image_path), cfg.height);
      const ImageFeatures f = compute_image_features(img, m, cfg);
      const auto t0 = std::chrono::steady_clock::now();
      MidLevelSet ml = mode == "fast" ? midlevel_features(f, m, emb, cfg)
                                      : extract_naive(f.encoded, *m.block_gmm, emb, f.width, f.height, cfg.sizes,
                                                      cfg.step);
      const double dt = seconds(t0);
      RowMatrix boxes(ml.size(), 4);
      for (Eigen::Index i = 0; i < ml.size(); ++i) {
        const BBox& b = ml.blocks[static_cast<std::size_t>(i)];
        boxes.row(i) << b.x, b.y, b.w, b.h;
      }
      Archive out;
      out.meta["mode"] = mode;
      out.meta["source"] = source;
      out.meta["image"] = image_path;
      out.put("features", ml.v);
      out.put("blocks", boxes);
      out.save(out_path);
      std::printf("%lld blocks x %lld dims in %.3fs (%s)\n", static_cast<long long>(ml.size()),
                  static_cast<long long>(ml.v.cols()), dt, mode.c_str());
    } else if (*eval) {
      const TrainedModels m = from_archive(Archive::load(models_dir));
      const Corpus c = corpus_for(cfg, corpus_dir);
      validate(c);
      Report rep = evaluate_models(m, c, cfg, log);
      if (task != "all") {
        const std::string keep = task == "recog" ? "recog-" : task;
        std::erase_if(rep.rows, [&](const ReportRow& r) { return r.task.rfind(keep, 0) != 0; });
      }
      std::cout << rep.table();
      if (!out_path.empty()) write_json(rep.to_json(), out_path);
    } else if (*verify) {
      const TrainedModels m = from_archive(Archive::load(models_dir));
      if (!m.pca || !m.block_gmm) throw InvalidInput("archive lacks the pca and gmm-block stages");
      const CcaModel& emb = embedding_of(m, source);
      const Corpus c = corpus_for(cfg, corpus_dir);
      const int n = std::min<int>(verify_images, static_cast<int>(c.entries.size()));
      double worst = 0;
      double t_fast = 0, t_naive = 0;
      for (int i = 0; i < n; ++i) {
        const ImageFeatures f = compute_image_features(c.entries[static_cast<std::size_t>(i)].word.image, m, cfg);
        auto t0 = std::chrono::steady_clock::now();
        const MidLevelSet a = midlevel_features(f, m, emb, cfg);
        t_fast += seconds(t0);
        t0 = std::chrono::steady_clock::now();
        const MidLevelSet b = extract_naive(f.encoded, *m.block_gmm, emb, f.width, f.height, cfg.sizes, cfg.step);
        t_naive += seconds(t0);
        if (a.size() != b.size()) throw Error("block count differs on image " + std::to_string(i));
        if (a.size() > 0) worst = std::max(worst, (a.v - b.v).rowwise().norm().maxCoeff());
      }
      const bool fast_ok = worst <= tolerance;
      std::printf("%s fast-vs-naive: %d images, max block difference %.3g (tolerance %.1g), fast %.2fs, naive %.2fs\n",
                  fast_ok ? "PASS" : "FAIL", n, worst, tolerance, t_fast, t_naive);

      // Additivity of the block FV over a left/right split of real descriptors,
      // and the quadrant identity of the stored projection.
      double add_err = 0, quad_err = 0;
      Rng rng(Seeds(cfg.seed).subsample);
      for (int i = 0; i < n; ++i) {
        const ImageFeatures f = compute_image_features(c.entries[static_cast<std::size_t>(i)].word.image, m, cfg);
        const RowMatrix& x = f.encoded.x;
        const Eigen::Index half = x.rows() / 2;
        const Vector whole = encode_fv(x, *m.block_gmm).v;
        const Vector parts =
            encode_fv(RowMatrix(x.topRows(half)), *m.block_gmm).v + encode_fv(RowMatrix(x.bottomRows(x.rows() - half)), *m.block_gmm).v;
        add_err = std::max(add_err, (whole - parts).cwiseAbs().maxCoeff() / std::max(1.0, whole.cwiseAbs().maxCoeff()));
        std::normal_distribution<double> g;
        Vector v(emb.input_dim());
        for (auto& e : v) e = g(rng);
        const Matrix hat = rearrange_u(emb.U);
        const Eigen::Index q_rows = hat.rows(), K = emb.dim();
        Vector sum = Vector::Zero(K);
        for (Eigen::Index q = 0; q < 4; ++q) sum += hat.middleCols(q * K, K).transpose() * v.segment(q * q_rows, q_rows);
        quad_err = std::max(quad_err, (emb.U.transpose() * v - sum).cwiseAbs().maxCoeff());
      }
      const bool add_ok = add_err <= 1e-12, quad_ok = quad_err <= 1e-9;
      std::printf("%s additivity: max relative deviation %.3g\n", add_ok ? "PASS" : "FAIL", add_err);
      std::printf("%s quadrant identity: max deviation %.3g\n", quad_ok ? "PASS" : "FAIL", quad_err);
      const Vector& r = emb.correlations;
      bool cca_ok = true;
      for (Eigen::Index k = 0; k < r.size(); ++k)
        cca_ok = cca_ok && r(k) >= -1e-6 && r(k) <= 1 + 1e-6 && (k == 0 || r(k) <= r(k - 1) + 1e-6);
      if (r.size() > 0 && r.cwiseAbs().maxCoeff() > 0)
        std::printf("%s CCA correlations: %lld values in [%.4f, %.4f], non-increasing\n", cca_ok ? "PASS" : "FAIL",
                    static_cast<long long>(r.size()), r.minCoeff(), r.maxCoeff());
      return fast_ok && add_ok && quad_ok && cca_ok ? 0 : 1;
    } else if (*bench) {
      const TrainedModels m = from_archive(Archive::load(models_dir));
      if (!m.pca || !m.block_gmm) throw InvalidInput("archive lacks the pca and gmm-block stages");
      const CcaModel& emb = embedding_of(m, source);
      Rng rng(Seeds(cfg.seed).corpus);
      RenderStyle style;
      style.height = cfg.height;
      GrayImage img = render_word("benchmark", style, rng).first.image;
      img = to_height(img, cfg.height);
      GrayImage canvas(width, cfg.height, 1.0);
      for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < std::min(width, img.width()); ++x) canvas(x, y) = img(x, y);
      const ImageFeatures f = compute_image_features(canvas, m, cfg);
      double best = 1e30;
      GridOpStats st;
      for (int r = 0; r < repeats; ++r) {
        st = {};
        const auto t0 = std::chrono::steady_clock::now();
        const IntegralGrid g = build_integral_grid(f.encoded, *m.block_gmm, emb, f.width, f.height, cfg.cell, &st);
        extract_fast(g, cfg.sizes, cfg.step, &st);
        best = std::min(best, seconds(t0));
      }
      auto t0 = std::chrono::steady_clock::now();
      extract_naive(f.encoded, *m.block_gmm, emb, f.width, f.height, cfg.sizes, cfg.step);
      const double naive = seconds(t0);
      std::printf("%dx%d image, %lld blocks: fast %.3fs (best of %d), naive %.3fs\n", width, cfg.height,
                  static_cast<long long>(st.blocks), best, repeats, naive);
      std::printf("per block: %.1f lookups, %.1f adds (K = %lld)\n",
                  static_cast<double>(st.block_lookups) / static_cast<double>(st.blocks),
                  static_cast<double>(st.block_vector_adds) / static_cast<double>(st.blocks),
                  static_cast<long long>(emb.U.cols()));
    } else if (*experiment) {
      ExperimentConfig c = cfg;
      if (!corpus_dir.empty()) c.corpus_dir = corpus_dir;
      TrainedModels m;
      const Report rep = run_experiment(c, log, &m);
      std::cout << rep.table();
      if (!models_dir.empty()) to_archive(m, c).save(models_dir);
      if (!report_path.empty()) write_json(rep.to_json(), report_path);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
