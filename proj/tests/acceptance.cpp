// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include "midfeat/experiment.hpp"

#include "test_util.hpp"

#include <CLI11.hpp>
#include <Eigen/Eigenvalues>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <set>

using namespace midfeat;
using namespace midfeat::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void note(const std::string& msg) { std::fprintf(stderr, "  %s\n", msg.c_str()); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// 2. Additivity, scale invariance, quadrant identity

Outcome criterion_properties() {
  Rng rng(202);
  std::uniform_int_distribution<int> n_pts(1, 60), n_g(1, 6), n_d(1, 8), parts(2, 5);
  std::uniform_real_distribution<double> log_scale(-3, 3);
  double p1 = 0, p2 = 0, p3 = 0;
  for (int t = 0; t < 1000; ++t) {
    const GmmModel m = random_gmm(n_g(rng), n_d(rng), rng);
    const int n = n_pts(rng);
    const RowMatrix x = random_normal(n, m.dim(), rng, 1.5);
    const Vector whole = encode_fv(x, m).v;
    const int q = parts(rng);
    std::uniform_int_distribution<int> pick(0, q - 1);
    std::vector<std::vector<Eigen::Index>> rows(static_cast<std::size_t>(q));
    for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>(pick(rng))].push_back(i);
    Vector sum = Vector::Zero(whole.size());
    for (const auto& r : rows) sum += encode_fv(RowMatrix(x(r, Eigen::all)), m).v;
    p1 = std::max(p1, (sum - whole).cwiseAbs().maxCoeff());
  }
  for (int t = 0; t < 1000; ++t) {
    const Eigen::Index D = 4 * n_pts(rng), K = n_d(rng);
    CcaModel emb = model_from_basis(Matrix(random_normal(D, K, rng)));
    const Vector f = random_normal(D, 1, rng).col(0);
    const double c = std::pow(10.0, log_scale(rng));
    p2 = std::max(p2, (project(Vector(c * f), emb) - project(f, emb)).cwiseAbs().maxCoeff());
    const Matrix hat = rearrange_u(emb.U);
    const Eigen::Index qd = D / 4;
    Vector sum = Vector::Zero(K);
    for (Eigen::Index q = 0; q < 4; ++q)
      sum += hat.middleCols(q * K, K).transpose() * f.segment(q * qd, qd);
    p3 = std::max(p3, (emb.U.transpose() * f - sum).cwiseAbs().maxCoeff());
  }
  return {p1 <= 1e-12 && p2 <= 1e-12 && p3 <= 1e-12,
          fmt("1000 trials each; max deviation P1 %.2e, P2 %.2e, P3 %.2e (limit 1e-12)", p1, p2, p3)};
}

// ---------------------------------------------------------------------------
// 3. Finite-difference gradient check

Outcome criterion_gradient() {
  Rng rng(303);
  double worst = 0;
  for (int draw = 0; draw < 3; ++draw) {
    const GmmModel m = random_gmm(4, 5, rng);
    const RowMatrix x = random_normal(50, 5, rng, 1.2);
    const Vector fv = encode_fv(x, m, FvNorm::kAveraged).v;
    const Vector fd = finite_difference_fv(m, x);
    worst = std::max(worst, (fd - fv).norm() / fv.norm());
  }
  return {worst <= 1e-4, fmt("3 draws, max relative error %.2e (limit 1e-4)", worst)};
}

// ---------------------------------------------------------------------------
// 4. Label oracle

Outcome criterion_labels() {
  Rng rng(404);
  double worst = 0;
  int repeated = 0;
  for (int t = 0; t < 10000; ++t) {
    const auto [block, chars] = random_label_case(rng);
    const int R = 1 + t % 4;
    const Vector got = block_label(block, chars, R), want = pixel_count_label(block, chars, R);
    for (Eigen::Index i = 0; i < got.size(); ++i)
      worst = std::max(worst, std::abs(got(i) - want(i)) / std::max(1.0, std::abs(want(i))));
    std::map<char, int> touching;
    for (const auto& c : chars)
      if (pixel_count_label(block, {c}, 1).sum() > 0) ++touching[c.label];
    repeated += std::any_of(touching.begin(), touching.end(), [](auto& kv) { return kv.second > 1; });
  }
  return {worst <= 1e-9 && repeated > 0,
          fmt("10000 cases (%d with a repeated character inside the block), max relative error %.2e (limit 1e-9)",
              repeated, worst)};
}

// ---------------------------------------------------------------------------
// 5. CCA identities

Outcome criterion_cca() {
  Rng rng(505);
  // Correlated views: y depends on the first coordinates of x.
  const Eigen::Index N = 4000;
  RowMatrix x = random_normal(N, 30, rng);
  RowMatrix y = random_normal(N, 12, rng, 0.5);
  y.leftCols(8) += x.leftCols(8);
  x.col(3).array() += 2.0;
  double ortho = 0;
  for (bool center : {false, true}) {
    const CcaModel m = fit_cca(x, y, CcaOptions{10, 1e-4, center});
    RowMatrix xc = x;
    if (center) xc.rowwise() -= x.colwise().mean();
    Matrix cxx = Matrix(xc.transpose() * xc) / static_cast<double>(N);
    cxx.diagonal().array() += m.eta_used_x;
    ortho = std::max(ortho, (m.U.transpose() * cxx * m.U - Matrix::Identity(10, 10)).cwiseAbs().maxCoeff());
  }
  const CcaModel self = fit_cca(x, x, CcaOptions{10, 1e-4, true});
  const double self_min = self.correlations.minCoeff();

  // 2 x 1 case against a direct generalized eigenproblem.
  RowMatrix a = random_normal(800, 2, rng);
  a.col(1) += 0.5 * a.col(0);
  const RowMatrix b = (a.col(0) + 0.3 * random_normal(800, 1, rng)).eval();
  const double eta = 1e-3;
  const CcaModel m = fit_cca(a, b, CcaOptions{1, eta, false});
  Matrix cxx = Matrix(a.transpose() * a) / 800.0;
  cxx.diagonal().array() += eta;
  const Matrix cxy = Matrix(a.transpose() * b) / 800.0;
  const double cyy = b.squaredNorm() / 800.0 + eta;
  Eigen::EigenSolver<Matrix> es(Matrix(cxx.inverse() * cxy * cxy.transpose() / cyy));
  Eigen::Index top = 0;
  es.eigenvalues().real().maxCoeff(&top);
  Vector u = es.eigenvectors().real().col(top);
  u /= std::sqrt(u.dot(cxx * u));
  if (u.cwiseAbs()(0) < u.cwiseAbs()(1) ? u(1) < 0 : u(0) < 0) u = -u;
  const double lam_err = std::abs(m.eigenvalues()(0) - es.eigenvalues().real()(top));
  const double u_err = (m.U.col(0) - u).cwiseAbs().maxCoeff();
  return {ortho <= 1e-6 && self_min >= 0.99 && lam_err <= 1e-10 && u_err <= 1e-8,
          fmt("orthogonality %.2e (limit 1e-6), Y=X min correlation %.4f (>= 0.99), 2x1 eigenvalue error %.1e, "
              "direction error %.1e",
              ortho, self_min, lam_err, u_err)};
}

// ---------------------------------------------------------------------------
// 8. Metric oracles

Outcome criterion_metrics() {
  bool ok = true;
  std::string why;
  auto check = [&](bool c, const char* what) {
    if (!c) {
      ok = false;
      why += std::string(" ") + what;
    }
  };
  const double ap13 = *average_precision({true, false, true});
  check(std::abs(ap13 - 0.8333333333) <= 1e-9, "AP({1,3} of 2)");
  check(*average_precision({false, true}) == 0.5, "AP({2} of 1)");
  check(std::abs(*average_precision({false, false, true, false, true}) - (1.0 / 3 + 2.0 / 5) / 2) <= 1e-12,
        "AP({3,5} of 2)");
  check(!average_precision({false, false}).has_value(), "AP without relevant items");
  std::vector<RankedResult> lists(3);
  lists[0].relevant = {true, false, true};
  lists[1].relevant = {false, true};
  lists[2].relevant = {false, false};
  const RetrievalScore s = summarize(lists);
  check(s.queries == 2 && s.skipped == 1, "exclusion rule");
  check(std::abs(s.map - (5.0 / 6.0 + 0.5) / 2) <= 1e-12, "mAP");
  check(s.p_at_1 == 0.5, "P@1");
  // 4 images, 2 classes; each query finds its partner last or second.
  RowMatrix e(4, 2);
  e << 1, 0, 0, 1, 0.9, 0.1, 0.1, 0.9;
  e.rowwise().normalize();
  const RetrievalScore q = qbe_eval(e, {"a", "a", "b", "b"}, {"0", "1", "2", "3"});
  check(std::abs(q.map - 5.0 / 12.0) <= 1e-12 && q.p_at_1 == 0.0, "QBE toy");
  return {ok, fmt("AP({1,3} of 2) = %.10f; exclusion, mAP, P@1 and QBE fixtures%s", ap13,
                  ok ? " match" : (" differ:" + why).c_str())};
}

// ---------------------------------------------------------------------------
// 1. Fast/naive exactness on corpus images

Outcome criterion_fast_naive(const Corpus& corpus, const TrainedModels& m, const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  const std::string sup = supervised_name(cfg.supervised_cr());
  const CcaModel& emb = m.block_embeddings.at(sup);
  double worst = 0;
  long blocks = 0;
  int images = 0;
  bool counts_match = true;
  for (const auto& e : corpus.entries) {
    if (e.split != Split::kTest) continue;
    if (images == 20) break;
    ++images;
    const ImageFeatures f = compute_image_features(e.word.image, m, cfg);
    const MidLevelSet fast = midlevel_features(f, m, emb, cfg);
    const MidLevelSet naive = extract_naive(f.encoded, *m.block_gmm, emb, f.width, f.height, cfg.sizes, cfg.step);
    if (fast.size() != naive.size() || fast.blocks != naive.blocks) {
      counts_match = false;
      continue;
    }
    blocks += fast.size();
    if (fast.size() > 0) worst = std::max(worst, (fast.v - naive.v).rowwise().norm().maxCoeff());
  }
  const double dt = seconds(t0);
  return {counts_match && images == 20 && worst <= 1e-6 && dt < 120,
          fmt("%d images (%ld blocks, %s), max l2 distance %.2e (limit 1e-6), %.1fs (limit 120s)", images, blocks,
              sup.c_str(), worst, dt)};
}

// ---------------------------------------------------------------------------
// 9. Performance on a 120 x 300 image

Outcome criterion_performance(const TrainedModels& m, const ExperimentConfig& cfg) {
  Rng rng(909);
  RenderStyle style;
  style.height = cfg.height;
  const GrayImage word = render_word("performance", style, rng).first.image;
  GrayImage img(300, cfg.height, 1.0);
  for (int y = 0; y < std::min(cfg.height, word.height()); ++y)
    for (int x = 0; x < std::min(300, word.width()); ++x) img(x, y) = word(x, y);
  const CcaModel& emb = m.block_embeddings.at(supervised_name(cfg.supervised_cr()));
  const ImageFeatures f = compute_image_features(img, m, cfg);
  double best = 1e30;
  GridOpStats st;
  for (int r = 0; r < 3; ++r) {
    st = {};
    const auto t0 = Clock::now();
    const IntegralGrid g = build_integral_grid(f.encoded, *m.block_gmm, emb, f.width, f.height, cfg.cell, &st);
    extract_fast(g, cfg.sizes, cfg.step, &st);
    best = std::min(best, seconds(t0));
  }
  // Per-block work must not depend on the block area.
  const IntegralGrid g = build_integral_grid(f.encoded, *m.block_gmm, emb, f.width, f.height, cfg.cell);
  GridOpStats small, large;
  extract_fast(g, {cfg.sizes.front()}, cfg.step, &small);
  extract_fast(g, {cfg.sizes.back()}, cfg.step, &large);
  const double K = static_cast<double>(emb.dim());
  const double lookups = static_cast<double>(st.block_lookups) / static_cast<double>(st.blocks);
  const double adds = static_cast<double>(st.block_vector_adds) / static_cast<double>(st.blocks);
  const bool area_free = small.block_lookups * large.blocks == large.block_lookups * small.blocks &&
                         small.block_vector_adds * large.blocks == large.block_vector_adds * small.blocks;
  const bool linear = lookups <= 20 && adds <= 17 * K + 4;
  return {best < 1.0 && area_free && linear,
          fmt("%lld blocks in %.3fs (limit 1s); per block %.0f lookups and %.0f adds for K = %.0f, equal for "
              "sides %d and %d: %s",
              static_cast<long long>(st.blocks), best, lookups, adds, K, cfg.sizes.front(), cfg.sizes.back(),
              area_free ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 10. Archive round trip and evaluation rerun

Outcome criterion_archive(const TrainedModels& m, const Corpus& corpus, const ExperimentConfig& cfg,
                          const Report& ref, const std::filesystem::path& workdir) {
  const Archive a = to_archive(m, cfg);
  const auto dir = workdir / "models";
  std::filesystem::remove_all(dir);
  a.save(dir);
  const Archive b = Archive::load(dir);
  bool exact = a.names() == b.names();
  std::size_t values = 0, non_f32 = 0;
  for (const auto& name : a.names()) {
    const RowMatrix x = a.row_matrix(name), y = b.row_matrix(name);
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
      exact = false;
      continue;
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      ++values;
      if (x.data()[i] != static_cast<double>(static_cast<float>(x.data()[i]))) ++non_f32;
      if (std::memcmp(&x.data()[i], &y.data()[i], sizeof(double)) != 0) exact = false;
    }
  }
  const TrainedModels loaded = from_archive(b);
  const Report rerun = evaluate_models(loaded, corpus, cfg);
  double diff = 0;
  bool rows_match = rerun.rows.size() == ref.rows.size();
  for (const auto& r : ref.rows) {
    const ReportRow* o = rerun.find(r.source, r.representation, r.task);
    if (!o) {
      rows_match = false;
      continue;
    }
    diff = std::max({diff, std::abs(o->map - r.map), std::abs(o->p_at_1 - r.p_at_1)});
  }
  return {exact && non_f32 == 0 && rows_match && diff <= 1e-6,
          fmt("%zu tensors, %zu values, %s after reload, %zu not representable in f32; %zu evaluation numbers "
              "rerun from the archive, max difference %.2e (limit 1e-6)",
              a.names().size(), values, exact ? "bit-exact" : "NOT bit-exact", non_f32, 2 * ref.rows.size(),
              diff)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the mid-level feature pipeline"};
  std::filesystem::path workdir = std::filesystem::temp_directory_path() / "midfeat_acceptance";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "scratch directory for the archive and report");
  app.add_option("--only", only, "run a subset of criteria");
  CLI11_PARSE(app, argc, argv);
  std::filesystem::create_directories(workdir);
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  std::map<int, std::pair<std::string, Outcome>> results;
  auto run = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    if (!wanted(id)) return;
    std::fprintf(stderr, "criterion %d: %s\n", id, name.c_str());
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    note(o.detail);
    results[id] = {name, o};
  };

  run(2, "FV additivity, scale invariance, quadrant identity", criterion_properties);
  run(3, "FV gradient check", criterion_gradient);
  run(4, "block label oracle", criterion_labels);
  run(5, "CCA identities", criterion_cca);
  run(8, "metric oracles", criterion_metrics);

  if (wanted(1) || wanted(6) || wanted(7) || wanted(9) || wanted(10)) {
    const ExperimentConfig cfg;
    std::fprintf(stderr, "experiment: %d words x %d instances, seed %llu\n", cfg.words, cfg.per_word,
                 static_cast<unsigned long long>(cfg.seed));
    const auto t0 = Clock::now();
    std::optional<Corpus> corpus;
    std::optional<Report> rep;
    TrainedModels models;
    std::string failure;
    try {
      corpus = make_corpus(cfg);
      rep = run_experiment(cfg, [&](const std::string& s) { note(fmt("%7.1fs %s", seconds(t0), s.c_str())); },
                           &models, &*corpus);
      std::ofstream(workdir / "report.json") << rep->to_json().dump(2) << "\n";
      std::fprintf(stderr, "%s", rep->table().c_str());
    } catch (const std::exception& e) {
      failure = e.what();
    }
    const double total = seconds(t0);
    auto need = [&]() {
      if (!rep) throw Error("experiment failed: " + failure);
    };

    run(1, "fast extraction equals naive", [&] {
      need();
      return criterion_fast_naive(*corpus, models, cfg);
    });
    run(6, "QBE ordering of feature sources", [&] {
      need();
      const std::string sup = supervised_name(cfg.supervised_cr()), cr1 = supervised_name(1);
      const double s = rep->find(sup, "fv", "qbe")->map, b = rep->find("sift", "fv", "qbe")->map;
      const double u = rep->find("unsup", "fv", "qbe")->map, c1 = rep->find(cr1, "fv", "qbe")->map;
      const bool ok = s > b && b > u && s >= c1 - 0.01 && total < 1800;
      return Outcome{ok, fmt("mAP %s %.4f, sift %.4f, unsup %.4f, %s %.4f; %d words x %d, %.0fs (limit 1800s)",
                             sup.c_str(), s, b, u, cr1.c_str(), c1, cfg.words, cfg.per_word, total)};
    });
    run(7, "attribute embedding sanity", [&] {
      need();
      const std::string sup = supervised_name(cfg.supervised_cr());
      const double raw = rep->find(sup, "fv", "qbe")->map, att = rep->find(sup, "attributes", "qbe")->map;
      const double p1 = rep->find(sup, "attributes", "recog-sl")->p_at_1;
      return Outcome{att >= raw && p1 >= 0.80 && cfg.out_dim == 96 && cfg.lexicon_size == 50,
                     fmt("QBE mAP attributes %.4f vs raw FV %.4f; recognition P@1 %.4f (>= 0.80) with %d-word "
                         "lexicons, %d-d subspace",
                         att, raw, p1, cfg.lexicon_size, cfg.out_dim)};
    });
    run(9, "fast extraction speed and per-block cost", [&] {
      need();
      return criterion_performance(models, cfg);
    });
    run(10, "archive round trip", [&] {
      need();
      return criterion_archive(models, *corpus, cfg, *rep, workdir);
    });
  }

  int failed = 0;
  for (const auto& [id, r] : results) {
    std::printf("criterion %2d %s: %s. %s\n", id, r.second.pass ? "PASS" : "FAIL", r.first.c_str(),
                r.second.detail.c_str());
    failed += !r.second.pass;
  }
  std::fflush(stdout);
  return failed == 0 ? 0 : 1;
}
