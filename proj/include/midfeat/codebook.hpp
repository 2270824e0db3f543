#pragma once

// Diagonal-covariance Gaussian mixture: EM training and posteriors.

#include "midfeat/core.hpp"

#include <limits>
#include <numbers>

namespace midfeat {

struct GmmModel {
  Vector weights;     // G, on the simplex
  RowMatrix means;    // G x d
  RowMatrix variances;  // G x d

  Eigen::Index components() const { return weights.size(); }
  Eigen::Index dim() const { return means.cols(); }
};

struct GmmOptions {
  int iterations = 100;
  double tolerance = 1e-6;       // relative log-likelihood change for early stop
  int restarts = 3;
  double variance_floor = 1e-6;  // relative to the per-dimension data variance
};

struct GmmFitTrace {
  std::vector<double> log_likelihood;  // mean per-sample log-likelihood per EM iteration, best restart
  int best_restart = 0;
};

namespace detail {

/// Log of w_k * N(x; mu_k, var_k) for every component.
inline void log_joint(const GmmModel& gmm, const Vector& log_norm, const RowMatrix& inv_var,
                      const double* x, double* out) {
  const Eigen::Index G = gmm.components(), d = gmm.dim();
  for (Eigen::Index k = 0; k < G; ++k) {
    const double* mu = gmm.means.row(k).data();
    const double* iv = inv_var.row(k).data();
    double q = 0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double diff = x[j] - mu[j];
      q += diff * diff * iv[j];
    }
    out[k] = log_norm(k) - 0.5 * q;
  }
}

/// Normalizes log values in place into posteriors; returns log-sum-exp.
inline double softmax_inplace(double* v, Eigen::Index n) {
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) m = std::max(m, v[k]);
  double s = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    v[k] = std::exp(v[k] - m);
    s += v[k];
  }
  for (Eigen::Index k = 0; k < n; ++k) v[k] /= s;
  return m + std::log(s);
}

}  // namespace detail

/// Precomputed per-component constants: log w_k - 1/2 sum log(2 pi var).
struct GmmEvaluator {
  const GmmModel* gmm;
  Vector log_norm;
  RowMatrix inv_var;

  explicit GmmEvaluator(const GmmModel& model) : gmm(&model) {
    const Eigen::Index G = model.components();
    log_norm.resize(G);
    inv_var = model.variances.cwiseInverse();
    for (Eigen::Index k = 0; k < G; ++k) {
      log_norm(k) = std::log(model.weights(k)) -
                    0.5 * (model.variances.row(k).array() * (2.0 * std::numbers::pi)).log().sum();
    }
  }

  /// Writes posteriors into `gamma` (length G); returns log p(x).
  double posteriors(const double* x, double* gamma) const {
    detail::log_joint(*gmm, log_norm, inv_var, x, gamma);
    return detail::softmax_inplace(gamma, gmm->components());
  }
};

inline Vector posteriors(const GmmModel& model, const Vector& x) {
  if (x.size() != model.dim()) throw DimensionMismatch("posteriors", model.dim(), x.size());
  if (!x.allFinite()) throw InvalidInput("posteriors: non-finite input");
  Vector gamma(model.components());
  GmmEvaluator(model).posteriors(x.data(), gamma.data());
  return gamma;
}

/// Posteriors for every row (n x G).
inline RowMatrix posteriors(const GmmModel& model, const RowMatrix& x) {
  if (x.cols() != model.dim()) throw DimensionMismatch("posteriors", model.dim(), x.cols());
  const GmmEvaluator eval(model);
  RowMatrix gamma(x.rows(), model.components());
  for (Eigen::Index i = 0; i < x.rows(); ++i) eval.posteriors(x.row(i).data(), gamma.row(i).data());
  return gamma;
}

inline double mean_log_likelihood(const GmmModel& model, const RowMatrix& x) {
  const GmmEvaluator eval(model);
  Vector gamma(model.components());
  double ll = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) ll += eval.posteriors(x.row(i).data(), gamma.data());
  return ll / static_cast<double>(x.rows());
}

namespace detail {

inline RowMatrix kmeans_pp_seeds(const RowMatrix& x, Eigen::Index G, Rng& rng) {
  const Eigen::Index n = x.rows();
  RowMatrix centers(G, x.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = x.row(pick(rng));
  Vector dist = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index k = 1; k < G; ++k) {
    const double total = dist.sum();
    Eigen::Index chosen = pick(rng);
    if (total > 0) {
      double target = unit(rng) * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= dist(i);
        if (target <= 0) {
          chosen = i;
          break;
        }
      }
    }
    centers.row(k) = x.row(chosen);
    dist = dist.cwiseMin((x.rowwise() - centers.row(k)).rowwise().squaredNorm());
  }
  return centers;
}

inline GmmModel init_from_seeds(const RowMatrix& x, const RowMatrix& seeds, const Vector& floor,
                                const Vector& data_var) {
  const Eigen::Index G = seeds.rows(), d = x.cols(), n = x.rows();
  Vector counts = Vector::Zero(G);
  RowMatrix sum = RowMatrix::Zero(G, d), sq = RowMatrix::Zero(G, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    (seeds.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
    counts(best) += 1;
    sum.row(best) += x.row(i);
    sq.row(best) += x.row(i).cwiseAbs2();
  }
  GmmModel m;
  m.weights.resize(G);
  m.means = seeds;
  m.variances.resize(G, d);
  for (Eigen::Index k = 0; k < G; ++k) {
    if (counts(k) >= 2) {
      m.means.row(k) = sum.row(k) / counts(k);
      m.variances.row(k) = (sq.row(k) / counts(k) - m.means.row(k).cwiseAbs2()).cwiseMax(floor.transpose());
    } else {
      m.variances.row(k) = data_var.transpose().cwiseMax(floor.transpose());
    }
    m.weights(k) = std::max(counts(k), 1.0);
  }
  m.weights /= m.weights.sum();
  return m;
}

// One EM run; returns the per-iteration mean log-likelihood trace.
inline std::vector<double> run_em(const RowMatrix& x, GmmModel& m, const Vector& floor, const GmmOptions& opts) {
  const Eigen::Index n = x.rows(), G = m.components();
  std::vector<double> trace;
  RowMatrix gamma(n, G);
  for (int it = 0; it < opts.iterations; ++it) {
    // E-step at the current parameters.
    const GmmEvaluator eval(m);
    double ll = 0;
    for (Eigen::Index i = 0; i < n; ++i) ll += eval.posteriors(x.row(i).data(), gamma.row(i).data());
    ll /= static_cast<double>(n);
    trace.push_back(ll);
    if (trace.size() >= 2) {
      const double prev = trace[trace.size() - 2];
      if (std::abs(ll - prev) < opts.tolerance * std::abs(prev)) break;
    }
    // M-step.
    const Vector nk = gamma.colwise().sum().transpose();
    const RowMatrix sx = gamma.transpose() * x;
    const RowMatrix sxx = gamma.transpose() * x.cwiseAbs2();
    for (Eigen::Index k = 0; k < G; ++k) {
      const double c = std::max(nk(k), 1e-300);
      m.means.row(k) = sx.row(k) / c;
      m.variances.row(k) = (sxx.row(k) / c - m.means.row(k).cwiseAbs2()).cwiseMax(floor.transpose());
      m.weights(k) = std::max(nk(k) / static_cast<double>(n), 1e-12);
    }
    m.weights /= m.weights.sum();
  }
  return trace;
}

}  // namespace detail

/// EM with k-means++ seeding; keeps the restart with the best final likelihood.
inline GmmModel fit_gmm(const RowMatrix& x, Eigen::Index G, std::uint64_t seed, const GmmOptions& opts = {},
                        GmmFitTrace* trace_out = nullptr) {
  if (G < 1) throw InvalidInput("GMM needs at least one component");
  if (x.rows() == 0) throw InvalidInput("GMM: empty data");
  if (x.rows() < 10 * G) throw InvalidInput("GMM: need at least 10 samples per component");
  if (!x.allFinite()) throw InvalidInput("GMM: non-finite data");
  const Vector mean = x.colwise().mean().transpose();
  const Vector data_var = (x.rowwise() - mean.transpose()).cwiseAbs2().colwise().mean().transpose();
  if (data_var.maxCoeff() <= 0) throw InvalidInput("GMM: degenerate data (zero variance)");
  const double max_var = data_var.maxCoeff();
  // Per-dimension floor; dimensions with no variance fall back to the largest one.
  Vector floor = (data_var.array() > 0).select(data_var, max_var) * opts.variance_floor;

  Rng rng(seed);
  GmmModel best;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, opts.restarts); ++r) {
    GmmModel m = G == 1 ? detail::init_from_seeds(x, mean.transpose(), floor, data_var)
                        : detail::init_from_seeds(x, detail::kmeans_pp_seeds(x, G, rng), floor, data_var);
    auto trace = detail::run_em(x, m, floor, opts);
    const double ll = mean_log_likelihood(m, x);
    if (ll > best_ll) {
      best_ll = ll;
      best = std::move(m);
      if (trace_out) {
        trace.push_back(ll);
        trace_out->log_likelihood = std::move(trace);
        trace_out->best_restart = r;
      }
    }
    if (G == 1) break;
  }
  return best;
}

/// Float rounding of every parameter. Weights are not renormalized, so the
/// result is exactly what the archive stores.
inline void quantize_f32(GmmModel& m) {
  quantize_f32(m.weights);
  quantize_f32(m.means);
  quantize_f32(m.variances);
}

}  // namespace midfeat
