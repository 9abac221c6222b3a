#include "dgc/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace dgc::mixture {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)
constexpr double kSimplexTol = 1e-6;

ClusterPosterior softmax_posterior(const Vec& logits) {
  ClusterPosterior out{softmax(logits)};
  out.validate();
  return out;
}

Vec log_lambdas_checked(const ClusterPosterior& resp) {
  resp.validate();
  if (resp.lambdas.maxCoeff() <= 0.0) {
    throw std::invalid_argument("cluster posterior has no positive entry");
  }
  Vec out(resp.lambdas.size());
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    out[k] = resp.lambdas[k] > 0.0 ? std::log(resp.lambdas[k])
                                   : -std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace

MixturePrior MixturePrior::from_variances(const Vec& weights, const Mat& means, const Mat& variances) {
  require(variances.size() == 0 || variances.minCoeff() > 0.0,
          "mixture prior: variances must be strictly positive");
  MixturePrior prior{weights, means, variances.array().log()};
  prior.validate();
  return prior;
}

void MixturePrior::validate() const {
  require(weights.size() >= 1, "mixture prior: K must be >= 1");
  require(means.rows() == weights.size() && log_vars.rows() == weights.size(),
          "mixture prior: means/log_vars must have one row per component");
  require(means.cols() == log_vars.cols(), "mixture prior: component dimensions differ");
  require(weights.allFinite() && means.allFinite() && log_vars.allFinite(),
          "mixture prior: parameters must be finite");
  require(std::abs(weights.sum() - 1.0) <= kSimplexTol, "mixture prior: weights must sum to 1");
  require(weights.minCoeff() > 0.0 && weights.maxCoeff() <= 1.0,
          "mixture prior: weights must lie in (0, 1]");
}

DiagonalGaussian DiagonalGaussian::from_variance(const Vec& mean, const Vec& variance) {
  require(variance.size() == 0 || variance.minCoeff() > 0.0,
          "diagonal gaussian: variance must be strictly positive");
  require_dim(mean.size(), variance.size(), "diagonal gaussian");
  return DiagonalGaussian{mean, variance.array().log()};
}

void ClusterPosterior::validate() const {
  require(lambdas.size() >= 1, "cluster posterior: empty");
  require(lambdas.allFinite(), "cluster posterior: entries must be finite");
  require(lambdas.minCoeff() >= 0.0, "cluster posterior: entries must be nonnegative");
  require(std::abs(lambdas.sum() - 1.0) <= kSimplexTol, "cluster posterior: must sum to 1");
}

void ResponseLogLikelihoods::validate() const {
  require(values.allFinite(), "response log-likelihoods: entries must be finite");
}

void EntropyVector::validate() const {
  require(values.allFinite(), "entropy vector: entries must be finite");
  require(values.size() == 0 || values.minCoeff() >= 0.0,
          "entropy vector: entries must be nonnegative");
}

double log_component_density(const Vec& z, const MixturePrior& prior, int k) {
  prior.validate();
  require(k >= 0 && k < prior.components(), "log_component_density: component index out of range");
  require_dim(prior.dim(), z.size(), "log_component_density");
  require(z.allFinite(), "log_component_density: z must be finite");

  const auto mu = prior.means.row(k).transpose().array();
  const auto lv = prior.log_vars.row(k).transpose().array();
  const double quad = ((z.array() - mu).square() * (-lv).exp()).sum();
  return -0.5 * (prior.dim() * kLog2Pi + lv.sum() + quad);
}

Vec log_responsibilities(const Vec& z, const MixturePrior& prior) {
  const int K = prior.components();
  Vec logits(K);
  for (int k = 0; k < K; ++k) {
    logits[k] = std::log(prior.weights[k]) + log_component_density(z, prior, k);
  }
  return logits.array() - log_sum_exp(logits);
}

ClusterPosterior responsibilities(const Vec& z, const MixturePrior& prior) {
  return softmax_posterior(log_responsibilities(z, prior));
}

double kl_diag_gaussians(const DiagonalGaussian& q, const DiagonalGaussian& p) {
  require_dim(q.dim(), p.dim(), "kl_diag_gaussians");
  const auto dlv = (p.log_var - q.log_var).array();
  const auto ratio = (q.log_var - p.log_var).array().exp();  // sigma_q^2 / sigma_p^2
  const auto shift = (q.mean - p.mean).array().square() * (-p.log_var).array().exp();
  const double kl = 0.5 * (dlv + ratio + shift - 1.0).sum();
  return std::max(kl, 0.0);  // guard the q == p roundoff case
}

CategoricalKl kl_categorical(const ClusterPosterior& q, const Vec& p) {
  q.validate();
  require_dim(q.components(), p.size(), "kl_categorical");
  require(p.allFinite() && p.minCoeff() >= 0.0 && std::abs(p.sum() - 1.0) <= kSimplexTol,
          "kl_categorical: p must be a simplex vector");

  CategoricalKl out;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double qk = q.lambdas[k];
    if (qk == 0.0) continue;  // 0 * log(0 / .) = 0
    if (p[k] == 0.0) {
      out.value = std::numeric_limits<double>::infinity();
      out.absolutely_continuous = false;
      return out;
    }
    out.value += qk * (std::log(qk) - std::log(p[k]));
  }
  out.value = std::max(out.value, 0.0);
  return out;
}

ClusterPosterior optimal_q(const ResponseLogLikelihoods& loglik, const ClusterPosterior& resp) {
  loglik.validate();
  require_dim(resp.components(), loglik.values.size(), "optimal_q");
  return softmax_posterior(loglik.values + log_lambdas_checked(resp));
}

double h_max(const ResponseDistribution& dist) {
  switch (dist.kind) {
    case ResponseKind::categorical: {
      require(dist.probs.size() >= 1 && dist.probs.minCoeff() >= 0.0 &&
                  std::abs(dist.probs.sum() - 1.0) <= kSimplexTol,
              "h_max: categorical parameters must be a simplex vector");
      double h = 0.0;
      for (Eigen::Index i = 0; i < dist.probs.size(); ++i) {
        if (dist.probs[i] > 0.0) h -= dist.probs[i] * std::log(dist.probs[i]);
      }
      return std::max(h, 0.0);
    }
    case ResponseKind::gaussian: {
      require(dist.log_var.size() >= 1 && dist.log_var.allFinite(),
              "h_max: gaussian parameters must be finite log-variances");
      const double h =
          0.5 * (dist.log_var.size() * (kLog2Pi + 1.0) + dist.log_var.sum());
      return std::max(h, 0.0);
    }
  }
  throw std::invalid_argument("h_max: unknown response kind");
}

ClusterPosterior optimal_q_regularized(const ResponseLogLikelihoods& loglik,
                                       const EntropyVector& entropies,
                                       const ClusterPosterior& resp) {
  loglik.validate();
  entropies.validate();
  require_dim(resp.components(), loglik.values.size(), "optimal_q_regularized");
  require_dim(resp.components(), entropies.values.size(), "optimal_q_regularized");
  return softmax_posterior(loglik.values - entropies.values + log_lambdas_checked(resp));
}

ClusterPosterior test_q(const EntropyVector& entropies, const ClusterPosterior& resp) {
  entropies.validate();
  require_dim(resp.components(), entropies.values.size(), "test_q");
  return softmax_posterior(-entropies.values + log_lambdas_checked(resp));
}

Vec project_to_simplex(const Vec& v) {
  // Sort-based projection (Held/Michelot).
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumulative = 0.0;
  double theta = 0.0;
  int rho = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cumulative += u[i];
    const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (u[i] - candidate > 0.0) {
      rho = static_cast<int>(i + 1);
      theta = candidate;
    }
  }
  (void)rho;
  return (v.array() - theta).max(0.0);
}

namespace {

double objective(const ConvexProgram& prog, const Vec& q) {
  double f = 0.0;
  for (Eigen::Index k = 0; k < q.size(); ++k) {
    if (q[k] > 0.0) f += q[k] * (std::log(q[k]) - prog.log_resp[k]);
    f -= q[k] * prog.linear[k];
  }
  return f;
}

Vec gradient(const ConvexProgram& prog, const Vec& q) {
  Vec g(q.size());
  for (Eigen::Index k = 0; k < q.size(); ++k) {
    const double lq = std::log(std::max(q[k], 1e-300));
    g[k] = lq - prog.log_resp[k] + 1.0 - prog.linear[k];
  }
  return g;
}

// KKT residual on the simplex: active coordinates must share the gradient
// value, inactive ones must not undercut it.
double kkt_residual(const Vec& q, const Vec& g) {
  double gamma = 0.0;
  for (Eigen::Index k = 0; k < q.size(); ++k) gamma += q[k] * g[k];
  double res = 0.0;
  for (Eigen::Index k = 0; k < q.size(); ++k) {
    if (q[k] > 0.0) {
      res = std::max(res, std::abs(g[k] - gamma) * q[k]);
    } else {
      res = std::max(res, std::max(0.0, gamma - g[k]));
    }
  }
  return res;
}

}  // namespace

Vec convex_oracle(const ConvexProgram& prog, const ConvexOracleOptions& opts) {
  const Eigen::Index K = prog.log_resp.size();
  require(K >= 1, "convex_oracle: K must be >= 1");
  require_dim(K, prog.linear.size(), "convex_oracle");
  require(prog.log_resp.allFinite() && prog.linear.allFinite(),
          "convex_oracle: objective parameters must be finite");
  if (K == 1) return Vec::Ones(1);

  Vec q = Vec::Constant(K, 1.0 / static_cast<double>(K));
  double f = objective(prog, q);
  Vec g = gradient(prog, q);
  double residual = kkt_residual(q, g);
  double step = 1.0 / std::max(g.cwiseAbs().maxCoeff(), 1.0);

  // Phase 1: projected-gradient descent with Barzilai-Borwein spectral
  // step lengths and Armijo backtracking.
  const int pgd_budget = std::max(opts.max_iterations / 4, 1000);
  for (int it = 0; it < pgd_budget && residual >= opts.tol; ++it) {
    bool accepted = false;
    double trial = std::clamp(step, 1e-12, 1e12);
    for (int bt = 0; bt < 60; ++bt) {
      const Vec cand = project_to_simplex(q - trial * g);
      const double fc = objective(prog, cand);
      if (fc <= f - (1e-4 / trial) * (q - cand).squaredNorm() && fc < f) {
        const Vec g_new = gradient(prog, cand);
        const Vec dq = cand - q;
        const Vec dg = g_new - g;
        const double denom = dq.dot(dg);
        step = denom > 0.0 ? dq.squaredNorm() / denom : trial * 2.0;
        q = cand;
        f = fc;
        g = g_new;
        accepted = true;
        break;
      }
      trial *= 0.5;
    }
    if (!accepted) break;  // machine-precision plateau, hand over to phase 2
    residual = kkt_residual(q, g);
  }

  // Phase 2: Euclidean steps crawl when the active coordinates span many
  // orders of magnitude; damped multiplicative steps stay well conditioned
  // there and contract the log-space error by half per iteration. The
  // iterate is accepted only through the KKT residual, never by trusting
  // the update rule.
  for (int it = 0; it < opts.max_iterations && residual >= opts.tol; ++it) {
    Vec logits(K);
    for (Eigen::Index k = 0; k < K; ++k) {
      logits[k] = std::log(std::max(q[k], 1e-300)) - 0.5 * g[k];
    }
    q = softmax(logits);
    g = gradient(prog, q);
    residual = kkt_residual(q, g);
  }

  if (residual >= opts.tol) {
    throw std::runtime_error("convex_oracle: no convergence after " +
                             std::to_string(opts.max_iterations) +
                             " iterations, final KKT residual " + std::to_string(residual));
  }
  return q;
}

}  // namespace dgc::mixture
