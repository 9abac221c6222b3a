#pragma once

#include "dgc/common.hpp"

namespace dgc::mixture {

// Gaussian mixture prior over the latent code: weights pi_k, component
// means mu_k and diagonal variances sigma_k^2. Variances are stored as
// log-variances so that exponentiation guarantees positivity.
struct MixturePrior {
  Vec weights;    // K, simplex
  Mat means;      // K x d
  Mat log_vars;   // K x d

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(means.cols()); }
  Vec variance(int k) const { return log_vars.row(k).array().exp(); }

  static MixturePrior from_variances(const Vec& weights, const Mat& means, const Mat& variances);

  // Throws std::invalid_argument when any invariant is broken:
  // weights on the simplex within 1e-6 with entries in (0,1], K >= 1,
  // consistent dimensions, finite parameters.
  void validate() const;
};

// Mean/variance pair for a diagonal Gaussian, log-variance parametrized.
struct DiagonalGaussian {
  Vec mean;
  Vec log_var;

  int dim() const { return static_cast<int>(mean.size()); }
  Vec variance() const { return log_var.array().exp(); }

  static DiagonalGaussian from_variance(const Vec& mean, const Vec& variance);
};

// A point on the K-simplex: lambdas[k] = q(c = k | x).
struct ClusterPosterior {
  Vec lambdas;

  int components() const { return static_cast<int>(lambdas.size()); }
  void validate() const;  // nonnegative, sums to 1 within 1e-6
};

enum class ResponseKind { categorical, gaussian };

// Per-component conditional log-likelihoods log p(y | z, c = k).
struct ResponseLogLikelihoods {
  Vec values;  // K
  ResponseKind kind = ResponseKind::categorical;

  void validate() const;  // all entries finite
};

// Per-component clamped entropies H_max(p(y | z, c = k)), each >= 0.
struct EntropyVector {
  Vec values;  // K

  void validate() const;
};

// Parameters of a single response distribution p(y | z, c = k).
struct ResponseDistribution {
  ResponseKind kind;
  Vec probs;    // categorical: simplex over classes
  Vec mean;     // gaussian
  Vec log_var;  // gaussian: per-output log-variance
};

// log N(z; mu_k, diag(sigma_k^2)), computed entirely in log-space.
double log_component_density(const Vec& z, const MixturePrior& prior, int k);

// log p(c = k | z) for all k, via log-sum-exp; exposed because both the
// posterior formulas and the training loss consume the log form.
Vec log_responsibilities(const Vec& z, const MixturePrior& prior);

// Exact normalized posterior over components, p(c | z).
ClusterPosterior responsibilities(const Vec& z, const MixturePrior& prior);

// Closed-form KL(q || p) between diagonal Gaussians; nonnegative.
double kl_diag_gaussians(const DiagonalGaussian& q, const DiagonalGaussian& p);

// KL between categorical distributions with the 0*log(0/.) = 0 convention.
// A zero p entry under positive q mass breaks absolute continuity; the
// result is then flagged and carries value +infinity rather than NaN.
struct CategoricalKl {
  double value = 0.0;
  bool absolutely_continuous = true;
};
CategoricalKl kl_categorical(const ClusterPosterior& q, const Vec& p);

// Optimal variational posterior over components given the response
// log-likelihoods: softmax(loglik + log resp). Exact solution of the
// constrained convex program whose objective trades the KL to the
// responsibilities against the expected response log-likelihood.
ClusterPosterior optimal_q(const ResponseLogLikelihoods& loglik, const ClusterPosterior& resp);

// Entropy of a response distribution, clamped below at zero. Categorical
// entropies are already nonnegative; Gaussian differential entropy
// 0.5 * sum_j log(2*pi*e*sigma_j^2) can be negative and is clamped.
double h_max(const ResponseDistribution& dist);

// Optimal posterior under the entropy regularizer:
// softmax(loglik - entropies + log resp).
ClusterPosterior optimal_q_regularized(const ResponseLogLikelihoods& loglik,
                                       const EntropyVector& entropies,
                                       const ClusterPosterior& resp);

// Label-free test-time posterior: softmax(-entropies + log resp). Among
// components with equal responsibility the lowest-entropy one wins.
ClusterPosterior test_q(const EntropyVector& entropies, const ClusterPosterior& resp);

// Numerical oracle for the simplex-constrained convex program
//   min_q  sum_k q_k * (log q_k - log_resp_k) - sum_k q_k * linear_k
// solved by projected-gradient descent with Armijo backtracking, run to a
// KKT stationarity residual below `tol`. Test-only utility: validates the
// closed-form posteriors against an independent optimization route.
struct ConvexProgram {
  Vec log_resp;  // log of a positive reference distribution (need not be normalized)
  Vec linear;    // per-component linear reward, e.g. loglik - entropies
};

struct ConvexOracleOptions {
  double tol = 1e-10;
  int max_iterations = 200000;
};

// Throws std::runtime_error with the final residual on non-convergence.
Vec convex_oracle(const ConvexProgram& program, const ConvexOracleOptions& opts = {});

// Euclidean projection onto the probability simplex.
Vec project_to_simplex(const Vec& v);

}  // namespace dgc::mixture
