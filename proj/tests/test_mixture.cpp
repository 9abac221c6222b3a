#include <doctest.h>

#include "dgc/mixture.hpp"
#include "support/generators.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace dgc;
using namespace dgc::mixture;
using dgc::testing::random_gaussian;
using dgc::testing::random_prior;
using dgc::testing::random_simplex;
using dgc::testing::random_vector;

namespace {

// Direct density-formula oracle: coordinate-wise normal pdfs multiplied in
// probability space. Independent of the log-space implementation path.
double direct_log_density(const Vec& z, const Vec& mu, const Vec& var) {
  double p = 1.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    p *= 1.0 / std::sqrt(2.0 * std::numbers::pi * var[j]) *
         std::exp(-0.5 * (z[j] - mu[j]) * (z[j] - mu[j]) / var[j]);
  }
  return std::log(p);
}

ClusterPosterior uniform_posterior(int k) {
  return ClusterPosterior{Vec::Constant(k, 1.0 / k)};
}

}  // namespace

TEST_CASE("log_component_density at the standard normal mode") {
  MixturePrior prior{Vec::Ones(1), Mat::Zero(1, 1), Mat::Zero(1, 1)};
  Vec z = Vec::Zero(1);
  CHECK(log_component_density(z, prior, 0) ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("log_component_density at the component mean") {
  std::mt19937_64 rng(11);
  for (int d : {1, 3, 8}) {
    Mat means = dgc::testing::random_matrix(rng, 1, d, 2.0);
    MixturePrior prior{Vec::Ones(1), means, Mat::Zero(1, d)};
    Vec z = means.row(0).transpose();
    CHECK(log_component_density(z, prior, 0) ==
          doctest::Approx(-0.5 * d * std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
  }
}

TEST_CASE("log_component_density agrees with the direct-formula oracle") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    MixturePrior prior = random_prior(rng, 3, 3);
    Vec z = random_vector(rng, 3, 2.0);
    for (int k = 0; k < 3; ++k) {
      const double expected =
          direct_log_density(z, prior.means.row(k).transpose(), prior.variance(k));
      CHECK(log_component_density(z, prior, k) == doctest::Approx(expected).epsilon(1e-10));
    }
  }
}

TEST_CASE("log_component_density rejects dimension mismatch") {
  MixturePrior prior{Vec::Ones(1), Mat::Zero(1, 3), Mat::Zero(1, 3)};
  CHECK_THROWS_WITH_AS(log_component_density(Vec::Zero(2), prior, 0),
                       doctest::Contains("expected 3, got 2"), std::invalid_argument);
  CHECK_THROWS_AS(log_component_density(Vec::Zero(3), prior, 1), std::invalid_argument);
}

TEST_CASE("responsibilities: identical components return the prior weights") {
  Mat means = Mat::Zero(2, 2);
  Mat log_vars = Mat::Zero(2, 2);
  std::mt19937_64 rng(3);
  Vec z = random_vector(rng, 2);  // any finite z

  for (Vec w : {Vec{{0.5, 0.5}}, Vec{{0.3, 0.7}}}) {
    MixturePrior prior{w, means, log_vars};
    ClusterPosterior post = responsibilities(z, prior);
    CHECK(post.lambdas[0] == doctest::Approx(w[0]).epsilon(1e-12));
    CHECK(post.lambdas[1] == doctest::Approx(w[1]).epsilon(1e-12));
  }
}

TEST_CASE("responsibilities agree with direct-summation normalization") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 100; ++trial) {
    MixturePrior prior = random_prior(rng, 4, 2);
    Vec z = random_vector(rng, 2, 2.0);

    Vec unnorm(4);
    for (int k = 0; k < 4; ++k) {
      unnorm[k] = prior.weights[k] *
                  std::exp(direct_log_density(z, prior.means.row(k).transpose(), prior.variance(k)));
    }
    Vec expected = unnorm / unnorm.sum();

    ClusterPosterior post = responsibilities(z, prior);
    for (int k = 0; k < 4; ++k) {
      CHECK(post.lambdas[k] == doctest::Approx(expected[k]).epsilon(1e-10));
    }
  }
}

TEST_CASE("kl_diag_gaussians anchors") {
  std::mt19937_64 rng(41);
  DiagonalGaussian g = random_gaussian(rng, 4);
  CHECK(kl_diag_gaussians(g, g) == doctest::Approx(0.0).epsilon(1e-15));

  DiagonalGaussian q{Vec::Ones(1), Vec::Zero(1)};
  DiagonalGaussian p{Vec::Zero(1), Vec::Zero(1)};
  CHECK(kl_diag_gaussians(q, p) == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(kl_diag_gaussians(random_gaussian(rng, 2), random_gaussian(rng, 3)),
                  std::invalid_argument);
}

TEST_CASE("kl_diag_gaussians agrees with a Monte Carlo estimate") {
  std::mt19937_64 rng(43);
  DiagonalGaussian q = random_gaussian(rng, 5);
  DiagonalGaussian p = random_gaussian(rng, 5);
  const double closed = kl_diag_gaussians(q, p);

  // E_q[log q - log p] with 1e6 samples.
  const int n = 1000000;
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vec q_std = (0.5 * q.log_var.array()).exp();
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    Vec zs(5);
    for (int j = 0; j < 5; ++j) zs[j] = q.mean[j] + q_std[j] * normal(rng);
    double lq = 0.0, lp = 0.0;
    for (int j = 0; j < 5; ++j) {
      lq += -0.5 * (std::log(2.0 * std::numbers::pi) + q.log_var[j] +
                    (zs[j] - q.mean[j]) * (zs[j] - q.mean[j]) / std::exp(q.log_var[j]));
      lp += -0.5 * (std::log(2.0 * std::numbers::pi) + p.log_var[j] +
                    (zs[j] - p.mean[j]) * (zs[j] - p.mean[j]) / std::exp(p.log_var[j]));
    }
    const double diff = lq - lp;
    sum += diff;
    sum_sq += diff * diff;
  }
  const double mean = sum / n;
  const double stderr_mc = std::sqrt((sum_sq / n - mean * mean) / n);
  CHECK(std::abs(closed - mean) < 3.0 * stderr_mc);
}

TEST_CASE("kl_categorical anchors and direct summation") {
  CHECK(kl_categorical(uniform_posterior(4), Vec::Constant(4, 0.25)).value ==
        doctest::Approx(0.0).epsilon(1e-15));

  ClusterPosterior atom{Vec{{1.0, 0.0}}};
  CategoricalKl single = kl_categorical(atom, Vec{{0.5, 0.5}});
  CHECK(single.absolutely_continuous);
  CHECK(single.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 100; ++trial) {
    Vec qv = random_simplex(rng, 6);
    Vec pv = random_simplex(rng, 6);
    double expected = 0.0;
    for (int k = 0; k < 6; ++k) expected += qv[k] * (std::log(qv[k]) - std::log(pv[k]));
    CategoricalKl got = kl_categorical(ClusterPosterior{qv}, pv);
    CHECK(got.absolutely_continuous);
    CHECK(got.value == doctest::Approx(expected).epsilon(1e-12));
    CHECK(got.value >= 0.0);
  }
}

TEST_CASE("kl_categorical flags absolute-continuity violations") {
  ClusterPosterior q{Vec{{0.5, 0.5}}};
  Vec p{{1.0, 0.0}};
  CategoricalKl result = kl_categorical(q, p);
  CHECK_FALSE(result.absolutely_continuous);
  CHECK(std::isinf(result.value));
  CHECK(result.value > 0.0);
}

TEST_CASE("optimal_q anchors") {
  // Constant log-likelihood: the responsibilities pass through untouched.
  ResponseLogLikelihoods constant{Vec::Constant(2, -1.7), ResponseKind::categorical};
  ClusterPosterior resp{Vec{{0.3, 0.7}}};
  ClusterPosterior q = optimal_q(constant, resp);
  CHECK(q.lambdas[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(q.lambdas[1] == doctest::Approx(0.7).epsilon(1e-12));

  // Uniform responsibilities: the likelihoods dominate.
  ResponseLogLikelihoods lik{Vec{{std::log(0.8), std::log(0.2)}}, ResponseKind::categorical};
  ClusterPosterior q2 = optimal_q(lik, uniform_posterior(2));
  CHECK(q2.lambdas[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(q2.lambdas[1] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("optimal_q rejects an all-zero posterior") {
  ResponseLogLikelihoods lik{Vec::Zero(2), ResponseKind::categorical};
  ClusterPosterior degenerate{Vec::Zero(2)};
  CHECK_THROWS_AS(optimal_q(lik, degenerate), std::invalid_argument);
}

TEST_CASE("optimal_q matches the convex-program oracle") {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 50; ++trial) {
    const int K = 5;
    Vec loglik = random_vector(rng, K, 2.0);
    Vec resp = random_simplex(rng, K);

    ClusterPosterior closed = optimal_q({loglik, ResponseKind::categorical}, {resp});
    Vec numeric = convex_oracle({resp.array().log(), loglik});
    CHECK((closed.lambdas - numeric).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("h_max anchors") {
  ResponseDistribution cat{ResponseKind::categorical, Vec::Constant(4, 0.25), {}};
  CHECK(h_max(cat) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  ResponseDistribution unit_gauss{ResponseKind::gaussian, {}, {}, Vec::Zero(1)};
  CHECK(h_max(unit_gauss) ==
        doctest::Approx(0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e)).epsilon(1e-12));

  ResponseDistribution narrow{ResponseKind::gaussian, {}, {}, Vec::Constant(1, std::log(1e-4))};
  CHECK(h_max(narrow) == 0.0);
}

TEST_CASE("optimal_q_regularized anchors and oracle agreement") {
  std::mt19937_64 rng(61);

  // Zero entropies reduce to optimal_q.
  Vec loglik = random_vector(rng, 3, 1.5);
  Vec resp = random_simplex(rng, 3);
  ClusterPosterior plain = optimal_q({loglik, ResponseKind::categorical}, {resp});
  ClusterPosterior reg =
      optimal_q_regularized({loglik, ResponseKind::categorical}, {Vec::Zero(3)}, {resp});
  CHECK((plain.lambdas - reg.lambdas).cwiseAbs().maxCoeff() < 1e-15);

  // Constant loglik, uniform responsibilities, entropies [0, ln 2]: softmax of [0, -ln 2].
  ClusterPosterior two = optimal_q_regularized({Vec::Constant(2, 0.4), ResponseKind::categorical},
                                               {Vec{{0.0, std::log(2.0)}}}, uniform_posterior(2));
  CHECK(two.lambdas[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(two.lambdas[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  for (int trial = 0; trial < 50; ++trial) {
    const int K = 4;
    Vec lik = random_vector(rng, K, 2.0);
    Vec ent = random_vector(rng, K, 1.0).cwiseAbs();
    Vec r = random_simplex(rng, K);
    ClusterPosterior closed =
        optimal_q_regularized({lik, ResponseKind::categorical}, {ent}, {r});
    Vec numeric = convex_oracle({r.array().log(), lik - ent});
    CHECK((closed.lambdas - numeric).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("test_q anchors") {
  std::mt19937_64 rng(67);
  Vec resp = random_simplex(rng, 4);
  ClusterPosterior same = test_q({Vec::Constant(4, 0.9)}, {resp});
  CHECK((same.lambdas - resp).cwiseAbs().maxCoeff() < 1e-12);

  ClusterPosterior two = test_q({Vec{{0.0, std::log(3.0)}}}, uniform_posterior(2));
  CHECK(two.lambdas[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(two.lambdas[1] == doctest::Approx(0.25).epsilon(1e-12));

  // Argmax agrees with a direct summation oracle.
  for (int trial = 0; trial < 50; ++trial) {
    const int K = 5;
    Vec ent = random_vector(rng, K, 1.0).cwiseAbs();
    Vec r = random_simplex(rng, K);
    ClusterPosterior q = test_q({ent}, {r});
    int got = 0, expected = 0;
    q.lambdas.maxCoeff(&got);
    Vec scores = r.array().log() - ent.array();
    scores.maxCoeff(&expected);
    CHECK(got == expected);
  }
}

TEST_CASE("test_q weights the lowest-entropy component most heavily") {
  ClusterPosterior equal = uniform_posterior(3);
  EntropyVector ent{Vec{{1.2, 0.1, 2.0}}};
  ClusterPosterior q = test_q(ent, equal);
  int argmax = 0;
  q.lambdas.maxCoeff(&argmax);
  CHECK(argmax == 1);
}

TEST_CASE("convex_oracle anchors") {
  CHECK(convex_oracle({Vec::Zero(1), Vec::Zero(1)})[0] == doctest::Approx(1.0));

  Vec uniform = convex_oracle({Vec::Constant(4, std::log(0.25)), Vec::Constant(4, 1.3)});
  for (int k = 0; k < 4; ++k) CHECK(uniform[k] == doctest::Approx(0.25).epsilon(1e-8));
}

TEST_CASE("posterior outputs satisfy simplex invariants (property)") {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 300; ++trial) {
    const int K = 2 + static_cast<int>(rng() % 9);
    Vec lik = random_vector(rng, K, 5.0);
    Vec ent = random_vector(rng, K, 2.0).cwiseAbs();
    Vec r = random_simplex(rng, K);
    MixturePrior prior = random_prior(rng, K, 3);
    Vec z = random_vector(rng, 3, 2.0);

    for (ClusterPosterior post :
         {responsibilities(z, prior), optimal_q({lik, ResponseKind::categorical}, {r}),
          optimal_q_regularized({lik, ResponseKind::categorical}, {ent}, {r}),
          test_q({ent}, {r})}) {
      CHECK(post.lambdas.minCoeff() >= 0.0);
      CHECK(std::abs(post.lambdas.sum() - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("optimal_q is shift invariant and reduces to responsibilities (property)") {
  std::mt19937_64 rng(73);
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 2 + static_cast<int>(rng() % 6);
    Vec lik = random_vector(rng, K, 3.0);
    Vec r = random_simplex(rng, K);

    ClusterPosterior base = optimal_q({lik, ResponseKind::categorical}, {r});
    const double shift = random_vector(rng, 1, 50.0)[0];
    ClusterPosterior shifted =
        optimal_q({lik.array() + shift, ResponseKind::categorical}, {r});
    CHECK((base.lambdas - shifted.lambdas).cwiseAbs().maxCoeff() < 1e-12);

    ClusterPosterior reduced =
        optimal_q({Vec::Constant(K, lik[0]), ResponseKind::categorical}, {r});
    CHECK((reduced.lambdas - r).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("kl_diag_gaussians is nonnegative, zero iff equal (property)") {
  std::mt19937_64 rng(79);
  for (int trial = 0; trial < 200; ++trial) {
    DiagonalGaussian q = random_gaussian(rng, 4);
    DiagonalGaussian p = random_gaussian(rng, 4);
    const double kl = kl_diag_gaussians(q, p);
    CHECK(kl >= 0.0);
    if ((q.mean - p.mean).cwiseAbs().maxCoeff() > 1e-9 ||
        (q.log_var - p.log_var).cwiseAbs().maxCoeff() > 1e-9) {
      CHECK(kl > 0.0);
    }
    CHECK(kl_diag_gaussians(q, q) == doctest::Approx(0.0).epsilon(1e-15));
  }
}

TEST_CASE("h_max is nonnegative and exact for categorical inputs (property)") {
  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 200; ++trial) {
    const int C = 2 + static_cast<int>(rng() % 5);
    Vec probs = random_simplex(rng, C);
    double shannon = 0.0;
    for (int i = 0; i < C; ++i) shannon -= probs[i] * std::log(probs[i]);
    CHECK(h_max({ResponseKind::categorical, probs, {}}) ==
          doctest::Approx(shannon).epsilon(1e-12));

    Vec lv = random_vector(rng, 3, 3.0);
    CHECK(h_max({ResponseKind::gaussian, {}, {}, lv}) >= 0.0);
  }
}

TEST_CASE("closed-form posteriors agree with the oracle on 1000 instances, K in 2..10") {
  std::mt19937_64 rng(89);
  for (int trial = 0; trial < 1000; ++trial) {
    const int K = 2 + static_cast<int>(rng() % 9);
    Vec lik = random_vector(rng, K, 2.0);
    Vec ent = random_vector(rng, K, 1.0).cwiseAbs();
    Vec r = random_simplex(rng, K);
    Vec log_r = r.array().log();

    Vec q1 = optimal_q({lik, ResponseKind::categorical}, {r}).lambdas;
    CHECK((q1 - convex_oracle({log_r, lik})).cwiseAbs().maxCoeff() < 1e-6);

    Vec q2 = optimal_q_regularized({lik, ResponseKind::categorical}, {ent}, {r}).lambdas;
    CHECK((q2 - convex_oracle({log_r, lik - ent})).cwiseAbs().maxCoeff() < 1e-6);

    Vec q3 = test_q({ent}, {r}).lambdas;
    CHECK((q3 - convex_oracle({log_r, -ent})).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("optimal_q stays a valid simplex under extreme log-likelihoods") {
  std::mt19937_64 rng(97);
  for (double scale : {1e4, -1e4}) {
    Vec lik(3);
    lik << scale, 0.0, -scale;
    ClusterPosterior q = optimal_q({lik, ResponseKind::categorical}, {random_simplex(rng, 3)});
    CHECK(q.lambdas.allFinite());
    CHECK(std::abs(q.lambdas.sum() - 1.0) < 1e-6);
  }
}
