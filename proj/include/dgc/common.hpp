#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace dgc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Stable log(sum(exp(v))). Returns -inf for an empty vector.
double log_sum_exp(const Vec& v);

// Stable softmax; shift-invariant, entries sum to 1.
Vec softmax(const Vec& v);

// Stable log(1 + exp(x)).
double softplus(double x);

// SplitMix64 step; used to derive independent seeds from (seed, stream).
std::uint64_t split_mix64(std::uint64_t x);

// Deterministic RNG for a (seed, stream) pair. Distinct streams are
// statistically independent, so per-item generation can be parallelized.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0);

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_dim(Eigen::Index expected, Eigen::Index actual, const std::string& what) {
  if (expected != actual) {
    throw std::invalid_argument(what + ": dimension mismatch, expected " +
                                std::to_string(expected) + ", got " + std::to_string(actual));
  }
}

}  // namespace dgc
