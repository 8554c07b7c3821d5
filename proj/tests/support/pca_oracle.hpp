#pragma once

// Test-only eigensolver oracle: power iteration with deflation on the sample
// covariance, independent of the Jacobi path used by the implementation.

#include <cmath>
#include <vector>

#include "tweetlm/rng.hpp"

namespace tweetlm::testsupport {

struct OracleEigen {
  std::vector<std::vector<double>> vectors;
  std::vector<double> values;
};

inline OracleEigen oracle_topk(const std::vector<std::vector<double>>& x, int64_t k) {
  const size_t n = x.size(), d = x[0].size();
  std::vector<double> mean(d, 0.0);
  for (const auto& row : x) {
    for (size_t j = 0; j < d; ++j) mean[j] += row[j];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  for (const auto& row : x) {
    for (size_t i = 0; i < d; ++i) {
      for (size_t j = 0; j < d; ++j) {
        cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]);
      }
    }
  }
  for (auto& r : cov) {
    for (double& v : r) v /= static_cast<double>(n - 1);
  }

  OracleEigen out;
  auto g = tweetlm::rng::make_engine(4242);
  for (int64_t c = 0; c < k; ++c) {
    std::vector<double> v(d);
    for (auto& vi : v) vi = tweetlm::rng::uniform01(g) - 0.5;
    double lambda = 0.0;
    for (int iter = 0; iter < 20000; ++iter) {
      std::vector<double> w(d, 0.0);
      for (size_t i = 0; i < d; ++i) {
        for (size_t j = 0; j < d; ++j) w[i] += cov[i][j] * v[j];
      }
      double norm = 0;
      for (const double wi : w) norm += wi * wi;
      norm = std::sqrt(norm);
      if (norm < 1e-300) break;
      double diff = 0, dflip = 0;
      for (size_t i = 0; i < d; ++i) {
        w[i] /= norm;
        diff += std::fabs(w[i] - v[i]);
        dflip += std::fabs(w[i] + v[i]);
      }
      lambda = norm;
      v = w;
      if (diff < 1e-14 || dflip < 1e-14) break;
    }
    out.vectors.push_back(v);
    out.values.push_back(lambda);
    for (size_t i = 0; i < d; ++i) {
      for (size_t j = 0; j < d; ++j) cov[i][j] -= lambda * v[i] * v[j];
    }
  }
  return out;
}

}  // namespace tweetlm::testsupport
