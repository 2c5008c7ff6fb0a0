#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gpaudit/error.hpp"

namespace gpaudit {

// ROC-AUC via the Mann-Whitney statistic with midranks for ties:
//   AUC = (R_pos - n_pos (n_pos + 1) / 2) / (n_pos * n_neg)
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check(scores.size() == labels.size(), "auc: scores and labels differ in length");
  check(!scores.empty(), "auc: empty input");
  size_t n = scores.size();
  size_t n_pos = 0;
  for (int y : labels) {
    check(y == 0 || y == 1, "auc: labels must be 0 or 1");
    n_pos += static_cast<size_t>(y);
  }
  size_t n_neg = n - n_pos;
  check(n_pos > 0 && n_neg > 0, "auc: both classes required");
  for (double s : scores) check(std::isfinite(s), "auc: non-finite score");

  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  double rank_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (size_t k = i; k < j; ++k)
      if (labels[idx[k]] == 1) rank_pos += midrank;
    i = j;
  }
  double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  check(pred.size() == truth.size(), "accuracy: length mismatch");
  check(!pred.empty(), "accuracy: empty input");
  size_t hits = 0;
  for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

struct Ci95 {
  double mean = 0.0;
  double halfwidth = 0.0;  // 1.96 * s / sqrt(n), 0 when n == 1
};

// Normal-approximation 95% interval with the sample standard deviation.
inline Ci95 ci95(const std::vector<double>& xs) {
  check(xs.size() >= 2, "ci95: need at least 2 values");
  Ci95 out;
  double n = static_cast<double>(xs.size());
  for (double x : xs) out.mean += x;
  out.mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  double sd = std::sqrt(ss / (n - 1.0));
  out.halfwidth = 1.96 * sd / std::sqrt(n);
  return out;
}

}  // namespace gpaudit
