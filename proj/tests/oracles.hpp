/*
 * Copyright 2026 The gowermatch Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Independent reference implementations used only by tests. They follow the
// textbook definitions directly and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

namespace gowermatch::oracle {

using Row = std::vector<std::optional<double>>;

// Direct summation of the Gower coefficient over co-present features.
// `features` lists the similarity positions, `ranges` their r_k.
inline std::optional<double> gower(const Row& a, const Row& b,
                                   const std::vector<std::size_t>& features,
                                   const std::vector<double>& ranges) {
  double total = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& x = a[features[i]];
    const auto& y = b[features[i]];
    if (!x.has_value() || !y.has_value()) continue;
    double term;
    if (ranges[i] == 0.0) {
      term = (*x == *y) ? 1.0 : 0.0;
    } else {
      double dissim = std::fabs(*x - *y) / ranges[i];
      if (dissim > 1.0) dissim = 1.0;
      term = 1.0 - dissim;
    }
    total = total + term;
    used = used + 1;
  }
  if (used == 0) return std::nullopt;
  return total / used;
}

struct BruteMatch {
  std::optional<double> t;
  int y_hat = 0;
  std::optional<std::vector<std::optional<double>>> x_hat;
  std::size_t matched = 0;
};

// Double loop over (unlabeled j, labeled i) following the vote, threshold
// and imputation formulas literally. The imputed mean is taken relative to
// the first contributor's value and clamped to the contributors' hull, the
// documented arithmetic form of the weighted mean.
inline std::vector<BruteMatch> brute_force_match(
    const std::vector<Row>& unlabeled, const std::vector<Row>& labeled,
    const std::vector<int>& labels, const std::vector<std::size_t>& similarity,
    const std::vector<double>& ranges, const std::vector<std::size_t>& estimation,
    double d, double c) {
  std::vector<BruteMatch> out;
  for (const Row& u : unlabeled) {
    std::vector<double> w(labeled.size(), 0.0);
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      auto k = gower(labeled[i], u, similarity, ranges);
      w[i] = (k && *k > d) ? *k : 0.0;
    }
    BruteMatch m;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      if (w[i] > 0.0) {
        ++m.matched;
        den += w[i];
        num += labels[i] > 0 ? w[i] : -w[i];
      }
    }
    if (den > 0.0) m.t = num / den;
    if (m.t && *m.t > c) m.y_hat = 1;
    else if (m.t && *m.t < -c) m.y_hat = -1;
    if (m.y_hat != 0) {
      std::vector<std::optional<double>> xh;
      for (std::size_t f : estimation) {
        std::optional<double> first;
        double lo = 0, hi = 0, sn = 0, sd = 0;
        for (std::size_t i = 0; i < labeled.size(); ++i) {
          if (w[i] <= 0.0 || !labeled[i][f]) continue;
          double v = *labeled[i][f];
          if (!first) {
            first = v;
            lo = hi = v;
          }
          lo = std::min(lo, v);
          hi = std::max(hi, v);
          sn += w[i] * (v - *first);
          sd += w[i];
        }
        if (!first) xh.push_back(std::nullopt);
        else xh.push_back(std::clamp(*first + sn / sd, lo, hi));
      }
      m.x_hat = xh;
    }
    out.push_back(m);
  }
  return out;
}

// Pairwise concordance: P(s+ > s-) + 0.5 P(s+ = s-).
inline double pairwise_auc(const std::vector<double>& scores,
                           const std::vector<int>& labels) {
  double concordant = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] <= 0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] > 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) concordant += 1.0;
      else if (scores[i] == scores[j]) concordant += 0.5;
    }
  }
  return concordant / pairs;
}

// Central finite-difference gradient.
inline std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + h;
    const double up = f(x);
    x[k] = orig - h;
    const double down = f(x);
    x[k] = orig;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

// Two-sided exact binomial p-value by explicit enumeration of all outcomes
// at least as extreme as max(b, c).
inline double exact_mcnemar(int b, int c) {
  const int n = b + c;
  if (n == 0) return 1.0;
  const int k = std::max(b, c);
  double tail = 0.0;
  for (int i = k; i <= n; ++i) {
    double comb = 1.0;
    for (int j = 1; j <= i; ++j) comb = comb * (n - i + j) / j;
    tail += comb * std::pow(0.5, n);
  }
  return std::min(1.0, 2.0 * tail);
}

}  // namespace gowermatch::oracle
