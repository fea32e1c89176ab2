// Copyright 2026 The MILab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Shared test oracles. Everything here is independent of the library's own
// solution paths: the LASSO oracle is an exhaustive grid search over the
// centered sufficient statistics, the OLS oracle solves the normal equations
// by elimination, and the rotation helper builds orthogonal matrices by
// Gram-Schmidt.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "milab/embedding.hpp"
#include "milab/learners.hpp"
#include "milab/rng.hpp"

namespace milab::testutil {

// ---------------------------------------------------------------------------
// LASSO grid-search oracle (1-2 features). The intercept is eliminated in
// closed form (it is unpenalized), reducing the objective to centered
// sufficient statistics; the remaining coefficients are scanned exhaustively
// on a regular grid.

struct GridSolution {
  std::vector<double> alpha;
  double beta = 0.0;
};

inline GridSolution lasso_grid_oracle(const learners::DesignMatrix& x,
                                      const std::vector<double>& y, double lambda,
                                      double lo = -5.0, double hi = 5.0,
                                      double step = 1e-3) {
  const std::size_t n = x.rows(), p = x.cols();
  // centered statistics
  std::vector<double> xm(p, 0.0);
  double ym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ym += y[i];
    for (std::size_t j = 0; j < p; ++j) xm[j] += x.at(i, j);
  }
  ym /= static_cast<double>(n);
  for (double& v : xm) v /= static_cast<double>(n);

  double syy = 0.0;
  std::vector<double> sxy(p, 0.0);
  std::vector<std::vector<double>> g(p, std::vector<double>(p, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double yc = y[i] - ym;
    syy += yc * yc;
    for (std::size_t j = 0; j < p; ++j) {
      double xj = x.at(i, j) - xm[j];
      sxy[j] += xj * yc;
      for (std::size_t l = 0; l < p; ++l) g[j][l] += xj * (x.at(i, l) - xm[l]);
    }
  }

  const long long steps = static_cast<long long>(std::llround((hi - lo) / step));
  GridSolution best;
  best.alpha.assign(p, 0.0);
  double best_f = 0.0;
  bool first = true;

  if (p == 1) {
    for (long long i0 = 0; i0 <= steps; ++i0) {
      double a = lo + static_cast<double>(i0) * step;
      double f = syy - 2.0 * a * sxy[0] + a * a * g[0][0] + lambda * std::abs(a);
      if (first || f < best_f) {
        first = false;
        best_f = f;
        best.alpha[0] = a;
      }
    }
  } else {
    for (long long i0 = 0; i0 <= steps; ++i0) {
      double a0 = lo + static_cast<double>(i0) * step;
      // terms constant in a1 for this a0
      double c0 = syy - 2.0 * a0 * sxy[0] + a0 * a0 * g[0][0] + lambda * std::abs(a0);
      double c1 = 2.0 * (a0 * g[0][1] - sxy[1]);
      for (long long i1 = 0; i1 <= steps; ++i1) {
        double a1 = lo + static_cast<double>(i1) * step;
        double f = c0 + a1 * c1 + a1 * a1 * g[1][1] + lambda * std::abs(a1);
        if (first || f < best_f) {
          first = false;
          best_f = f;
          best.alpha[0] = a0;
          best.alpha[1] = a1;
        }
      }
    }
  }
  best.beta = ym;
  for (std::size_t j = 0; j < p; ++j) best.beta -= best.alpha[j] * xm[j];
  return best;
}

// ---------------------------------------------------------------------------
// Ordinary least squares via normal equations (Gaussian elimination with an
// intercept column).

inline std::pair<std::vector<double>, double> ols_oracle(
    const learners::DesignMatrix& x, const std::vector<double>& y) {
  const std::size_t n = x.rows(), p = x.cols();
  const std::size_t m = p + 1;  // intercept last
  std::vector<std::vector<double>> a(m, std::vector<double>(m + 1, 0.0));
  auto xat = [&](std::size_t i, std::size_t j) {
    return j < p ? x.at(i, j) : 1.0;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < m; ++c) a[r][c] += xat(i, r) * xat(i, c);
      a[r][m] += xat(i, r) * y[i];
    }
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < m; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    for (std::size_t r = 0; r < m; ++r) {
      if (r == col || a[col][col] == 0.0) continue;
      double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= m; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<double> coef(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) coef[j] = a[j][m] / a[j][j];
  double intercept = a[p][m] / a[p][p];
  return {coef, intercept};
}

// ---------------------------------------------------------------------------
// Random orthogonal transform (Gram-Schmidt on a Gaussian matrix) plus
// translation, applied to every row of an embedding model.

inline std::vector<std::vector<double>> random_orthogonal(int d, Rng& rng) {
  std::vector<std::vector<double>> q(static_cast<std::size_t>(d),
                                     std::vector<double>(static_cast<std::size_t>(d)));
  for (auto& row : q)
    for (double& v : row) v = rng.gaussian();
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < q[i].size(); ++c) dot += q[i][c] * q[j][c];
      for (std::size_t c = 0; c < q[i].size(); ++c) q[i][c] -= dot * q[j][c];
    }
    double norm = 0.0;
    for (double v : q[i]) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : q[i]) v /= norm;
  }
  return q;
}

inline embedding::EmbeddingModel transform_model(
    const embedding::EmbeddingModel& model,
    const std::vector<std::vector<double>>& rotation,
    const std::vector<double>& translation) {
  embedding::EmbeddingModel out = model;
  const int d = model.dim();
  std::vector<double> tmp(static_cast<std::size_t>(d));
  for (int w = 0; w < model.vocab().size(); ++w) {
    auto src = model.row(w);
    for (int r = 0; r < d; ++r) {
      double s = translation[static_cast<std::size_t>(r)];
      for (int c = 0; c < d; ++c)
        s += rotation[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] *
             src[static_cast<std::size_t>(c)];
      tmp[static_cast<std::size_t>(r)] = s;
    }
    auto dst = out.row(w);
    for (int r = 0; r < d; ++r) dst[static_cast<std::size_t>(r)] = tmp[static_cast<std::size_t>(r)];
  }
  return out;
}

// ---------------------------------------------------------------------------

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    dir_ = std::filesystem::temp_directory_path() /
           ("milab_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

}  // namespace milab::testutil
