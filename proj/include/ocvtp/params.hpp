// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ocvtp/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace ocvtp {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Glorot-uniform matrix.
inline Mat glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  }
  return m;
}

inline Mat ones_row(Eigen::Index cols) { return Mat::Ones(1, cols); }
inline Mat zeros_row(Eigen::Index cols) { return Mat::Zero(1, cols); }

/// Number of scalars across all matrices a parameter struct exposes via visit().
template <typename P>
Eigen::Index count_scalars(const P& params) {
  Eigen::Index total = 0;
  params.visit([&](const std::string&, const Mat& m) { total += m.size(); });
  return total;
}

}  // namespace ocvtp
