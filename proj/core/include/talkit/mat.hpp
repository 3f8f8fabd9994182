// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace talkit {

// Time-major matrices: rows = time steps, cols = channels.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

// Validity mask over time steps; 1 = real data, 0 = padding.
using Mask = std::vector<std::uint8_t>;

inline Mask full_mask(Index n) { return Mask(static_cast<std::size_t>(n), 1); }

// Zeroes the rows flagged invalid. Layers call this after every op that
// mixes information across time, so padded rows stay exactly zero.
inline void zero_invalid_rows(Mat& x, const Mask& mask) {
  for (Index t = 0; t < x.rows(); ++t) {
    if (!mask[static_cast<std::size_t>(t)]) x.row(t).setZero();
  }
}

inline Index count_valid(const Mask& mask) {
  Index n = 0;
  for (auto v : mask) n += (v != 0);
  return n;
}

}  // namespace talkit
