#pragma once

#include <cstddef>
#include <vector>

#include "sprisk/geom.hpp"

namespace sprisk::detail {

// Direct Gaussian sums between two point sets, truncated where the kernel
// drops below exp(-40) of its peak. Used for leave-one-out values at the
// data, where grid interpolation would miss a point's own kernel peak.
class PairSum {
 public:
  // src: kernel centres; times may be empty for purely spatial sums.
  PairSum(std::vector<Point> src, std::vector<double> times = {});

  // out[i] = sum_j w_j K_{h_j}(at_i - src_j) [L_lambda(tat_i - t_j)].
  // hs has one entry (common h) or one per source; empty w means ones.
  // With self = true, at must be src itself and j = i is skipped.
  std::vector<double> sum(const std::vector<Point>& at, const std::vector<double>& hs,
                          const std::vector<double>& w = {}, bool self = false,
                          const std::vector<double>& tat = {}, double lambda = 0.0) const;

  std::size_t size() const { return src_.size(); }

 private:
  std::vector<Point> src_;       // sorted by x
  std::vector<double> times_;    // same order
  std::vector<std::size_t> id_;  // original index of each sorted entry
};

}  // namespace sprisk::detail
