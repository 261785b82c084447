#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace sprisk {

// Both searches run on log x. Non-finite objective values count as +inf.
struct OptimPoint {
  double x = 0.0;
  double y = 0.0;  // second coordinate; unused in 1D
  double f = 0.0;
};

struct OptimOptions {
  int coarse = 32;            // 1D scan points (2D: per axis, capped at 10)
  double log_tol = 1e-4;      // stop when the bracket or simplex is this small in log units
  int max_iter = 200;
};

struct OptimResult {
  OptimPoint best;
  std::vector<OptimPoint> trace;  // every evaluation, in order
  bool pinned_lo = false;
  bool pinned_hi = false;
  bool pinned_lo_y = false;
  bool pinned_hi_y = false;
  bool all_nonfinite = false;
};

// n points geometrically spaced from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, int n);

// Coarse scan, then golden section inside the bracket around the best scan
// point. The returned best is the smallest value in the trace.
OptimResult minimize_1d(const std::function<double(double)>& f, double lo, double hi, const OptimOptions& opt = {});
// Coarse scan, then Nelder-Mead from the best scan point with coordinates
// clamped to the box.
OptimResult minimize_2d(const std::function<double(double, double)>& f, double xlo, double xhi, double ylo,
                        double yhi, const OptimOptions& opt = {});

}  // namespace sprisk
