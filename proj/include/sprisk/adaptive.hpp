#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "sprisk/kernel2d.hpp"

namespace sprisk {

using PilotPtr = std::shared_ptr<const DensitySurface>;

// Fixed-bandwidth pilot with uniform edge correction.
PilotPtr make_pilot(const PointPattern& pts, double hp);

// Abramson bandwidths h(u) = h0 min{f(u)^-1/2, tau gamma} / gamma_div, where
// gamma is the geometric mean of the unclipped factors at the data and
// gamma_div is gamma unless overridden.
struct AdaptiveBandwidths {
  double h0 = 0.0;
  double hp = 0.0;
  double tau = 5.0;
  double gamma = 1.0;
  double gamma_div = 1.0;
  double log_gamma = 0.0;
  double log_gamma_div = 0.0;
  double pilot_floor = 0.0;  // pilot values are floored here before the -1/2 power
  PilotPtr pilot;
  std::vector<double> per_point;
  std::size_t clipped = 0;

  // h(u) / h0 for a pilot value f.
  double factor(double f) const;
  double at(Point p) const { return h0 * factor(pilot->at(p)); }
  // h(u) at every node of the pilot's halo grid.
  Field field() const;
};

AdaptiveBandwidths abramson_bandwidths(const PointPattern& pts, double h0, PilotPtr pilot, double tau = 5.0,
                                       std::optional<double> gamma_override = std::nullopt);
// Same from raw coordinates (the pilot carries the window).
AdaptiveBandwidths abramson_bandwidths(const std::vector<Point>& pts, double h0, PilotPtr pilot, double tau = 5.0,
                                       std::optional<double> gamma_override = std::nullopt);

// Window convolutions on a geometric ladder of bandwidths, interpolated
// linearly in log h. A single rung is used when the range collapses.
class BandwidthLadder {
 public:
  BandwidthLadder(const WindowMask& w, WindowKernel kind, double h_min, double h_max, int rungs = 20);
  // Rungs at anchor * exp(k step) for k in [k_lo, k_hi].
  BandwidthLadder(const WindowMask& w, WindowKernel kind, double anchor, double step, int k_lo, int k_hi);

  double at(std::size_t halo_index, double h) const;
  double at(Point p, double h) const;
  // Per-node lookup with the bandwidth taken from hfield.
  Field field(const Field& hfield) const;
  std::size_t rungs() const { return rungs_.size(); }

 private:
  void build(const WindowMask& w, WindowKernel kind);
  // Lower rung and weight of the upper one.
  std::pair<std::size_t, double> locate(double h) const;

  double log_anchor_ = 0.0;
  double step_ = 0.0;
  int k_lo_ = 0;
  std::vector<double> hs_;
  std::vector<Field> rungs_;
};

// sum_k w_k K_{h_k}(y - x_k) at every node of g, evaluated pair by pair. When
// every h_k is the same it defers to kernel_sum.
std::vector<double> adaptive_kernel_sum(const Grid& g, const std::vector<Point>& pts, const std::vector<double>& hs,
                                        const std::vector<double>& weights = {});

DensitySurface kde_adaptive_direct(const PointPattern& pts, const AdaptiveBandwidths& bw, EdgeCorrection correction);
// Raw-coordinate form with an explicit normalizer, for subsets and pooled sums.
DensitySurface kde_adaptive_direct(const WindowMask& w, const std::vector<Point>& pts, const std::vector<double>& hs,
                                   double norm, const AdaptiveBandwidths& bw, EdgeCorrection correction);

struct BandwidthBins {
  std::vector<int> bin;           // per point
  std::vector<double> midpoint;   // per bin
  std::vector<std::size_t> count;  // per bin
};
// D = 1/delta quantile bins of hs (type-7 quantiles; first bin closed).
BandwidthBins partition_bandwidths(const std::vector<double>& hs, double delta);

DensitySurface kde_adaptive_partitioned(const PointPattern& pts, const AdaptiveBandwidths& bw, double delta,
                                        EdgeCorrection correction = EdgeCorrection::uniform,
                                        Binning binning = Binning::exact);

struct MultiscaleStack {
  double h0 = 0.0;
  double lo = 0.25;
  double hi = 1.5;
  double step = 0.0;  // log spacing of the stored planes
  int k_lo = 0;       // plane k holds global bandwidth h0 exp(k step)
  EdgeCorrection correction = EdgeCorrection::uniform;
  std::vector<DensitySurface> planes;
  std::uint64_t fingerprint = 0;

  double h_min() const;
  double h_max() const;
};

// Density estimates over global bandwidths in [lo h0, hi h0]: points sit at
// (x_i, log of their bandwidth factor), binned linearly on a log grid four
// times finer than the planes and spatially onto pixel centres, then smoothed
// plane by plane in the Fourier domain. Correction is none or uniform.
MultiscaleStack multiscale_build(const PointPattern& pts, const AdaptiveBandwidths& bw, double lo = 0.25,
                                 double hi = 1.5, EdgeCorrection correction = EdgeCorrection::uniform,
                                 int planes = 14);
MultiscaleStack multiscale_build(const PointPattern& pts, double h0, double hp, double lo = 0.25, double hi = 1.5,
                                 double tau = 5.0);
// Linear interpolation in log h0 between the two nearest planes.
DensitySurface multiscale_slice(const MultiscaleStack& stack, double h0);

}  // namespace sprisk
