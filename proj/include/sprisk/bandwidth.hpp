#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sprisk/errors.hpp"
#include "sprisk/kernel2d.hpp"
#include "sprisk/optim.hpp"

namespace sprisk {

inline constexpr double kDensityFloor = 1e-12;

struct SearchRange {
  double lo = 0.0;
  double hi = 0.0;  // hi == 0 means "use the default"
  bool set() const { return hi > 0.0; }
};

struct TraceEntry {
  double h = 0.0;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double value = 0.0;
};

struct BandwidthResult {
  std::string method;
  double h = std::numeric_limits<double>::quiet_NaN();
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double objective = std::numeric_limits<double>::quiet_NaN();
  SearchRange range;
  SearchRange lambda_range;
  std::vector<TraceEntry> trace;
  bool boundary_pinned = false;
  std::size_t floored = 0;  // density evaluations floored at the selected value
  std::vector<std::string> warnings;
};

// A criterion that is non-finite over its whole search range.
class SelectionError : public ValidationError {
 public:
  SelectionError(const std::string& what, std::vector<TraceEntry> trace)
      : ValidationError(what), trace(std::move(trace)) {}
  std::vector<TraceEntry> trace;
};

// ---- scale rules ----

// min{(s1 + s2)/2, (IQR1 + IQR2)/(2 * 1.34)} with type-7 quantiles. When one
// of the two measures is zero the other is used.
double sigma_hat(const std::vector<Point>& pts);
// 1D analogue: min{s, IQR/1.34}.
double sigma_hat_1d(const std::vector<double>& x);

// {(d+8)^((d+6)/2) pi^(d/2) R(K) / (16 n Gamma((d+8)/2) (d+2))}^(1/(d+4))
// for the Gaussian K in dimension d (1 or 2).
double os_factor(int d, double n);
// (625 / (384 n))^(1/6).
double os_factor_2d_closed(double n);

BandwidthResult ns_bandwidth(const std::vector<Point>& pts);
// sigma (4 / (3 n))^(1/5).
BandwidthResult ns_temporal(const std::vector<double>& times);
// nstar replaces n in the rule (e.g. a geometric mean of two sample sizes).
BandwidthResult os_bandwidth(const std::vector<Point>& pts, std::optional<double> nstar = std::nullopt);
BandwidthResult os_temporal(const std::vector<double>& times, std::optional<double> nstar = std::nullopt);
// Spread from the pooled data, n* = sqrt(n1 n2).
BandwidthResult os_pooled(const PointPattern& a, const PointPattern& b);

// [max(diagonal / 1000, pixel side), diagonal / 4].
SearchRange default_range(const WindowMask& w);
// [max(|T| / 1000, dt), |T| / 4].
SearchRange default_lambda_range(const TemporalInterval& tlim);

// ---- criteria ----
// Each factory returns the objective exactly as the selector optimizes it,
// so it can be scanned independently. `floored` counts density values that
// hit kDensityFloor.

struct CritValue {
  double value = std::numeric_limits<double>::quiet_NaN();
  std::size_t floored = 0;
};
using Criterion1 = std::function<CritValue(double)>;
using Criterion2 = std::function<CritValue(double, double)>;

Criterion1 lscv_criterion(const PointPattern& pts, EdgeCorrection correction);
Criterion1 lik_criterion(const PointPattern& pts, EdgeCorrection correction);
// Over h0 with a fixed pilot at hp; the edge-factor ladder covers range.
Criterion1 lscv_adaptive_criterion(const PointPattern& pts, double hp, double tau, EdgeCorrection correction,
                                   SearchRange range);
Criterion1 lik_adaptive_criterion(const PointPattern& pts, double hp, double tau, EdgeCorrection correction,
                                  SearchRange range);
// Over (h, lambda) for the joint space-time estimate.
Criterion2 lscv_st_criterion(const PointPattern& pts, const TemporalInterval& tlim);
Criterion2 lik_st_criterion(const PointPattern& pts, const TemporalInterval& tlim);

enum class BootStrategy { analytic, resample };
struct BootOptions {
  double eta = 0.0;  // reference bandwidth; 0 means h_OS
  BootStrategy strategy = BootStrategy::analytic;
  int J = 200;
  std::uint64_t seed = 1;
  EdgeCorrection correction = EdgeCorrection::uniform;
};
Criterion1 boot_criterion(const PointPattern& pts, const BootOptions& opt);
// eta, nu default to the 2D and 1D oversmoothing rules.
Criterion2 boot_st_criterion(const PointPattern& pts, const TemporalInterval& tlim, double eta = 0.0, double nu = 0.0);

// method 1, 2 or 3; psi (method 3) defaults to h_OS of the pooled data.
Criterion1 joi_criterion(const PointPattern& cases, const PointPattern& controls, int method, double psi = 0.0,
                         EdgeCorrection correction = EdgeCorrection::uniform);
Criterion2 joi4_criterion(const PointPattern& cases, const PointPattern& controls, const TemporalInterval& tlim);

// ---- selectors ----

BandwidthResult select_1d(const std::string& method, const Criterion1& f, SearchRange range, bool maximize = false,
                          const OptimOptions& opt = {});
BandwidthResult select_2d(const std::string& method, const Criterion2& f, SearchRange h_range,
                          SearchRange lambda_range, bool maximize = false, const OptimOptions& opt = {});

BandwidthResult lscv(const PointPattern& pts, EdgeCorrection correction = EdgeCorrection::uniform,
                     SearchRange range = {});
BandwidthResult lik(const PointPattern& pts, EdgeCorrection correction = EdgeCorrection::uniform,
                    SearchRange range = {});
// hp defaults to h_OS.
BandwidthResult lscv_adaptive(const PointPattern& pts, double hp = 0.0, double tau = 5.0,
                              EdgeCorrection correction = EdgeCorrection::uniform, SearchRange range = {});
BandwidthResult lik_adaptive(const PointPattern& pts, double hp = 0.0, double tau = 5.0,
                             EdgeCorrection correction = EdgeCorrection::uniform, SearchRange range = {});
BandwidthResult lscv_st(const PointPattern& pts, const TemporalInterval& tlim, SearchRange h_range = {},
                        SearchRange lambda_range = {});
BandwidthResult lik_st(const PointPattern& pts, const TemporalInterval& tlim, SearchRange h_range = {},
                       SearchRange lambda_range = {});

BandwidthResult boot_fixed(const PointPattern& pts, const BootOptions& opt = {}, SearchRange range = {});
// Resampling only: each bootstrap sample is smoothed once into a multiscale
// stack and every candidate h0 on a log grid is read off it.
BandwidthResult boot_adaptive(const PointPattern& pts, const BootOptions& opt = {}, double hp = 0.0,
                              double tau = 5.0, SearchRange range = {}, int candidates = 25);
BandwidthResult boot_st(const PointPattern& pts, const TemporalInterval& tlim, double eta = 0.0, double nu = 0.0,
                        SearchRange h_range = {}, SearchRange lambda_range = {});

BandwidthResult joi_select(const PointPattern& cases, const PointPattern& controls, int method, double psi = 0.0,
                           SearchRange range = {});
BandwidthResult joi4_st(const PointPattern& cases, const PointPattern& controls, const TemporalInterval& tlim,
                        SearchRange h_range = {}, SearchRange lambda_range = {});

}  // namespace sprisk
