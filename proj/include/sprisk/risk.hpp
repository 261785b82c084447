#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sprisk/adaptive.hpp"
#include "sprisk/kernel2d.hpp"
#include "sprisk/sptemporal.hpp"

namespace sprisk {

// Relative floor for log-risk: densities below kRiskFloor * (peak of the
// pooled density) are raised to it before taking logs.
inline constexpr double kRiskFloor = 1e-12;

enum class RiskKind { fixed, adaptive_asymmetric, adaptive_symmetric };
const char* risk_kind_name(RiskKind k);

struct RiskSurface {
  Surface rho;  // log f - log g, NaN outside the window
  DensitySurface f;
  DensitySurface g;
  double epsilon = 0.0;
  RiskKind kind = RiskKind::fixed;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  std::size_t floored_f = 0;  // masked pixels where f hit the floor
  std::size_t floored_g = 0;
  // Adaptive estimates keep their bandwidth functions (pilots and gammas).
  std::optional<AdaptiveBandwidths> bw_f;
  std::optional<AdaptiveBandwidths> bw_g;
  WindowPtr window;  // set when built from point patterns
  std::vector<std::string> warnings;
};

// rho = log max(f, eps) - log max(g, eps), eps relative to the peak of
// (n1 f + n2 g) / (n1 + n2).
RiskSurface risk_fixed(const DensitySurface& f, const DensitySurface& g);
// Fixed estimates of both samples at a common h, then risk_fixed.
RiskSurface risk_fixed(const PointPattern& cases, const PointPattern& controls, double h,
                       EdgeCorrection correction = EdgeCorrection::uniform);

enum class PilotMode { separate, pooled };

struct AdaptiveRiskOptions {
  PilotMode pilots = PilotMode::separate;
  double hp1 = 0.0;  // case pilot (separate); 0 means h_OS of the cases
  double hp2 = 0.0;  // control pilot (separate); 0 means h_OS of the controls
  double hp = 0.0;   // pooled pilot; 0 means h_OS of the pooled data
  double tau = 5.0;
  EdgeCorrection correction = EdgeCorrection::uniform;
};

// Separate pilots: each sample gets its own Abramson factors, both divided by
// gamma_fg = sqrt(gamma_f gamma_g). Pooled pilot: one pilot on the union
// drives both, divided by its gamma_c.
RiskSurface risk_adaptive(const PointPattern& cases, const PointPattern& controls, double h0,
                          const AdaptiveRiskOptions& opt = {});

// Symmetric estimate from bandwidths assigned on pooled points; is_case
// selects the numerator sample. Used where the pooled pilot is reused.
RiskSurface risk_adaptive_pooled(const WindowPtr& w, const std::vector<Point>& pooled_pts,
                                 const std::vector<bool>& is_case, const AdaptiveBandwidths& pooled_bw,
                                 EdgeCorrection correction);

// ---- space-time ----

enum class STDenominator { time_varying, time_constant };

struct STRiskSurface {
  std::vector<Surface> rho_joint;  // one per tlim.t_grid entry
  std::vector<Surface> rho_cond;
  STDenominator denominator = STDenominator::time_varying;
  TemporalInterval tlim;
  double h = 0.0;
  double lambda = 0.0;
  double epsilon = 0.0;
  // log fbar(t) and log gbar(t) on the time grid (gbar unused when time-constant).
  std::vector<double> log_fbar;
  std::vector<double> log_gbar;
  STDensity f;
  std::optional<STDensity> g_st;          // time-varying
  std::optional<DensitySurface> g_space;  // time-constant
  std::size_t floored = 0;
  std::vector<std::string> warnings;
};

// Both samples time-stamped; joint densities with matching grids and tlim.
STRiskSurface risk_st(const STDensity& f, const STDensity& g);
// Time-constant denominator: g purely spatial on the same grid.
STRiskSurface risk_st(const STDensity& f, const DensitySurface& g);

struct STSlice {
  double t = 0.0;
  Surface rr;
  Surface rr_cond;
  std::optional<Surface> P;
  std::optional<Surface> P_cond;
};

// Linear interpolation between neighbouring time planes; a time on a plane
// returns that plane unchanged. Optional p-value stacks are sliced alongside.
std::vector<STSlice> st_slice(const STRiskSurface& r, const std::vector<double>& times,
                              const std::vector<Surface>* p_joint = nullptr,
                              const std::vector<Surface>* p_cond = nullptr);

// Plane interpolation shared by the slicers: weight of the upper plane.
struct TimeBracket {
  std::size_t lo = 0;
  double w = 0.0;
};
TimeBracket time_bracket(const TemporalInterval& tlim, double t);
Surface interpolate_planes(const std::vector<Surface>& planes, const TimeBracket& b);

}  // namespace sprisk
