#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sprisk/risk.hpp"

namespace sprisk {

enum class Tail { upper, lower };
enum class PMethod { mc, asy };

// Spatial surfaces fill `upper`/`lower`; space-time ones fill the stacks
// (one plane per time-grid entry). ASY results also keep Z.
struct PValueSurface {
  PMethod method = PMethod::asy;
  Tail tail = Tail::upper;
  int N = 0;
  std::uint64_t seed = 0;
  Surface upper;
  Surface lower;
  Surface Z;
  std::vector<Surface> upper_st;
  std::vector<Surface> lower_st;
  std::vector<Surface> Z_st;
  std::vector<std::string> warnings;

  // The surface for the requested tail.
  const Surface& P() const { return tail == Tail::upper ? upper : lower; }
  const std::vector<Surface>& P_st() const { return tail == Tail::upper ? upper_st : lower_st; }
};

// Everything needed to rebuild a risk surface from relabelled data.
struct RiskConfig {
  RiskKind kind = RiskKind::fixed;
  double h = 0.0;  // fixed h, or the global h0 for adaptive kinds
  EdgeCorrection correction = EdgeCorrection::uniform;
  double hp1 = 0.0;  // separate pilots (asymmetric); 0 means h_OS of the observed sample
  double hp2 = 0.0;
  double hp = 0.0;  // pooled pilot (symmetric); 0 means h_OS of the observed union
  double tau = 5.0;
};

RiskSurface compute_risk(const PointPattern& cases, const PointPattern& controls, const RiskConfig& cfg);

// Label-permutation p-values: P = (1 + #{rho_sim >= rho_obs}) / (N + 1).
// Bandwidths and pilot bandwidths are held at their observed-data values.
// Permutation i draws from its own stream seeded by (seed, i).
PValueSurface mc_pvalues(const PointPattern& cases, const PointPattern& controls, const RiskConfig& cfg, int N,
                         std::uint64_t seed, Tail tail = Tail::upper);

// Permutation p-values for space-time risk (both samples time-stamped, time
// varying denominator); the joint planes go to upper_st/lower_st and the
// conditional ones to `cond`.
struct STPValues {
  PValueSurface joint;
  PValueSurface cond;
};
STPValues mc_pvalues_st(const PointPattern& cases, const PointPattern& controls, double h, double lambda,
                        const TemporalInterval& tlim, int N, std::uint64_t seed, Tail tail = Tail::upper);

// Var = R_h / (c h^2) (1/n1 + 1/n2) with c the pooled fixed estimate at h.
PValueSurface asy_pvalues_fixed(const RiskSurface& risk, const PointPattern& pooled_pattern, Tail tail = Tail::upper);

// Per-pixel adaptive variance; see the implementation for the exact form.
PValueSurface asy_pvalues_adaptive(const RiskSurface& risk, Tail tail = Tail::upper);

enum class STMode { joint, conditional };
// Time-varying: pooled_st is the pooled space-time sample (required).
// Time-constant: pooled_st is ignored. Results go to the *_st stacks.
PValueSurface asy_pvalues_st(const STRiskSurface& risk, STMode mode, const WindowMask& w,
                             const PointPattern* pooled_st = nullptr, Tail tail = Tail::upper);

// R_lambda(t) = w(t)^-2 lambda^-1 int_T L((s - t)/lambda)^2 ds, in closed form.
double r_lambda(double t, double lambda, const TemporalInterval& tlim);

// Adaptive variance window terms at one pixel: S = q^-2 [2 A_K + A_M / 4]
// with A_K = h^-2 int_W K((u - x)/h)^2 du and A_M the same for M.
struct AdaptiveVarianceParts {
  Surface q;
  Surface a_k;
  Surface a_m;
  Surface h;
};
AdaptiveVarianceParts adaptive_variance_parts(const WindowMask& w, const AdaptiveBandwidths& bw);

struct ToleranceContours {
  Tail tail = Tail::upper;
  std::vector<ContourSet> sets;  // one per level, in input order
};
ToleranceContours tol_contours(const Surface& p, const std::vector<double>& levels, Tail tail);
ToleranceContours tol_contours(const PValueSurface& p, const std::vector<double>& levels);

}  // namespace sprisk
