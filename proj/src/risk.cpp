#include "sprisk/risk.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sprisk/bandwidth.hpp"
#include "sprisk/errors.hpp"

namespace sprisk {

namespace {

// Fills r.rho from r.f and r.g.
void log_ratio(RiskSurface& r) {
  const auto& fv = r.f.z.values;
  const auto& gv = r.g.z.values;
  const double n1 = static_cast<double>(r.n1), n2 = static_cast<double>(r.n2);
  double peak = 0.0;
  for (std::size_t k = 0; k < fv.size(); ++k)
    if (std::isfinite(fv[k])) peak = std::max(peak, (n1 * fv[k] + n2 * gv[k]) / (n1 + n2));
  if (!(peak > 0.0)) throw NumericError("pooled density is zero everywhere");
  r.epsilon = kRiskFloor * peak;
  r.rho.grid = r.f.z.grid;
  r.rho.values.assign(fv.size(), std::nan(""));
  for (std::size_t k = 0; k < fv.size(); ++k) {
    if (!std::isfinite(fv[k])) continue;
    double a = fv[k], b = gv[k];
    if (!(a >= r.epsilon)) {
      a = r.epsilon;
      ++r.floored_f;
    }
    if (!(b >= r.epsilon)) {
      b = r.epsilon;
      ++r.floored_g;
    }
    r.rho.values[k] = std::log(a) - std::log(b);
  }
}

void check_same_grid(const Grid& a, const Grid& b) {
  if (!(a == b)) throw ValidationError("case and control surfaces are on different grids");
}

}  // namespace

const char* risk_kind_name(RiskKind k) {
  switch (k) {
    case RiskKind::fixed:
      return "fixed";
    case RiskKind::adaptive_asymmetric:
      return "adaptive-asymmetric";
    case RiskKind::adaptive_symmetric:
      return "adaptive-symmetric";
  }
  return "?";
}

RiskSurface risk_fixed(const DensitySurface& f, const DensitySurface& g) {
  check_same_grid(f.z.grid, g.z.grid);
  if (f.n == 0 || g.n == 0) throw ValidationError("both densities need a sample size");
  RiskSurface r;
  r.f = f;
  r.g = g;
  r.n1 = f.n;
  r.n2 = g.n;
  if (f.h != g.h) {
    std::ostringstream os;
    os << "case and control bandwidths differ (" << f.h << " vs " << g.h << "); a common h is recommended";
    r.warnings.push_back(os.str());
  }
  log_ratio(r);
  return r;
}

RiskSurface risk_fixed(const PointPattern& cases, const PointPattern& controls, double h, EdgeCorrection correction) {
  check_same_grid(cases.window().grid, controls.window().grid);
  RiskSurface r = risk_fixed(kde_fixed(cases, h, correction), kde_fixed(controls, h, correction));
  r.window = cases.window_ptr();
  return r;
}

RiskSurface risk_adaptive_pooled(const WindowPtr& w, const std::vector<Point>& pooled_pts,
                                 const std::vector<bool>& is_case, const AdaptiveBandwidths& pooled_bw,
                                 EdgeCorrection correction) {
  if (is_case.size() != pooled_pts.size() || pooled_bw.per_point.size() != pooled_pts.size())
    throw ValidationError("pooled points, labels and bandwidths differ in length");
  std::vector<Point> xa, xb;
  std::vector<double> ha, hb;
  for (std::size_t i = 0; i < pooled_pts.size(); ++i) {
    (is_case[i] ? xa : xb).push_back(pooled_pts[i]);
    (is_case[i] ? ha : hb).push_back(pooled_bw.per_point[i]);
  }
  if (xa.empty() || xb.empty()) throw ValidationError("both samples need at least one point");
  RiskSurface r;
  r.kind = RiskKind::adaptive_symmetric;
  r.n1 = xa.size();
  r.n2 = xb.size();
  r.window = w;
  r.f = kde_adaptive_direct(*w, xa, ha, static_cast<double>(r.n1), pooled_bw, correction);
  r.g = kde_adaptive_direct(*w, xb, hb, static_cast<double>(r.n2), pooled_bw, correction);
  AdaptiveBandwidths bf = pooled_bw, bg = pooled_bw;
  bf.per_point = std::move(ha);
  bg.per_point = std::move(hb);
  r.bw_f = std::move(bf);
  r.bw_g = std::move(bg);
  log_ratio(r);
  return r;
}

RiskSurface risk_adaptive(const PointPattern& cases, const PointPattern& controls, double h0,
                          const AdaptiveRiskOptions& opt) {
  check_same_grid(cases.window().grid, controls.window().grid);
  if (cases.n() == 0 || controls.n() == 0) throw ValidationError("both samples need at least one point");
  if (opt.pilots == PilotMode::pooled) {
    PointPattern pool = pooled(cases, controls);
    const double hp = opt.hp > 0.0 ? opt.hp : os_bandwidth(pool.coords()).h;
    AdaptiveBandwidths bw = abramson_bandwidths(pool, h0, make_pilot(pool, hp), opt.tau);
    std::vector<bool> is_case(pool.n(), false);
    std::fill(is_case.begin(), is_case.begin() + static_cast<long>(cases.n()), true);
    return risk_adaptive_pooled(cases.window_ptr(), pool.coords(), is_case, bw, opt.correction);
  }
  const double hp1 = opt.hp1 > 0.0 ? opt.hp1 : os_bandwidth(cases.coords()).h;
  const double hp2 = opt.hp2 > 0.0 ? opt.hp2 : os_bandwidth(controls.coords()).h;
  PilotPtr pf = make_pilot(cases, hp1), pg = make_pilot(controls, hp2);
  const double gf = abramson_bandwidths(cases, h0, pf, opt.tau).log_gamma;
  const double gg = abramson_bandwidths(controls, h0, pg, opt.tau).log_gamma;
  const double gfg = std::exp(0.5 * (gf + gg));
  RiskSurface r;
  r.kind = RiskKind::adaptive_asymmetric;
  r.window = cases.window_ptr();
  r.n1 = cases.n();
  r.n2 = controls.n();
  r.bw_f = abramson_bandwidths(cases, h0, pf, opt.tau, gfg);
  r.bw_g = abramson_bandwidths(controls, h0, pg, opt.tau, gfg);
  r.f = kde_adaptive_direct(cases, *r.bw_f, opt.correction);
  r.g = kde_adaptive_direct(controls, *r.bw_g, opt.correction);
  log_ratio(r);
  return r;
}

// ---- space-time ----

namespace {

void check_st_pair(const STDensity& f, const Grid& g_grid, double g_h, std::vector<std::string>& warnings) {
  if (f.slices.empty()) throw ValidationError("space-time density has no slices");
  if (!(f.slices[0].grid == g_grid)) throw ValidationError("case and control surfaces are on different grids");
  if (f.normalization != STNormalization::joint)
    throw ValidationError("space-time risk needs joint (not conditional) densities");
  if (f.h != g_h) {
    std::ostringstream os;
    os << "case and control spatial bandwidths differ (" << f.h << " vs " << g_h << "); a common h is recommended";
    warnings.push_back(os.str());
  }
}

std::vector<double> log_margin(const TemporalMargin& m, double floor_rel) {
  double peak = 0.0;
  for (double v : m.f) peak = std::max(peak, v);
  const double eps = floor_rel * peak;
  std::vector<double> out(m.f.size());
  for (std::size_t k = 0; k < m.f.size(); ++k) out[k] = std::log(std::max(m.f[k], eps));
  return out;
}

bool same_times(const TemporalInterval& a, const TemporalInterval& b) {
  return a.t_min == b.t_min && a.t_max == b.t_max && a.t_grid == b.t_grid;
}

}  // namespace

STRiskSurface risk_st(const STDensity& f, const STDensity& g) {
  STRiskSurface r;
  check_st_pair(f, g.slices.empty() ? Grid{} : g.slices[0].grid, g.h, r.warnings);
  if (g.normalization != STNormalization::joint)
    throw ValidationError("space-time risk needs joint (not conditional) densities");
  if (!same_times(f.tlim, g.tlim)) throw ValidationError("case and control time grids differ");
  if (f.lambda != g.lambda) {
    std::ostringstream os;
    os << "case and control temporal bandwidths differ (" << f.lambda << " vs " << g.lambda << ")";
    r.warnings.push_back(os.str());
  }
  r.denominator = STDenominator::time_varying;
  r.tlim = f.tlim;
  r.h = f.h;
  r.lambda = f.lambda;
  r.f = f;
  r.g_st = g;
  const double n1 = static_cast<double>(f.n), n2 = static_cast<double>(g.n);
  double peak = 0.0;
  for (std::size_t s = 0; s < f.slices.size(); ++s)
    for (std::size_t k = 0; k < f.slices[s].values.size(); ++k) {
      double a = f.slices[s].values[k];
      if (std::isfinite(a)) peak = std::max(peak, (n1 * a + n2 * g.slices[s].values[k]) / (n1 + n2));
    }
  if (!(peak > 0.0)) throw NumericError("pooled density is zero everywhere");
  r.epsilon = kRiskFloor * peak;
  r.log_fbar = log_margin(f.margin, kRiskFloor);
  r.log_gbar = log_margin(g.margin, kRiskFloor);
  for (std::size_t s = 0; s < f.slices.size(); ++s) {
    Surface j{f.slices[s].grid, std::vector<double>(f.slices[s].values.size(), std::nan(""))};
    Surface c = j;
    const double shift = r.log_gbar[s] - r.log_fbar[s];
    for (std::size_t k = 0; k < j.values.size(); ++k) {
      double a = f.slices[s].values[k], b = g.slices[s].values[k];
      if (!std::isfinite(a)) continue;
      if (!(a >= r.epsilon) || !(b >= r.epsilon)) ++r.floored;
      j.values[k] = std::log(std::max(a, r.epsilon)) - std::log(std::max(b, r.epsilon));
      c.values[k] = j.values[k] + shift;
    }
    r.rho_joint.push_back(std::move(j));
    r.rho_cond.push_back(std::move(c));
  }
  return r;
}

STRiskSurface risk_st(const STDensity& f, const DensitySurface& g) {
  STRiskSurface r;
  check_st_pair(f, g.z.grid, g.h, r.warnings);
  r.denominator = STDenominator::time_constant;
  r.tlim = f.tlim;
  r.h = f.h;
  r.lambda = f.lambda;
  r.f = f;
  r.g_space = g;
  const double T = f.tlim.length();
  const double logT = std::log(T);
  // Floor on the common scale of f |T| and g.
  const double n1 = static_cast<double>(f.n), n2 = static_cast<double>(g.n);
  double peak = 0.0;
  for (const Surface& sl : f.slices)
    for (std::size_t k = 0; k < sl.values.size(); ++k)
      if (std::isfinite(sl.values[k])) peak = std::max(peak, (n1 * sl.values[k] * T + n2 * g.z.values[k]) / (n1 + n2));
  if (!(peak > 0.0)) throw NumericError("pooled density is zero everywhere");
  r.epsilon = kRiskFloor * peak;
  r.log_fbar = log_margin(f.margin, kRiskFloor);
  for (std::size_t s = 0; s < f.slices.size(); ++s) {
    Surface j{f.slices[s].grid, std::vector<double>(f.slices[s].values.size(), std::nan(""))};
    Surface c = j;
    for (std::size_t k = 0; k < j.values.size(); ++k) {
      double a = f.slices[s].values[k], b = g.z.values[k];
      if (!std::isfinite(a)) continue;
      if (!(a * T >= r.epsilon) || !(b >= r.epsilon)) ++r.floored;
      const double la = std::log(std::max(a * T, r.epsilon));
      const double lb = std::log(std::max(b, r.epsilon));
      j.values[k] = la - lb;
      c.values[k] = j.values[k] - logT - r.log_fbar[s];
    }
    r.rho_joint.push_back(std::move(j));
    r.rho_cond.push_back(std::move(c));
  }
  return r;
}

TimeBracket time_bracket(const TemporalInterval& tlim, double t) {
  const auto& tg = tlim.t_grid;
  if (tg.empty()) throw ValidationError("time grid is empty");
  if (!(t >= tlim.t_min && t <= tlim.t_max)) {
    std::ostringstream os;
    os << "time " << t << " is outside [" << tlim.t_min << ", " << tlim.t_max << "]";
    throw ValidationError(os.str());
  }
  if (t <= tg.front()) return {0, 0.0};
  if (t >= tg.back()) return {tg.size() - 1, 0.0};
  auto it = std::upper_bound(tg.begin(), tg.end(), t);
  std::size_t hi = static_cast<std::size_t>(it - tg.begin());
  std::size_t lo = hi - 1;
  if (tg[lo] == t) return {lo, 0.0};
  return {lo, (t - tg[lo]) / (tg[hi] - tg[lo])};
}

Surface interpolate_planes(const std::vector<Surface>& planes, const TimeBracket& b) {
  if (b.lo >= planes.size()) throw ValidationError("time plane index out of range");
  if (b.w == 0.0) return planes[b.lo];
  const Surface& A = planes[b.lo];
  const Surface& B = planes[b.lo + 1];
  Surface out{A.grid, std::vector<double>(A.values.size())};
  for (std::size_t k = 0; k < out.values.size(); ++k)
    out.values[k] = (1.0 - b.w) * A.values[k] + b.w * B.values[k];
  return out;
}

std::vector<STSlice> st_slice(const STRiskSurface& r, const std::vector<double>& times,
                              const std::vector<Surface>* p_joint, const std::vector<Surface>* p_cond) {
  std::vector<STSlice> out;
  out.reserve(times.size());
  for (double t : times) {
    TimeBracket b = time_bracket(r.tlim, t);
    STSlice s;
    s.t = t;
    s.rr = interpolate_planes(r.rho_joint, b);
    s.rr_cond = interpolate_planes(r.rho_cond, b);
    if (p_joint) s.P = interpolate_planes(*p_joint, b);
    if (p_cond) s.P_cond = interpolate_planes(*p_cond, b);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace sprisk
