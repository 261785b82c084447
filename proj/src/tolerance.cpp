#include "sprisk/tolerance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "sprisk/bandwidth.hpp"
#include "sprisk/errors.hpp"

namespace sprisk {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream i of a run seeded with `seed`.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t i) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(i + 0x632be59bd9b4e019ULL)));
}

// Uniform integer in [0, n) by rejection (Lemire), independent of the
// standard library's distribution implementations.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  unsigned __int128 m = static_cast<unsigned __int128>(rng()) * n;
  auto lo = static_cast<std::uint64_t>(m);
  if (lo < n) {
    const std::uint64_t t = (0 - n) % n;
    while (lo < t) {
      m = static_cast<unsigned __int128>(rng()) * n;
      lo = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

// Case labels for one permutation: the first n1 slots of a partial
// Fisher-Yates shuffle of 0..n-1.
std::vector<bool> permuted_labels(std::size_t n, std::size_t n1, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t k = 0; k < n; ++k) idx[k] = k;
  for (std::size_t k = 0; k < n1; ++k) {
    std::size_t j = k + static_cast<std::size_t>(bounded(rng, n - k));
    std::swap(idx[k], idx[j]);
  }
  std::vector<bool> lab(n, false);
  for (std::size_t k = 0; k < n1; ++k) lab[idx[k]] = true;
  return lab;
}

void check_mc(std::size_t n1, std::size_t n2, int N) {
  if (N < 19) throw ValidationError("Monte-Carlo p-values need at least 19 iterations");
  if (n1 == 0 || n2 == 0) throw ValidationError("both samples need at least one point");
}

// Adds (sim >= obs) over finite pixels.
void count_exceed(const std::vector<double>& obs, const std::vector<double>& sim, std::vector<int>& cnt) {
  for (std::size_t k = 0; k < obs.size(); ++k)
    if (std::isfinite(obs[k]) && sim[k] >= obs[k]) ++cnt[k];
}

void mc_finish(const Surface& obs, const std::vector<int>& cnt, int N, Surface& upper, Surface& lower) {
  upper = Surface{obs.grid, std::vector<double>(obs.values.size(), std::nan(""))};
  lower = upper;
  const double d = static_cast<double>(N) + 1.0;
  for (std::size_t k = 0; k < obs.values.size(); ++k) {
    if (!std::isfinite(obs.values[k])) continue;
    upper.values[k] = (1.0 + cnt[k]) / d;
    lower.values[k] = 1.0 - upper.values[k];
  }
}

std::vector<Point> subset(const std::vector<Point>& p, const std::vector<bool>& lab, bool want) {
  std::vector<Point> out;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (lab[k] == want) out.push_back(p[k]);
  return out;
}

std::vector<double> subset(const std::vector<double>& p, const std::vector<bool>& lab, bool want) {
  std::vector<double> out;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (lab[k] == want) out.push_back(p[k]);
  return out;
}

// Fixed-bandwidth risk from one kernel sum per permutation: the control sum
// is the pooled sum minus the case sum.
class FixedPermuter {
 public:
  FixedPermuter(const PointPattern& pool, std::size_t n1, double h, EdgeCorrection corr)
      : pool_(pool), n1_(n1), h_(h), corr_(corr), wc_(pool.window(), h) {
    total_ = kde_fixed_weighted(pool.window(), pool.coords(), {}, 1.0, h, corr, Binning::exact, &wc_).z.values;
    const double n = static_cast<double>(pool.n());
    double peak = 0.0;
    for (double v : total_)
      if (std::isfinite(v)) peak = std::max(peak, v / n);
    if (!(peak > 0.0)) throw NumericError("pooled density is zero everywhere");
    eps_ = kRiskFloor * peak;
  }

  std::vector<double> rho(const std::vector<bool>& lab) const {
    auto pts = subset(pool_.coords(), lab, true);
    auto a = kde_fixed_weighted(pool_.window(), pts, {}, 1.0, h_, corr_, Binning::exact, &wc_).z.values;
    const double n1 = static_cast<double>(n1_), n2 = static_cast<double>(pool_.n() - n1_);
    std::vector<double> out(a.size(), std::nan(""));
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (!std::isfinite(total_[k])) continue;
      const double f = a[k] / n1, g = (total_[k] - a[k]) / n2;
      out[k] = std::log(std::max(f, eps_)) - std::log(std::max(g, eps_));
    }
    return out;
  }

 private:
  const PointPattern& pool_;
  std::size_t n1_;
  double h_;
  EdgeCorrection corr_;
  WindowConvolver wc_;
  std::vector<double> total_;
  double eps_ = 0.0;
};

RiskConfig resolve(const PointPattern& cases, const PointPattern& controls, RiskConfig cfg) {
  if (!(cfg.h > 0.0)) throw ValidationError("risk bandwidth must be positive");
  if (cfg.kind == RiskKind::adaptive_asymmetric) {
    if (!(cfg.hp1 > 0.0)) cfg.hp1 = os_bandwidth(cases.coords()).h;
    if (!(cfg.hp2 > 0.0)) cfg.hp2 = os_bandwidth(controls.coords()).h;
  } else if (cfg.kind == RiskKind::adaptive_symmetric) {
    if (!(cfg.hp > 0.0)) cfg.hp = os_bandwidth(pooled(cases, controls).coords()).h;
  }
  return cfg;
}

void z_to_p(const Surface& z, Surface& upper, Surface& lower) {
  upper = Surface{z.grid, std::vector<double>(z.values.size(), std::nan(""))};
  lower = upper;
  for (std::size_t k = 0; k < z.values.size(); ++k) {
    if (std::isnan(z.values[k])) continue;
    upper.values[k] = normal_sf(z.values[k]);
    lower.values[k] = normal_cdf(z.values[k]);
  }
}

// R_h on the window grid: k2 / q^2, or k2 alone without correction.
std::vector<double> rh_values(double h, const WindowMask& w, EdgeCorrection corr) {
  RhParts r = rh_parts(h, w);
  auto k2 = r.k2.inner(), q = r.q.inner();
  if (corr == EdgeCorrection::none) return k2;
  for (std::size_t k = 0; k < k2.size(); ++k) k2[k] /= q[k] * q[k];
  return k2;
}

}  // namespace

RiskSurface compute_risk(const PointPattern& cases, const PointPattern& controls, const RiskConfig& cfg) {
  switch (cfg.kind) {
    case RiskKind::fixed:
      return risk_fixed(cases, controls, cfg.h, cfg.correction);
    case RiskKind::adaptive_asymmetric: {
      AdaptiveRiskOptions o;
      o.pilots = PilotMode::separate;
      o.hp1 = cfg.hp1;
      o.hp2 = cfg.hp2;
      o.tau = cfg.tau;
      o.correction = cfg.correction;
      return risk_adaptive(cases, controls, cfg.h, o);
    }
    case RiskKind::adaptive_symmetric: {
      AdaptiveRiskOptions o;
      o.pilots = PilotMode::pooled;
      o.hp = cfg.hp;
      o.tau = cfg.tau;
      o.correction = cfg.correction;
      return risk_adaptive(cases, controls, cfg.h, o);
    }
  }
  throw ValidationError("unknown risk kind");
}

PValueSurface mc_pvalues(const PointPattern& cases, const PointPattern& controls, const RiskConfig& cfg_in, int N,
                         std::uint64_t seed, Tail tail) {
  check_mc(cases.n(), controls.n(), N);
  const RiskConfig cfg = resolve(cases, controls, cfg_in);
  const PointPattern pool = pooled(cases, controls);
  const std::size_t n = pool.n(), n1 = cases.n();
  std::vector<bool> observed(n, false);
  std::fill(observed.begin(), observed.begin() + static_cast<long>(n1), true);

  PValueSurface out;
  out.method = PMethod::mc;
  out.tail = tail;
  out.N = N;
  out.seed = seed;
  Surface obs;
  std::vector<int> cnt;

  if (cfg.kind == RiskKind::fixed) {
    FixedPermuter fp(pool, n1, cfg.h, cfg.correction);
    obs = Surface{pool.window().grid, fp.rho(observed)};
    cnt.assign(obs.values.size(), 0);
    for (int i = 0; i < N; ++i) {
      auto rng = stream(seed, static_cast<std::uint64_t>(i));
      count_exceed(obs.values, fp.rho(permuted_labels(n, n1, rng)), cnt);
    }
  } else if (cfg.kind == RiskKind::adaptive_symmetric) {
    // The pooled pilot and the pooled bandwidths do not depend on labels.
    AdaptiveBandwidths bw = abramson_bandwidths(pool, cfg.h, make_pilot(pool, cfg.hp), cfg.tau);
    obs = risk_adaptive_pooled(pool.window_ptr(), pool.coords(), observed, bw, cfg.correction).rho;
    cnt.assign(obs.values.size(), 0);
    for (int i = 0; i < N; ++i) {
      auto rng = stream(seed, static_cast<std::uint64_t>(i));
      auto lab = permuted_labels(n, n1, rng);
      count_exceed(obs.values, risk_adaptive_pooled(pool.window_ptr(), pool.coords(), lab, bw, cfg.correction).rho.values,
                   cnt);
    }
  } else {
    obs = compute_risk(cases, controls, cfg).rho;
    cnt.assign(obs.values.size(), 0);
    for (int i = 0; i < N; ++i) {
      auto rng = stream(seed, static_cast<std::uint64_t>(i));
      auto lab = permuted_labels(n, n1, rng);
      PointPattern a(pool.window_ptr(), subset(pool.coords(), lab, true));
      PointPattern b(pool.window_ptr(), subset(pool.coords(), lab, false));
      count_exceed(obs.values, compute_risk(a, b, cfg).rho.values, cnt);
    }
  }
  mc_finish(obs, cnt, N, out.upper, out.lower);
  return out;
}

STPValues mc_pvalues_st(const PointPattern& cases, const PointPattern& controls, double h, double lambda,
                        const TemporalInterval& tlim, int N, std::uint64_t seed, Tail tail) {
  check_mc(cases.n(), controls.n(), N);
  if (!cases.has_times() || !controls.has_times())
    throw ValidationError("space-time permutation needs times on both samples");
  const PointPattern pool = pooled(cases, controls);
  const std::size_t n = pool.n(), n1 = cases.n();
  auto risk_of = [&](const std::vector<bool>& lab) {
    PointPattern a(pool.window_ptr(), subset(pool.coords(), lab, true), subset(pool.times(), lab, true));
    PointPattern b(pool.window_ptr(), subset(pool.coords(), lab, false), subset(pool.times(), lab, false));
    return risk_st(kde_st(a, h, lambda, tlim), kde_st(b, h, lambda, tlim));
  };
  std::vector<bool> observed(n, false);
  std::fill(observed.begin(), observed.begin() + static_cast<long>(n1), true);
  const STRiskSurface obs = risk_of(observed);
  const std::size_t S = obs.rho_joint.size();
  std::vector<std::vector<int>> cj(S, std::vector<int>(obs.rho_joint[0].values.size(), 0)), cc = cj;
  for (int i = 0; i < N; ++i) {
    auto rng = stream(seed, static_cast<std::uint64_t>(i));
    STRiskSurface sim = risk_of(permuted_labels(n, n1, rng));
    for (std::size_t s = 0; s < S; ++s) {
      count_exceed(obs.rho_joint[s].values, sim.rho_joint[s].values, cj[s]);
      count_exceed(obs.rho_cond[s].values, sim.rho_cond[s].values, cc[s]);
    }
  }
  STPValues out;
  for (PValueSurface* p : {&out.joint, &out.cond}) {
    p->method = PMethod::mc;
    p->tail = tail;
    p->N = N;
    p->seed = seed;
    p->upper_st.resize(S);
    p->lower_st.resize(S);
    p->warnings.push_back("space-time permutation p-values are expensive; the asymptotic form is the default");
  }
  for (std::size_t s = 0; s < S; ++s) {
    mc_finish(obs.rho_joint[s], cj[s], N, out.joint.upper_st[s], out.joint.lower_st[s]);
    mc_finish(obs.rho_cond[s], cc[s], N, out.cond.upper_st[s], out.cond.lower_st[s]);
  }
  return out;
}

PValueSurface asy_pvalues_fixed(const RiskSurface& risk, const PointPattern& pooled_pattern, Tail tail) {
  if (risk.kind != RiskKind::fixed) throw ValidationError("fixed-bandwidth p-values need a fixed risk surface");
  if (risk.f.h != risk.g.h)
    throw ValidationError("asymptotic p-values need a common case/control bandwidth");
  if (pooled_pattern.n() != risk.n1 + risk.n2)
    throw ValidationError("pooled pattern size does not match the two samples");
  const WindowMask& w = pooled_pattern.window();
  if (!(w.grid == risk.rho.grid)) throw ValidationError("pooled pattern is on a different grid");
  const double h = risk.f.h;
  const auto c = kde_fixed(pooled_pattern, h, risk.f.correction).z.values;
  const auto R = rh_values(h, w, risk.f.correction);
  const double nn = 1.0 / static_cast<double>(risk.n1) + 1.0 / static_cast<double>(risk.n2);
  PValueSurface out;
  out.method = PMethod::asy;
  out.tail = tail;
  out.Z = Surface{risk.rho.grid, std::vector<double>(c.size(), std::nan(""))};
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double r = risk.rho.values[k];
    if (!std::isfinite(r)) continue;
    const double var = R[k] / (std::max(c[k], risk.epsilon) * h * h) * nn;
    out.Z.values[k] = r == 0.0 ? 0.0 : r / std::sqrt(var);
  }
  z_to_p(out.Z, out.upper, out.lower);
  return out;
}

AdaptiveVarianceParts adaptive_variance_parts(const WindowMask& w, const AdaptiveBandwidths& bw) {
  Field hf = bw.field();
  auto [lo, hi] = std::minmax_element(hf.v.begin(), hf.v.end());
  BandwidthLadder lq(w, WindowKernel::gauss, *lo, *hi), lk(w, WindowKernel::gauss_sq, *lo, *hi),
      lm(w, WindowKernel::m_sq, *lo, *hi);
  AdaptiveVarianceParts p;
  Field q = lq.field(hf);
  for (double& v : q.v) v = std::clamp(v, kQFloor, 1.0);
  p.q = masked_surface(w, q.inner());
  p.a_k = masked_surface(w, lk.field(hf).inner());
  p.a_m = masked_surface(w, lm.field(hf).inner());
  p.h = masked_surface(w, hf.inner());
  return p;
}

PValueSurface asy_pvalues_adaptive(const RiskSurface& risk, Tail tail) {
  if (risk.kind == RiskKind::fixed) throw ValidationError("adaptive p-values need an adaptive risk surface");
  if (!risk.bw_f || !risk.bw_g || !risk.bw_f->pilot || !risk.bw_g->pilot || !risk.window)
    throw ValidationError("adaptive risk surface is missing its pilot metadata");
  const WindowMask& w = *risk.window;
  const bool corrected = risk.f.correction != EdgeCorrection::none;
  // Variance of log f-hat at x for one sample:
  //   [2 A_K + A_M / 4] / (q^2 n f~(x) h(x)^2),
  // the displayed S_K bracket with the kernel-scale factor taken at the local
  // bandwidth. For unclipped factors f~ h^2 = h0^2 / gamma^2.
  auto term = [&](const AdaptiveBandwidths& bw, double n) {
    AdaptiveVarianceParts p = adaptive_variance_parts(w, bw);
    std::vector<double> v(p.q.values.size(), std::nan(""));
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!std::isfinite(p.q.values[k])) continue;
      const double q = corrected ? p.q.values[k] : 1.0;
      const double fp = std::max(bw.pilot->z.values[k], bw.pilot_floor);
      const double hh = p.h.values[k];
      v[k] = (2.0 * p.a_k.values[k] + 0.25 * p.a_m.values[k]) / (q * q * n * fp * hh * hh);
    }
    return v;
  };
  const double n1 = static_cast<double>(risk.n1), n2 = static_cast<double>(risk.n2);
  std::vector<double> var;
  if (risk.kind == RiskKind::adaptive_symmetric) {
    var = term(*risk.bw_f, 1.0);
    for (double& v : var) v *= 1.0 / n1 + 1.0 / n2;
  } else {
    var = term(*risk.bw_f, n1);
    auto vg = term(*risk.bw_g, n2);
    for (std::size_t k = 0; k < var.size(); ++k) var[k] += vg[k];
  }
  PValueSurface out;
  out.method = PMethod::asy;
  out.tail = tail;
  out.Z = Surface{risk.rho.grid, std::vector<double>(var.size(), std::nan(""))};
  for (std::size_t k = 0; k < var.size(); ++k) {
    const double r = risk.rho.values[k];
    if (!std::isfinite(r)) continue;
    out.Z.values[k] = r == 0.0 ? 0.0 : r / std::sqrt(var[k]);
  }
  z_to_p(out.Z, out.upper, out.lower);
  return out;
}

double r_lambda(double t, double lambda, const TemporalInterval& tlim) {
  if (!(lambda > 0.0)) throw ValidationError("temporal bandwidth must be positive");
  const double a = (tlim.t_min - t) / lambda, b = (tlim.t_max - t) / lambda;
  // erf(b) - erf(a) without cancellation in the tails.
  double d;
  if (a >= 0.0)
    d = std::erfc(a) - std::erfc(b);
  else if (b <= 0.0)
    d = std::erfc(-b) - std::erfc(-a);
  else
    d = std::erf(b) - std::erf(a);
  const double wt = temporal_edge_weight(t, lambda, tlim);
  return d / (4.0 * std::sqrt(std::numbers::pi) * wt * wt);
}

PValueSurface asy_pvalues_st(const STRiskSurface& risk, STMode mode, const WindowMask& w,
                             const PointPattern* pooled_st, Tail tail) {
  if (risk.rho_joint.empty()) throw ValidationError("space-time risk surface is empty");
  if (!(w.grid == risk.rho_joint[0].grid)) throw ValidationError("window grid does not match the risk surface");
  const double h = risk.h, lam = risk.lambda;
  const auto R = rh_values(h, w, risk.f.correction);
  const std::size_t S = risk.rho_joint.size(), P = R.size();
  const double n1 = static_cast<double>(risk.f.n);
  std::vector<std::vector<double>> var(S, std::vector<double>(P, std::nan("")));

  if (risk.denominator == STDenominator::time_varying) {
    if (!pooled_st || !pooled_st->has_times())
      throw ValidationError("time-varying space-time p-values need the pooled space-time sample");
    if (!risk.g_st) throw ValidationError("space-time risk surface is missing its denominator");
    const double n2 = static_cast<double>(risk.g_st->n);
    if (pooled_st->n() != risk.f.n + risk.g_st->n)
      throw ValidationError("pooled pattern size does not match the two samples");
    STDensity c = kde_st(*pooled_st, h, lam, risk.tlim, risk.f.correction);
    for (std::size_t s = 0; s < S; ++s) {
      const double rl = r_lambda(risk.tlim.t_grid[s], lam, risk.tlim);
      double scale = 1.0 / n1 + 1.0 / n2;
      if (mode == STMode::conditional) {
        // c(z | t) = c(z, t) / cbar(t).
        const double cbar = std::max(c.margin.f[s], 1e-300);
        scale = cbar * (1.0 / (n1 * std::exp(risk.log_fbar[s])) + 1.0 / (n2 * std::exp(risk.log_gbar[s])));
      }
      for (std::size_t k = 0; k < P; ++k) {
        const double cz = c.slices[s].values[k];
        if (!std::isfinite(cz)) continue;
        var[s][k] = R[k] * rl / (std::max(cz, risk.epsilon) * h * h * lam) * scale;
      }
    }
  } else {
    if (!risk.g_space) throw ValidationError("space-time risk surface is missing its denominator");
    const double n2 = static_cast<double>(risk.g_space->n);
    const double T = risk.tlim.length();
    for (std::size_t s = 0; s < S; ++s) {
      const double rl = r_lambda(risk.tlim.t_grid[s], lam, risk.tlim);
      for (std::size_t k = 0; k < P; ++k) {
        const double fz = risk.f.slices[s].values[k];
        if (!std::isfinite(fz)) continue;
        const double g = std::max(risk.g_space->z.values[k], risk.epsilon);
        const double f = std::max(fz, risk.epsilon / T);
        var[s][k] = R[k] * rl / (f * h * h * n1 * lam) + R[k] / (g * h * h * n2);
      }
    }
  }

  PValueSurface out;
  out.method = PMethod::asy;
  out.tail = tail;
  const auto& rho = mode == STMode::joint ? risk.rho_joint : risk.rho_cond;
  out.Z_st.resize(S);
  out.upper_st.resize(S);
  out.lower_st.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    Surface z{rho[s].grid, std::vector<double>(P, std::nan(""))};
    for (std::size_t k = 0; k < P; ++k) {
      const double r = rho[s].values[k];
      if (!std::isfinite(r) || !std::isfinite(var[s][k])) continue;
      z.values[k] = r == 0.0 ? 0.0 : r / std::sqrt(var[s][k]);
    }
    z_to_p(z, out.upper_st[s], out.lower_st[s]);
    out.Z_st[s] = std::move(z);
  }
  return out;
}

ToleranceContours tol_contours(const Surface& p, const std::vector<double>& levels, Tail tail) {
  for (double l : levels)
    if (!(l > 0.0 && l < 1.0)) throw ValidationError("tolerance levels must lie in (0, 1)");
  ToleranceContours out;
  out.tail = tail;
  if (tail == Tail::upper) {
    out.sets = extract_contours(p, levels);
  } else {
    Surface q = p;
    for (double& v : q.values)
      if (std::isfinite(v)) v = 1.0 - v;
    out.sets = extract_contours(q, levels);
  }
  return out;
}

ToleranceContours tol_contours(const PValueSurface& p, const std::vector<double>& levels) {
  // Already tail-specific, so no flip.
  ToleranceContours out = tol_contours(p.P(), levels, Tail::upper);
  out.tail = p.tail;
  return out;
}

}  // namespace sprisk
