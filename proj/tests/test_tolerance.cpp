#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "sprisk/bandwidth.hpp"
#include "sprisk/errors.hpp"
#include "sprisk/tolerance.hpp"

using namespace sprisk;

namespace {

WindowPtr unit_square(int n) { return std::make_shared<const WindowMask>(build_window(0, 0, 1, 1, n, n)); }

std::vector<Point> uniform_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point> p(n);
  for (auto& q : p) q = {u(rng), u(rng)};
  return p;
}

std::vector<Point> disc(std::size_t n, Point c, double r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point> p;
  while (p.size() < n) {
    double a = 2 * std::numbers::pi * u(rng), s = r * std::sqrt(u(rng));
    p.push_back({c.x + s * std::cos(a), c.y + s * std::sin(a)});
  }
  return p;
}

std::vector<double> times_between(std::size_t n, double a, double b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(a, b);
  std::vector<double> t(n);
  for (auto& x : t) x = u(rng);
  return t;
}

// Full-plane integral of g(u) by midpoint quadrature on [-8, 8]^2.
template <class F>
double plane_integral(F g) {
  const int m = 800;
  const double L = 8.0, d = 2 * L / m;
  double s = 0.0;
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) s += g(-L + (i + 0.5) * d, -L + (j + 0.5) * d);
  return s * d * d;
}

bool encloses_closed(const ToleranceContours& c, Point p) {
  for (const ContourSet& cs : c.sets)
    for (std::size_t k = 0; k < cs.polylines.size(); ++k)
      if (cs.closed[k] && polyline_encloses(cs.polylines[k], p)) return true;
  return false;
}

}  // namespace

TEST(MonteCarlo, BoundsDeterminismAndLowerTail) {
  auto w = unit_square(32);
  PointPattern a(w, oracle::clustered_points(80, 1)), b(w, uniform_points(100, 2));
  RiskConfig cfg;
  cfg.h = 0.08;
  PValueSurface p1 = mc_pvalues(a, b, cfg, 39, 7), p2 = mc_pvalues(a, b, cfg, 39, 7), p3 = mc_pvalues(a, b, cfg, 39, 8);
  EXPECT_EQ(p1.upper.values.size(), w->grid.size());
  bool differs = false;
  for (std::size_t k = 0; k < p1.upper.values.size(); ++k) {
    double v = p1.upper.values[k];
    if (!std::isfinite(v)) continue;
    EXPECT_GE(v, 1.0 / 40.0);
    EXPECT_LE(v, 1.0);
    EXPECT_EQ(v, p2.upper.values[k]);
    EXPECT_EQ(p1.lower.values[k], 1.0 - v);
    differs |= v != p3.upper.values[k];
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(p1.N, 39);
  EXPECT_EQ(p1.seed, 7u);
}

TEST(MonteCarlo, ExtremeObservationGetsSmallestP) {
  auto w = unit_square(32);
  auto pa = uniform_points(60, 3);
  auto hot = disc(60, {0.3, 0.6}, 0.05, 4);
  pa.insert(pa.end(), hot.begin(), hot.end());
  PointPattern a(w, pa), b(w, uniform_points(200, 5));
  RiskConfig cfg;
  cfg.h = 0.05;
  PValueSurface p = mc_pvalues(a, b, cfg, 200, 11);
  const std::size_t k = w->grid.index(9, 19);  // pixel holding (0.3, 0.6)
  EXPECT_DOUBLE_EQ(p.upper.values[k], 1.0 / 201.0);
}

TEST(MonteCarlo, AdaptiveConfigsRun) {
  auto w = unit_square(24);
  PointPattern a(w, oracle::clustered_points(60, 6)), b(w, uniform_points(70, 7));
  for (RiskKind kind : {RiskKind::adaptive_symmetric, RiskKind::adaptive_asymmetric}) {
    RiskConfig cfg;
    cfg.kind = kind;
    cfg.h = 0.1;
    PValueSurface p = mc_pvalues(a, b, cfg, 19, 3), q = mc_pvalues(a, b, cfg, 19, 3);
    EXPECT_EQ(p.upper.values.size(), q.upper.values.size());
    for (std::size_t k = 0; k < p.upper.values.size(); ++k) {
      if (!std::isfinite(p.upper.values[k])) continue;
      EXPECT_GE(p.upper.values[k], 0.05);
      EXPECT_EQ(p.upper.values[k], q.upper.values[k]);
    }
  }
}

TEST(MonteCarlo, Rejections) {
  auto w = unit_square(16);
  PointPattern a(w, uniform_points(20, 8)), b(w, uniform_points(20, 9));
  RiskConfig cfg;
  cfg.h = 0.1;
  EXPECT_THROW(mc_pvalues(a, b, cfg, 18, 1), ValidationError);
  EXPECT_THROW(mc_pvalues_st(a, b, 0.1, 1.0, make_interval(0, 10), 19, 1), ValidationError);
}

TEST(MonteCarlo, SpaceTimeStacks) {
  auto w = unit_square(16);
  auto tl = make_interval(0, 10, 11);
  PointPattern a(w, uniform_points(40, 10), times_between(40, 0, 10, 11));
  PointPattern b(w, uniform_points(50, 12), times_between(50, 0, 10, 13));
  STPValues p = mc_pvalues_st(a, b, 0.12, 1.5, tl, 19, 5);
  ASSERT_EQ(p.joint.upper_st.size(), tl.t_grid.size());
  ASSERT_EQ(p.cond.upper_st.size(), tl.t_grid.size());
  for (const auto& s : p.joint.upper_st)
    for (double v : s.values)
      if (std::isfinite(v)) {
        EXPECT_GE(v, 1.0 / 20.0);
        EXPECT_LE(v, 1.0);
      }
  STPValues q = mc_pvalues_st(a, b, 0.12, 1.5, tl, 19, 5);
  EXPECT_EQ(p.cond.upper_st[4].values, q.cond.upper_st[4].values);
}

TEST(Asymptotic, ZeroRiskGivesHalf) {
  auto w = unit_square(32);
  PointPattern a(w, oracle::clustered_points(100, 14));
  PointPattern pool = pooled(a, a);
  PValueSurface pf = asy_pvalues_fixed(risk_fixed(a, a, 0.08), pool);
  AdaptiveRiskOptions o;
  o.pilots = PilotMode::pooled;
  PValueSurface ps = asy_pvalues_adaptive(risk_adaptive(a, a, 0.08, o));
  PValueSurface pa = asy_pvalues_adaptive(risk_adaptive(a, a, 0.08));
  for (const PValueSurface* p : {&pf, &ps, &pa})
    for (std::size_t k = 0; k < p->upper.values.size(); ++k)
      if (std::isfinite(p->upper.values[k])) {
        EXPECT_EQ(p->upper.values[k], 0.5);
        EXPECT_EQ(p->lower.values[k], 0.5);
      }
  auto tl = make_interval(0, 10, 11);
  PointPattern s(w, oracle::clustered_points(100, 15), times_between(100, 0, 10, 16));
  STDensity f = kde_st(s, 0.08, 1.5, tl);
  PointPattern spool = pooled(s, s);
  for (STMode m : {STMode::joint, STMode::conditional}) {
    PValueSurface p = asy_pvalues_st(risk_st(f, f), m, *w, &spool);
    for (const Surface& sl : p.upper_st)
      for (double v : sl.values)
        if (std::isfinite(v)) EXPECT_EQ(v, 0.5);
  }
}

TEST(Asymptotic, FixedInteriorClosedForm) {
  auto w = unit_square(64);
  PointPattern a(w, oracle::clustered_points(300, 17)), b(w, uniform_points(250, 18));
  PointPattern pool = pooled(a, b);
  const double h = 0.05;
  RiskSurface r = risk_fixed(a, b, h);
  PValueSurface p = asy_pvalues_fixed(r, pool);
  DensitySurface c = kde_fixed(pool, h, EdgeCorrection::uniform);
  const std::size_t k = w->grid.index(32, 32);
  const double var = 1.0 / (4 * std::numbers::pi * h * h * c.z.values[k]) * (1.0 / 300 + 1.0 / 250);
  EXPECT_NEAR(p.Z.values[k] / (r.rho.values[k] / std::sqrt(var)), 1.0, 1e-4);
  EXPECT_NEAR(p.upper.values[k], 0.5 * std::erfc(p.Z.values[k] / std::sqrt(2.0)), 1e-15);
  EXPECT_NEAR(p.upper.values[k] + p.lower.values[k], 1.0, 1e-15);
}

TEST(Asymptotic, FixedRejectsBandwidthMismatch) {
  auto w = unit_square(32);
  PointPattern a(w, uniform_points(50, 19)), b(w, uniform_points(60, 20));
  RiskSurface r = risk_fixed(kde_fixed(a, 0.1, EdgeCorrection::uniform), kde_fixed(b, 0.12, EdgeCorrection::uniform));
  EXPECT_THROW(asy_pvalues_fixed(r, pooled(a, b)), ValidationError);
  EXPECT_THROW(asy_pvalues_fixed(risk_fixed(a, b, 0.1), a), ValidationError);
  EXPECT_THROW(asy_pvalues_adaptive(risk_fixed(a, b, 0.1)), ValidationError);
}

TEST(Asymptotic, WindowIntegralsMatchPlaneQuadrature) {
  // A_K and A_M deep inside equal the full-plane integrals of K^2 and M^2.
  auto K = [](double x, double y) { return std::exp(-0.5 * (x * x + y * y)) / (2 * std::numbers::pi); };
  const double rk = plane_integral([&](double x, double y) { return K(x, y) * K(x, y); });
  const double rm = plane_integral([&](double x, double y) {
    double m = (2.0 - x * x - y * y) * K(x, y);
    return m * m;
  });
  EXPECT_NEAR(rk, 1.0 / (4 * std::numbers::pi), 1e-10);
  EXPECT_NEAR(rm, 1.0 / (2 * std::numbers::pi), 1e-10);

  auto w = unit_square(64);
  PointPattern a(w, oracle::clustered_points(200, 21));
  AdaptiveBandwidths bw = abramson_bandwidths(a, 0.03, make_pilot(a, 0.1));
  AdaptiveVarianceParts parts = adaptive_variance_parts(*w, bw);
  const std::size_t k = w->grid.index(32, 32);
  ASSERT_LT(parts.h.values[k], 0.1);
  EXPECT_NEAR(parts.a_k.values[k], rk, 1e-4 * rk);
  EXPECT_NEAR(parts.a_m.values[k], rm, 1e-4 * rm);
  EXPECT_NEAR(parts.q.values[k], 1.0, 1e-4);
}

TEST(Asymptotic, SymmetricInteriorClosedForm) {
  auto w = unit_square(64);
  PointPattern a(w, oracle::clustered_points(250, 22)), b(w, oracle::clustered_points(300, 23));
  AdaptiveRiskOptions o;
  o.pilots = PilotMode::pooled;
  RiskSurface r = risk_adaptive(a, b, 0.04, o);
  PValueSurface p = asy_pvalues_adaptive(r);
  const std::size_t k = w->grid.index(24, 38);  // near the cluster, far from edges
  const double hx = r.bw_f->at({w->grid.xc(24), w->grid.yc(38)});
  ASSERT_LT(hx, 0.08);
  const double c = r.bw_f->pilot->z.values[k];
  const double S = 2.0 / (4 * std::numbers::pi) + 0.25 / (2 * std::numbers::pi);
  const double var = S / (c * hx * hx) * (1.0 / 250 + 1.0 / 300);
  EXPECT_NEAR(p.Z.values[k] / (r.rho.values[k] / std::sqrt(var)), 1.0, 1e-3);
  // Unclipped pilot: c h(x)^2 = h0^2 / gamma^2.
  EXPECT_NEAR(c * hx * hx, 0.04 * 0.04 / (r.bw_f->gamma_div * r.bw_f->gamma_div), 1e-3 * c * hx * hx);
}

TEST(Asymptotic, SwapNegatesZ) {
  auto w = unit_square(48);
  PointPattern a(w, oracle::clustered_points(120, 24)), b(w, uniform_points(140, 25));
  PValueSurface f1 = asy_pvalues_fixed(risk_fixed(a, b, 0.08), pooled(a, b));
  PValueSurface f2 = asy_pvalues_fixed(risk_fixed(b, a, 0.08), pooled(b, a));
  PValueSurface a1 = asy_pvalues_adaptive(risk_adaptive(a, b, 0.08));
  PValueSurface a2 = asy_pvalues_adaptive(risk_adaptive(b, a, 0.08));
  for (std::size_t k = 0; k < f1.Z.values.size(); ++k) {
    if (!std::isfinite(f1.Z.values[k])) continue;
    EXPECT_NEAR(f1.Z.values[k], -f2.Z.values[k], 1e-9 * std::max(1.0, std::abs(f1.Z.values[k])));
    EXPECT_NEAR(a1.Z.values[k], -a2.Z.values[k], 1e-9 * std::max(1.0, std::abs(a1.Z.values[k])));
  }
}

TEST(Asymptotic, RLambdaClosedForm) {
  auto tl = make_interval(0, 100);
  EXPECT_NEAR(r_lambda(50, 2.0, tl), 1.0 / (2 * std::sqrt(std::numbers::pi)), 1e-12);
  // At an end half the kernel is inside: (1/2)(1/(2 sqrt pi)) / (1/2)^2.
  EXPECT_NEAR(r_lambda(0, 2.0, tl), 1.0 / std::sqrt(std::numbers::pi), 1e-9);
  EXPECT_NEAR(r_lambda(100, 2.0, tl), 1.0 / std::sqrt(std::numbers::pi), 1e-9);
}

TEST(Asymptotic, TimeConstantInteriorClosedForm) {
  auto w = unit_square(64);
  auto tl = make_interval(0, 50, 51);
  PointPattern a(w, oracle::clustered_points(400, 26), times_between(400, 0, 50, 27));
  PointPattern b(w, uniform_points(300, 28));
  const double h = 0.05, lam = 3.0;
  STRiskSurface r = risk_st(kde_st(a, h, lam, tl), kde_fixed(b, h, EdgeCorrection::uniform));
  PValueSurface pj = asy_pvalues_st(r, STMode::joint, *w);
  PValueSurface pc = asy_pvalues_st(r, STMode::conditional, *w);
  const std::size_t s = 25, k = w->grid.index(30, 34);
  const double Rh = 1.0 / (4 * std::numbers::pi), Rl = 1.0 / (2 * std::sqrt(std::numbers::pi));
  const double f = r.f.slices[s].values[k], g = r.g_space->z.values[k];
  const double var = Rh * Rl / (f * h * h * 400 * lam) + Rh / (g * h * h * 300);
  EXPECT_NEAR(pj.Z_st[s].values[k] / (r.rho_joint[s].values[k] / std::sqrt(var)), 1.0, 1e-4);
  EXPECT_NEAR(pc.Z_st[s].values[k] / (r.rho_cond[s].values[k] / std::sqrt(var)), 1.0, 1e-4);
}

TEST(Asymptotic, TimeVaryingConditionalToJointRatio) {
  auto w = unit_square(32);
  auto tl = make_interval(0, 20, 21);
  PointPattern a(w, oracle::clustered_points(150, 29), times_between(150, 0, 12, 30));
  PointPattern b(w, uniform_points(200, 31), times_between(200, 0, 20, 32));
  const double h = 0.08, lam = 2.0;
  STRiskSurface r = risk_st(kde_st(a, h, lam, tl), kde_st(b, h, lam, tl));
  PointPattern pool = pooled(a, b);
  PValueSurface pj = asy_pvalues_st(r, STMode::joint, *w, &pool);
  PValueSurface pc = asy_pvalues_st(r, STMode::conditional, *w, &pool);
  STDensity c = kde_st(pool, h, lam, tl);
  for (std::size_t s : {2u, 10u, 18u}) {
    const double fb = std::exp(r.log_fbar[s]), gb = std::exp(r.log_gbar[s]);
    const double want = c.margin.f[s] * (1.0 / (150 * fb) + 1.0 / (200 * gb)) / (1.0 / 150 + 1.0 / 200);
    const std::size_t k = w->grid.index(12, 20);
    const double vj = std::pow(r.rho_joint[s].values[k] / pj.Z_st[s].values[k], 2);
    const double vc = std::pow(r.rho_cond[s].values[k] / pc.Z_st[s].values[k], 2);
    EXPECT_NEAR(vc / vj, want, 1e-10 * want);
  }
  // Pooled margin is the size-weighted mixture, so equal margins give ratio 1.
  EXPECT_NEAR(c.margin.f[5], (150 * std::exp(r.log_fbar[5]) + 200 * std::exp(r.log_gbar[5])) / 350, 1e-12);
  EXPECT_THROW(asy_pvalues_st(r, STMode::joint, *w), ValidationError);
}

TEST(Contours, EmptyWhenAllLarge) {
  auto w = unit_square(16);
  Surface p = constant_surface(*w, 0.7);
  auto c = tol_contours(p, {0.05, 0.01}, Tail::upper);
  ASSERT_EQ(c.sets.size(), 2u);
  EXPECT_TRUE(c.sets[0].polylines.empty());
  EXPECT_TRUE(c.sets[1].polylines.empty());
  EXPECT_THROW(tol_contours(p, {1.0}, Tail::upper), ValidationError);
  EXPECT_THROW(tol_contours(p, {0.0}, Tail::upper), ValidationError);
}

TEST(Contours, HotspotIsEnclosed) {
  auto w = unit_square(48);
  int hits = 0;
  const Point centre{0.35, 0.6};
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto pa = uniform_points(200, 40 + s);
    auto hot = disc(60, centre, 0.08, 60 + s);
    pa.insert(pa.end(), hot.begin(), hot.end());
    PointPattern a(w, pa), b(w, uniform_points(300, 80 + s));
    PValueSurface p = asy_pvalues_fixed(risk_fixed(a, b, 0.06), pooled(a, b));
    if (encloses_closed(tol_contours(p, {0.05}), centre)) ++hits;
  }
  RecordProperty("hotspot_hits", hits);
  EXPECT_GE(hits, 9);
}

TEST(Contours, LowerTailFlipsGeometry) {
  auto w = unit_square(48);
  auto pa = uniform_points(200, 90);
  auto hot = disc(60, {0.6, 0.4}, 0.08, 91);
  pa.insert(pa.end(), hot.begin(), hot.end());
  PointPattern a(w, pa), b(w, uniform_points(300, 92));
  PValueSurface up = asy_pvalues_fixed(risk_fixed(a, b, 0.06), pooled(a, b), Tail::upper);
  PValueSurface lo = asy_pvalues_fixed(risk_fixed(b, a, 0.06), pooled(b, a), Tail::lower);
  auto cu = tol_contours(up, {0.05});
  auto cl = tol_contours(lo, {0.05});
  EXPECT_EQ(cl.tail, Tail::lower);
  EXPECT_TRUE(encloses_closed(cu, {0.6, 0.4}));
  EXPECT_TRUE(encloses_closed(cl, {0.6, 0.4}));
  // Upper tail of the swapped pair encloses nothing there.
  PValueSurface up_swapped = asy_pvalues_fixed(risk_fixed(b, a, 0.06), pooled(b, a), Tail::upper);
  EXPECT_FALSE(encloses_closed(tol_contours(up_swapped, {0.05}), {0.6, 0.4}));
  // The raw-surface form flips an upper surface itself.
  auto flipped = tol_contours(up_swapped.upper, {0.05}, Tail::lower);
  EXPECT_TRUE(encloses_closed(flipped, {0.6, 0.4}));
}
