#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "sprisk/errors.hpp"
#include "sprisk/sptemporal.hpp"

using namespace sprisk;

namespace {

WindowPtr square(double a, double b, int n) {
  return std::make_shared<const WindowMask>(build_window(a, a, b, b, n, n));
}

std::vector<double> uniform_times(std::size_t n, double a, double b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(a, b);
  std::vector<double> t(n);
  for (double& x : t) x = u(rng);
  return t;
}

double integral(const Surface& s, const WindowMask& w) { return integrate(s, w); }

}  // namespace

TEST(TemporalMargin, SingleEventPeak) {
  auto tl = make_interval(0, 100);
  double lam = 1.5;
  double f = temporal_density({50.0}, lam, tl, 50.0);
  double want = 1.0 / (lam * std::sqrt(2 * std::numbers::pi));
  EXPECT_NEAR(f / want, 1.0, 1e-6);
}

TEST(TemporalMargin, HalfWeightAtStart) {
  auto tl = make_interval(0, 100);
  EXPECT_NEAR(temporal_edge_weight(0.0, 2.0, tl), 0.5, 1e-9);
  EXPECT_NEAR(temporal_edge_weight(50.0, 2.0, tl), 1.0, 1e-12);
  EXPECT_EQ(temporal_edge_weight(1e6, 2.0, tl), 1e-9);
}

TEST(TemporalMargin, IntegratesToOne) {
  auto tl = make_interval(0, 100, 1001);
  auto t = uniform_times(100, 0, 100, 3);
  // 1D oversmoothing bandwidth: 1.144 sd n^-1/5.
  double m = 0, v = 0;
  for (double x : t) m += x / 100;
  for (double x : t) v += (x - m) * (x - m) / 99;
  double lam = 1.144 * std::sqrt(v) * std::pow(100.0, -0.2);
  auto mg = temporal_margin(t, lam, tl);
  EXPECT_NEAR(integrate_time(mg.f, tl), 1.0, 0.005);
  for (double x : mg.f) EXPECT_GE(x, 0.0);
}

TEST(TemporalMargin, RejectsTimesOutside) {
  auto tl = make_interval(0, 10);
  EXPECT_THROW(temporal_margin({1.0, 11.0}, 1.0, tl), ValidationError);
  EXPECT_THROW(temporal_margin({1.0}, 0.0, tl), ValidationError);
}

TEST(KdeST, ProductKernelPeak) {
  auto w = std::make_shared<const WindowMask>(build_window(-20.5, -20.5, 20.5, 20.5, 41, 41));
  PointPattern p(w, {{0.0, 0.0}}, {50.0});
  auto st = kde_st(p, 1.0, 1.0, make_interval(0, 100));
  double want = 1.0 / (2 * std::numbers::pi) / std::sqrt(2 * std::numbers::pi);
  EXPECT_NEAR(st.slices[50].at(20, 20), want, 1e-4);
  EXPECT_NEAR(st.at({0, 0}, 50.0), want, 1e-4);
}

TEST(KdeST, JointIntegratesToOne) {
  auto w = square(0, 1, 64);
  auto pts = oracle::uniform_points(200, 0, 0, 1, 1, 21);
  auto t = uniform_times(200, 0, 20, 22);
  PointPattern p(w, pts, t);
  auto tl = make_interval(0, 20);
  auto st = kde_st(p, 0.08, 1.5, tl);
  std::vector<double> per;
  for (const auto& s : st.slices) per.push_back(integral(s, *w));
  EXPECT_NEAR(integrate_time(per, tl), 1.0, 0.02);
  for (double q : st.q.values)
    if (std::isfinite(q)) {
      EXPECT_GT(q, 0.0);
      EXPECT_LE(q, 1.0);
    }
  for (double x : st.margin.w) {
    EXPECT_GT(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
}

TEST(KdeST, MatchesTripleLoopOracle) {
  auto w = square(0, 1, 32);
  auto pts = oracle::uniform_points(30, 0, 0, 1, 1, 31);
  auto t = uniform_times(30, 0, 15, 32);
  PointPattern p(w, pts, t);
  auto tl = make_interval(0, 15, 16);
  const double h = 0.07, lam = 1.2;
  auto st = kde_st(p, h, lam, tl, EdgeCorrection::none);
  const Grid& g = w->grid;
  double worst = 0.0, peak = 0.0;
  std::vector<std::vector<double>> ref(16, std::vector<double>(g.size()));
  for (int s = 0; s < 16; ++s) {
    double ts = tl.t_grid[s];
    double wl = normal_cdf((15 - ts) / lam) - normal_cdf((0 - ts) / lam);
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        double acc = 0.0;
        for (int k = 0; k < 30; ++k) {
          double lt = std::exp(-0.5 * std::pow((ts - t[k]) / lam, 2)) / (lam * std::sqrt(2 * std::numbers::pi));
          acc += oracle::gauss2(g.xc(i) - pts[k].x, g.yc(j) - pts[k].y, h) * lt;
        }
        ref[s][g.index(i, j)] = acc / (30.0 * wl);
        peak = std::max(peak, ref[s][g.index(i, j)]);
      }
  }
  for (int s = 0; s < 16; ++s)
    for (std::size_t k = 0; k < g.size(); ++k)
      if (ref[s][k] > 1e-6 * peak) worst = std::max(worst, std::abs(st.slices[s].values[k] / ref[s][k] - 1.0));
  EXPECT_LT(worst, 1e-6);
}

TEST(KdeST, SliceIsWeightedSpatialSum) {
  auto w = square(0, 1, 48);
  auto pts = oracle::uniform_points(60, 0, 0, 1, 1, 41);
  auto t = uniform_times(60, 0, 10, 42);
  PointPattern p(w, pts, t);
  auto tl = make_interval(0, 10);
  const double h = 0.06, lam = 0.9;
  auto st = kde_st(p, h, lam, tl);
  for (std::size_t s = 0; s < tl.t_grid.size(); ++s) {
    std::vector<double> wt(60);
    double wl = temporal_edge_weight(tl.t_grid[s], lam, tl);
    for (int k = 0; k < 60; ++k) wt[k] = std::exp(-0.5 * std::pow((tl.t_grid[s] - t[k]) / lam, 2)) /
                                         (lam * std::sqrt(2 * std::numbers::pi) * wl);
    auto d = kde_fixed_weighted(*w, pts, wt, 60.0, h, EdgeCorrection::uniform);
    EXPECT_LT(oracle::peak_rel_error(st.slices[s].values, d.z.values), 1e-12);
  }
}

TEST(KdeST, TimeTranslationEquivariance) {
  auto w = square(0, 1, 32);
  auto pts = oracle::uniform_points(40, 0, 0, 1, 1, 51);
  auto t = uniform_times(40, 0, 12, 52);
  auto t2 = t;
  for (double& x : t2) x += 7.0;
  auto a = kde_st(PointPattern(w, pts, t), 0.08, 1.0, make_interval(0, 12));
  auto b = kde_st(PointPattern(w, pts, t2), 0.08, 1.0, make_interval(7, 19));
  ASSERT_EQ(a.slices.size(), b.slices.size());
  for (std::size_t s = 0; s < a.slices.size(); ++s)
    EXPECT_LT(oracle::peak_rel_error(b.slices[s].values, a.slices[s].values), 1e-12);
}

TEST(KdeST, Rejections) {
  auto w = square(0, 1, 16);
  PointPattern nt(w, {{0.5, 0.5}});
  EXPECT_THROW(kde_st(nt, 0.1, 1.0, make_interval(0, 10)), ValidationError);
  PointPattern out(w, {{0.5, 0.5}}, {20.0});
  EXPECT_THROW(kde_st(out, 0.1, 1.0, make_interval(0, 10)), ValidationError);
  PointPattern ok(w, {{0.5, 0.5}}, {5.0});
  EXPECT_THROW(kde_st(ok, 0.1, 1.0, make_interval(0, 10), EdgeCorrection::diggle), ValidationError);
}

TEST(ConditionOnTime, SlicesIntegrateToOne) {
  auto w = square(0, 1, 64);
  auto pts = oracle::uniform_points(200, 0, 0, 1, 1, 61);
  auto t = uniform_times(200, 0, 20, 62);
  auto tl = make_interval(0, 20);
  auto st = kde_st(PointPattern(w, pts, t), 0.08, 1.5, tl);
  auto c = condition_on_time(st);
  EXPECT_EQ(c.normalization, STNormalization::conditional);
  for (const auto& s : c.slices) EXPECT_NEAR(integral(s, *w), 1.0, 0.02);
  EXPECT_THROW(condition_on_time(c), ValidationError);
}

TEST(ConditionOnTime, ReconstructsJoint) {
  auto w = square(0, 1, 32);
  auto pts = oracle::uniform_points(50, 0, 0, 1, 1, 71);
  auto t = uniform_times(50, 0, 10, 72);
  auto tl = make_interval(0, 10);
  auto st = kde_st(PointPattern(w, pts, t), 0.1, 1.0, tl);
  auto c = condition_on_time(st);
  for (std::size_t s = 0; s < st.slices.size(); ++s)
    for (std::size_t k = 0; k < st.slices[s].values.size(); ++k) {
      double j = st.slices[s].values[k];
      if (!std::isfinite(j)) continue;
      // One rounding in the division, one in the product.
      EXPECT_LE(std::abs(c.slices[s].values[k] * c.margin.f[s] - j), 2.3e-16 * std::abs(j));
    }
}

TEST(ConditionOnTime, UniformTimesScaleByLength) {
  auto w = square(0, 1, 32);
  auto pts = oracle::uniform_points(400, 0, 0, 1, 1, 81);
  std::vector<double> t(400);
  for (int k = 0; k < 400; ++k) t[k] = 40.0 * (k + 0.5) / 400;
  auto tl = make_interval(0, 40);
  auto st = kde_st(PointPattern(w, pts, t), 0.1, 2.0, tl);
  auto c = condition_on_time(st);
  for (std::size_t s = 0; s < st.slices.size(); ++s)
    EXPECT_LT(oracle::peak_rel_error(c.slices[s].values, [&] {
                auto v = st.slices[s].values;
                for (double& x : v) x *= 40.0;
                return v;
              }()),
              0.01);
}

TEST(ConditionOnTime, NaNWhereMarginVanishes) {
  auto w = square(0, 1, 16);
  auto tl = make_interval(0, 200);
  auto st = kde_st(PointPattern(w, {{0.5, 0.5}}, {1.0}), 0.1, 0.5, tl);
  auto c = condition_on_time(st);
  EXPECT_FALSE(c.warnings.empty());
  EXPECT_TRUE(std::isnan(c.slices[150].values[w->grid.index(8, 8)]));
  EXPECT_TRUE(std::isfinite(c.slices[1].values[w->grid.index(8, 8)]));
}
