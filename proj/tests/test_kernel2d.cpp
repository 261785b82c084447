#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "sprisk/errors.hpp"
#include "sprisk/kernel2d.hpp"

using namespace sprisk;

namespace {

WindowPtr unit_window(int n) { return std::make_shared<const WindowMask>(build_window(0, 0, 1, 1, n, n)); }

}  // namespace

TEST(NormalCdf, Values) {
  EXPECT_EQ(normal_cdf(0.0), 0.5);
  EXPECT_EQ(normal_sf(0.0), 0.5);
  EXPECT_NEAR(normal_cdf(1.959963984540054), 0.975, 1e-15);
  EXPECT_NEAR(normal_sf(8.0), 6.22096057427178e-16, 1e-28);
}

TEST(KdeFixed, SinglePointPeak) {
  auto w = std::make_shared<const WindowMask>(build_window(-50.5, -50.5, 50.5, 50.5, 101, 101));
  PointPattern p(w, {{0.0, 0.0}});
  DensitySurface d = kde_fixed(p, 1.0, EdgeCorrection::uniform);
  EXPECT_NEAR(d.z.at(50, 50), 1.0 / (2 * std::numbers::pi), 1e-4);
}

TEST(KdeFixed, MatchesDirectOracle) {
  auto w = unit_window(64);
  auto pts = oracle::uniform_points(50, 0, 0, 1, 1, 11);
  PointPattern p(w, pts);
  for (double h : {0.004, 0.02, 0.05, 0.12, 0.4}) {
    DensitySurface d = kde_fixed(p, h, EdgeCorrection::none);
    auto ref = oracle::direct_sum(w->grid, pts, {}, h);
    for (double& v : ref) v /= 50.0;
    EXPECT_LT(oracle::peak_rel_error(d.field.inner(), ref), 1e-9) << "h=" << h;
    // Pointwise wherever the reference is not deep in the tails.
    double pk = oracle::max_abs(ref), worst = 0;
    for (std::size_t k = 0; k < ref.size(); ++k)
      if (ref[k] > 1e-6 * pk) worst = std::max(worst, std::abs(d.field.inner()[k] / ref[k] - 1));
    EXPECT_LT(worst, 1e-6) << "h=" << h;
  }
}

TEST(KdeFixed, UniformCorrectionMatchesOracleAndIsFast) {
  auto w = unit_window(64);
  auto pts = oracle::uniform_points(50, 0, 0, 1, 1, 3);
  PointPattern p(w, pts);
  const double h = 0.08;
  auto t0 = std::chrono::steady_clock::now();
  DensitySurface d = kde_fixed(p, h, EdgeCorrection::uniform);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 1.0);
  auto raw = oracle::direct_sum(w->grid, pts, {}, h);
  double worst = 0;
  for (int j = 0; j < 64; j += 7)
    for (int i = 0; i < 64; i += 5) {
      std::size_t k = w->grid.index(i, j);
      double q = oracle::edge_factor(*w, {w->grid.xc(i), w->grid.yc(j)}, h, 6);
      double ref = raw[k] / 50.0 / q;
      worst = std::max(worst, std::abs(d.z.values[k] / ref - 1));
    }
  // The oracle's midpoint quadrature carries its own ~1e-5 error.
  EXPECT_LT(worst, 1e-4);
}

TEST(KdeFixed, NoneEqualsUniformWhereQIsOne) {
  auto w = unit_window(64);
  PointPattern p(w, oracle::uniform_points(50, 0, 0, 1, 1, 5));
  const double h = 0.04;
  DensitySurface a = kde_fixed(p, h, EdgeCorrection::none);
  DensitySurface b = kde_fixed(p, h, EdgeCorrection::uniform);
  std::size_t k = w->grid.index(32, 32);
  EXPECT_NEAR(b.q.values[k], 1.0, 1e-4);
  EXPECT_NEAR(a.z.values[k], b.z.values[k], 1e-4);
}

TEST(KdeFixed, DiggleEqualsUniformWhenQIsOne) {
  auto w = std::make_shared<const WindowMask>(build_window(0, 0, 10, 10, 64, 64));
  auto pts = oracle::uniform_points(40, 4, 4, 6, 6, 8);
  PointPattern p(w, pts);
  DensitySurface a = kde_fixed(p, 0.3, EdgeCorrection::diggle);
  DensitySurface b = kde_fixed(p, 0.3, EdgeCorrection::uniform);
  for (int j = 20; j < 44; ++j)
    for (int i = 20; i < 44; ++i) {
      std::size_t k = w->grid.index(i, j);
      EXPECT_NEAR(a.z.values[k], b.z.values[k], 1e-12 * oracle::max_abs(b.field.inner()));
    }
}

TEST(KdeFixed, IntegratesToOne) {
  auto w = unit_window(128);
  PointPattern p(w, oracle::uniform_points(200, 0, 0, 1, 1, 21));
  const double diam = std::sqrt(2.0);
  // Point-wise correction leaves each kernel with unit mass inside W.
  for (double h : {diam / 8, diam / 20, diam / 60}) {
    DensitySurface d = kde_fixed(p, h, EdgeCorrection::diggle);
    EXPECT_NEAR(integrate(d.z, *w), 1.0, 1e-3) << h;
  }
  // Away from the edges the uniform and uncorrected forms lose no mass either.
  PointPattern c(w, oracle::uniform_points(200, 0.3, 0.3, 0.7, 0.7, 22));
  EXPECT_NEAR(integrate(kde_fixed(c, 0.03, EdgeCorrection::uniform).z, *w), 1.0, 1e-3);
  EXPECT_NEAR(integrate(kde_fixed(c, 0.03, EdgeCorrection::none).z, *w), 1.0, 1e-3);
}

TEST(KdeFixed, GridAlignedTranslation) {
  auto w1 = std::make_shared<const WindowMask>(build_window(0, 0, 1, 1, 32, 32));
  auto w2 = std::make_shared<const WindowMask>(build_window(2, -3, 3, -2, 32, 32));
  auto pts = oracle::uniform_points(30, 0, 0, 1, 1, 2);
  std::vector<Point> moved;
  for (auto p : pts) moved.push_back({p.x + 2, p.y - 3});
  DensitySurface a = kde_fixed(PointPattern(w1, pts), 0.07, EdgeCorrection::uniform);
  DensitySurface b = kde_fixed(PointPattern(w2, moved), 0.07, EdgeCorrection::uniform);
  EXPECT_LT(oracle::peak_rel_error(b.field.inner(), a.field.inner()), 1e-12);
}

TEST(KdeFixed, LinearBinningIsClose) {
  auto w = unit_window(64);
  PointPattern p(w, oracle::uniform_points(100, 0, 0, 1, 1, 9));
  DensitySurface a = kde_fixed(p, 0.06, EdgeCorrection::uniform, Binning::exact);
  DensitySurface b = kde_fixed(p, 0.06, EdgeCorrection::uniform, Binning::linear);
  EXPECT_LT(oracle::peak_rel_error(b.field.inner(), a.field.inner()), 0.05);
}

TEST(KdeFixed, Rejections) {
  auto w = unit_window(16);
  PointPattern p(w, {{0.5, 0.5}});
  EXPECT_THROW(kde_fixed(p, 0.0, EdgeCorrection::uniform), ValidationError);
  EXPECT_THROW(kde_fixed(p, -1.0, EdgeCorrection::uniform), ValidationError);
  EXPECT_THROW(kde_fixed(p, 100.0, EdgeCorrection::uniform), ValidationError);
}

TEST(EdgeFactor, InteriorEdgeCorner) {
  auto w = std::make_shared<const WindowMask>(build_window(0, 0, 20, 20, 160, 160));
  const double h = 1.0;
  Field q = edge_factor_field(*w, h);
  EXPECT_NEAR(q.at({10, 10}), 1.0, 1e-4);
  EXPECT_NEAR(q.at({10, 0}), 0.5, 1e-3);
  EXPECT_NEAR(q.at({0, 10}), 0.5, 1e-3);
  EXPECT_NEAR(q.at({0, 0}), 0.25, 1e-3);
  EXPECT_NEAR(q.at({20, 20}), 0.25, 1e-3);
  // Pixel values against the brute-force quadrature.
  std::vector<double> qi = q.inner();
  for (int i : {0, 3, 10, 80})
    EXPECT_NEAR(qi[w->grid.index(i, 80)], oracle::edge_factor(*w, {w->grid.xc(i), w->grid.yc(80)}, h, 12), 2e-6);
}

TEST(EdgeFactor, ClampedAndBounded) {
  auto w = unit_window(32);
  Surface q = edge_correction_surface(0.2, *w);
  for (double v : q.values) {
    EXPECT_GT(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(SecondDeriv, SinglePointValue) {
  auto w = std::make_shared<const WindowMask>(build_window(-10.05, -10.05, 10.05, 10.05, 201, 201));
  PointPattern p(w, {{0.0, 0.0}});
  for (double psi : {0.5, 1.0, 2.0}) {
    Surface s = kde_second_deriv_sum(p, psi);
    double v = s.at(100, 100);
    EXPECT_NEAR(v, -1.0 / std::numbers::pi * std::pow(psi, -4), 1e-3 * std::pow(psi, -4));
  }
}

TEST(SecondDeriv, MatchesFiniteDifferenceOfKde) {
  auto w = std::make_shared<const WindowMask>(build_window(0, 0, 4, 4, 128, 128));
  PointPattern p(w, oracle::normal_points(80, 2, 2, 0.6, 0, 0, 4, 4, 4));
  const double psi = 0.25;  // grid spacing psi / 8
  Surface lap = kde_second_deriv_sum(p, psi);
  DensitySurface f = kde_fixed(p, psi, EdgeCorrection::none);
  const Grid& g = w->grid;
  double worst = 0, peak = 0;
  for (int j = 1; j + 1 < g.ny; ++j)
    for (int i = 1; i + 1 < g.nx; ++i) {
      auto F = [&](int a, int b) { return f.z.values[g.index(a, b)]; };
      double fd = (F(i + 1, j) - 2 * F(i, j) + F(i - 1, j)) / (g.dx * g.dx) +
                  (F(i, j + 1) - 2 * F(i, j) + F(i, j - 1)) / (g.dy * g.dy);
      worst = std::max(worst, std::abs(fd - lap.at(i, j)));
      peak = std::max(peak, std::abs(lap.at(i, j)));
    }
  EXPECT_LT(worst, 0.01 * peak);
}

TEST(SecondDeriv, RotationSymmetry) {
  auto w = std::make_shared<const WindowMask>(build_window(-1, -1, 1, 1, 64, 64));
  std::vector<Point> pts;
  for (auto [x, y] : std::vector<std::pair<double, double>>{{0.3, 0.1}, {0.05, 0.4}, {0.2, 0.2}})
    for (int r = 0; r < 4; ++r) {
      pts.push_back({x, y});
      double t = x;
      x = -y;
      y = t;
    }
  Surface s = kde_second_deriv_sum(PointPattern(w, pts), 0.2);
  double pk = 0, worst = 0;
  for (int j = 0; j < 64; ++j)
    for (int i = 0; i < 64; ++i) {
      pk = std::max(pk, std::abs(s.at(i, j)));
      worst = std::max(worst, std::abs(s.at(i, j) - s.at(63 - j, i)));
    }
  EXPECT_LT(worst, 1e-10 * pk);
}

TEST(Rh, InteriorEdgeAndScale) {
  auto w = std::make_shared<const WindowMask>(build_window(0, 0, 30, 30, 240, 240));
  RhParts r = rh_parts(1.0, *w);
  EXPECT_NEAR(r.at({15, 15}), 1.0 / (4 * std::numbers::pi), 1e-4);
  EXPECT_NEAR(r.at({15, 0}), 1.0 / (2 * std::numbers::pi), 1e-3);
  // Dimensionless form: deep-interior value does not move with h.
  RhParts r2 = rh_parts(2.0, *w);
  EXPECT_NEAR(r2.at({15, 15}) / r.at({15, 15}), 1.0, 1e-6);
  Surface s = rh_surface(1.0, *w);
  EXPECT_NEAR(s.at(120, 120), 1.0 / (4 * std::numbers::pi), 1e-4);
}

TEST(WindowIntegrals, FullPlaneClosedForms) {
  auto w = std::make_shared<const WindowMask>(build_window(0, 0, 20, 20, 200, 200));
  std::vector<double> k2 = window_convolution(*w, 1.0, WindowKernel::gauss_sq).inner();
  std::vector<double> m2 = window_convolution(*w, 1.0, WindowKernel::m_sq).inner();
  std::size_t c = w->grid.index(100, 100);
  EXPECT_NEAR(k2[c], 1.0 / (4 * std::numbers::pi), 1e-10);
  EXPECT_NEAR(m2[c], 1.0 / (2 * std::numbers::pi), 1e-10);
  // Independent midpoint quadrature of (2 - r^2)^2 K^2 over the plane.
  double s = 0.0, d = 0.01;
  for (double x = -8 + d / 2; x < 8; x += d)
    for (double y = -8 + d / 2; y < 8; y += d) {
      double r2 = x * x + y * y;
      double k = std::exp(-0.5 * r2) / (2 * std::numbers::pi);
      s += (2 - r2) * (2 - r2) * k * k * d * d;
    }
  EXPECT_NEAR(m2[c], s, 1e-4);
}
