#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "oracles.hpp"
#include "sprisk/adaptive.hpp"
#include "sprisk/errors.hpp"

using namespace sprisk;

namespace {

WindowPtr unit_window(int n) { return std::make_shared<const WindowMask>(build_window(0, 0, 1, 1, n, n)); }

// Pilot whose halo-grid values are f(x, y) at the node centres.
template <class F>
PilotPtr surface_pilot(const WindowMask& w, F f) {
  DensitySurface d;
  d.h = 1.0;
  Grid hg = halo_grid(w.grid);
  d.field = Field{hg, std::vector<double>(hg.size())};
  for (int j = 0; j < hg.ny; ++j)
    for (int i = 0; i < hg.nx; ++i) d.field.v[hg.index(i, j)] = f(hg.xc(i), hg.yc(j));
  d.q_field = Field{hg, std::vector<double>(hg.size(), 1.0)};
  d.z = masked_surface(w, d.field.inner());
  d.q = masked_surface(w, d.q_field.inner());
  return std::make_shared<const DensitySurface>(std::move(d));
}

}  // namespace

TEST(Abramson, UniformPilotGivesGlobalBandwidth) {
  auto w = unit_window(32);
  PointPattern p(w, oracle::uniform_points(40, 0, 0, 1, 1, 1));
  auto bw = abramson_bandwidths(p, 0.07, surface_pilot(*w, [](double, double) { return 3.3; }));
  for (double h : bw.per_point) EXPECT_EQ(h, 0.07);
  EXPECT_EQ(bw.clipped, 0u);
}

TEST(Abramson, ClippingBound) {
  auto w = unit_window(32);
  // Pixel centres at 1/64 + k/32; the low-density corner is far below the rest.
  auto pilot = surface_pilot(*w, [](double x, double y) { return x < 0.25 && y < 0.25 ? 1e-8 : 1.0; });
  std::vector<Point> pts{{0.1, 0.1}};
  for (int k = 0; k < 20; ++k) pts.push_back({0.5 + 0.02 * k, 0.7});
  PointPattern p(w, pts);
  auto bw = abramson_bandwidths(p, 0.1, pilot, 5.0);
  EXPECT_NEAR(bw.per_point[0], 0.1 * 5.0, 1e-12);
  EXPECT_EQ(bw.clipped, 1u);
}

TEST(Abramson, TwoPointHandValues) {
  auto w = unit_window(32);
  const double pv = 0.7;
  auto pilot = surface_pilot(*w, [&](double x, double) { return x < 0.5 ? pv : 4 * pv; });
  PointPattern p(w, {{0.2, 0.5}, {0.8, 0.5}});
  auto bw = abramson_bandwidths(p, 1.0, pilot, 100.0);
  EXPECT_NEAR(bw.per_point[0] / bw.per_point[1], 2.0, 1e-14);
  EXPECT_NEAR(bw.per_point[0], std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(bw.per_point[1], 1.0 / std::sqrt(2.0), 1e-14);
}

TEST(Abramson, AntitoneAndScaleEquivariant) {
  auto w = unit_window(64);
  PointPattern p(w, oracle::clustered_points(60, 4));
  PilotPtr pilot = make_pilot(p, 0.08);
  auto bw = abramson_bandwidths(p, 0.05, pilot, 1e6);
  for (std::size_t i = 0; i < p.n(); ++i)
    for (std::size_t j = 0; j < p.n(); ++j)
      if (pilot->at(p.coords()[i]) > pilot->at(p.coords()[j])) EXPECT_LT(bw.per_point[i], bw.per_point[j]);
  DensitySurface scaled = *pilot;
  for (double& v : scaled.field.v) v *= 17.0;
  for (double& v : scaled.z.values) v *= 17.0;
  auto bw2 = abramson_bandwidths(p, 0.05, std::make_shared<const DensitySurface>(scaled), 1e6);
  for (std::size_t i = 0; i < p.n(); ++i) EXPECT_NEAR(bw2.per_point[i] / bw.per_point[i], 1.0, 1e-12);
}

TEST(Abramson, GammaOverrideOnlyDivides) {
  auto w = unit_window(32);
  PointPattern p(w, oracle::clustered_points(30, 8));
  PilotPtr pilot = make_pilot(p, 0.1);
  auto a = abramson_bandwidths(p, 0.05, pilot);
  auto b = abramson_bandwidths(p, 0.05, pilot, 5.0, 2.0 * a.gamma);
  for (std::size_t i = 0; i < p.n(); ++i) EXPECT_NEAR(b.per_point[i], 0.5 * a.per_point[i], 1e-14);
  EXPECT_EQ(a.clipped, b.clipped);
}

TEST(Ladder, MatchesEdgeFactorOnAndBetweenRungs) {
  auto w = unit_window(64);
  BandwidthLadder lad(*w, WindowKernel::gauss, 0.02, 0.2, 20);
  Field q1 = edge_factor_field(*w, 0.02);
  Field q2 = edge_factor_field(*w, 0.2);
  EXPECT_NEAR(lad.at(std::size_t{70}, 0.02), q1.v[70], 1e-14);
  EXPECT_NEAR(lad.at(std::size_t{70}, 0.2), q2.v[70], 1e-14);
  // Between rungs the linear-in-log-h error stays small.
  double h = 0.02 * std::exp(0.5 * std::log(10.0) / 19);
  Field qm = edge_factor_field(*w, h);
  double worst = 0;
  for (std::size_t k = 0; k < qm.v.size(); ++k) worst = std::max(worst, std::abs(lad.at(k, h) - qm.v[k]));
  EXPECT_LT(worst, 2e-3);
}

TEST(AdaptiveDirect, UniformPilotEqualsFixed) {
  auto w = unit_window(64);
  PointPattern p(w, oracle::clustered_points(80, 2));
  auto bw = abramson_bandwidths(p, 0.06, surface_pilot(*w, [](double, double) { return 1.0; }));
  for (EdgeCorrection c : {EdgeCorrection::none, EdgeCorrection::uniform, EdgeCorrection::diggle}) {
    DensitySurface a = kde_adaptive_direct(p, bw, c);
    DensitySurface f = kde_fixed(p, 0.06, c);
    double worst = 0;
    for (std::size_t k = 0; k < a.field.v.size(); ++k)
      if (f.field.v[k] > 0) worst = std::max(worst, std::abs(a.field.v[k] / f.field.v[k] - 1));
    EXPECT_LT(worst, 1e-10);
  }
}

TEST(AdaptiveDirect, MatchesOracle) {
  auto w = unit_window(48);
  auto pts = oracle::clustered_points(40, 5);
  PointPattern p(w, pts);
  auto bw = abramson_bandwidths(p, 0.05, make_pilot(p, 0.1));
  DensitySurface d = kde_adaptive_direct(p, bw, EdgeCorrection::none);
  Grid hg = halo_grid(w->grid);
  auto ref = oracle::adaptive_sum(hg, pts, bw.per_point);
  for (double& v : ref) v /= 40.0;
  double worst = 0;
  for (std::size_t k = 0; k < ref.size(); ++k)
    if (ref[k] > 1e-6 * oracle::max_abs(ref)) worst = std::max(worst, std::abs(d.field.v[k] / ref[k] - 1));
  EXPECT_LT(worst, 1e-12);

  // Uniform correction divides by q at the pixel's own bandwidth.
  DensitySurface u = kde_adaptive_direct(p, bw, EdgeCorrection::uniform);
  for (int j : {0, 5, 24, 47})
    for (int i : {0, 11, 30, 47}) {
      Point y{w->grid.xc(i), w->grid.yc(j)};
      double q = oracle::edge_factor(*w, y, bw.at(y), 6);
      EXPECT_NEAR(u.z.at(i, j), d.z.at(i, j) / q, 2e-3 * d.z.at(i, j) / q) << i << "," << j;
    }

  // Diggle correction weights each kernel by 1/q at its own bandwidth.
  DensitySurface g = kde_adaptive_direct(p, bw, EdgeCorrection::diggle);
  std::vector<double> wt(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) wt[k] = 1.0 / oracle::edge_factor(*w, pts[k], bw.per_point[k], 6);
  auto refd = oracle::adaptive_sum(hg, pts, bw.per_point, wt);
  for (double& v : refd) v /= 40.0;
  EXPECT_LT(oracle::peak_rel_error(g.field.v, refd), 2e-3);
}

TEST(AdaptiveDirect, IntegratesToOne) {
  auto w = unit_window(128);
  PointPattern p(w, oracle::normal_points(200, 0.5, 0.5, 0.15, 0, 0, 1, 1, 6));
  // Oversmoothing bandwidth 0.15 (625 / (384 n))^(1/6) for the generating sd.
  const double hos = 0.15 * std::pow(625.0 / (384.0 * 200), 1.0 / 6);
  auto bw = abramson_bandwidths(p, hos, make_pilot(p, hos));
  DensitySurface g = kde_adaptive_direct(p, bw, EdgeCorrection::diggle);
  EXPECT_NEAR(integrate(g.z, *w), 1.0, 0.02);
  // Pixel-wise correction uses the pixel's own (often much larger) bandwidth,
  // so it restores at least the lost mass but can overshoot near the edges.
  double none = integrate(kde_adaptive_direct(p, bw, EdgeCorrection::none).z, *w);
  double uni = integrate(kde_adaptive_direct(p, bw, EdgeCorrection::uniform).z, *w);
  EXPECT_LT(none, 1.0);
  EXPECT_GT(uni, 1.0);
  // Tightening the clip pulls it back towards 1.
  auto tight = abramson_bandwidths(p, hos, bw.pilot, 1.0);
  EXPECT_NEAR(integrate(kde_adaptive_direct(p, tight, EdgeCorrection::uniform).z, *w), 1.0, 0.01);
}

TEST(Partition, Properties) {
  std::vector<double> hs{1, 1, 1, 1, 2, 2, 3, 3, 3, 3, 3, 7};
  BandwidthBins b = partition_bandwidths(hs, 0.25);
  ASSERT_EQ(b.midpoint.size(), 4u);
  std::size_t total = 0;
  for (auto c : b.count) total += c;
  EXPECT_EQ(total, hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) {
    EXPECT_GE(b.bin[i], 0);
    EXPECT_LT(b.bin[i], 4);
  }
  EXPECT_EQ(b.bin[0], 0);
  EXPECT_EQ(b.bin[11], 3);
  EXPECT_THROW(partition_bandwidths(hs, 0.03), ValidationError);
  EXPECT_THROW(partition_bandwidths(hs, 1.0), ValidationError);
  BandwidthBins one = partition_bandwidths(std::vector<double>(9, 0.3), 0.1);
  EXPECT_EQ(one.count[0], 9u);
  EXPECT_EQ(one.midpoint[0], 0.3);
}

TEST(AdaptivePartitioned, DegenerateEqualsDirect) {
  auto w = unit_window(64);
  PointPattern p(w, oracle::clustered_points(70, 9));
  auto bw = abramson_bandwidths(p, 0.05, surface_pilot(*w, [](double, double) { return 2.0; }));
  DensitySurface a = kde_adaptive_partitioned(p, bw, 0.025);
  DensitySurface d = kde_adaptive_direct(p, bw, EdgeCorrection::uniform);
  EXPECT_LT(oracle::peak_rel_error(a.field.v, d.field.v), 1e-12);
}

TEST(AdaptivePartitioned, CloseToDirectAndRefines) {
  auto w = unit_window(96);
  PointPattern p(w, oracle::clustered_points(500, 12));
  auto bw = abramson_bandwidths(p, 0.05, make_pilot(p, 0.06));
  DensitySurface d = kde_adaptive_direct(p, bw, EdgeCorrection::uniform);
  double e40 = oracle::peak_rel_error(kde_adaptive_partitioned(p, bw, 0.025).z.values, d.z.values);
  double e10 = oracle::peak_rel_error(kde_adaptive_partitioned(p, bw, 0.1).z.values, d.z.values);
  EXPECT_LT(e40, 0.02);
  EXPECT_LT(e40, e10);
  // Refinement towards per-point bins. Without correction both sides are the
  // same kernel sum, so only the bin midpoints separate them.
  DensitySurface r = kde_adaptive_direct(p, bw, EdgeCorrection::none);
  auto part = [&](double delta) {
    return oracle::peak_rel_error(kde_adaptive_partitioned(p, bw, delta, EdgeCorrection::none).z.values, r.z.values);
  };
  double n40 = part(0.025), nn = part(1.0 / 500);
  EXPECT_LT(nn, 0.25 * n40);
}

TEST(Multiscale, RangeSnappingAndErrors) {
  auto w = std::make_shared<const WindowMask>(build_window(0, 0, 40, 40, 48, 48));
  auto pts = oracle::clustered_points(60, 3);
  for (auto& q : pts) q = {40 * q.x, 40 * q.y};
  PointPattern p(w, pts);
  MultiscaleStack st = multiscale_build(p, 4.0, 3.0);
  EXPECT_EQ(st.lo * st.h0, 1.0);
  EXPECT_EQ(st.hi * st.h0, 6.0);
  EXPECT_GE(st.h_min(), 1.0 - 1e-12);
  EXPECT_LE(st.h_max(), 6.0 + 1e-12);
  EXPECT_LT(st.h_min(), 1.0 * std::exp(st.step));
  EXPECT_GT(st.h_max(), 6.0 * std::exp(-st.step));
  try {
    multiscale_slice(st, 7.0);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("available range"), std::string::npos);
  }
  // Exactly on a plane: that plane verbatim.
  DensitySurface s = multiscale_slice(st, st.planes[3].h);
  EXPECT_EQ(s.field.v, st.planes[3].field.v);
  // Deterministic.
  MultiscaleStack st2 = multiscale_build(p, 4.0, 3.0);
  ASSERT_EQ(st.planes.size(), st2.planes.size());
  for (std::size_t k = 0; k < st.planes.size(); ++k) EXPECT_EQ(st.planes[k].field.v, st2.planes[k].field.v);
  EXPECT_EQ(st.fingerprint, st2.fingerprint);
}

TEST(Multiscale, DegenerateEqualsLinearFixed) {
  auto w = unit_window(64);
  PointPattern p(w, oracle::clustered_points(80, 7));
  auto bw = abramson_bandwidths(p, 0.06, surface_pilot(*w, [](double, double) { return 1.0; }));
  MultiscaleStack st = multiscale_build(p, bw);
  DensitySurface s = multiscale_slice(st, 0.06);
  DensitySurface f = kde_fixed(p, 0.06, EdgeCorrection::uniform, Binning::linear);
  EXPECT_LT(oracle::peak_rel_error(s.field.v, f.field.v), 1e-6);
  // Away from the nominal plane each slice matches a fixed estimate too.
  DensitySurface s2 = multiscale_slice(st, st.planes.front().h);
  DensitySurface f2 = kde_fixed(p, st.planes.front().h, EdgeCorrection::uniform, Binning::linear);
  EXPECT_LT(oracle::peak_rel_error(s2.field.v, f2.field.v), 1e-6);
}

TEST(Multiscale, NominalSliceMatchesDirectAndIsFast) {
  auto w = unit_window(128);
  PointPattern p(w, oracle::clustered_points(300, 21));
  auto bw = abramson_bandwidths(p, 0.07, make_pilot(p, 0.07));
  MultiscaleStack st = multiscale_build(p, bw);
  auto t0 = std::chrono::steady_clock::now();
  DensitySurface s = multiscale_slice(st, 0.07);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 0.01);
  DensitySurface d = kde_adaptive_direct(p, bw, EdgeCorrection::uniform);
  EXPECT_LT(oracle::peak_rel_error(s.z.values, d.z.values), 0.01);
  // An interpolated slice stays close to the direct estimate at that h0.
  const double h = 0.05;
  DensitySurface si = multiscale_slice(st, h);
  auto bwh = abramson_bandwidths(p, h, bw.pilot);
  EXPECT_LT(oracle::peak_rel_error(si.z.values, kde_adaptive_direct(p, bwh, EdgeCorrection::uniform).z.values), 0.03);
}
