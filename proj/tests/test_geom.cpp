#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "sprisk/errors.hpp"
#include "sprisk/geom.hpp"

using namespace sprisk;

TEST(BuildWindow, UnitSquareAllMasked) {
  WindowMask w = build_window(0, 0, 1, 1, 8, 8);
  EXPECT_EQ(w.count(), 64u);
  EXPECT_DOUBLE_EQ(w.pixel_area, 1.0 / 64);
  EXPECT_DOUBLE_EQ(w.grid.x0, 0.0);
  EXPECT_DOUBLE_EQ(w.grid.x1(), 1.0);
}

TEST(BuildWindow, LShapeFraction) {
  Polygon L{{Ring{{0, 0}, {1, 0}, {1, 0.5}, {0.5, 0.5}, {0.5, 1}, {0, 1}}}};
  WindowMask w = build_window(L, 64, 64);
  double frac = static_cast<double>(w.count()) / w.grid.size();
  EXPECT_NEAR(frac, 0.75, 1.0 / 64);
}

TEST(BuildWindow, Rejections) {
  Polygon flat{{Ring{{0, 0}, {1, 0}, {2, 0}}}};
  EXPECT_THROW(build_window(flat, 16, 16), ValidationError);
  EXPECT_THROW(build_window(0, 0, 1, 1, 4, 16), ValidationError);
  Polygon bowtie{{Ring{{0, 0}, {1, 1}, {1, 0}, {0, 1}}}};
  EXPECT_THROW(build_window(bowtie, 16, 16), ValidationError);
}

TEST(BuildWindow, HoleIsExcluded) {
  Polygon p{{Ring{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, Ring{{0.25, 0.25}, {0.75, 0.25}, {0.75, 0.75}, {0.25, 0.75}}}};
  WindowMask w = build_window(p, 64, 64);
  EXPECT_NEAR(static_cast<double>(w.count()) / w.grid.size(), 0.75, 1.0 / 64);
  EXPECT_FALSE(w.contains({0.5, 0.5}));
  EXPECT_TRUE(w.contains({0.1, 0.5}));
}

TEST(Integrate, Constants) {
  WindowMask w = build_window(0, 0, 1, 1, 16, 16);
  EXPECT_EQ(integrate(constant_surface(w, 1.0), w), 1.0);
  Polygon half{{Ring{{0, 0}, {1, 0}, {1, 0.5}, {0, 0.5}}}};
  WindowMask wh = build_window(Polygon{{Ring{{0, 0}, {1, 0}, {1, 1}, {0, 1}}}}, 16, 16);
  WindowMask hm = wh;
  for (int j = 0; j < 16; ++j)
    for (int i = 0; i < 16; ++i) hm.mask[hm.grid.index(i, j)] = j < 8;
  EXPECT_NEAR(integrate(constant_surface(hm, 2.0), hm), 1.0, 1e-12);
  double c = 3.7;
  EXPECT_EQ(integrate(constant_surface(hm, c), hm), [&] {
    double s = 0;
    for (std::size_t k = 0; k < hm.count(); ++k) s += c;
    return s * hm.pixel_area;
  }());
}

TEST(Integrate, NanInsidePropagatesAndGridMismatchThrows) {
  WindowMask w = build_window(0, 0, 1, 1, 8, 8);
  Surface s = constant_surface(w, 1.0);
  s.values[5] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_TRUE(std::isnan(integrate(s, w)));
  WindowMask w2 = build_window(0, 0, 1, 1, 9, 8);
  EXPECT_THROW(integrate(constant_surface(w2, 1.0), w), ValidationError);
}

TEST(Erode, IdentityMonotoneAndSquare) {
  WindowMask w = build_window(0, 0, 1, 1, 200, 200);
  WindowMask e0 = erode_window(w, 0.0);
  EXPECT_EQ(e0.mask, w.mask);
  WindowMask e = erode_window(w, 0.25);
  double area = e.count() * e.pixel_area;
  EXPECT_NEAR(area, 0.25, 2 * 4 * 0.5 * w.grid.dx);
  WindowMask e2 = erode_window(w, 0.3);
  for (std::size_t k = 0; k < e2.mask.size(); ++k)
    if (e2.mask[k]) EXPECT_TRUE(e.mask[k]);
  EXPECT_THROW(erode_window(w, 0.8), ValidationError);
}

TEST(Erode, RespectsHoles) {
  Polygon p{{Ring{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, Ring{{0.4, 0.4}, {0.6, 0.4}, {0.6, 0.6}, {0.4, 0.6}}}};
  WindowMask w = build_window(p, 100, 100);
  WindowMask e = erode_window(w, 0.05);
  // Pixel centre at (0.355, 0.505) is 0.045 from the hole edge.
  EXPECT_FALSE(e.inside(35, 50));
  EXPECT_TRUE(e.inside(30, 50));
}

namespace {

Surface cone(const WindowMask& w, double cx, double cy) {
  std::vector<double> v(w.grid.size());
  for (int j = 0; j < w.grid.ny; ++j)
    for (int i = 0; i < w.grid.nx; ++i) v[w.grid.index(i, j)] = 1.0 - std::hypot(w.grid.xc(i) - cx, w.grid.yc(j) - cy);
  return masked_surface(w, v);
}

}  // namespace

TEST(Contours, ConeGivesCircle) {
  WindowMask w = build_window(0, 0, 2, 2, 64, 64);
  Surface s = cone(w, 1.0, 1.0);
  auto cs = extract_contours(s, {0.5});
  ASSERT_EQ(cs.size(), 1u);
  ASSERT_EQ(cs[0].polylines.size(), 1u);
  EXPECT_TRUE(cs[0].closed[0]);
  for (const Point& p : cs[0].polylines[0]) EXPECT_NEAR(std::hypot(p.x - 1, p.y - 1), 0.5, w.grid.dx);
  EXPECT_TRUE(polyline_encloses(cs[0].polylines[0], {1.0, 1.0}));
}

TEST(Contours, AboveMaxIsEmpty) {
  WindowMask w = build_window(0, 0, 2, 2, 32, 32);
  auto cs = extract_contours(cone(w, 1, 1), {2.0});
  EXPECT_TRUE(cs[0].polylines.empty());
}

TEST(Contours, TwoBumps) {
  WindowMask w = build_window(0, 0, 4, 2, 128, 64);
  std::vector<double> v(w.grid.size());
  for (int j = 0; j < w.grid.ny; ++j)
    for (int i = 0; i < w.grid.nx; ++i) {
      double x = w.grid.xc(i), y = w.grid.yc(j);
      v[w.grid.index(i, j)] = std::exp(-((x - 1) * (x - 1) + (y - 1) * (y - 1)) / 0.1) +
                              std::exp(-((x - 3) * (x - 3) + (y - 1) * (y - 1)) / 0.1);
    }
  auto cs = extract_contours(masked_surface(w, v), {0.5});
  ASSERT_EQ(cs[0].polylines.size(), 2u);
  EXPECT_TRUE(cs[0].closed[0]);
  EXPECT_TRUE(cs[0].closed[1]);
  bool a = polyline_encloses(cs[0].polylines[0], {1, 1}) || polyline_encloses(cs[0].polylines[1], {1, 1});
  bool b = polyline_encloses(cs[0].polylines[0], {3, 1}) || polyline_encloses(cs[0].polylines[1], {3, 1});
  EXPECT_TRUE(a && b);
}

TEST(Contours, SignFlipGivesSameGeometry) {
  WindowMask w = build_window(0, 0, 2, 2, 48, 48);
  std::vector<double> v(w.grid.size());
  for (int j = 0; j < w.grid.ny; ++j)
    for (int i = 0; i < w.grid.nx; ++i) {
      double x = w.grid.xc(i), y = w.grid.yc(j);
      v[w.grid.index(i, j)] = std::sin(3 * x) * std::cos(2 * y) + 0.1 * x;
    }
  Surface s = masked_surface(w, v);
  Surface f = s;
  for (double& x : f.values) x = -x;
  auto a = extract_contours(s, {0.2})[0];
  auto b = extract_contours(f, {-0.2})[0];
  ASSERT_EQ(a.polylines.size(), b.polylines.size());
  std::size_t na = 0, nb = 0;
  for (auto& l : a.polylines) na += l.size();
  for (auto& l : b.polylines) nb += l.size();
  EXPECT_EQ(na, nb);
  // Every vertex of one set appears in the other.
  for (auto& la : a.polylines)
    for (const Point& p : la) {
      bool found = false;
      for (auto& lb : b.polylines)
        for (const Point& q : lb) found |= (p.x == q.x && p.y == q.y);
      EXPECT_TRUE(found);
    }
}

TEST(Contours, OpenLinesEndOnBoundary) {
  WindowMask w = build_window(0, 0, 1, 1, 32, 32);
  std::vector<double> v(w.grid.size());
  for (int j = 0; j < 32; ++j)
    for (int i = 0; i < 32; ++i) v[w.grid.index(i, j)] = w.grid.xc(i);
  auto cs = extract_contours(masked_surface(w, v), {0.5})[0];
  ASSERT_EQ(cs.polylines.size(), 1u);
  EXPECT_FALSE(cs.closed[0]);
  EXPECT_EQ(cs.polylines[0].size(), 32u);
}

TEST(PointPattern, Validation) {
  auto w = std::make_shared<const WindowMask>(build_window(0, 0, 1, 1, 8, 8));
  EXPECT_THROW(PointPattern(w, {}), ValidationError);
  EXPECT_THROW(PointPattern(w, {{0.5, 1.5}}), ValidationError);
  EXPECT_NO_THROW(PointPattern(w, {{1.0, 1.0}, {0.0, 0.3}}));
  EXPECT_THROW(PointPattern(w, {{0.5, 0.5}}, {1.0, 2.0}), ValidationError);
}

TEST(Interval, DefaultIntegerGridAndTres) {
  TemporalInterval a = make_interval(0.5, 10.2);
  ASSERT_EQ(a.t_grid.size(), 10u);
  EXPECT_EQ(a.t_grid.front(), 1.0);
  EXPECT_EQ(a.t_grid.back(), 10.0);
  TemporalInterval b = make_interval(0, 1, 5);
  EXPECT_EQ(b.t_grid.size(), 5u);
  EXPECT_DOUBLE_EQ(b.dt, 0.25);
  EXPECT_THROW(make_interval(1, 1), ValidationError);
}

TEST(Interpolate, ReproducesBilinearFunctions) {
  WindowMask w = build_window(0, 0, 1, 1, 16, 16);
  std::vector<double> v(w.grid.size());
  for (int j = 0; j < 16; ++j)
    for (int i = 0; i < 16; ++i) v[w.grid.index(i, j)] = 2 * w.grid.xc(i) - 3 * w.grid.yc(j) + 1;
  EXPECT_NEAR(interpolate(w.grid, v, {0.41, 0.77}), 2 * 0.41 - 3 * 0.77 + 1, 1e-12);
}
