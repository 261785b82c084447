#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace sprisk {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

using Ring = std::vector<Point>;

// First ring is the outer boundary, any further rings are holes. Membership
// uses the even-odd rule over all rings, so orientation does not matter.
struct Polygon {
  std::vector<Ring> rings;
};

Polygon bbox_polygon(double xmin, double ymin, double xmax, double ymax);
double polygon_area(const Polygon& poly);
bool polygon_contains(const Polygon& poly, Point p);
// True if p lies on (or within tol of) any ring edge.
bool polygon_on_boundary(const Polygon& poly, Point p, double tol);

// Pixel (i, j) covers [x0 + i dx, x0 + (i+1) dx) x [y0 + j dy, y0 + (j+1) dy).
// Storage is row-major with row j = 0 at the bottom (smallest y).
struct Grid {
  int nx = 0;
  int ny = 0;
  double x0 = 0.0;
  double y0 = 0.0;
  double dx = 1.0;
  double dy = 1.0;

  std::size_t size() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i);
  }
  double xc(int i) const { return x0 + (i + 0.5) * dx; }
  double yc(int j) const { return y0 + (j + 0.5) * dy; }
  double x1() const { return x0 + nx * dx; }
  double y1() const { return y0 + ny * dy; }
  double diagonal() const;
  bool operator==(const Grid&) const = default;
};

struct WindowMask {
  Polygon polygon;
  Grid grid;
  std::vector<std::uint8_t> mask;
  double pixel_area = 0.0;

  bool inside(int i, int j) const { return mask[grid.index(i, j)] != 0; }
  std::size_t count() const;
  // Point membership against the polygon itself (boundary points count as inside).
  bool contains(Point p) const;
};

using WindowPtr = std::shared_ptr<const WindowMask>;

WindowMask build_window(const Polygon& poly, int nx, int ny);
WindowMask build_window(double xmin, double ymin, double xmax, double ymax, int nx, int ny);

struct Surface {
  Grid grid;
  std::vector<double> values;

  double at(int i, int j) const { return values[grid.index(i, j)]; }
};

// Copy of full with NaN written to every pixel outside the mask.
Surface masked_surface(const WindowMask& w, const std::vector<double>& full);
Surface constant_surface(const WindowMask& w, double c);

struct TemporalInterval {
  double t_min = 0.0;
  double t_max = 1.0;
  std::vector<double> t_grid;
  double dt = 1.0;

  double length() const { return t_max - t_min; }
};

// tres = 0 picks the integer times inside [t_min, t_max] (or 128 evenly
// spaced times when there would be more than 512 of them); otherwise tres
// evenly spaced times including both ends.
TemporalInterval make_interval(double t_min, double t_max, int tres = 0);

class PointPattern {
 public:
  PointPattern(WindowPtr window, std::vector<Point> coords, std::vector<double> times = {});

  std::size_t n() const { return coords_.size(); }
  const std::vector<Point>& coords() const { return coords_; }
  const std::vector<double>& times() const { return times_; }
  bool has_times() const { return !times_.empty(); }
  const WindowMask& window() const { return *window_; }
  const WindowPtr& window_ptr() const { return window_; }

 private:
  WindowPtr window_;
  std::vector<Point> coords_;
  std::vector<double> times_;
};

PointPattern pooled(const PointPattern& a, const PointPattern& b);

struct ContourSet {
  double level = 0.0;
  std::vector<std::vector<Point>> polylines;
  std::vector<bool> closed;
};

double integrate(const Surface& s, const WindowMask& w);
WindowMask erode_window(const WindowMask& w, double distance);
std::vector<ContourSet> extract_contours(const Surface& s, const std::vector<double>& levels);
// Even-odd test against a closed polyline.
bool polyline_encloses(const std::vector<Point>& line, Point p);

// Bilinear interpolation between pixel centers; positions beyond the outer
// ring of centers are clamped to it.
struct Stencil {
  std::size_t idx[4];
  double w[4];
};
Stencil bilinear_stencil(const Grid& g, Point p);
double interpolate(const Grid& g, const std::vector<double>& full, Point p);

// The window grid grown by one ring of pixels on every side. Fields stored on
// it can be interpolated right up to the bounding-box edge.
Grid halo_grid(const Grid& g);

struct Field {
  Grid grid;  // a halo grid
  std::vector<double> v;

  double at(Point p) const { return interpolate(grid, v, p); }
  // Values at the window-grid pixels, row-major on the inner grid.
  std::vector<double> inner() const;
};

// Indicator of the window mask on its halo grid.
std::vector<double> halo_mask(const WindowMask& w);

}  // namespace sprisk
