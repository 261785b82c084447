#include "sprisk/geom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "sprisk/errors.hpp"

namespace sprisk {

namespace {

double ring_area(const Ring& r) {
  double a = 0.0;
  const std::size_t m = r.size();
  for (std::size_t k = 0; k < m; ++k) {
    const Point& p = r[k];
    const Point& q = r[(k + 1) % m];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

// Drops a repeated closing vertex so every ring is stored open.
Ring open_ring(Ring r) {
  if (r.size() > 1 && r.front() == r.back()) r.pop_back();
  return r;
}

bool segments_cross(Point a, Point b, Point c, Point d) {
  auto orient = [](Point p, Point q, Point r) {
    double v = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    return (v > 0) - (v < 0);
  };
  int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  return o1 * o2 < 0 && o3 * o4 < 0;
}

}  // namespace

double Grid::diagonal() const { return std::hypot(nx * dx, ny * dy); }

Polygon bbox_polygon(double xmin, double ymin, double xmax, double ymax) {
  return Polygon{{Ring{{xmin, ymin}, {xmax, ymin}, {xmax, ymax}, {xmin, ymax}}}};
}

double polygon_area(const Polygon& poly) {
  if (poly.rings.empty()) return 0.0;
  double a = std::abs(ring_area(poly.rings[0]));
  for (std::size_t k = 1; k < poly.rings.size(); ++k) a -= std::abs(ring_area(poly.rings[k]));
  return a;
}

bool polygon_contains(const Polygon& poly, Point p) {
  bool in = false;
  for (const Ring& r : poly.rings) {
    const std::size_t m = r.size();
    for (std::size_t k = 0, l = m - 1; k < m; l = k++) {
      const Point& a = r[k];
      const Point& b = r[l];
      if ((a.y > p.y) != (b.y > p.y)) {
        double xi = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
        if (p.x < xi) in = !in;
      }
    }
  }
  return in;
}

bool polygon_on_boundary(const Polygon& poly, Point p, double tol) {
  for (const Ring& r : poly.rings) {
    const std::size_t m = r.size();
    for (std::size_t k = 0; k < m; ++k) {
      Point a = r[k], b = r[(k + 1) % m];
      double vx = b.x - a.x, vy = b.y - a.y;
      double len2 = vx * vx + vy * vy;
      double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      double ex = a.x + t * vx - p.x, ey = a.y + t * vy - p.y;
      if (ex * ex + ey * ey <= tol * tol) return true;
    }
  }
  return false;
}

std::size_t WindowMask::count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

bool WindowMask::contains(Point p) const {
  if (polygon_contains(polygon, p)) return true;
  double tol = 1e-12 * grid.diagonal();
  return polygon_on_boundary(polygon, p, tol);
}

WindowMask build_window(const Polygon& poly_in, int nx, int ny) {
  if (nx < 8 || ny < 8) throw ValidationError("grid resolution must be at least 8x8");
  Polygon poly;
  for (const Ring& r : poly_in.rings) poly.rings.push_back(open_ring(r));
  if (poly.rings.empty() || poly.rings[0].size() < 3)
    throw ValidationError("polygon needs an outer ring with at least 3 vertices");
  for (const Ring& r : poly.rings) {
    if (r.size() < 3) throw ValidationError("polygon ring with fewer than 3 vertices");
    for (const Point& p : r)
      if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw ValidationError("polygon has non-finite vertex");
  }
  // Self-intersection check over all edge pairs, adjacent edges excluded.
  std::vector<std::pair<Point, Point>> edges;
  for (const Ring& r : poly.rings)
    for (std::size_t k = 0; k < r.size(); ++k) edges.emplace_back(r[k], r[(k + 1) % r.size()]);
  if (edges.size() <= 4096) {
    for (std::size_t a = 0; a < edges.size(); ++a)
      for (std::size_t b = a + 1; b < edges.size(); ++b)
        if (segments_cross(edges[a].first, edges[a].second, edges[b].first, edges[b].second))
          throw ValidationError("polygon rings intersect themselves or each other");
  }
  double area = polygon_area(poly);
  if (!(area > 0.0)) throw ValidationError("degenerate polygon: zero area");

  double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
  double xmax = -xmin, ymax = -xmin;
  for (const Point& p : poly.rings[0]) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  if (!(xmax > xmin) || !(ymax > ymin)) throw ValidationError("degenerate polygon: zero extent");

  WindowMask w;
  w.polygon = std::move(poly);
  w.grid = Grid{nx, ny, xmin, ymin, (xmax - xmin) / nx, (ymax - ymin) / ny};
  w.pixel_area = w.grid.dx * w.grid.dy;
  w.mask.assign(w.grid.size(), 0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      w.mask[w.grid.index(i, j)] = polygon_contains(w.polygon, {w.grid.xc(i), w.grid.yc(j)}) ? 1 : 0;
  if (w.count() == 0) throw ValidationError("window mask has no pixel centers inside the polygon");
  return w;
}

WindowMask build_window(double xmin, double ymin, double xmax, double ymax, int nx, int ny) {
  if (!(xmax > xmin) || !(ymax > ymin)) throw ValidationError("degenerate bbox: zero area");
  return build_window(bbox_polygon(xmin, ymin, xmax, ymax), nx, ny);
}

Surface masked_surface(const WindowMask& w, const std::vector<double>& full) {
  Surface s{w.grid, full};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < s.values.size(); ++k)
    if (!w.mask[k]) s.values[k] = nan;
  return s;
}

Surface constant_surface(const WindowMask& w, double c) {
  return masked_surface(w, std::vector<double>(w.grid.size(), c));
}

TemporalInterval make_interval(double t_min, double t_max, int tres) {
  if (!std::isfinite(t_min) || !std::isfinite(t_max) || !(t_min < t_max))
    throw ValidationError("temporal interval needs t_min < t_max");
  if (tres < 0 || tres == 1) throw ValidationError("tres must be 0 (default) or at least 2");
  TemporalInterval ti;
  ti.t_min = t_min;
  ti.t_max = t_max;
  if (tres == 0) {
    double a = std::ceil(t_min), b = std::floor(t_max);
    if (b - a + 1 >= 2 && b - a + 1 <= 512) {
      for (double t = a; t <= b; t += 1.0) ti.t_grid.push_back(t);
      ti.dt = 1.0;
      return ti;
    }
    tres = 128;
  }
  ti.dt = (t_max - t_min) / (tres - 1);
  for (int k = 0; k < tres; ++k) ti.t_grid.push_back(k + 1 == tres ? t_max : t_min + k * ti.dt);
  return ti;
}

PointPattern::PointPattern(WindowPtr window, std::vector<Point> coords, std::vector<double> times)
    : window_(std::move(window)), coords_(std::move(coords)), times_(std::move(times)) {
  if (!window_) throw ValidationError("point pattern needs a window");
  if (coords_.empty()) throw ValidationError("point pattern is empty");
  if (!times_.empty() && times_.size() != coords_.size())
    throw ValidationError("times and coordinates differ in length");
  std::size_t outside = 0, first = 0;
  for (std::size_t k = 0; k < coords_.size(); ++k) {
    const Point& p = coords_[k];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !window_->contains(p)) {
      if (outside++ == 0) first = k;
    }
  }
  if (outside) {
    std::ostringstream os;
    os << outside << " point(s) outside the window (first at index " << first << ")";
    throw ValidationError(os.str());
  }
  for (double t : times_)
    if (!std::isfinite(t)) throw ValidationError("non-finite time");
}

PointPattern pooled(const PointPattern& a, const PointPattern& b) {
  if (a.window_ptr() != b.window_ptr() && !(a.window().grid == b.window().grid))
    throw ValidationError("patterns live on different windows");
  std::vector<Point> c = a.coords();
  c.insert(c.end(), b.coords().begin(), b.coords().end());
  std::vector<double> t;
  if (a.has_times() && b.has_times()) {
    t = a.times();
    t.insert(t.end(), b.times().begin(), b.times().end());
  }
  return PointPattern(a.window_ptr(), std::move(c), std::move(t));
}

double integrate(const Surface& s, const WindowMask& w) {
  if (!(s.grid == w.grid) || s.values.size() != w.grid.size())
    throw ValidationError("surface grid does not match window grid");
  double sum = 0.0;
  for (std::size_t k = 0; k < s.values.size(); ++k)
    if (w.mask[k]) sum += s.values[k];
  return sum * w.pixel_area;
}

namespace {

// Felzenszwalb-Huttenlocher 1D squared distance transform, sample spacing h.
void dt1d(const double* f, double* d, int n, double h, std::vector<int>& v, std::vector<double>& z) {
  const double inf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    double xq = q * h;
    while (k >= 0) {
      double xv = v[k] * h;
      double s = ((f[q] + xq * xq) - (f[v[k]] + xv * xv)) / (2 * (xq - xv));
      if (s <= z[k]) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -inf : ((f[q] + xq * xq) - (f[v[k - 1]] + (v[k - 1] * h) * (v[k - 1] * h))) /
                               (2 * (xq - v[k - 1] * h));
    z[k + 1] = inf;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) d[q] = inf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    double xq = q * h;
    while (z[j + 1] < xq) ++j;
    double dx = xq - v[j] * h;
    d[q] = dx * dx + f[v[j]];
  }
}

}  // namespace

WindowMask erode_window(const WindowMask& w, double distance) {
  if (!(distance >= 0.0) || !std::isfinite(distance))
    throw ValidationError("erosion distance must be finite and non-negative");
  if (distance == 0.0) return w;
  const Grid& g = w.grid;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> f(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) f[k] = w.mask[k] ? inf : 0.0;
  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> row(std::max(g.nx, g.ny)), out(std::max(g.nx, g.ny));
  for (int j = 0; j < g.ny; ++j) {
    dt1d(&f[g.index(0, j)], out.data(), g.nx, g.dx, v, z);
    std::copy(out.begin(), out.begin() + g.nx, f.begin() + g.index(0, j));
  }
  for (int i = 0; i < g.nx; ++i) {
    for (int j = 0; j < g.ny; ++j) row[j] = f[g.index(i, j)];
    dt1d(row.data(), out.data(), g.ny, g.dy, v, z);
    for (int j = 0; j < g.ny; ++j) f[g.index(i, j)] = out[j];
  }
  WindowMask e = w;
  const double d2 = distance * distance;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      std::size_t k = g.index(i, j);
      if (!w.mask[k]) continue;
      double xc = g.xc(i), yc = g.yc(j);
      double b = std::min({xc - g.x0, g.x1() - xc, yc - g.y0, g.y1() - yc});
      bool keep = f[k] >= d2 && b >= distance;
      e.mask[k] = keep ? 1 : 0;
    }
  }
  if (e.count() == 0) {
    std::ostringstream os;
    os << "erosion by " << distance << " leaves an empty window";
    throw ValidationError(os.str());
  }
  return e;
}

namespace {

struct Segment {
  long long e0, e1;
  Point p0, p1;
};

}  // namespace

std::vector<ContourSet> extract_contours(const Surface& s, const std::vector<double>& levels) {
  const Grid& g = s.grid;
  std::vector<ContourSet> out;
  for (double level : levels) {
    if (!std::isfinite(level)) throw ValidationError("contour level must be finite");
    ContourSet cs;
    cs.level = level;
    std::vector<Segment> segs;
    // Edge ids: horizontal edge from center (i,j) to (i+1,j) -> 2*idx,
    // vertical edge from (i,j) to (i,j+1) -> 2*idx+1.
    auto hid = [&](int i, int j) { return 2LL * static_cast<long long>(g.index(i, j)); };
    auto vid = [&](int i, int j) { return 2LL * static_cast<long long>(g.index(i, j)) + 1; };
    auto lerp = [&](Point a, Point b, double va, double vb) {
      double t = (level - va) / (vb - va);
      return Point{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
    };
    for (int j = 0; j + 1 < g.ny; ++j) {
      for (int i = 0; i + 1 < g.nx; ++i) {
        double v0 = s.at(i, j), v1 = s.at(i + 1, j), v2 = s.at(i + 1, j + 1), v3 = s.at(i, j + 1);
        if (std::isnan(v0) || std::isnan(v1) || std::isnan(v2) || std::isnan(v3)) continue;
        int c = (v0 > level) | ((v1 > level) << 1) | ((v2 > level) << 2) | ((v3 > level) << 3);
        if (c == 0 || c == 15) continue;
        Point p0{g.xc(i), g.yc(j)}, p1{g.xc(i + 1), g.yc(j)};
        Point p2{g.xc(i + 1), g.yc(j + 1)}, p3{g.xc(i), g.yc(j + 1)};
        // Edge 0 bottom, 1 right, 2 top, 3 left.
        long long id[4] = {hid(i, j), vid(i + 1, j), hid(i, j + 1), vid(i, j)};
        Point ep[4];
        auto crossing = [&](int e) {
          switch (e) {
            case 0: return lerp(p0, p1, v0, v1);
            case 1: return lerp(p1, p2, v1, v2);
            case 2: return lerp(p3, p2, v3, v2);
            default: return lerp(p0, p3, v0, v3);
          }
        };
        for (int e = 0; e < 4; ++e) ep[e] = crossing(e);
        auto add = [&](int a, int b) { segs.push_back({id[a], id[b], ep[a], ep[b]}); };
        double centre = 0.25 * (v0 + v1 + v2 + v3);
        switch (c) {
          case 1: case 14: add(3, 0); break;
          case 2: case 13: add(0, 1); break;
          case 3: case 12: add(3, 1); break;
          case 4: case 11: add(1, 2); break;
          case 6: case 9: add(0, 2); break;
          case 7: case 8: add(3, 2); break;
          case 5:
            // corners 0 and 2 above
            if (centre > level) { add(0, 1); add(2, 3); } else { add(3, 0); add(1, 2); }
            break;
          case 10:
            // corners 1 and 3 above
            if (centre > level) { add(3, 0); add(1, 2); } else { add(0, 1); add(2, 3); }
            break;
          default: break;
        }
      }
    }
    // Chain segments through shared edge ids.
    std::map<long long, std::vector<std::size_t>> at;
    for (std::size_t k = 0; k < segs.size(); ++k) {
      at[segs[k].e0].push_back(k);
      at[segs[k].e1].push_back(k);
    }
    std::vector<bool> used(segs.size(), false);
    auto walk = [&](std::size_t start, long long from_edge) {
      std::vector<Point> line;
      std::size_t cur = start;
      long long edge = from_edge;
      const Segment& s0 = segs[start];
      line.push_back(s0.e0 == edge ? s0.p0 : s0.p1);
      bool closed = false;
      while (true) {
        used[cur] = true;
        const Segment& sg = segs[cur];
        long long next_edge = sg.e0 == edge ? sg.e1 : sg.e0;
        line.push_back(sg.e0 == edge ? sg.p1 : sg.p0);
        edge = next_edge;
        std::size_t nxt = segs.size();
        for (std::size_t cand : at[edge])
          if (!used[cand]) nxt = cand;
        if (nxt == segs.size()) {
          for (std::size_t cand : at[edge])
            if (cand == start && cand != cur) closed = true;
          break;
        }
        cur = nxt;
      }
      if (closed) line.back() = line.front();
      cs.polylines.push_back(std::move(line));
      cs.closed.push_back(closed);
    };
    for (auto& [edge, list] : at)
      if (list.size() == 1 && !used[list[0]]) walk(list[0], edge);
    for (std::size_t k = 0; k < segs.size(); ++k)
      if (!used[k]) walk(k, segs[k].e0);
    out.push_back(std::move(cs));
  }
  return out;
}

bool polyline_encloses(const std::vector<Point>& line, Point p) {
  if (line.size() < 3) return false;
  return polygon_contains(Polygon{{line}}, p);
}

Stencil bilinear_stencil(const Grid& g, Point p) {
  double fx = (p.x - g.x0) / g.dx - 0.5;
  double fy = (p.y - g.y0) / g.dy - 0.5;
  fx = std::clamp(fx, 0.0, static_cast<double>(g.nx - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(g.ny - 1));
  int i0 = std::min(static_cast<int>(fx), g.nx - 2);
  int j0 = std::min(static_cast<int>(fy), g.ny - 2);
  double tx = fx - i0, ty = fy - j0;
  Stencil s;
  s.idx[0] = g.index(i0, j0);
  s.idx[1] = g.index(i0 + 1, j0);
  s.idx[2] = g.index(i0, j0 + 1);
  s.idx[3] = g.index(i0 + 1, j0 + 1);
  s.w[0] = (1 - tx) * (1 - ty);
  s.w[1] = tx * (1 - ty);
  s.w[2] = (1 - tx) * ty;
  s.w[3] = tx * ty;
  return s;
}

double interpolate(const Grid& g, const std::vector<double>& full, Point p) {
  Stencil s = bilinear_stencil(g, p);
  double v = 0.0;
  for (int k = 0; k < 4; ++k)
    if (s.w[k] != 0.0) v += s.w[k] * full[s.idx[k]];
  return v;
}

Grid halo_grid(const Grid& g) { return Grid{g.nx + 2, g.ny + 2, g.x0 - g.dx, g.y0 - g.dy, g.dx, g.dy}; }

std::vector<double> Field::inner() const {
  const int nx = grid.nx - 2, ny = grid.ny - 2;
  std::vector<double> out(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) out[static_cast<std::size_t>(j) * nx + i] = v[grid.index(i + 1, j + 1)];
  return out;
}

std::vector<double> halo_mask(const WindowMask& w) {
  Grid hg = halo_grid(w.grid);
  std::vector<double> m(hg.size(), 0.0);
  for (int j = 0; j < w.grid.ny; ++j)
    for (int i = 0; i < w.grid.nx; ++i)
      if (w.inside(i, j)) m[hg.index(i + 1, j + 1)] = 1.0;
  return m;
}

}  // namespace sprisk
