#include "sprisk/optim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "sprisk/errors.hpp"

namespace sprisk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double finite_or_inf(double v) { return std::isfinite(v) ? v : kInf; }

void check_range(double lo, double hi) {
  if (!(lo > 0.0) || !(hi > lo) || !std::isfinite(hi)) throw ValidationError("search range needs 0 < lo < hi");
}

void finish(OptimResult& r) {
  r.all_nonfinite = true;
  for (const auto& p : r.trace)
    if (std::isfinite(p.f)) {
      r.all_nonfinite = false;
      if (!std::isfinite(r.best.f) || p.f < r.best.f) r.best = p;
    }
  if (r.all_nonfinite && !r.trace.empty()) r.best = r.trace.front();
}

}  // namespace

std::vector<double> log_grid(double lo, double hi, int n) {
  check_range(lo, hi);
  if (n < 2) throw ValidationError("grid needs at least two points");
  std::vector<double> g(n);
  const double a = std::log(lo), b = std::log(hi);
  for (int k = 0; k < n; ++k) g[k] = k + 1 == n ? hi : (k == 0 ? lo : std::exp(a + (b - a) * k / (n - 1)));
  return g;
}

OptimResult minimize_1d(const std::function<double(double)>& f, double lo, double hi, const OptimOptions& opt) {
  check_range(lo, hi);
  OptimResult r;
  r.best.f = std::numeric_limits<double>::quiet_NaN();
  auto eval = [&](double lx) {
    double x = std::exp(lx);
    double v = f(x);
    r.trace.push_back({x, 0.0, v});
    return finite_or_inf(v);
  };
  const int n = std::max(opt.coarse, 3);
  const double a = std::log(lo), b = std::log(hi), step = (b - a) / (n - 1);
  std::vector<double> vals(n);
  int kbest = 0;
  for (int k = 0; k < n; ++k) {
    vals[k] = eval(k + 1 == n ? b : a + step * k);
    if (vals[k] < vals[kbest]) kbest = k;
  }
  if (std::isfinite(vals[kbest])) {
    double l = a + step * std::max(kbest - 1, 0), u = std::min(a + step * (kbest + 1), b);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = u - g * (u - l), d = l + g * (u - l);
    double fc = eval(c), fd = eval(d);
    for (int it = 0; it < opt.max_iter && u - l > opt.log_tol; ++it) {
      if (fc <= fd) {
        u = d, d = c, fd = fc;
        c = u - g * (u - l);
        fc = eval(c);
      } else {
        l = c, c = d, fc = fd;
        d = l + g * (u - l);
        fd = eval(d);
      }
    }
  }
  finish(r);
  const double lb = std::log(r.best.x);
  r.pinned_lo = lb - a < 2 * opt.log_tol;
  r.pinned_hi = b - lb < 2 * opt.log_tol;
  return r;
}

OptimResult minimize_2d(const std::function<double(double, double)>& f, double xlo, double xhi, double ylo,
                        double yhi, const OptimOptions& opt) {
  check_range(xlo, xhi);
  check_range(ylo, yhi);
  OptimResult r;
  r.best.f = std::numeric_limits<double>::quiet_NaN();
  const std::array<double, 2> lo{std::log(xlo), std::log(ylo)}, hi{std::log(xhi), std::log(yhi)};
  using P = std::array<double, 2>;
  auto clamp = [&](P p) {
    for (int d = 0; d < 2; ++d) p[d] = std::clamp(p[d], lo[d], hi[d]);
    return p;
  };
  auto eval = [&](P p) {
    double x = std::exp(p[0]), y = std::exp(p[1]);
    double v = f(x, y);
    r.trace.push_back({x, y, v});
    return finite_or_inf(v);
  };
  const int n = std::clamp(opt.coarse, 3, 10);
  const P step{(hi[0] - lo[0]) / (n - 1), (hi[1] - lo[1]) / (n - 1)};
  P best{lo[0], lo[1]};
  double fbest = kInf;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      P p{i + 1 == n ? hi[0] : lo[0] + step[0] * i, j + 1 == n ? hi[1] : lo[1] + step[1] * j};
      double v = eval(p);
      if (v < fbest) fbest = v, best = p;
    }
  if (std::isfinite(fbest)) {
    std::array<P, 3> s{best, clamp({best[0] + 0.5 * step[0], best[1]}), clamp({best[0], best[1] + 0.5 * step[1]})};
    // A clamped vertex can coincide with the start; step inwards instead.
    if (s[1] == s[0]) s[1] = clamp({best[0] - 0.5 * step[0], best[1]});
    if (s[2] == s[0]) s[2] = clamp({best[0], best[1] - 0.5 * step[1]});
    std::array<double, 3> fs{fbest, eval(s[1]), eval(s[2])};
    for (int it = 0; it < opt.max_iter; ++it) {
      std::array<int, 3> o{0, 1, 2};
      std::sort(o.begin(), o.end(), [&](int p, int q) { return fs[p] < fs[q]; });
      const P& b = s[o[0]];
      double size = 0.0;
      for (int k = 1; k < 3; ++k)
        for (int d = 0; d < 2; ++d) size = std::max(size, std::abs(s[o[k]][d] - b[d]));
      if (size < opt.log_tol) break;
      const int w = o[2];
      P c{0.5 * (s[o[0]][0] + s[o[1]][0]), 0.5 * (s[o[0]][1] + s[o[1]][1])};
      auto along = [&](double t) { return clamp({c[0] + t * (s[w][0] - c[0]), c[1] + t * (s[w][1] - c[1])}); };
      P xr = along(-1.0);
      double fr = eval(xr);
      if (fr < fs[o[0]]) {
        P xe = along(-2.0);
        double fe = eval(xe);
        if (fe < fr) s[w] = xe, fs[w] = fe;
        else s[w] = xr, fs[w] = fr;
      } else if (fr < fs[o[1]]) {
        s[w] = xr, fs[w] = fr;
      } else {
        P xc = fr < fs[w] ? along(-0.5) : along(0.5);
        double fcn = eval(xc);
        if (fcn < std::min(fr, fs[w])) {
          s[w] = xc, fs[w] = fcn;
        } else {
          for (int k : {o[1], o[2]}) {
            s[k] = {0.5 * (s[k][0] + b[0]), 0.5 * (s[k][1] + b[1])};
            fs[k] = eval(s[k]);
          }
        }
      }
    }
  }
  finish(r);
  const double lx = std::log(r.best.x), ly = std::log(r.best.y);
  const double tol = 2 * opt.log_tol;
  r.pinned_lo = lx - lo[0] < tol;
  r.pinned_hi = hi[0] - lx < tol;
  r.pinned_lo_y = ly - lo[1] < tol;
  r.pinned_hi_y = hi[1] - ly < tol;
  return r;
}

}  // namespace sprisk
