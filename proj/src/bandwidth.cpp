#include "sprisk/bandwidth.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>

#include "sprisk/adaptive.hpp"
#include "sprisk/detail/conv.hpp"
#include "sprisk/detail/pairsum.hpp"
#include "sprisk/errors.hpp"
#include "sprisk/sptemporal.hpp"

namespace sprisk {

namespace {

constexpr double kPi = std::numbers::pi;

double quantile7(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  double h = (static_cast<double>(x.size()) - 1.0) * p;
  std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= x.size()) return x.back();
  return x[lo] + (h - static_cast<double>(lo)) * (x[lo + 1] - x[lo]);
}

double sample_sd(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / (static_cast<double>(x.size()) - 1.0));
}

// min of two spread measures, falling back to the non-zero one.
double spread(double a, double b) {
  if (a > 0.0 && b > 0.0) return std::min(a, b);
  return std::max(a, b);
}

double floor_density(double v, std::size_t& count) {
  if (!(v >= kDensityFloor)) {
    ++count;
    return kDensityFloor;
  }
  return v;
}

double integral_sq(const Surface& z, const WindowMask& w) {
  double s = 0.0;
  for (std::size_t k = 0; k < z.values.size(); ++k)
    if (w.mask[k]) s += z.values[k] * z.values[k];
  return s * w.pixel_area;
}

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

void require_n(const PointPattern& pts, std::size_t n, const char* what) {
  if (pts.n() < n) {
    std::ostringstream os;
    os << what << " needs at least " << n << " points";
    throw ValidationError(os.str());
  }
}

void check_h(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("bandwidth must be positive and finite");
}

SearchRange resolve(SearchRange r, SearchRange def) {
  if (!r.set()) return def;
  if (!(r.lo > 0.0) || !(r.hi > r.lo)) throw ValidationError("search range needs 0 < lo < hi");
  return r;
}

bool has_coincident(const std::vector<Point>& p) {
  std::vector<Point> s = p;
  std::sort(s.begin(), s.end(), [](Point a, Point b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  for (std::size_t k = 1; k < s.size(); ++k)
    if (s[k].x == s[k - 1].x && s[k].y == s[k - 1].y) return true;
  return false;
}

std::vector<double> values_at(const Field& f, const std::vector<Point>& pts) {
  std::vector<double> v(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) v[k] = std::max(f.at(pts[k]), kQFloor);
  return v;
}

Field ones(const WindowMask& w) {
  Grid hg = halo_grid(w.grid);
  return Field{hg, std::vector<double>(hg.size(), 1.0)};
}

Field q_or_ones(const WindowMask& w, double h, EdgeCorrection c) {
  return c == EdgeCorrection::none ? ones(w) : edge_factor_field(w, h);
}

// Density of src evaluated at `at` with fixed h, normalized by the source
// count (minus one when leaving out). q is the edge-factor field at h.
std::vector<double> density_at(const detail::PairSum& ps, const std::vector<Point>& src, const std::vector<Point>& at,
                               double h, EdgeCorrection c, const Field& q, bool self) {
  const double norm = static_cast<double>(src.size()) - (self ? 1.0 : 0.0);
  std::vector<double> wt;
  if (c == EdgeCorrection::diggle) {
    wt = values_at(q, src);
    for (double& x : wt) x = 1.0 / x;
  }
  std::vector<double> s = ps.sum(at, {h}, wt, self);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] /= norm;
    if (c == EdgeCorrection::uniform) s[i] /= std::max(q.at(at[i]), kQFloor);
  }
  return s;
}

// Space-time version with uniform spatial and temporal correction.
std::vector<double> st_density_at(const detail::PairSum& ps, std::size_t nsrc, const std::vector<Point>& at,
                                  const std::vector<double>& tat, double h, double lambda, const Field& q,
                                  const TemporalInterval& tlim, bool self) {
  const double norm = static_cast<double>(nsrc) - (self ? 1.0 : 0.0);
  std::vector<double> s = ps.sum(at, {h}, {}, self, tat, lambda);
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] /= norm * std::max(q.at(at[i]), kQFloor) * temporal_edge_weight(tat[i], lambda, tlim);
  return s;
}

std::vector<double> trapezoid_weights(const TemporalInterval& tlim) {
  const auto& t = tlim.t_grid;
  std::vector<double> w(t.size(), 0.0);
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    double d = 0.5 * (t[k + 1] - t[k]);
    w[k] += d;
    w[k + 1] += d;
  }
  return w;
}

double st_integral_sq(const STDensity& st, const WindowMask& w) {
  std::vector<double> per;
  for (const auto& s : st.slices) per.push_back(integral_sq(s, w));
  return integrate_time(per, st.tlim);
}

// Grid-to-grid convolution with the point-sampled Gaussian K_h.
std::vector<double> grid_gauss(const Grid& g, const std::vector<double>& data, double h) {
  const long rx = static_cast<long>(std::ceil(9.0 * h / g.dx)) + 1;
  const long ry = static_cast<long>(std::ceil(9.0 * h / g.dy)) + 1;
  detail::GridConvolver gc(g.nx, g.ny, rx, ry);
  auto spec = gc.forward(data);
  auto term = gc.term([&](long o) { return detail::normal_pdf(static_cast<double>(o) * g.dx / h) / h; },
                      [&](long o) { return detail::normal_pdf(static_cast<double>(o) * g.dy / h) / h; });
  return gc.apply(spec, {term});
}

// Pixel probabilities proportional to a non-negative surface inside the mask.
std::vector<double> pixel_masses(const Surface& z, const WindowMask& w) {
  std::vector<double> p(z.values.size(), 0.0);
  double tot = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (w.mask[k] && std::isfinite(z.values[k]) && z.values[k] > 0.0) tot += p[k] = z.values[k];
  if (!(tot > 0.0)) throw ValidationError("reference density has no mass inside the window");
  for (double& x : p) x /= tot;
  return p;
}

// Draws J samples of n points from pixel probabilities, uniform within each
// pixel.
std::vector<std::vector<Point>> draw_samples(const std::vector<double>& p, const Grid& g, std::size_t n, int J,
                                             std::uint64_t seed) {
  std::vector<double> cdf(p.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) cdf[k] = acc += p[k];
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<Point>> out(J);
  for (auto& s : out) {
    s.resize(n);
    for (auto& q : s) {
      double r = u(rng) * acc;
      std::size_t k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
      k = std::min(k, p.size() - 1);
      while (p[k] == 0.0 && k > 0) --k;
      int i = static_cast<int>(k % static_cast<std::size_t>(g.nx)), j = static_cast<int>(k / static_cast<std::size_t>(g.nx));
      q = {g.x0 + (i + u(rng)) * g.dx, g.y0 + (j + u(rng)) * g.dy};
    }
  }
  return out;
}

void check_st(const PointPattern& pts) {
  if (!pts.has_times()) throw ValidationError("space-time selection needs event times");
}

}  // namespace

// ---- scale rules ----

double sigma_hat(const std::vector<Point>& pts) {
  if (pts.size() < 2) throw ValidationError("spread estimate needs at least two points");
  std::vector<double> x(pts.size()), y(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) x[k] = pts[k].x, y[k] = pts[k].y;
  double sd = 0.5 * (sample_sd(x) + sample_sd(y));
  double iqr = 0.5 * ((quantile7(x, 0.75) - quantile7(x, 0.25)) / 1.34 + (quantile7(y, 0.75) - quantile7(y, 0.25)) / 1.34);
  double s = spread(sd, iqr);
  if (!(s > 0.0)) throw ValidationError("all points are identical; spread is zero");
  return s;
}

double sigma_hat_1d(const std::vector<double>& x) {
  if (x.size() < 2) throw ValidationError("spread estimate needs at least two values");
  double s = spread(sample_sd(x), (quantile7(x, 0.75) - quantile7(x, 0.25)) / 1.34);
  if (!(s > 0.0)) throw ValidationError("all values are identical; spread is zero");
  return s;
}

double os_factor(int d, double n) {
  if (d != 1 && d != 2) throw ValidationError("oversmoothing rule supports d = 1 or 2");
  if (!(n > 0.0)) throw ValidationError("sample size must be positive");
  const double dd = d;
  const double rk = d == 1 ? kRL : kRK;
  double v = std::pow(dd + 8.0, (dd + 6.0) / 2.0) * std::pow(kPi, dd / 2.0) * rk /
             (16.0 * n * std::tgamma((dd + 8.0) / 2.0) * (dd + 2.0));
  return std::pow(v, 1.0 / (dd + 4.0));
}

double os_factor_2d_closed(double n) { return std::pow(625.0 / (384.0 * n), 1.0 / 6.0); }

BandwidthResult ns_bandwidth(const std::vector<Point>& pts) {
  BandwidthResult r;
  r.method = "ns";
  r.h = sigma_hat(pts) * std::pow(static_cast<double>(pts.size()), -1.0 / 6.0);
  return r;
}

BandwidthResult ns_temporal(const std::vector<double>& times) {
  BandwidthResult r;
  r.method = "ns";
  r.lambda = sigma_hat_1d(times) * std::pow(4.0 / (3.0 * static_cast<double>(times.size())), 0.2);
  return r;
}

BandwidthResult os_bandwidth(const std::vector<Point>& pts, std::optional<double> nstar) {
  BandwidthResult r;
  r.method = "os";
  r.h = sigma_hat(pts) * os_factor(2, nstar.value_or(static_cast<double>(pts.size())));
  return r;
}

BandwidthResult os_temporal(const std::vector<double>& times, std::optional<double> nstar) {
  BandwidthResult r;
  r.method = "os";
  r.lambda = sigma_hat_1d(times) * os_factor(1, nstar.value_or(static_cast<double>(times.size())));
  return r;
}

BandwidthResult os_pooled(const PointPattern& a, const PointPattern& b) {
  std::vector<Point> all = a.coords();
  all.insert(all.end(), b.coords().begin(), b.coords().end());
  return os_bandwidth(all, std::sqrt(static_cast<double>(a.n()) * static_cast<double>(b.n())));
}

SearchRange default_range(const WindowMask& w) {
  const double d = w.grid.diagonal();
  return {std::max(d / 1000.0, std::max(w.grid.dx, w.grid.dy)), d / 4.0};
}

SearchRange default_lambda_range(const TemporalInterval& tlim) {
  const double len = tlim.length();
  double dt = tlim.t_grid.size() > 1 ? tlim.t_grid[1] - tlim.t_grid[0] : tlim.dt;
  return {std::max(len / 1000.0, dt), len / 4.0};
}

// ---- fixed-bandwidth criteria ----

Criterion1 lscv_criterion(const PointPattern& pts, EdgeCorrection correction) {
  require_n(pts, 3, "cross-validation");
  auto ps = std::make_shared<const detail::PairSum>(pts.coords());
  return [pts, correction, ps](double h) {
    check_h(h);
    CritValue cv;
    DensitySurface d = kde_fixed(pts, h, correction);
    auto loo = density_at(*ps, pts.coords(), pts.coords(), h, correction, d.q_field, true);
    cv.value = integral_sq(d.z, pts.window()) - 2.0 / static_cast<double>(pts.n()) * sum(loo);
    return cv;
  };
}

Criterion1 lik_criterion(const PointPattern& pts, EdgeCorrection correction) {
  require_n(pts, 3, "cross-validation");
  auto ps = std::make_shared<const detail::PairSum>(pts.coords());
  return [pts, correction, ps](double h) {
    check_h(h);
    CritValue cv;
    Field q = q_or_ones(pts.window(), h, correction);
    auto loo = density_at(*ps, pts.coords(), pts.coords(), h, correction, q, true);
    double s = 0.0;
    for (double v : loo) s += std::log(floor_density(v, cv.floored));
    cv.value = s / static_cast<double>(pts.n());
    return cv;
  };
}

// ---- adaptive criteria ----

namespace {

struct AdaptiveCtx {
  PointPattern pts;
  PilotPtr pilot;
  double tau;
  EdgeCorrection correction;
  std::shared_ptr<const detail::PairSum> ps;
  std::shared_ptr<const BandwidthLadder> ladder;

  // Leave-one-out values at the data for global bandwidth h0.
  std::vector<double> loo(const AdaptiveBandwidths& bw) const {
    const auto& x = pts.coords();
    const double norm = static_cast<double>(pts.n()) - 1.0;
    std::vector<double> wt;
    if (correction == EdgeCorrection::diggle) {
      wt.resize(x.size());
      for (std::size_t k = 0; k < x.size(); ++k) wt[k] = 1.0 / std::max(ladder->at(x[k], bw.per_point[k]), kQFloor);
    }
    std::vector<double> s = ps->sum(x, bw.per_point, wt, true);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] /= norm;
      if (correction == EdgeCorrection::uniform) s[i] /= std::max(ladder->at(x[i], bw.per_point[i]), kQFloor);
    }
    return s;
  }
};

std::shared_ptr<const AdaptiveCtx> adaptive_ctx(const PointPattern& pts, double hp, double tau,
                                                EdgeCorrection correction, SearchRange range) {
  require_n(pts, 3, "cross-validation");
  if (hp <= 0.0) hp = os_bandwidth(pts.coords()).h;
  range = resolve(range, default_range(pts.window()));
  auto ctx = std::make_shared<AdaptiveCtx>(AdaptiveCtx{pts, make_pilot(pts, hp), tau, correction,
                                                       std::make_shared<const detail::PairSum>(pts.coords()), nullptr});
  if (correction != EdgeCorrection::none) {
    AdaptiveBandwidths unit = abramson_bandwidths(pts, 1.0, ctx->pilot, tau);
    auto [mn, mx] = std::minmax_element(unit.per_point.begin(), unit.per_point.end());
    ctx->ladder = std::make_shared<const BandwidthLadder>(pts.window(), WindowKernel::gauss, range.lo * *mn,
                                                          range.hi * *mx, 40);
  }
  return ctx;
}

}  // namespace

Criterion1 lscv_adaptive_criterion(const PointPattern& pts, double hp, double tau, EdgeCorrection correction,
                                   SearchRange range) {
  auto ctx = adaptive_ctx(pts, hp, tau, correction, range);
  return [ctx](double h0) {
    check_h(h0);
    CritValue cv;
    AdaptiveBandwidths bw = abramson_bandwidths(ctx->pts, h0, ctx->pilot, ctx->tau);
    DensitySurface d = kde_adaptive_direct(ctx->pts, bw, ctx->correction);
    cv.value = integral_sq(d.z, ctx->pts.window()) - 2.0 / static_cast<double>(ctx->pts.n()) * sum(ctx->loo(bw));
    return cv;
  };
}

Criterion1 lik_adaptive_criterion(const PointPattern& pts, double hp, double tau, EdgeCorrection correction,
                                  SearchRange range) {
  auto ctx = adaptive_ctx(pts, hp, tau, correction, range);
  return [ctx](double h0) {
    check_h(h0);
    CritValue cv;
    AdaptiveBandwidths bw = abramson_bandwidths(ctx->pts, h0, ctx->pilot, ctx->tau);
    double s = 0.0;
    for (double v : ctx->loo(bw)) s += std::log(floor_density(v, cv.floored));
    cv.value = s / static_cast<double>(ctx->pts.n());
    return cv;
  };
}

// ---- space-time criteria ----

Criterion2 lscv_st_criterion(const PointPattern& pts, const TemporalInterval& tlim) {
  check_st(pts);
  require_n(pts, 3, "cross-validation");
  auto ps = std::make_shared<const detail::PairSum>(pts.coords(), pts.times());
  return [pts, tlim, ps](double h, double lambda) {
    check_h(h);
    check_h(lambda);
    CritValue cv;
    STDensity st = kde_st(pts, h, lambda, tlim);
    auto loo = st_density_at(*ps, pts.n(), pts.coords(), pts.times(), h, lambda, st.q_field, tlim, true);
    cv.value = st_integral_sq(st, pts.window()) - 2.0 / static_cast<double>(pts.n()) * sum(loo);
    return cv;
  };
}

Criterion2 lik_st_criterion(const PointPattern& pts, const TemporalInterval& tlim) {
  check_st(pts);
  require_n(pts, 3, "cross-validation");
  auto ps = std::make_shared<const detail::PairSum>(pts.coords(), pts.times());
  return [pts, tlim, ps](double h, double lambda) {
    check_h(h);
    check_h(lambda);
    CritValue cv;
    Field q = edge_factor_field(pts.window(), h);
    auto loo = st_density_at(*ps, pts.n(), pts.coords(), pts.times(), h, lambda, q, tlim, true);
    double s = 0.0;
    for (double v : loo) s += std::log(floor_density(v, cv.floored));
    cv.value = s / static_cast<double>(pts.n());
    return cv;
  };
}

// ---- bootstrap ----

Criterion1 boot_criterion(const PointPattern& pts, const BootOptions& opt) {
  require_n(pts, 2, "bootstrap selection");
  const double eta = opt.eta > 0.0 ? opt.eta : os_bandwidth(pts.coords()).h;
  const WindowMask& w = pts.window();
  const EdgeCorrection c = opt.correction;
  auto ref = std::make_shared<const Surface>(kde_fixed(pts, eta, c).z);
  auto P = std::make_shared<const std::vector<double>>(pixel_masses(*ref, w));
  const double n = static_cast<double>(pts.n());
  WindowPtr wp = pts.window_ptr();

  if (opt.strategy == BootStrategy::analytic) {
    return [wp, c, ref, P, n](double h) {
      check_h(h);
      const WindowMask& w = *wp;
      const Grid& g = w.grid;
      std::vector<double> q = q_or_ones(w, h, c).inner();
      std::vector<double> p1 = *P, p2 = *P;
      if (c == EdgeCorrection::diggle)
        for (std::size_t k = 0; k < p1.size(); ++k) {
          double qq = std::max(q[k], kQFloor);
          p1[k] /= qq;
          p2[k] /= qq * qq;
        }
      std::vector<double> m = grid_gauss(g, p1, h);
      std::vector<double> s = grid_gauss(g, p2, h / std::sqrt(2.0));
      const double ks = 1.0 / (4.0 * kPi * h * h);
      double acc = 0.0;
      for (std::size_t k = 0; k < m.size(); ++k) {
        if (!w.mask[k]) continue;
        double qq = c == EdgeCorrection::uniform ? std::max(q[k], kQFloor) : 1.0;
        double e = m[k] / qq - ref->values[k];
        double v = (s[k] * ks - m[k] * m[k]) / (n * qq * qq);
        acc += e * e + v;
      }
      return CritValue{acc * w.pixel_area, 0};
    };
  }

  if (opt.J < 50) throw ValidationError("bootstrap resampling needs J >= 50");
  auto samples = std::make_shared<const std::vector<std::vector<Point>>>(
      draw_samples(*P, w.grid, pts.n(), opt.J, opt.seed));
  return [wp, c, ref, samples, n](double h) {
    check_h(h);
    const WindowMask& w = *wp;
    Field qf = q_or_ones(w, h, c);
    std::vector<double> q = qf.inner();
    double acc = 0.0;
    for (const auto& xs : *samples) {
      std::vector<double> wt;
      if (c == EdgeCorrection::diggle) {
        wt = values_at(qf, xs);
        for (double& x : wt) x = 1.0 / x;
      }
      std::vector<double> f = kernel_sum(w.grid, xs, wt, h);
      double ise = 0.0;
      for (std::size_t k = 0; k < f.size(); ++k) {
        if (!w.mask[k]) continue;
        double v = f[k] / n;
        if (c == EdgeCorrection::uniform) v /= std::max(q[k], kQFloor);
        double e = v - ref->values[k];
        ise += e * e;
      }
      acc += ise;
    }
    return CritValue{acc * w.pixel_area / static_cast<double>(samples->size()), 0};
  };
}

Criterion2 boot_st_criterion(const PointPattern& pts, const TemporalInterval& tlim, double eta, double nu) {
  check_st(pts);
  require_n(pts, 2, "bootstrap selection");
  if (eta <= 0.0) eta = os_bandwidth(pts.coords()).h;
  if (nu <= 0.0) nu = os_temporal(pts.times()).lambda;
  const WindowMask& w = pts.window();
  STDensity ref = kde_st(pts, eta, nu, tlim);
  const std::vector<double> tw = trapezoid_weights(tlim);
  const std::size_t T = tlim.t_grid.size();
  // Probability masses over (pixel, grid time).
  auto P = std::make_shared<std::vector<std::vector<double>>>(T);
  double tot = 0.0;
  for (std::size_t s = 0; s < T; ++s) {
    auto& p = (*P)[s];
    p.assign(w.grid.size(), 0.0);
    for (std::size_t k = 0; k < p.size(); ++k)
      if (w.mask[k] && ref.slices[s].values[k] > 0.0) tot += p[k] = ref.slices[s].values[k] * tw[s];
  }
  if (!(tot > 0.0)) throw ValidationError("reference density has no mass inside the window");
  for (auto& p : *P)
    for (double& x : p) x /= tot;
  auto refs = std::make_shared<const std::vector<Surface>>(ref.slices);
  const double n = static_cast<double>(pts.n());
  WindowPtr wp = pts.window_ptr();
  return [wp, tlim, tw, P, refs, n, T](double h, double lambda) {
    check_h(h);
    check_h(lambda);
    const WindowMask& w = *wp;
    std::vector<double> q = edge_factor_field(w, h).inner();
    std::vector<std::vector<double>> C(T), D(T);
    const double ks = 1.0 / (4.0 * kPi * h * h);
    for (std::size_t s = 0; s < T; ++s) {
      C[s] = grid_gauss(w.grid, (*P)[s], h);
      D[s] = grid_gauss(w.grid, (*P)[s], h / std::sqrt(2.0));
      for (double& x : D[s]) x *= ks;
    }
    const auto& tg = tlim.t_grid;
    double total = 0.0;
    std::vector<double> m(w.grid.size()), sq(w.grid.size());
    for (std::size_t t = 0; t < T; ++t) {
      std::fill(m.begin(), m.end(), 0.0);
      std::fill(sq.begin(), sq.end(), 0.0);
      for (std::size_t s = 0; s < T; ++s) {
        double l = detail::normal_pdf((tg[t] - tg[s]) / lambda) / lambda;
        if (l == 0.0) continue;
        for (std::size_t k = 0; k < m.size(); ++k) {
          m[k] += l * C[s][k];
          sq[k] += l * l * D[s][k];
        }
      }
      const double wl = temporal_edge_weight(tg[t], lambda, tlim);
      double acc = 0.0;
      for (std::size_t k = 0; k < m.size(); ++k) {
        if (!w.mask[k]) continue;
        double qw = std::max(q[k], kQFloor) * wl;
        double e = m[k] / qw - (*refs)[t].values[k];
        acc += e * e + (sq[k] - m[k] * m[k]) / (n * qw * qw);
      }
      total += tw[t] * acc * w.pixel_area;
    }
    return CritValue{total, 0};
  };
}

// ---- jointly optimal ----

Criterion1 joi_criterion(const PointPattern& cases, const PointPattern& controls, int method, double psi,
                         EdgeCorrection correction) {
  if (method < 1 || method > 3) throw ValidationError("joint selector method must be 1, 2 or 3");
  if (!(cases.window().grid == controls.window().grid) || cases.window().mask != controls.window().mask)
    throw ValidationError("cases and controls must share one window");
  require_n(cases, 3, "joint selection");
  require_n(controls, 3, "joint selection");
  WindowPtr wp = cases.window_ptr();
  if (method == 3) {
    if (psi <= 0.0) psi = os_pooled(cases, controls).h;
    auto B = std::make_shared<const WindowMask>(erode_window(*wp, 3.0 * psi));
    if (B->count() == 0) throw ValidationError("eroding the window by 3 psi leaves nothing; choose a smaller psi");
    auto fpp = std::make_shared<const Surface>(kde_second_deriv_sum(cases, psi));
    auto gpp = std::make_shared<const Surface>(kde_second_deriv_sum(controls, psi));
    const double n1 = static_cast<double>(cases.n()), n2 = static_cast<double>(controls.n());
    return [cases, controls, correction, B, fpp, gpp, n1, n2](double h) {
      check_h(h);
      CritValue cv;
      DensitySurface f = kde_fixed(cases, h, correction), g = kde_fixed(controls, h, correction);
      Surface R = rh_surface(h, cases.window());
      double a1 = 0.0, a2 = 0.0;
      for (std::size_t k = 0; k < B->mask.size(); ++k) {
        if (!B->mask[k]) continue;
        double fv = floor_density(f.z.values[k], cv.floored), gv = floor_density(g.z.values[k], cv.floored);
        a1 += R.values[k] / (n1 * fv) + R.values[k] / (n2 * gv);
        double a = fpp->values[k] / fv, b = gpp->values[k] / gv;
        a2 += 0.5 * a * a - a * b + 0.5 * b * b;
      }
      a1 *= B->pixel_area;
      a2 *= B->pixel_area;
      cv.value = a1 / (h * h) + 0.5 * std::pow(h, 4) * a2;
      return cv;
    };
  }
  auto psx = std::make_shared<const detail::PairSum>(cases.coords());
  auto psy = std::make_shared<const detail::PairSum>(controls.coords());
  return [cases, controls, method, correction, psx, psy](double h) {
    check_h(h);
    CritValue cv;
    const auto& X = cases.coords();
    const auto& Y = controls.coords();
    const WindowMask& w = cases.window();
    Field q = q_or_ones(w, h, correction);
    auto fx = density_at(*psx, X, X, h, correction, q, true);
    auto gy = density_at(*psy, Y, Y, h, correction, q, true);
    auto fy = density_at(*psx, X, Y, h, correction, q, false);
    auto gx = density_at(*psy, Y, X, h, correction, q, false);
    for (auto* v : {&fx, &gy, &fy, &gx})
      for (double& x : *v) x = floor_density(x, cv.floored);
    const double n1 = static_cast<double>(X.size()), n2 = static_cast<double>(Y.size());
    double sy = 0.0, sx = 0.0;
    for (std::size_t j = 0; j < Y.size(); ++j) {
      double rho = std::log(fy[j]) - std::log(gy[j]);
      sy += method == 1 ? rho / gy[j] : rho * rho;
    }
    for (std::size_t i = 0; i < X.size(); ++i) {
      double rho = std::log(fx[i]) - std::log(gx[i]);
      sx += method == 1 ? rho / fx[i] : rho;
    }
    if (method == 2) {
      cv.value = sy / n2 - 2.0 * sx / n1;
      return cv;
    }
    DensitySurface f = kde_fixed(cases, h, correction), g = kde_fixed(controls, h, correction);
    double r2 = 0.0;
    for (std::size_t k = 0; k < w.mask.size(); ++k) {
      if (!w.mask[k]) continue;
      double r = std::log(floor_density(f.z.values[k], cv.floored)) - std::log(floor_density(g.z.values[k], cv.floored));
      r2 += r * r;
    }
    cv.value = 2.0 * sy / n2 - 2.0 * sx / n1 - r2 * w.pixel_area;
    return cv;
  };
}

Criterion2 joi4_criterion(const PointPattern& cases, const PointPattern& controls, const TemporalInterval& tlim) {
  if (!cases.has_times() || !controls.has_times())
    throw ValidationError(
        "the space-time joint selector needs times for both cases and controls; with a time-constant control "
        "density the criterion is not defined");
  if (!(cases.window().grid == controls.window().grid) || cases.window().mask != controls.window().mask)
    throw ValidationError("cases and controls must share one window");
  require_n(cases, 3, "joint selection");
  require_n(controls, 3, "joint selection");
  auto psx = std::make_shared<const detail::PairSum>(cases.coords(), cases.times());
  auto psy = std::make_shared<const detail::PairSum>(controls.coords(), controls.times());
  return [cases, controls, tlim, psx, psy](double h, double lambda) {
    check_h(h);
    check_h(lambda);
    CritValue cv;
    const auto& X = cases.coords();
    const auto& Y = controls.coords();
    const auto& tx = cases.times();
    const auto& ty = controls.times();
    const WindowMask& w = cases.window();
    STDensity f = kde_st(cases, h, lambda, tlim), g = kde_st(controls, h, lambda, tlim);
    const Field& q = f.q_field;
    auto fx = st_density_at(*psx, X.size(), X, tx, h, lambda, q, tlim, true);
    auto gy = st_density_at(*psy, Y.size(), Y, ty, h, lambda, q, tlim, true);
    auto fy = st_density_at(*psx, X.size(), Y, ty, h, lambda, q, tlim, false);
    auto gx = st_density_at(*psy, Y.size(), X, tx, h, lambda, q, tlim, false);
    for (auto* v : {&fx, &gy, &fy, &gx})
      for (double& x : *v) x = floor_density(x, cv.floored);
    double sy = 0.0, sx = 0.0;
    for (std::size_t j = 0; j < Y.size(); ++j) sy += (std::log(fy[j]) - std::log(gy[j])) / gy[j];
    for (std::size_t i = 0; i < X.size(); ++i) sx += (std::log(fx[i]) - std::log(gx[i])) / fx[i];
    std::vector<double> per;
    for (std::size_t s = 0; s < f.slices.size(); ++s) {
      double r2 = 0.0;
      for (std::size_t k = 0; k < w.mask.size(); ++k) {
        if (!w.mask[k]) continue;
        double r = std::log(floor_density(f.slices[s].values[k], cv.floored)) -
                   std::log(floor_density(g.slices[s].values[k], cv.floored));
        r2 += r * r;
      }
      per.push_back(r2 * w.pixel_area);
    }
    cv.value = 2.0 * sy / static_cast<double>(Y.size()) - 2.0 * sx / static_cast<double>(X.size()) -
               integrate_time(per, tlim);
    return cv;
  };
}

// ---- selectors ----

namespace {

BandwidthResult from_optim(const std::string& method, const OptimResult& o, const std::vector<std::size_t>& floored,
                           bool maximize, bool two_d) {
  BandwidthResult r;
  r.method = method;
  for (const auto& p : o.trace)
    r.trace.push_back({p.x, two_d ? p.y : std::numeric_limits<double>::quiet_NaN(), maximize ? -p.f : p.f});
  if (o.all_nonfinite)
    throw SelectionError(method + ": criterion is non-finite over the whole search range", r.trace);
  r.h = o.best.x;
  if (two_d) r.lambda = o.best.y;
  r.objective = maximize ? -o.best.f : o.best.f;
  for (std::size_t k = 0; k < o.trace.size(); ++k)
    if (o.trace[k].x == o.best.x && o.trace[k].y == o.best.y && o.trace[k].f == o.best.f) {
      r.floored = floored[k];
      break;
    }
  r.boundary_pinned = o.pinned_lo || o.pinned_hi || (two_d && (o.pinned_lo_y || o.pinned_hi_y));
  if (r.boundary_pinned) r.warnings.push_back(method + ": selected bandwidth sits on the search-range boundary");
  if (r.floored > 0) {
    std::ostringstream os;
    os << method << ": " << r.floored << " density evaluations were floored at " << kDensityFloor;
    r.warnings.push_back(os.str());
  }
  return r;
}

}  // namespace

BandwidthResult select_1d(const std::string& method, const Criterion1& f, SearchRange range, bool maximize,
                          const OptimOptions& opt) {
  if (!range.set()) throw ValidationError("search range must be given");
  std::vector<std::size_t> floored;
  auto g = [&](double h) {
    CritValue c = f(h);
    floored.push_back(c.floored);
    return maximize ? -c.value : c.value;
  };
  BandwidthResult r = from_optim(method, minimize_1d(g, range.lo, range.hi, opt), floored, maximize, false);
  r.range = range;
  return r;
}

BandwidthResult select_2d(const std::string& method, const Criterion2& f, SearchRange h_range,
                          SearchRange lambda_range, bool maximize, const OptimOptions& opt) {
  if (!h_range.set() || !lambda_range.set()) throw ValidationError("search ranges must be given");
  std::vector<std::size_t> floored;
  auto g = [&](double h, double l) {
    CritValue c = f(h, l);
    floored.push_back(c.floored);
    return maximize ? -c.value : c.value;
  };
  BandwidthResult r = from_optim(
      method, minimize_2d(g, h_range.lo, h_range.hi, lambda_range.lo, lambda_range.hi, opt), floored, maximize, true);
  r.range = h_range;
  r.lambda_range = lambda_range;
  return r;
}

BandwidthResult lscv(const PointPattern& pts, EdgeCorrection correction, SearchRange range) {
  BandwidthResult r = select_1d("lscv", lscv_criterion(pts, correction), resolve(range, default_range(pts.window())));
  if (r.boundary_pinned && r.h < std::sqrt(r.range.lo * r.range.hi) && has_coincident(pts.coords()))
    r.warnings.push_back(
        "lscv: the objective keeps falling as h shrinks; coincident points make leave-one-out cross-validation "
        "degenerate (it tends to -infinity as h -> 0)");
  return r;
}

BandwidthResult lik(const PointPattern& pts, EdgeCorrection correction, SearchRange range) {
  return select_1d("lik", lik_criterion(pts, correction), resolve(range, default_range(pts.window())), true);
}

BandwidthResult lscv_adaptive(const PointPattern& pts, double hp, double tau, EdgeCorrection correction,
                              SearchRange range) {
  range = resolve(range, default_range(pts.window()));
  return select_1d("lscv-adaptive", lscv_adaptive_criterion(pts, hp, tau, correction, range), range);
}

BandwidthResult lik_adaptive(const PointPattern& pts, double hp, double tau, EdgeCorrection correction,
                             SearchRange range) {
  range = resolve(range, default_range(pts.window()));
  return select_1d("lik-adaptive", lik_adaptive_criterion(pts, hp, tau, correction, range), range, true);
}

BandwidthResult lscv_st(const PointPattern& pts, const TemporalInterval& tlim, SearchRange h_range,
                        SearchRange lambda_range) {
  return select_2d("lscv-st", lscv_st_criterion(pts, tlim), resolve(h_range, default_range(pts.window())),
                   resolve(lambda_range, default_lambda_range(tlim)));
}

BandwidthResult lik_st(const PointPattern& pts, const TemporalInterval& tlim, SearchRange h_range,
                       SearchRange lambda_range) {
  return select_2d("lik-st", lik_st_criterion(pts, tlim), resolve(h_range, default_range(pts.window())),
                   resolve(lambda_range, default_lambda_range(tlim)), true);
}

BandwidthResult boot_fixed(const PointPattern& pts, const BootOptions& opt, SearchRange range) {
  return select_1d(opt.strategy == BootStrategy::analytic ? "boot" : "boot-resample", boot_criterion(pts, opt),
                   resolve(range, default_range(pts.window())));
}

BandwidthResult boot_adaptive(const PointPattern& pts, const BootOptions& opt, double hp, double tau,
                              SearchRange range, int candidates) {
  require_n(pts, 2, "bootstrap selection");
  if (opt.J < 50) throw ValidationError("bootstrap resampling needs J >= 50");
  if (candidates < 3) throw ValidationError("adaptive bootstrap needs at least 3 candidates");
  range = resolve(range, default_range(pts.window()));
  const double os = os_bandwidth(pts.coords()).h;
  const double eta = opt.eta > 0.0 ? opt.eta : os;
  if (hp <= 0.0) hp = os;
  const WindowMask& w = pts.window();
  PilotPtr pilot = make_pilot(pts, hp);
  Surface ref = kde_adaptive_direct(pts, abramson_bandwidths(pts, eta, pilot, tau), EdgeCorrection::uniform).z;
  auto samples = draw_samples(pixel_masses(ref, w), w.grid, pts.n(), opt.J, opt.seed);

  std::vector<double> cand, ise;
  for (const auto& xs : samples) {
    PointPattern ps(pts.window_ptr(), xs);
    MultiscaleStack st = multiscale_build(ps, range.hi, hp, range.lo / range.hi, 1.0, tau);
    if (cand.empty()) {
      cand = log_grid(st.h_min(), st.h_max(), candidates);
      ise.assign(cand.size(), 0.0);
    }
    for (std::size_t c = 0; c < cand.size(); ++c) {
      Surface z = multiscale_slice(st, cand[c]).z;
      double s = 0.0;
      for (std::size_t k = 0; k < z.values.size(); ++k)
        if (w.mask[k]) s += (z.values[k] - ref.values[k]) * (z.values[k] - ref.values[k]);
      ise[c] += s * w.pixel_area;
    }
  }
  BandwidthResult r;
  r.method = "boot-adaptive";
  r.range = {cand.front(), cand.back()};
  std::size_t best = 0;
  for (std::size_t c = 0; c < cand.size(); ++c) {
    double v = ise[c] / static_cast<double>(samples.size());
    r.trace.push_back({cand[c], std::numeric_limits<double>::quiet_NaN(), v});
    if (v < r.trace[best].value) best = c;
  }
  r.h = cand[best];
  r.objective = r.trace[best].value;
  r.boundary_pinned = best == 0 || best + 1 == cand.size();
  if (r.boundary_pinned) r.warnings.push_back("boot-adaptive: selected bandwidth sits on the search-range boundary");
  return r;
}

BandwidthResult boot_st(const PointPattern& pts, const TemporalInterval& tlim, double eta, double nu,
                        SearchRange h_range, SearchRange lambda_range) {
  return select_2d("boot-st", boot_st_criterion(pts, tlim, eta, nu), resolve(h_range, default_range(pts.window())),
                   resolve(lambda_range, default_lambda_range(tlim)));
}

BandwidthResult joi_select(const PointPattern& cases, const PointPattern& controls, int method, double psi,
                           SearchRange range) {
  return select_1d("joi" + std::to_string(method), joi_criterion(cases, controls, method, psi),
                   resolve(range, default_range(cases.window())));
}

BandwidthResult joi4_st(const PointPattern& cases, const PointPattern& controls, const TemporalInterval& tlim,
                        SearchRange h_range, SearchRange lambda_range) {
  return select_2d("joi4", joi4_criterion(cases, controls, tlim), resolve(h_range, default_range(cases.window())),
                   resolve(lambda_range, default_lambda_range(tlim)));
}

}  // namespace sprisk
