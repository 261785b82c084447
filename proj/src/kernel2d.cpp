#include "sprisk/kernel2d.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sprisk/detail/conv.hpp"
#include "sprisk/errors.hpp"

namespace sprisk {

using detail::cplx;
using detail::CplxBuf;
using detail::RealBuf;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

namespace {

// One product term h^-(2+dx+dy) phi^(dx)(s1) phi^(dy)(s2) of a kernel
// derivative.
struct Term {
  int dx;
  int dy;
};

const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
// exp(-s^2/2) underflows past this.
constexpr double kProfileCut = 38.5;

// phi^(d)(s) = (-1)^d He_d(s) phi(s), d in {0, 1, 2}.
double phi_deriv(int d, double s) {
  double p = kInvSqrt2Pi * std::exp(-0.5 * s * s);
  if (d == 0) return p;
  if (d == 1) return -s * p;
  return (s * s - 1.0) * p;
}

void check_inputs(const std::vector<Point>& pts, const std::vector<double>& weights, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("bandwidth must be positive and finite");
  if (!weights.empty() && weights.size() != pts.size()) throw ValidationError("weights and points differ in length");
}

// Column range [lo, hi] where a profile centred at c (grid units) is nonzero.
std::pair<int, int> support(double c, double reach, int n) {
  int lo = static_cast<int>(std::floor(c - reach));
  int hi = static_cast<int>(std::ceil(c + reach));
  return {std::max(lo, 0), std::min(hi, n - 1)};
}

std::vector<double> direct_sum(const Grid& g, const std::vector<Point>& pts, const std::vector<double>& weights,
                               double h, const std::vector<Term>& terms) {
  std::vector<double> out(g.size(), 0.0);
  std::vector<double> px(g.nx), py(g.ny);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    double w = weights.empty() ? 1.0 : weights[k];
    if (w == 0.0) continue;
    const Point p = pts[k];
    auto [ilo, ihi] = support((p.x - g.x0) / g.dx - 0.5, kProfileCut * h / g.dx, g.nx);
    auto [jlo, jhi] = support((p.y - g.y0) / g.dy - 0.5, kProfileCut * h / g.dy, g.ny);
    for (const Term& t : terms) {
      double scale = w * std::pow(h, -(2.0 + t.dx + t.dy));
      for (int i = ilo; i <= ihi; ++i) px[i] = phi_deriv(t.dx, (g.xc(i) - p.x) / h);
      for (int j = jlo; j <= jhi; ++j) py[j] = scale * phi_deriv(t.dy, (g.yc(j) - p.y) / h);
      for (int j = jlo; j <= jhi; ++j) {
        double* row = out.data() + g.index(0, j);
        for (int i = ilo; i <= ihi; ++i) row[i] += py[j] * px[i];
      }
    }
  }
  return out;
}

// Exact kernel profiles along x; along y each point sits at its nearest row
// and the sub-row offset d = (y_k - y_row)/h is carried by the series
//   phi^(dy)(t - d) = (-1)^dy sum_m d^m/m! He_{dy+m}(t) phi(t),
// truncated once the terms drop below ~1e-13 of the peak. The row
// convolutions run as column FFTs.
std::vector<double> exact_sum(const Grid& g, const std::vector<Point>& pts, const std::vector<double>& weights,
                              double h, const std::vector<Term>& terms) {
  const int nx = g.nx, ny = g.ny;
  const std::size_t n = pts.size();
  std::vector<int> row(n);
  std::vector<double> off(n);
  double dmax = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double fy = (pts[k].y - g.y0) / g.dy - 0.5;
    int j = std::clamp(static_cast<int>(std::lround(fy)), 0, ny - 1);
    row[k] = j;
    off[k] = (pts[k].y - g.yc(j)) / h;
    dmax = std::max(dmax, std::abs(off[k]));
  }
  if (dmax > 0.75) return direct_sum(g, pts, weights, h, terms);

  int dymax = 0;
  for (const Term& t : terms) dymax = std::max(dymax, t.dy);
  auto bound = [&](int m) {
    if (dmax == 0.0) return 0.0;
    return std::exp(m * std::log(dmax) + 0.5 * std::lgamma(m + dymax + 1.0) - std::lgamma(m + 1.0));
  };
  int M = 0;
  while (M < 60 && bound(M + 1) > 1e-13) ++M;

  const long reach = static_cast<long>(std::ceil(9.0 * h / g.dy)) + 1;
  const int py = static_cast<int>(detail::fast_size(static_cast<std::size_t>(ny + std::min<long>(reach, ny - 1))));
  const int hy = py / 2 + 1;

  // y-kernel spectra, one per Hermite order.
  const int rmax = M + dymax;
  std::vector<std::vector<double>> seq(rmax + 1, std::vector<double>(py));
  for (int k = 0; k < py; ++k) {
    long o = k <= py / 2 ? k : k - py;
    double t = o * g.dy / h;
    double ph = kInvSqrt2Pi * std::exp(-0.5 * t * t);
    double hm1 = 0.0, hr = 1.0;
    for (int r = 0; r <= rmax; ++r) {
      seq[r][k] = hr * ph;
      double next = t * hr - r * hm1;
      hm1 = hr;
      hr = next;
    }
  }
  std::vector<std::vector<cplx>> kspec(rmax + 1);
  for (int r = 0; r <= rmax; ++r) kspec[r] = detail::dft_real(seq[r]);

  // x profiles per distinct derivative order.
  struct Profile {
    int dx;
    std::vector<double> v;  // n * nx
  };
  std::vector<Profile> profiles;
  std::vector<std::pair<int, int>> span(n);
  for (std::size_t k = 0; k < n; ++k) span[k] = support((pts[k].x - g.x0) / g.dx - 0.5, kProfileCut * h / g.dx, nx);
  for (const Term& t : terms) {
    bool have = false;
    for (const Profile& p : profiles) have |= p.dx == t.dx;
    if (have) continue;
    Profile p{t.dx, std::vector<double>(n * static_cast<std::size_t>(nx), 0.0)};
    double scale = std::pow(h, -(1.0 + t.dx));
    for (std::size_t k = 0; k < n; ++k)
      for (int i = span[k].first; i <= span[k].second; ++i)
        p.v[k * nx + i] = scale * phi_deriv(t.dx, (g.xc(i) - pts[k].x) / h);
    profiles.push_back(std::move(p));
  }

  RealBuf T(static_cast<std::size_t>(py) * nx);
  CplxBuf F(static_cast<std::size_t>(hy) * nx);
  CplxBuf S(static_cast<std::size_t>(hy) * nx, cplx(0.0, 0.0));
  std::vector<double> pw(n);
  for (std::size_t k = 0; k < n; ++k) pw[k] = weights.empty() ? 1.0 : weights[k];
  for (int m = 0; m <= M; ++m) {
    if (m > 0)
      for (std::size_t k = 0; k < n; ++k) pw[k] *= off[k] / m;
    for (const Term& t : terms) {
      const std::vector<double>* prof = nullptr;
      for (const Profile& p : profiles)
        if (p.dx == t.dx) prof = &p.v;
      std::fill(T.begin(), T.end(), 0.0);
      bool any = false;
      for (std::size_t k = 0; k < n; ++k) {
        double c = pw[k];
        if (c == 0.0) continue;
        any = true;
        double* trow = T.data() + static_cast<std::size_t>(row[k]) * nx;
        const double* pr = prof->data() + k * nx;
        for (int i = span[k].first; i <= span[k].second; ++i) trow[i] += c * pr[i];
      }
      if (!any) continue;
      detail::r2c_cols(py, nx, T.data(), F.data());
      const std::vector<cplx>& ks = kspec[t.dy + m];
      const double sign = (t.dy % 2) ? -1.0 : 1.0;
      const double yscale = sign * std::pow(h, -(1.0 + t.dy));
      for (int ky = 0; ky < hy; ++ky) {
        cplx kk = ks[ky] * yscale;
        cplx* s = S.data() + static_cast<std::size_t>(ky) * nx;
        const cplx* f = F.data() + static_cast<std::size_t>(ky) * nx;
        for (int i = 0; i < nx; ++i) s[i] += kk * f[i];
      }
    }
  }
  detail::c2r_cols(py, nx, S.data(), T.data());
  std::vector<double> out(g.size());
  const double inv = 1.0 / py;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) out[g.index(i, j)] = T[static_cast<std::size_t>(j) * nx + i] * inv;
  return out;
}

std::vector<double> linear_sum(const Grid& g, const std::vector<Point>& pts, const std::vector<double>& weights,
                               double h) {
  std::vector<double> bins(g.size(), 0.0);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    double w = weights.empty() ? 1.0 : weights[k];
    Stencil s = bilinear_stencil(g, pts[k]);
    for (int c = 0; c < 4; ++c) bins[s.idx[c]] += w * s.w[c];
  }
  detail::GridConvolver conv(g.nx, g.ny, static_cast<long>(std::ceil(8.0 * h / g.dx)) + 1,
                             static_cast<long>(std::ceil(8.0 * h / g.dy)) + 1);
  auto spec = conv.forward(bins);
  const double dx = g.dx, dy = g.dy;
  auto term = conv.term([&](long o) { return phi_deriv(0, o * dx / h) / h; },
                        [&](long o) { return phi_deriv(0, o * dy / h) / h; });
  return conv.apply(spec, {term});
}

long reach_of(double h, double d) { return static_cast<long>(std::ceil(9.0 * h / d)) + 1; }

}  // namespace

std::vector<double> kernel_sum(const Grid& g, const std::vector<Point>& pts, const std::vector<double>& weights,
                               double h, Binning binning) {
  check_inputs(pts, weights, h);
  if (binning == Binning::linear) return linear_sum(g, pts, weights, h);
  return exact_sum(g, pts, weights, h, {Term{0, 0}});
}

std::vector<double> laplacian_sum(const Grid& g, const std::vector<Point>& pts, const std::vector<double>& weights,
                                  double psi) {
  check_inputs(pts, weights, psi);
  return exact_sum(g, pts, weights, psi, {Term{2, 0}, Term{0, 2}});
}

namespace {

struct ConvState {
  detail::GridConvolver conv;
  detail::CplxBuf spec;
};

}  // namespace

WindowConvolver::WindowConvolver(const WindowMask& w, double h_max) : w_(&w), hg_(halo_grid(w.grid)) {
  if (!(h_max > 0.0) || !std::isfinite(h_max)) throw ValidationError("bandwidth must be positive and finite");
  auto st = std::make_shared<ConvState>(
      ConvState{detail::GridConvolver(hg_.nx, hg_.ny, reach_of(h_max, hg_.dx), reach_of(h_max, hg_.dy)), {}});
  st->spec = st->conv.forward(halo_mask(w));
  impl_ = st;
}

Field WindowConvolver::operator()(double h, WindowKernel kind) const {
  if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("bandwidth must be positive and finite");
  const auto& st = *static_cast<const ConvState*>(impl_.get());
  const detail::GridConvolver& conv = st.conv;
  const double dx = hg_.dx / h, dy = hg_.dy / h;
  std::vector<detail::SepTerm> terms;
  auto s = [](int k, long o, double d) { return detail::gauss_sq_moment_cell(k, (o - 0.5) * d, (o + 0.5) * d); };
  switch (kind) {
    case WindowKernel::gauss:
      terms.push_back(conv.term([&](long o) { return detail::gauss_cell((o - 0.5) * dx, (o + 0.5) * dx); },
                                [&](long o) { return detail::gauss_cell((o - 0.5) * dy, (o + 0.5) * dy); }));
      break;
    case WindowKernel::gauss_sq:
      terms.push_back(conv.term([&](long o) { return s(0, o, dx); }, [&](long o) { return s(0, o, dy); }));
      break;
    case WindowKernel::m_sq:
      // (2 - a - b)^2 with a = t1^2, b = t2^2 split into separable pieces.
      terms.push_back(conv.term([&](long o) { return s(4, o, dx) - 4.0 * s(2, o, dx) + 4.0 * s(0, o, dx); },
                                [&](long o) { return s(0, o, dy); }));
      terms.push_back(conv.term([&](long o) { return s(0, o, dx); },
                                [&](long o) { return s(4, o, dy) - 4.0 * s(2, o, dy); }));
      terms.push_back(conv.term([&](long o) { return 2.0 * s(2, o, dx); }, [&](long o) { return s(2, o, dy); }));
      break;
  }
  Field f{hg_, conv.apply(st.spec, terms)};
  for (double& x : f.v) x = std::max(x, 0.0);
  return f;
}

Field WindowConvolver::edge_factor(double h, std::size_t* clamped) const {
  Field q = (*this)(h, WindowKernel::gauss);
  const WindowMask& w = *w_;
  const Grid& g = w.grid;
  double qmax = 0.0;
  std::size_t nclamp = 0;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      if (!w.inside(i, j)) continue;
      double v = q.v[q.grid.index(i + 1, j + 1)];
      qmax = std::max(qmax, v);
      if (v < kQFloor) ++nclamp;
    }
  for (double& v : q.v) v = std::clamp(v, kQFloor, 1.0);
  if (qmax < 0.01) {
    std::ostringstream os;
    os << "bandwidth " << h << " is too large for the window (max edge factor " << qmax << " < 0.01)";
    throw ValidationError(os.str());
  }
  if (clamped) *clamped = nclamp;
  return q;
}

Field window_convolution(const WindowMask& w, double h, WindowKernel kind) { return WindowConvolver(w, h)(h, kind); }

Field edge_factor_field(const WindowMask& w, double h, std::size_t* clamped) {
  return WindowConvolver(w, h).edge_factor(h, clamped);
}

Surface edge_correction_surface(double h, const WindowMask& w) {
  return masked_surface(w, edge_factor_field(w, h).inner());
}

DensitySurface kde_fixed_weighted(const WindowMask& w, const std::vector<Point>& pts,
                                  const std::vector<double>& weights, double norm, double h,
                                  EdgeCorrection correction, Binning binning, const WindowConvolver* wc) {
  if (pts.empty()) throw ValidationError("point pattern is empty");
  check_inputs(pts, weights, h);
  if (!(norm > 0.0)) throw ValidationError("normalizing constant must be positive");
  const Grid hg = halo_grid(w.grid);
  DensitySurface d;
  d.h = h;
  d.correction = correction;
  d.n = pts.size();
  if (correction == EdgeCorrection::none)
    d.q_field = Field{hg, std::vector<double>(hg.size(), 1.0)};
  else
    d.q_field = wc ? wc->edge_factor(h, &d.q_clamped) : edge_factor_field(w, h, &d.q_clamped);
  std::vector<double> wt = weights;
  if (correction == EdgeCorrection::diggle) {
    if (wt.empty()) wt.assign(pts.size(), 1.0);
    for (std::size_t k = 0; k < pts.size(); ++k) wt[k] /= std::max(d.q_field.at(pts[k]), kQFloor);
  }
  d.field = Field{hg, kernel_sum(hg, pts, wt, h, binning)};
  const double inv = 1.0 / norm;
  for (std::size_t k = 0; k < d.field.v.size(); ++k) {
    d.field.v[k] *= inv;
    if (correction == EdgeCorrection::uniform) d.field.v[k] /= d.q_field.v[k];
  }
  d.z = masked_surface(w, d.field.inner());
  d.q = masked_surface(w, d.q_field.inner());
  return d;
}

DensitySurface kde_fixed(const PointPattern& pts, double h, EdgeCorrection correction, Binning binning) {
  return kde_fixed_weighted(pts.window(), pts.coords(), {}, static_cast<double>(pts.n()), h, correction, binning);
}

Surface kde_second_deriv_sum(const PointPattern& pts, double psi) {
  std::vector<double> v = laplacian_sum(pts.window().grid, pts.coords(), {}, psi);
  const double inv = 1.0 / static_cast<double>(pts.n());
  for (double& x : v) x *= inv;
  return masked_surface(pts.window(), v);
}

double RhParts::at(Point p) const {
  double qq = std::max(q.at(p), kQFloor);
  return k2.at(p) / (qq * qq);
}

RhParts rh_parts(double h, const WindowMask& w) {
  return RhParts{window_convolution(w, h, WindowKernel::gauss_sq), edge_factor_field(w, h)};
}

Surface rh_surface(double h, const WindowMask& w) {
  RhParts r = rh_parts(h, w);
  std::vector<double> v(r.k2.v.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = r.k2.v[k] / (r.q.v[k] * r.q.v[k]);
  return masked_surface(w, Field{r.k2.grid, v}.inner());
}

}  // namespace sprisk
