#include "sprisk/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numbers>
#include <sstream>

#include "sprisk/detail/conv.hpp"
#include "sprisk/errors.hpp"

namespace sprisk {

namespace {

const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
constexpr double kProfileCut = 38.5;

double masked_max(const Surface& s) {
  double m = 0.0;
  for (double v : s.values)
    if (std::isfinite(v)) m = std::max(m, v);
  return m;
}

std::uint64_t fnv(std::uint64_t h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < bytes; ++k) {
    h ^= p[k];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

PilotPtr make_pilot(const PointPattern& pts, double hp) {
  return std::make_shared<const DensitySurface>(kde_fixed(pts, hp, EdgeCorrection::uniform));
}

double AdaptiveBandwidths::factor(double f) const {
  double lb = -0.5 * std::log(std::max(f, pilot_floor));
  return std::exp(std::min(lb, std::log(tau) + log_gamma) - log_gamma_div);
}

Field AdaptiveBandwidths::field() const {
  Field f{pilot->field.grid, pilot->field.v};
  for (double& v : f.v) v = h0 * factor(v);
  return f;
}

AdaptiveBandwidths abramson_bandwidths(const std::vector<Point>& pts, double h0, PilotPtr pilot, double tau,
                                       std::optional<double> gamma_override) {
  if (!(h0 > 0.0) || !std::isfinite(h0)) throw ValidationError("global bandwidth must be positive and finite");
  if (!(tau > 0.0)) throw ValidationError("tau must be positive");
  if (!pilot) throw ValidationError("pilot density is missing");
  if (pts.empty()) throw ValidationError("point pattern is empty");
  if (gamma_override && !(*gamma_override > 0.0)) throw ValidationError("gamma override must be positive");
  const double peak = masked_max(pilot->z);
  if (!(peak > 0.0)) throw ValidationError("pilot density is zero everywhere");

  AdaptiveBandwidths bw;
  bw.h0 = h0;
  bw.hp = pilot->h;
  bw.tau = tau;
  bw.pilot = pilot;
  bw.pilot_floor = 1e-12 * peak;
  const std::size_t n = pts.size();
  std::vector<double> lb(n);
  for (std::size_t i = 0; i < n; ++i) lb[i] = -0.5 * std::log(std::max(pilot->at(pts[i]), bw.pilot_floor));
  // Mean taken relative to the first term so a constant pilot gives exactly 1.
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += lb[i] - lb[0];
  bw.log_gamma = lb[0] + acc / static_cast<double>(n);
  bw.gamma = std::exp(bw.log_gamma);
  bw.log_gamma_div = gamma_override ? std::log(*gamma_override) : bw.log_gamma;
  bw.gamma_div = gamma_override ? *gamma_override : bw.gamma;
  const double lclip = std::log(tau) + bw.log_gamma;
  bw.per_point.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (lb[i] > lclip) ++bw.clipped;
    bw.per_point[i] = h0 * std::exp(std::min(lb[i], lclip) - bw.log_gamma_div);
  }
  return bw;
}

AdaptiveBandwidths abramson_bandwidths(const PointPattern& pts, double h0, PilotPtr pilot, double tau,
                                       std::optional<double> gamma_override) {
  if (pilot && !(pilot->z.grid == pts.window().grid)) throw ValidationError("pilot grid does not match the window");
  return abramson_bandwidths(pts.coords(), h0, std::move(pilot), tau, gamma_override);
}

BandwidthLadder::BandwidthLadder(const WindowMask& w, WindowKernel kind, double h_min, double h_max, int rungs) {
  if (!(h_min > 0.0) || !(h_max >= h_min) || !std::isfinite(h_max)) throw ValidationError("invalid bandwidth range");
  if (rungs < 2) throw ValidationError("ladder needs at least two rungs");
  log_anchor_ = std::log(h_min);
  if (h_max / h_min - 1.0 < 1e-12) {
    hs_ = {h_min};
  } else {
    step_ = std::log(h_max / h_min) / (rungs - 1);
    for (int k = 0; k < rungs; ++k) hs_.push_back(k == 0 ? h_min : h_min * std::exp(k * step_));
    hs_.back() = std::max(hs_.back(), h_max);
  }
  build(w, kind);
}

BandwidthLadder::BandwidthLadder(const WindowMask& w, WindowKernel kind, double anchor, double step, int k_lo,
                                 int k_hi)
    : log_anchor_(std::log(anchor)), step_(step), k_lo_(k_lo) {
  if (!(anchor > 0.0) || !(step > 0.0) || k_hi < k_lo) throw ValidationError("invalid bandwidth ladder");
  for (int k = k_lo; k <= k_hi; ++k) hs_.push_back(k == 0 ? anchor : anchor * std::exp(k * step));
  build(w, kind);
}

void BandwidthLadder::build(const WindowMask& w, WindowKernel kind) {
  WindowConvolver wc(w, hs_.back());
  rungs_.reserve(hs_.size());
  for (double h : hs_) rungs_.push_back(kind == WindowKernel::gauss ? wc.edge_factor(h) : wc(h, kind));
}

std::pair<std::size_t, double> BandwidthLadder::locate(double h) const {
  if (hs_.size() == 1) return {0, 0.0};
  double pos = (std::log(h) - log_anchor_) / step_ - k_lo_;
  const double last = static_cast<double>(hs_.size() - 1);
  pos = std::clamp(pos, 0.0, last);
  double r = std::floor(pos);
  if (r >= last) return {hs_.size() - 1, 0.0};
  return {static_cast<std::size_t>(r), pos - r};
}

double BandwidthLadder::at(std::size_t idx, double h) const {
  auto [r, t] = locate(h);
  double v = rungs_[r].v[idx];
  if (t > 0.0) v = (1.0 - t) * v + t * rungs_[r + 1].v[idx];
  return v;
}

double BandwidthLadder::at(Point p, double h) const {
  auto [r, t] = locate(h);
  double v = rungs_[r].at(p);
  if (t > 0.0) v = (1.0 - t) * v + t * rungs_[r + 1].at(p);
  return v;
}

Field BandwidthLadder::field(const Field& hfield) const {
  if (!(hfield.grid == rungs_.front().grid)) throw ValidationError("bandwidth field grid does not match the ladder");
  Field f{hfield.grid, std::vector<double>(hfield.v.size())};
  for (std::size_t k = 0; k < f.v.size(); ++k) f.v[k] = at(k, hfield.v[k]);
  return f;
}

std::vector<double> adaptive_kernel_sum(const Grid& g, const std::vector<Point>& pts, const std::vector<double>& hs,
                                        const std::vector<double>& weights) {
  if (hs.size() != pts.size()) throw ValidationError("bandwidths and points differ in length");
  if (!weights.empty() && weights.size() != pts.size()) throw ValidationError("weights and points differ in length");
  for (double h : hs)
    if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("bandwidths must be positive and finite");
  if (pts.empty()) return std::vector<double>(g.size(), 0.0);
  if (std::all_of(hs.begin(), hs.end(), [&](double h) { return h == hs[0]; }))
    return kernel_sum(g, pts, weights, hs[0]);

  std::vector<double> out(g.size(), 0.0);
  std::vector<double> px(g.nx), py(g.ny);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double w = weights.empty() ? 1.0 : weights[k];
    if (w == 0.0) continue;
    const double h = hs[k];
    const Point p = pts[k];
    const double cx = (p.x - g.x0) / g.dx - 0.5, cy = (p.y - g.y0) / g.dy - 0.5;
    const int ilo = std::max(0, static_cast<int>(std::floor(cx - kProfileCut * h / g.dx)));
    const int ihi = std::min(g.nx - 1, static_cast<int>(std::ceil(cx + kProfileCut * h / g.dx)));
    const int jlo = std::max(0, static_cast<int>(std::floor(cy - kProfileCut * h / g.dy)));
    const int jhi = std::min(g.ny - 1, static_cast<int>(std::ceil(cy + kProfileCut * h / g.dy)));
    if (ilo > ihi || jlo > jhi) continue;
    const double sx = kInvSqrt2Pi / h, sy = w * kInvSqrt2Pi / h;
    for (int i = ilo; i <= ihi; ++i) {
      double s = (g.xc(i) - p.x) / h;
      px[i] = sx * std::exp(-0.5 * s * s);
    }
    for (int j = jlo; j <= jhi; ++j) {
      double s = (g.yc(j) - p.y) / h;
      py[j] = sy * std::exp(-0.5 * s * s);
    }
    for (int j = jlo; j <= jhi; ++j) {
      double* row = out.data() + g.index(0, j);
      const double c = py[j];
      for (int i = ilo; i <= ihi; ++i) row[i] += c * px[i];
    }
  }
  return out;
}

DensitySurface kde_adaptive_direct(const WindowMask& w, const std::vector<Point>& pts, const std::vector<double>& hs,
                                   double norm, const AdaptiveBandwidths& bw, EdgeCorrection correction) {
  if (pts.empty()) throw ValidationError("point pattern is empty");
  if (hs.size() != pts.size()) throw ValidationError("bandwidths and points differ in length");
  if (!(norm > 0.0)) throw ValidationError("normalizing constant must be positive");
  const Grid hg = halo_grid(w.grid);
  if (!(bw.pilot->field.grid == hg)) throw ValidationError("pilot grid does not match the window");
  DensitySurface d;
  d.h = bw.h0;
  d.correction = correction;
  d.n = pts.size();
  d.q_field = Field{hg, std::vector<double>(hg.size(), 1.0)};
  std::vector<double> wt;
  if (correction == EdgeCorrection::uniform) {
    Field hf = bw.field();
    auto [lo, hi] = std::minmax_element(hf.v.begin(), hf.v.end());
    BandwidthLadder ladder(w, WindowKernel::gauss, *lo, *hi);
    d.q_field = ladder.field(hf);
  } else if (correction == EdgeCorrection::diggle) {
    auto [lo, hi] = std::minmax_element(hs.begin(), hs.end());
    BandwidthLadder ladder(w, WindowKernel::gauss, *lo, *hi);
    wt.resize(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) wt[k] = 1.0 / std::max(ladder.at(pts[k], hs[k]), kQFloor);
  }
  d.field = Field{hg, adaptive_kernel_sum(hg, pts, hs, wt)};
  const double inv = 1.0 / norm;
  for (std::size_t k = 0; k < d.field.v.size(); ++k) {
    d.field.v[k] *= inv;
    if (correction == EdgeCorrection::uniform) d.field.v[k] /= d.q_field.v[k];
  }
  for (int j = 0; j < w.grid.ny; ++j)
    for (int i = 0; i < w.grid.nx; ++i)
      if (w.inside(i, j) && d.q_field.v[hg.index(i + 1, j + 1)] <= kQFloor) ++d.q_clamped;
  d.z = masked_surface(w, d.field.inner());
  d.q = masked_surface(w, d.q_field.inner());
  return d;
}

DensitySurface kde_adaptive_direct(const PointPattern& pts, const AdaptiveBandwidths& bw, EdgeCorrection correction) {
  if (bw.per_point.size() != pts.n()) throw ValidationError("bandwidths do not match the point pattern");
  return kde_adaptive_direct(pts.window(), pts.coords(), bw.per_point, static_cast<double>(pts.n()), bw, correction);
}

BandwidthBins partition_bandwidths(const std::vector<double>& hs, double delta) {
  if (!(delta > 0.0) || !(delta < 1.0)) throw ValidationError("quantile step must lie in (0, 1)");
  const long D = std::lround(1.0 / delta);
  if (D < 2 || std::abs(static_cast<double>(D) * delta - 1.0) > 1e-9)
    throw ValidationError("quantile step must have an integer reciprocal of at least 2");
  if (hs.empty()) throw ValidationError("no bandwidths to partition");
  std::vector<double> s = hs;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  std::vector<double> Q(D + 1);
  for (long d = 0; d <= D; ++d) {
    double pos = static_cast<double>(n - 1) * static_cast<double>(d) / static_cast<double>(D);
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    if (lo + 1 >= n) {
      Q[d] = s[n - 1];
    } else {
      Q[d] = s[lo] + (pos - static_cast<double>(lo)) * (s[lo + 1] - s[lo]);
    }
  }
  Q[D] = s[n - 1];
  BandwidthBins b;
  b.midpoint.resize(D);
  b.count.assign(D, 0);
  for (long d = 0; d < D; ++d) b.midpoint[d] = 0.5 * (Q[d] + Q[d + 1]);
  b.bin.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = std::lower_bound(Q.begin() + 1, Q.end(), hs[i]);
    int d = static_cast<int>(it - (Q.begin() + 1));
    b.bin[i] = d;
    ++b.count[d];
  }
  return b;
}

DensitySurface kde_adaptive_partitioned(const PointPattern& pts, const AdaptiveBandwidths& bw, double delta,
                                        EdgeCorrection correction, Binning binning) {
  if (bw.per_point.size() != pts.n()) throw ValidationError("bandwidths do not match the point pattern");
  BandwidthBins bins = partition_bandwidths(bw.per_point, delta);
  const WindowMask& w = pts.window();
  const std::size_t D = bins.midpoint.size();
  std::vector<std::vector<Point>> subsets(D);
  for (std::size_t i = 0; i < pts.n(); ++i) subsets[bins.bin[i]].push_back(pts.coords()[i]);
  double hmax = 0.0;
  for (std::size_t d = 0; d < D; ++d)
    if (bins.count[d]) hmax = std::max(hmax, bins.midpoint[d]);
  std::unique_ptr<WindowConvolver> wc;
  if (correction != EdgeCorrection::none) wc = std::make_unique<WindowConvolver>(w, hmax);

  const Grid hg = halo_grid(w.grid);
  DensitySurface out;
  out.h = bw.h0;
  out.correction = correction;
  out.n = pts.n();
  out.field = Field{hg, std::vector<double>(hg.size(), 0.0)};
  std::vector<double> raw(hg.size(), 0.0);
  const double n = static_cast<double>(pts.n());
  for (std::size_t d = 0; d < D; ++d) {
    if (!bins.count[d]) continue;
    DensitySurface c = kde_fixed_weighted(w, subsets[d], {}, n, bins.midpoint[d], correction, binning, wc.get());
    out.q_clamped = std::max(out.q_clamped, c.q_clamped);
    for (std::size_t k = 0; k < raw.size(); ++k) {
      out.field.v[k] += c.field.v[k];
      raw[k] += correction == EdgeCorrection::uniform ? c.field.v[k] * c.q_field.v[k] : c.field.v[k];
    }
  }
  // Effective correction: ratio of the uncorrected to the corrected sum.
  out.q_field = Field{hg, std::vector<double>(hg.size(), 1.0)};
  if (correction == EdgeCorrection::uniform)
    for (std::size_t k = 0; k < raw.size(); ++k)
      if (out.field.v[k] > 0.0) out.q_field.v[k] = std::clamp(raw[k] / out.field.v[k], kQFloor, 1.0);
  out.z = masked_surface(w, out.field.inner());
  out.q = masked_surface(w, out.q_field.inner());
  return out;
}

double MultiscaleStack::h_min() const { return h0 * std::exp(k_lo * step); }
double MultiscaleStack::h_max() const {
  return h0 * std::exp((k_lo + static_cast<int>(planes.size()) - 1) * step);
}

MultiscaleStack multiscale_build(const PointPattern& pts, const AdaptiveBandwidths& bw, double lo, double hi,
                                 EdgeCorrection correction, int nplanes) {
  if (!(lo > 0.0) || !(hi > lo)) throw ValidationError("multiscale range needs 0 < lo < hi");
  if (nplanes < 2) throw ValidationError("multiscale needs at least two planes");
  if (correction == EdgeCorrection::diggle) throw ValidationError("multiscale estimation supports none or uniform correction");
  if (bw.per_point.size() != pts.n()) throw ValidationError("bandwidths do not match the point pattern");
  const WindowMask& w = pts.window();
  const Grid hg = halo_grid(w.grid);
  if (!(bw.pilot->field.grid == hg)) throw ValidationError("pilot grid does not match the window");

  MultiscaleStack st;
  st.h0 = bw.h0;
  st.lo = lo;
  st.hi = hi;
  st.correction = correction;
  st.step = std::log(hi / lo) / (nplanes - 1);
  st.k_lo = static_cast<int>(std::ceil(std::log(lo) / st.step - 1e-9));
  const int k_hi = static_cast<int>(std::floor(std::log(hi) / st.step + 1e-9));
  if (k_hi < st.k_lo) throw ValidationError("multiscale range holds no plane");
  const int P = k_hi - st.k_lo + 1;

  // Log-factor grid four times finer than the planes; bandwidth of plane k
  // acting on node j is h0 exp((4k + j) fine).
  constexpr int kRefine = 4;
  const double fine = st.step / kRefine;
  const std::size_t n = pts.n();
  std::vector<int> node(n);
  std::vector<double> frac(n);
  int j_lo = 0, j_hi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double u = std::log(bw.per_point[i] / bw.h0) / fine;
    node[i] = static_cast<int>(std::floor(u));
    frac[i] = u - node[i];
    if (i == 0) j_lo = j_hi = node[i];
    j_lo = std::min(j_lo, node[i]);
    j_hi = std::max(j_hi, node[i] + (frac[i] > 0.0 ? 1 : 0));
  }
  const int J = j_hi - j_lo + 1;
  std::vector<std::vector<double>> bins(J);
  for (std::size_t i = 0; i < n; ++i) {
    Stencil s = bilinear_stencil(hg, pts.coords()[i]);
    for (int side = 0; side < 2; ++side) {
      double wt = side == 0 ? 1.0 - frac[i] : frac[i];
      if (wt == 0.0) continue;
      auto& b = bins[node[i] + side - j_lo];
      if (b.empty()) b.assign(hg.size(), 0.0);
      for (int c = 0; c < 4; ++c) b[s.idx[c]] += wt * s.w[c];
    }
  }

  auto width = [&](int m) { return m == 0 ? bw.h0 : bw.h0 * std::exp(m * fine); };
  const double hbig = width(kRefine * k_hi + j_hi);
  detail::GridConvolver conv(hg.nx, hg.ny, static_cast<long>(std::ceil(8.0 * hbig / hg.dx)) + 1,
                             static_cast<long>(std::ceil(8.0 * hbig / hg.dy)) + 1);
  std::map<int, std::pair<std::vector<detail::cplx>, std::vector<detail::cplx>>> kern;
  auto spectrum = [&](int m) -> const auto& {
    auto it = kern.find(m);
    if (it != kern.end()) return it->second;
    const double h = width(m);
    auto fx = detail::dft_real(detail::circular(conv.px(), [&](long o) {
      double s = o * hg.dx / h;
      return kInvSqrt2Pi * std::exp(-0.5 * s * s) / h;
    }));
    auto fy = detail::dft_real(detail::circular(conv.py(), [&](long o) {
      double s = o * hg.dy / h;
      return kInvSqrt2Pi * std::exp(-0.5 * s * s) / h;
    }));
    return kern.emplace(m, std::make_pair(std::move(fx), std::move(fy))).first->second;
  };

  std::vector<detail::CplxBuf> acc(P, detail::CplxBuf(conv.spectrum_size(), detail::cplx(0.0, 0.0)));
  for (int jj = 0; jj < J; ++jj) {
    if (bins[jj].empty()) continue;
    detail::CplxBuf spec = conv.forward(bins[jj]);
    for (int p = 0; p < P; ++p) {
      const auto& [fx, fy] = spectrum(kRefine * (st.k_lo + p) + jj + j_lo);
      conv.accumulate(acc[p], spec, fx, fy);
    }
  }

  // Per-node bandwidth factor and the edge-factor ladder it needs.
  std::vector<double> cfac(hg.size(), 1.0);
  std::unique_ptr<BandwidthLadder> ladder;
  if (correction == EdgeCorrection::uniform) {
    for (std::size_t k = 0; k < cfac.size(); ++k) cfac[k] = bw.factor(bw.pilot->field.v[k]);
    auto [cmin, cmax] = std::minmax_element(cfac.begin(), cfac.end());
    const double qstep = 2.0 * fine;
    int q_lo = static_cast<int>(std::floor((st.k_lo * st.step + std::log(*cmin)) / qstep - 1e-9));
    int q_hi = static_cast<int>(std::ceil((k_hi * st.step + std::log(*cmax)) / qstep + 1e-9));
    ladder = std::make_unique<BandwidthLadder>(w, WindowKernel::gauss, bw.h0, qstep, q_lo, q_hi);
  }

  const double inv = 1.0 / static_cast<double>(n);
  st.planes.resize(P);
  for (int p = 0; p < P; ++p) {
    const int k = st.k_lo + p;
    const double H = k == 0 ? bw.h0 : bw.h0 * std::exp(k * st.step);
    DensitySurface& d = st.planes[p];
    d.h = H;
    d.correction = correction;
    d.n = n;
    d.field = Field{hg, conv.inverse(acc[p])};
    d.q_field = Field{hg, std::vector<double>(hg.size(), 1.0)};
    for (std::size_t idx = 0; idx < hg.size(); ++idx) {
      if (ladder) d.q_field.v[idx] = ladder->at(idx, H * cfac[idx]);
      d.field.v[idx] *= inv;
      if (ladder) d.field.v[idx] /= d.q_field.v[idx];
    }
    d.z = masked_surface(w, d.field.inner());
    d.q = masked_surface(w, d.q_field.inner());
  }

  std::uint64_t h = 1469598103934665603ULL;
  h = fnv(h, pts.coords().data(), pts.coords().size() * sizeof(Point));
  h = fnv(h, bw.per_point.data(), bw.per_point.size() * sizeof(double));
  h = fnv(h, &bw.h0, sizeof(double));
  st.fingerprint = h;
  return st;
}

MultiscaleStack multiscale_build(const PointPattern& pts, double h0, double hp, double lo, double hi, double tau) {
  return multiscale_build(pts, abramson_bandwidths(pts, h0, make_pilot(pts, hp), tau), lo, hi);
}

DensitySurface multiscale_slice(const MultiscaleStack& stack, double h0) {
  const double a = stack.h_min(), b = stack.h_max();
  if (!(h0 >= a * (1.0 - 1e-12) && h0 <= b * (1.0 + 1e-12))) {
    std::ostringstream os;
    os << "global bandwidth " << h0 << " is outside the available range [" << a << ", " << b << "]";
    throw ValidationError(os.str());
  }
  double pos = std::log(h0 / stack.h0) / stack.step - stack.k_lo;
  const double last = static_cast<double>(stack.planes.size() - 1);
  pos = std::clamp(pos, 0.0, last);
  double r = std::round(pos);
  if (std::abs(pos - r) < 1e-9) {
    DensitySurface d = stack.planes[static_cast<std::size_t>(r)];
    d.h = h0;
    return d;
  }
  r = std::floor(pos);
  const double t = pos - r;
  const DensitySurface& A = stack.planes[static_cast<std::size_t>(r)];
  const DensitySurface& B = stack.planes[static_cast<std::size_t>(r) + 1];
  DensitySurface d;
  d.h = h0;
  d.correction = A.correction;
  d.n = A.n;
  d.field = A.field;
  d.q_field = A.q_field;
  for (std::size_t k = 0; k < d.field.v.size(); ++k) {
    d.field.v[k] = (1.0 - t) * A.field.v[k] + t * B.field.v[k];
    d.q_field.v[k] = (1.0 - t) * A.q_field.v[k] + t * B.q_field.v[k];
  }
  d.z = A.z;
  d.q = A.q;
  for (std::size_t k = 0; k < d.z.values.size(); ++k) {
    if (std::isnan(A.z.values[k])) continue;
    d.z.values[k] = (1.0 - t) * A.z.values[k] + t * B.z.values[k];
    d.q.values[k] = (1.0 - t) * A.q.values[k] + t * B.q.values[k];
  }
  return d;
}

}  // namespace sprisk
