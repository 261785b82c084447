#include "sprisk/sptemporal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "sprisk/detail/conv.hpp"
#include "sprisk/errors.hpp"

namespace sprisk {

namespace {

constexpr double kWFloor = 1e-9;

void check_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ValidationError("temporal bandwidth must be positive and finite");
}

void check_times(const std::vector<double>& times, const TemporalInterval& tlim) {
  for (double t : times)
    if (!(t >= tlim.t_min && t <= tlim.t_max)) {
      std::ostringstream os;
      os << "time " << t << " lies outside [" << tlim.t_min << ", " << tlim.t_max << "]";
      throw ValidationError(os.str());
    }
}

}  // namespace

double temporal_edge_weight(double s, double lambda, const TemporalInterval& tlim) {
  check_lambda(lambda);
  double w = detail::gauss_cell((tlim.t_min - s) / lambda, (tlim.t_max - s) / lambda);
  return std::max(w, kWFloor);
}

double temporal_density(const std::vector<double>& times, double lambda, const TemporalInterval& tlim, double s) {
  check_lambda(lambda);
  if (times.empty()) throw ValidationError("no event times");
  double acc = 0.0;
  for (double t : times) acc += detail::normal_pdf((s - t) / lambda);
  return acc / (static_cast<double>(times.size()) * lambda * temporal_edge_weight(s, lambda, tlim));
}

TemporalMargin temporal_margin(const std::vector<double>& times, double lambda, const TemporalInterval& tlim) {
  check_lambda(lambda);
  check_times(times, tlim);
  TemporalMargin m;
  m.lambda = lambda;
  m.t = tlim.t_grid;
  for (double s : m.t) {
    m.w.push_back(temporal_edge_weight(s, lambda, tlim));
    m.f.push_back(temporal_density(times, lambda, tlim, s));
  }
  return m;
}

double integrate_time(const std::vector<double>& values, const TemporalInterval& tlim) {
  const auto& t = tlim.t_grid;
  if (values.size() != t.size()) throw ValidationError("values do not match the time grid");
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < t.size(); ++k) acc += 0.5 * (values[k] + values[k + 1]) * (t[k + 1] - t[k]);
  return acc;
}

double STDensity::at(Point p, double t) const {
  const auto& g = tlim.t_grid;
  if (g.size() == 1 || t <= g.front()) return fields.front().at(p);
  if (t >= g.back()) return fields.back().at(p);
  std::size_t k = static_cast<std::size_t>(std::upper_bound(g.begin(), g.end(), t) - g.begin()) - 1;
  double a = (t - g[k]) / (g[k + 1] - g[k]);
  double lo = fields[k].at(p);
  if (a == 0.0) return lo;
  return (1.0 - a) * lo + a * fields[k + 1].at(p);
}

STDensity kde_st_weighted(const WindowMask& w, const std::vector<Point>& pts, const std::vector<double>& times,
                          const std::vector<double>& weights, double norm, double h, double lambda,
                          const TemporalInterval& tlim, EdgeCorrection correction) {
  if (pts.empty()) throw ValidationError("point pattern is empty");
  if (times.size() != pts.size()) throw ValidationError("space-time estimation needs a time for every point");
  if (!weights.empty() && weights.size() != pts.size()) throw ValidationError("weights and points differ in length");
  if (correction == EdgeCorrection::diggle) throw ValidationError("space-time estimation supports none or uniform correction");
  if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("bandwidth must be positive and finite");
  if (!(norm > 0.0)) throw ValidationError("normalizing constant must be positive");
  check_lambda(lambda);
  check_times(times, tlim);

  STDensity st;
  st.h = h;
  st.lambda = lambda;
  st.tlim = tlim;
  st.correction = correction;
  st.n = pts.size();
  st.margin = temporal_margin(times, lambda, tlim);
  const Grid hg = halo_grid(w.grid);
  st.q_field = correction == EdgeCorrection::uniform ? edge_factor_field(w, h)
                                                     : Field{hg, std::vector<double>(hg.size(), 1.0)};
  st.q = masked_surface(w, st.q_field.inner());
  std::vector<double> wt(pts.size());
  for (std::size_t s = 0; s < tlim.t_grid.size(); ++s) {
    const double t = tlim.t_grid[s];
    const double scale = 1.0 / (lambda * st.margin.w[s]);
    for (std::size_t k = 0; k < pts.size(); ++k)
      wt[k] = (weights.empty() ? 1.0 : weights[k]) * detail::normal_pdf((t - times[k]) / lambda) * scale;
    Field f{hg, kernel_sum(hg, pts, wt, h)};
    const double inv = 1.0 / norm;
    for (std::size_t k = 0; k < f.v.size(); ++k) f.v[k] = f.v[k] * inv / st.q_field.v[k];
    st.slices.push_back(masked_surface(w, f.inner()));
    st.fields.push_back(std::move(f));
  }
  return st;
}

STDensity kde_st(const PointPattern& pts, double h, double lambda, const TemporalInterval& tlim,
                 EdgeCorrection correction) {
  if (!pts.has_times()) throw ValidationError("point pattern has no times");
  return kde_st_weighted(pts.window(), pts.coords(), pts.times(), {}, static_cast<double>(pts.n()), h, lambda, tlim,
                         correction);
}

STDensity condition_on_time(const STDensity& st) {
  if (st.normalization == STNormalization::conditional) throw ValidationError("density is already conditional on time");
  STDensity c = st;
  c.normalization = STNormalization::conditional;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t s = 0; s < c.slices.size(); ++s) {
    const double m = st.margin.f[s];
    if (!(m >= kWFloor)) {
      std::ostringstream os;
      os << "temporal margin at t = " << st.margin.t[s] << " is below 1e-9; slice set to NaN";
      c.warnings.push_back(os.str());
      std::fill(c.slices[s].values.begin(), c.slices[s].values.end(), nan);
      std::fill(c.fields[s].v.begin(), c.fields[s].v.end(), nan);
      continue;
    }
    for (double& v : c.slices[s].values) v /= m;
    for (double& v : c.fields[s].v) v /= m;
  }
  return c;
}

}  // namespace sprisk
