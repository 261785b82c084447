#include "sprisk/detail/pairsum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "sprisk/errors.hpp"

namespace sprisk::detail {

namespace {
constexpr double kCut2 = 80.0;  // (u/h)^2 beyond which exp(-u^2/(2h^2)) < exp(-40)
}

PairSum::PairSum(std::vector<Point> src, std::vector<double> times) {
  if (!times.empty() && times.size() != src.size()) throw ValidationError("times and points differ in length");
  id_.resize(src.size());
  std::iota(id_.begin(), id_.end(), std::size_t{0});
  std::sort(id_.begin(), id_.end(), [&](std::size_t a, std::size_t b) { return src[a].x < src[b].x; });
  for (std::size_t k : id_) {
    src_.push_back(src[k]);
    if (!times.empty()) times_.push_back(times[k]);
  }
}

std::vector<double> PairSum::sum(const std::vector<Point>& at, const std::vector<double>& hs,
                                 const std::vector<double>& w, bool self, const std::vector<double>& tat,
                                 double lambda) const {
  const std::size_t n = src_.size();
  if (hs.size() != 1 && hs.size() != n) throw ValidationError("bandwidths must be one value or one per point");
  if (!w.empty() && w.size() != n) throw ValidationError("weights and points differ in length");
  if (self && at.size() != n) throw ValidationError("leave-one-out sums need the source points");
  const bool timed = !tat.empty();
  if (timed && (times_.empty() || tat.size() != at.size() || !(lambda > 0.0)))
    throw ValidationError("space-time pair sums need times on both sides and lambda > 0");

  // Per-source inputs in sorted order.
  std::vector<double> inv2h2(n), amp(n);
  double hmax = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    double h = hs.size() == 1 ? hs[0] : hs[id_[s]];
    hmax = std::max(hmax, h);
    inv2h2[s] = 0.5 / (h * h);
    amp[s] = (w.empty() ? 1.0 : w[id_[s]]) / (2.0 * std::numbers::pi * h * h);
  }
  std::vector<std::size_t> rank(n);
  for (std::size_t s = 0; s < n; ++s) rank[id_[s]] = s;
  const double reach = std::sqrt(kCut2) * hmax;
  const double tinv = timed ? 0.5 / (lambda * lambda) : 0.0;
  const double tamp = timed ? 1.0 / (lambda * std::sqrt(2.0 * std::numbers::pi)) : 1.0;
  const double treach = timed ? std::sqrt(kCut2) * lambda : 0.0;

  std::vector<double> out(at.size(), 0.0);
  for (std::size_t i = 0; i < at.size(); ++i) {
    const Point p = at[i];
    auto first = std::lower_bound(src_.begin(), src_.end(), p.x - reach,
                                  [](const Point& a, double v) { return a.x < v; });
    const std::size_t skip = self ? rank[i] : n;
    double acc = 0.0;
    for (std::size_t s = static_cast<std::size_t>(first - src_.begin()); s < n && src_[s].x <= p.x + reach; ++s) {
      if (s == skip) continue;
      const double dx = p.x - src_[s].x, dy = p.y - src_[s].y;
      if (std::abs(dy) > reach) continue;
      double e = (dx * dx + dy * dy) * inv2h2[s];
      if (e > 0.5 * kCut2) continue;
      double v = amp[s];
      if (timed) {
        double dt = tat[i] - times_[s];
        if (std::abs(dt) > treach) continue;
        e += dt * dt * tinv;
        v *= tamp;
      }
      acc += v * std::exp(-e);
    }
    out[i] = acc;
  }
  return out;
}

}  // namespace sprisk::detail
