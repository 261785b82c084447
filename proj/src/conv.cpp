#include "sprisk/detail/conv.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sprisk::detail {

namespace {

int padded(int n, long reach) {
  long need = n + std::clamp(reach, 0L, static_cast<long>(n - 1));
  return static_cast<int>(fast_size(static_cast<std::size_t>(need)));
}

}  // namespace

GridConvolver::GridConvolver(int nx, int ny, long reach_x, long reach_y)
    : nx_(nx), ny_(ny), px_(padded(nx, reach_x)), py_(padded(ny, reach_y)) {}

CplxBuf GridConvolver::forward(const std::vector<double>& data) const {
  RealBuf buf(static_cast<std::size_t>(px_) * py_, 0.0);
  for (int j = 0; j < ny_; ++j)
    std::copy(data.begin() + static_cast<long>(j) * nx_, data.begin() + static_cast<long>(j + 1) * nx_,
              buf.begin() + static_cast<long>(j) * px_);
  CplxBuf spec(static_cast<std::size_t>(py_) * (px_ / 2 + 1));
  r2c_2d(py_, px_, buf.data(), spec.data());
  return spec;
}

std::vector<double> GridConvolver::apply(const CplxBuf& spec, const std::vector<SepTerm>& terms) const {
  CplxBuf prod(spec.size(), cplx(0.0, 0.0));
  for (const SepTerm& t : terms) accumulate(prod, spec, dft_real(t.ax), dft_real(t.ay));
  return inverse(prod);
}

void GridConvolver::accumulate(CplxBuf& acc, const CplxBuf& spec, const std::vector<cplx>& fx,
                               const std::vector<cplx>& fy) const {
  const int hx = px_ / 2 + 1;
  for (int ky = 0; ky < py_; ++ky) {
    const cplx cy = fy[ky];
    cplx* row = acc.data() + static_cast<std::size_t>(ky) * hx;
    const cplx* src = spec.data() + static_cast<std::size_t>(ky) * hx;
    for (int kx = 0; kx < hx; ++kx) row[kx] += src[kx] * (cy * fx[kx]);
  }
}

std::vector<double> GridConvolver::inverse(CplxBuf& prod) const {
  RealBuf out(static_cast<std::size_t>(px_) * py_);
  c2r_2d(py_, px_, prod.data(), out.data());
  const double scale = 1.0 / (static_cast<double>(px_) * py_);
  std::vector<double> res(static_cast<std::size_t>(nx_) * ny_);
  for (int j = 0; j < ny_; ++j)
    for (int i = 0; i < nx_; ++i)
      res[static_cast<std::size_t>(j) * nx_ + i] = out[static_cast<std::size_t>(j) * px_ + i] * scale;
  return res;
}

std::vector<double> mask_as_double(const WindowMask& w) {
  std::vector<double> m(w.mask.size());
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = w.mask[k] ? 1.0 : 0.0;
  return m;
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double gauss_cell(double a, double b) {
  const double r = std::numbers::sqrt2;
  if (a >= 0.0) return 0.5 * (std::erfc(a / r) - std::erfc(b / r));
  if (b <= 0.0) return 0.5 * (std::erfc(-b / r) - std::erfc(-a / r));
  return 1.0 - 0.5 * std::erfc(b / r) - 0.5 * std::erfc(-a / r);
}

double gauss_moment_cell(int k, double a, double b) {
  double base = gauss_cell(a, b);
  double pa = normal_pdf(a), pb = normal_pdf(b);
  if (k == 0) return base;
  double m1 = b * pb - a * pa;
  if (k == 2) return base - m1;
  double m3 = b * b * b * pb - a * a * a * pa;
  return 3.0 * base - m3 - 3.0 * m1;
}

double gauss_sq_moment_cell(int k, double a, double b) {
  // phi(t)^2 = phi(sqrt2 t) / sqrt(2 pi); substitute z = sqrt2 t.
  const double r = std::numbers::sqrt2;
  double scale = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * r) * std::pow(2.0, -0.5 * k);
  return scale * gauss_moment_cell(k, r * a, r * b);
}

}  // namespace sprisk::detail
