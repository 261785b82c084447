#pragma once

#include <vector>

#include "sprisk/detail/fft.hpp"
#include "sprisk/geom.hpp"

namespace sprisk::detail {

// One separable piece of a kernel: weight(o1, o2) = ax[o1] * ay[o2] with the
// arrays laid out by circular offset.
struct SepTerm {
  std::vector<double> ax;
  std::vector<double> ay;
};

// Zero-padded 2D convolution on an nx x ny grid. Padding covers the larger of
// the requested reach and the grid itself, capped at a full linear
// convolution (2n - 1).
class GridConvolver {
 public:
  GridConvolver(int nx, int ny, long reach_x, long reach_y);

  int px() const { return px_; }
  int py() const { return py_; }

  CplxBuf forward(const std::vector<double>& data) const;
  std::vector<double> apply(const CplxBuf& spec, const std::vector<SepTerm>& terms) const;
  // acc += spec * (fx outer fy), with fx, fy full-length DFTs of a separable
  // kernel.
  void accumulate(CplxBuf& acc, const CplxBuf& spec, const std::vector<cplx>& fx,
                  const std::vector<cplx>& fy) const;
  // Cropped nx x ny inverse of a product spectrum, scaled by 1/(px py).
  // Overwrites prod.
  std::vector<double> inverse(CplxBuf& prod) const;
  std::size_t spectrum_size() const { return static_cast<std::size_t>(py_) * (px_ / 2 + 1); }

  template <class FX, class FY>
  SepTerm term(FX fx, FY fy) const {
    return SepTerm{circular(px_, fx), circular(py_, fy)};
  }

 private:
  int nx_, ny_, px_, py_;
};

std::vector<double> mask_as_double(const WindowMask& w);

// Phi(b) - Phi(a), accurate in both tails.
double gauss_cell(double a, double b);
// Integral of z^k phi(z) over [a, b] for k in {0, 2, 4}.
double gauss_moment_cell(int k, double a, double b);
// Integral of t^k phi(t)^2 over [a, b] for k in {0, 2, 4}.
double gauss_sq_moment_cell(int k, double a, double b);

double normal_pdf(double z);

}  // namespace sprisk::detail
