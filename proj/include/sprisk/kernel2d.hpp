#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <vector>

#include "sprisk/geom.hpp"

namespace sprisk {

// R(K) and R(L) for the Gaussian kernels.
inline constexpr double kRK = 1.0 / (4.0 * std::numbers::pi);
inline const double kRL = 0.5 / std::sqrt(std::numbers::pi);
inline constexpr double kQFloor = 1e-9;

enum class EdgeCorrection { none, uniform, diggle };

// How points reach the grid before the FFT. `exact` keeps each point's
// sub-pixel offset (exact kernel profile along x, truncated Hermite series
// along y); `linear` is classical linear binning onto pixel centers.
enum class Binning { exact, linear };

struct DensitySurface {
  Surface z;    // NaN outside the window
  Field field;  // same estimate on the halo grid, for lookups at arbitrary points
  double h = 0.0;
  EdgeCorrection correction = EdgeCorrection::uniform;
  Surface q;
  Field q_field;
  std::size_t n = 0;
  std::size_t q_clamped = 0;  // masked pixels whose q hit the floor

  double at(Point p) const { return field.at(p); }
};

double normal_cdf(double z);
// 1 - Phi(z) without cancellation.
double normal_sf(double z);

// sum_k w_k K_h(y - x_k) at every grid node; empty weights mean all ones.
std::vector<double> kernel_sum(const Grid& g, const std::vector<Point>& pts, const std::vector<double>& weights,
                               double h, Binning binning = Binning::exact);
// sum_k w_k psi^-4 (Laplacian K)((y - x_k) / psi) at every grid node.
std::vector<double> laplacian_sum(const Grid& g, const std::vector<Point>& pts, const std::vector<double>& weights,
                                  double psi);

// Mask convolved with a cell-integrated kernel at bandwidth h, on the halo
// grid. gauss gives the edge factor q; gauss_sq gives the window integral of
// K((u - y)/h)^2 du / h^2 (1/(4 pi) deep inside); m_sq the same for
// M(t) = (2 - |t|^2) K(t) (1/(2 pi) deep inside).
enum class WindowKernel { gauss, gauss_sq, m_sq };
Field window_convolution(const WindowMask& w, double h, WindowKernel kind);

// Keeps the transformed halo mask so many bandwidths up to h_max can be
// convolved against it.
class WindowConvolver {
 public:
  WindowConvolver(const WindowMask& w, double h_max);
  Field operator()(double h, WindowKernel kind) const;
  // Clamped edge factor with the same checks as edge_factor_field.
  Field edge_factor(double h, std::size_t* clamped = nullptr) const;

 private:
  const WindowMask* w_;
  Grid hg_;
  std::shared_ptr<const void> impl_;
};

// Edge factor clamped to [kQFloor, 1]. Rejects h when the largest masked value
// is below 0.01.
Field edge_factor_field(const WindowMask& w, double h, std::size_t* clamped = nullptr);
Surface edge_correction_surface(double h, const WindowMask& w);

DensitySurface kde_fixed(const PointPattern& pts, double h, EdgeCorrection correction,
                         Binning binning = Binning::exact);
// Weighted form: value = sum_k w_k K_h(y - x_k) / norm, then corrected.
DensitySurface kde_fixed_weighted(const WindowMask& w, const std::vector<Point>& pts,
                                  const std::vector<double>& weights, double norm, double h,
                                  EdgeCorrection correction, Binning binning = Binning::exact,
                                  const WindowConvolver* wc = nullptr);

Surface kde_second_deriv_sum(const PointPattern& pts, double psi);

// R_h(x) = k2(x) / q(x)^2, with the two parts interpolated separately.
struct RhParts {
  Field k2;
  Field q;
  double at(Point p) const;
};
RhParts rh_parts(double h, const WindowMask& w);
Surface rh_surface(double h, const WindowMask& w);

}  // namespace sprisk
