#pragma once

#include <string>
#include <vector>

#include "sprisk/kernel2d.hpp"

namespace sprisk {

// Share of the Gaussian L centred at s with bandwidth lambda lying inside T,
// clamped below at 1e-9.
double temporal_edge_weight(double s, double lambda, const TemporalInterval& tlim);
// Edge-corrected temporal KDE at a single time.
double temporal_density(const std::vector<double>& times, double lambda, const TemporalInterval& tlim, double s);

struct TemporalMargin {
  double lambda = 0.0;
  std::vector<double> t;  // tlim.t_grid
  std::vector<double> f;  // density at t
  std::vector<double> w;  // edge weight at t
};

TemporalMargin temporal_margin(const std::vector<double>& times, double lambda, const TemporalInterval& tlim);

// Trapezoid rule over the time grid.
double integrate_time(const std::vector<double>& values, const TemporalInterval& tlim);

enum class STNormalization { joint, conditional };

struct STDensity {
  std::vector<Surface> slices;  // one per tlim.t_grid entry
  std::vector<Field> fields;    // the same on the halo grid
  TemporalMargin margin;
  TemporalInterval tlim;
  double h = 0.0;
  double lambda = 0.0;
  STNormalization normalization = STNormalization::joint;
  EdgeCorrection correction = EdgeCorrection::uniform;
  Surface q;
  Field q_field;
  std::size_t n = 0;
  std::vector<std::string> warnings;

  // Bilinear in space, linear between neighbouring grid times.
  double at(Point p, double t) const;
};

// Space-time product-kernel estimate with spatial correction at z and
// temporal correction at s. correction is none or uniform.
STDensity kde_st(const PointPattern& pts, double h, double lambda, const TemporalInterval& tlim,
                 EdgeCorrection correction = EdgeCorrection::uniform);
// Weighted form: sum_k w_k K_h L_lambda / (norm q w), on raw coordinates.
STDensity kde_st_weighted(const WindowMask& w, const std::vector<Point>& pts, const std::vector<double>& times,
                          const std::vector<double>& weights, double norm, double h, double lambda,
                          const TemporalInterval& tlim, EdgeCorrection correction = EdgeCorrection::uniform);

// Divides each slice by the temporal margin. Slices whose margin is below
// 1e-9 become NaN with a warning.
STDensity condition_on_time(const STDensity& st);

}  // namespace sprisk
