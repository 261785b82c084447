#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sprisk/geom.hpp"

namespace sprisk::io {

namespace fs = std::filesystem;

// ---- windows ----

// "xmin,ymin,xmax,ymax".
Polygon parse_bbox(const std::string& spec);
// A GeoJSON Polygon geometry, Feature or single-feature FeatureCollection.
// The first ring is the outer boundary, the rest are holes.
Polygon read_polygon_geojson(const fs::path& path);

// ---- points ----

// Rows of a point CSV. group is 1 for case, 0 for control.
struct PointTable {
  std::vector<Point> xy;
  std::vector<double> t;
  std::vector<int> group;
  std::vector<std::size_t> line;  // source line of each row (1-based)
  bool has_t = false;
  bool has_group = false;
};

// Header required; columns x, y and optionally t and group (case/control).
// Other columns are ignored. Malformed rows are reported by line number.
PointTable read_point_table(const fs::path& path);

struct Ingested {
  std::optional<PointPattern> all;  // no group column
  std::optional<PointPattern> cases;
  std::optional<PointPattern> controls;
};

// Reads and validates a table against the window; points outside are
// rejected with their count and the first offending line.
Ingested ingest_points(const fs::path& path, const WindowPtr& window);

void write_point_csv(const fs::path& path, const std::vector<Point>& xy, const std::vector<double>& t = {},
                     const std::vector<int>& group = {});

// ---- rasters ----

enum class RasterFormat { ascii, binary };

// ascii: ESRI ASCII grid, rows top to bottom, NODATA_value -9999 for NaN,
// shortest round-trip number formatting; square cells required.
// binary: little-endian float64 payload in storage order (row 0 = bottom)
// at <stem>.bin plus a JSON header at <stem>.json. NaN is kept as NaN bits.
// Returns the path written (the .bin for binary).
fs::path write_raster(const Surface& s, const fs::path& stem, RasterFormat format);
// Dispatches on the extension: .asc for ascii, .bin or .json for binary.
Surface read_raster(const fs::path& path);
std::string raster_extension(RasterFormat f);

// ---- contours ----

// FeatureCollection of LineStrings, one feature per polyline, with `level`,
// `closed` and any extra properties copied onto every feature.
void write_contours_geojson(const std::vector<ContourSet>& sets, const fs::path& path,
                            const std::string& extra_properties_json = "{}");
std::vector<ContourSet> read_contours_geojson(const fs::path& path);

// ---- images ----

// Colour ramp: piecewise linear through five fixed stops
//   0: #440154  0.25: #3B528B  0.5: #21908C  0.75: #5DC863  1: #FDE725
// applied to (v - lo) / (hi - lo) clamped to [0, 1]. A zero range maps to
// the middle stop. NaN pixels are fully transparent; contour polylines are
// drawn opaque black. Each grid cell becomes scale x scale image pixels with
// north up. Output bytes depend only on the inputs.
struct RenderOptions {
  std::optional<double> lo;  // defaults to the finite minimum
  std::optional<double> hi;  // defaults to the finite maximum
  int scale = 0;             // 0 picks max(1, 512 / max(nx, ny))
};
void render_heatmap(const Surface& s, const std::vector<ContourSet>* contours, const fs::path& path,
                    const RenderOptions& opt = {});
struct RGBA {
  std::uint8_t r, g, b, a;
};
RGBA ramp_colour(double u);

// ---- synthetic data ----

enum class Scenario { gaussian_mix, hotspot_pair, st_drift };
Scenario parse_scenario(const std::string& name);
const char* scenario_name(Scenario s);

struct SynthResult {
  fs::path cases;
  fs::path controls;
  fs::path combined;  // x, y[, t], group
  fs::path truth;
};

// Fixed-n samples on the square [0, 10]^2 (times in [0, 100] for st-drift).
// gaussian-mix: both groups from one background mixture (a null design).
// hotspot-pair: cases add a hotspot at (7, 3), controls one at (2.5, 7.5).
// st-drift: cases add a hotspot whose centre moves from (2, 2) to (8, 8) over
// time; controls are background with uniform times.
// truth.json records the window, mixture parameters and hotspot centres.
SynthResult synth_generate(Scenario scenario, std::size_t n1, std::size_t n2, std::uint64_t seed,
                           const fs::path& out_dir);

// ---- numbers ----

// Shortest decimal form that reads back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s);
std::vector<double> parse_double_list(const std::string& s);

}  // namespace sprisk::io
