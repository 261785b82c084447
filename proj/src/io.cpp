#include "sprisk/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "sprisk/errors.hpp"

namespace sprisk::io {

using nlohmann::json;

namespace {

constexpr double kNoData = -9999.0;

std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool try_parse(const std::string& s, double& v) {
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  return ec == std::errc() && p == e;
}

std::ifstream open_in(const fs::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

Ring parse_ring(const json& coords) {
  Ring r;
  for (const json& c : coords) {
    if (!c.is_array() || c.size() < 2) throw ValidationError("polygon vertex must be [x, y]");
    r.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  if (r.size() > 1 && r.front() == r.back()) r.pop_back();
  if (r.size() < 3) throw ValidationError("polygon ring needs at least three vertices");
  return r;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  if (!try_parse(trim(s), v)) throw ValidationError("not a number: '" + s + "'");
  return v;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  for (const std::string& part : split(s, ',')) out.push_back(parse_double(part));
  return out;
}

// ---- windows ----

Polygon parse_bbox(const std::string& spec) {
  std::vector<double> v = parse_double_list(spec);
  if (v.size() != 4) throw ValidationError("bbox needs xmin,ymin,xmax,ymax");
  if (!(v[2] > v[0] && v[3] > v[1])) throw ValidationError("bbox must have xmax > xmin and ymax > ymin");
  return bbox_polygon(v[0], v[1], v[2], v[3]);
}

Polygon read_polygon_geojson(const fs::path& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (j.value("type", "") == "FeatureCollection") {
    if (!j.contains("features") || j["features"].size() != 1)
      throw ValidationError(path.string() + ": window collection must hold exactly one feature");
    j = j["features"][0];
  }
  if (j.value("type", "") == "Feature") j = j["geometry"];
  if (j.value("type", "") != "Polygon") throw ValidationError(path.string() + ": window must be a Polygon");
  Polygon poly;
  try {
    for (const json& ring : j.at("coordinates")) poly.rings.push_back(parse_ring(ring));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (poly.rings.empty()) throw ValidationError(path.string() + ": polygon has no rings");
  return poly;
}

// ---- points ----

PointTable read_point_table(const fs::path& path) {
  std::ifstream in = open_in(path);
  PointTable tab;
  std::string line;
  std::size_t lineno = 0;
  int cx = -1, cy = -1, ct = -1, cg = -1;
  std::size_t ncols = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> f = split(line, ',');
    if (cx < 0 && cy < 0) {
      ncols = f.size();
      for (std::size_t k = 0; k < f.size(); ++k) {
        std::string name = lower(f[k]);
        if (name.size() >= 2 && name.front() == '"' && name.back() == '"') name = name.substr(1, name.size() - 2);
        int* slot = name == "x" ? &cx : name == "y" ? &cy : name == "t" ? &ct : name == "group" ? &cg : nullptr;
        if (slot == nullptr) continue;
        if (*slot >= 0) throw ValidationError(path.string() + ": duplicate column '" + name + "'");
        *slot = static_cast<int>(k);
      }
      if (cx < 0 || cy < 0) throw ValidationError(path.string() + ": header must name columns x and y");
      tab.has_t = ct >= 0;
      tab.has_group = cg >= 0;
      continue;
    }
    auto where = [&] { return path.string() + " line " + std::to_string(lineno); };
    if (f.size() != ncols)
      throw ValidationError(where() + ": expected " + std::to_string(ncols) + " fields, found " +
                            std::to_string(f.size()));
    Point p;
    if (!try_parse(f[cx], p.x) || !try_parse(f[cy], p.y) || !std::isfinite(p.x) || !std::isfinite(p.y))
      throw ValidationError(where() + ": malformed coordinates");
    tab.xy.push_back(p);
    if (ct >= 0) {
      double t = 0.0;
      if (!try_parse(f[ct], t) || !std::isfinite(t)) throw ValidationError(where() + ": malformed time");
      tab.t.push_back(t);
    }
    if (cg >= 0) {
      std::string g = lower(f[cg]);
      if (g.size() >= 2 && g.front() == '"' && g.back() == '"') g = g.substr(1, g.size() - 2);
      if (g == "case") {
        tab.group.push_back(1);
      } else if (g == "control") {
        tab.group.push_back(0);
      } else {
        throw ValidationError(where() + ": unknown group label '" + f[cg] + "'");
      }
    }
    tab.line.push_back(lineno);
  }
  if (cx < 0) throw ValidationError(path.string() + ": empty file");
  return tab;
}

Ingested ingest_points(const fs::path& path, const WindowPtr& window) {
  PointTable tab = read_point_table(path);
  std::size_t outside = 0, first = 0;
  for (std::size_t k = 0; k < tab.xy.size(); ++k) {
    if (window->contains(tab.xy[k])) continue;
    if (outside++ == 0) first = tab.line[k];
  }
  if (outside > 0)
    throw ValidationError(path.string() + ": " + std::to_string(outside) + " point(s) outside the window (first at line " +
                          std::to_string(first) + ")");
  Ingested out;
  if (!tab.has_group) {
    out.all.emplace(window, tab.xy, tab.t);
    return out;
  }
  std::vector<Point> xy[2];
  std::vector<double> t[2];
  for (std::size_t k = 0; k < tab.xy.size(); ++k) {
    int g = tab.group[k];
    xy[g].push_back(tab.xy[k]);
    if (tab.has_t) t[g].push_back(tab.t[k]);
  }
  if (xy[1].empty() || xy[0].empty()) throw ValidationError(path.string() + ": group column needs both cases and controls");
  out.cases.emplace(window, xy[1], t[1]);
  out.controls.emplace(window, xy[0], t[0]);
  return out;
}

void write_point_csv(const fs::path& path, const std::vector<Point>& xy, const std::vector<double>& t,
                     const std::vector<int>& group) {
  std::ofstream out = open_out(path);
  out << "x,y" << (t.empty() ? "" : ",t") << (group.empty() ? "" : ",group") << '\n';
  for (std::size_t k = 0; k < xy.size(); ++k) {
    out << format_double(xy[k].x) << ',' << format_double(xy[k].y);
    if (!t.empty()) out << ',' << format_double(t[k]);
    if (!group.empty()) out << ',' << (group[k] ? "case" : "control");
    out << '\n';
  }
  if (!out) throw ValidationError("write failed: " + path.string());
}

// ---- rasters ----

std::string raster_extension(RasterFormat f) { return f == RasterFormat::ascii ? ".asc" : ".bin"; }

fs::path write_raster(const Surface& s, const fs::path& stem, RasterFormat format) {
  const Grid& g = s.grid;
  if (s.values.size() != g.size()) throw ValidationError("raster payload does not match its grid");
  if (format == RasterFormat::ascii) {
    if (std::abs(g.dx - g.dy) > 1e-12 * std::max(g.dx, g.dy))
      throw ValidationError("ascii-grid output needs square cells (dx = " + format_double(g.dx) +
                            ", dy = " + format_double(g.dy) + ")");
    fs::path path = stem;
    path += ".asc";
    std::ofstream out = open_out(path);
    out << "ncols " << g.nx << "\nnrows " << g.ny << "\nxllcorner " << format_double(g.x0) << "\nyllcorner "
        << format_double(g.y0) << "\ncellsize " << format_double(g.dx) << "\nNODATA_value "
        << format_double(kNoData) << '\n';
    for (int j = g.ny - 1; j >= 0; --j) {
      for (int i = 0; i < g.nx; ++i) {
        double v = s.at(i, j);
        out << (i ? " " : "") << format_double(std::isnan(v) ? kNoData : v);
      }
      out << '\n';
    }
    if (!out) throw ValidationError("write failed: " + path.string());
    return path;
  }
  fs::path bin = stem, hdr = stem;
  bin += ".bin";
  hdr += ".json";
  {
    std::ofstream out = open_out(bin, true);
    std::vector<std::uint64_t> words(s.values.size());
    for (std::size_t k = 0; k < words.size(); ++k) {
      std::uint64_t w = std::bit_cast<std::uint64_t>(s.values[k]);
      if constexpr (std::endian::native == std::endian::big) w = __builtin_bswap64(w);
      words[k] = w;
    }
    out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 8));
    if (!out) throw ValidationError("write failed: " + bin.string());
  }
  json h = {{"nx", g.nx},        {"ny", g.ny},
            {"x0", g.x0},        {"y0", g.y0},
            {"dx", g.dx},        {"dy", g.dy},
            {"nodata", "NaN"},   {"dtype", "float64-le"},
            {"row_order", "bottom-to-top"}, {"data", bin.filename().string()}};
  std::ofstream out = open_out(hdr);
  out << h.dump(2) << '\n';
  if (!out) throw ValidationError("write failed: " + hdr.string());
  return bin;
}

namespace {

Surface read_ascii(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::map<std::string, std::string> hdr;
  std::string key, val;
  for (int k = 0; k < 6; ++k) {
    if (!(in >> key >> val)) throw ValidationError(path.string() + ": truncated header");
    hdr[lower(key)] = val;
  }
  auto need = [&](const std::string& k) {
    auto it = hdr.find(k);
    if (it == hdr.end()) throw ValidationError(path.string() + ": header lacks " + k);
    return parse_double(it->second);
  };
  Surface s;
  Grid& g = s.grid;
  double nx = need("ncols"), ny = need("nrows");
  if (nx < 1 || ny < 1 || nx != std::floor(nx) || ny != std::floor(ny))
    throw ValidationError(path.string() + ": bad ncols/nrows");
  g.nx = static_cast<int>(nx);
  g.ny = static_cast<int>(ny);
  g.dx = g.dy = need("cellsize");
  g.x0 = hdr.count("xllcenter") ? need("xllcenter") - 0.5 * g.dx : need("xllcorner");
  g.y0 = hdr.count("yllcenter") ? need("yllcenter") - 0.5 * g.dy : need("yllcorner");
  double nodata = need("nodata_value");
  s.values.assign(g.size(), 0.0);
  std::string tok;
  for (int j = g.ny - 1; j >= 0; --j)
    for (int i = 0; i < g.nx; ++i) {
      if (!(in >> tok)) throw ValidationError(path.string() + ": payload shorter than header says");
      double v = parse_double(tok);
      s.values[g.index(i, j)] = v == nodata ? std::numeric_limits<double>::quiet_NaN() : v;
    }
  if (in >> tok) throw ValidationError(path.string() + ": payload longer than header says");
  return s;
}

Surface read_binary(fs::path path) {
  fs::path hdr_path = path;
  if (path.extension() == ".bin") hdr_path.replace_extension(".json");
  std::ifstream hin = open_in(hdr_path);
  json h;
  try {
    h = json::parse(hin);
  } catch (const json::exception& e) {
    throw ValidationError(hdr_path.string() + ": " + e.what());
  }
  Surface s;
  Grid& g = s.grid;
  try {
    g.nx = h.at("nx").get<int>();
    g.ny = h.at("ny").get<int>();
    g.x0 = h.at("x0").get<double>();
    g.y0 = h.at("y0").get<double>();
    g.dx = h.at("dx").get<double>();
    g.dy = h.at("dy").get<double>();
    if (h.value("dtype", "float64-le") != "float64-le") throw ValidationError(hdr_path.string() + ": unsupported dtype");
    fs::path data = h.value("data", "");
    path = data.empty() ? fs::path(hdr_path).replace_extension(".bin") : hdr_path.parent_path() / data;
  } catch (const json::exception& e) {
    throw ValidationError(hdr_path.string() + ": " + e.what());
  }
  if (g.nx < 1 || g.ny < 1) throw ValidationError(hdr_path.string() + ": bad nx/ny");
  std::ifstream in = open_in(path, true);
  in.seekg(0, std::ios::end);
  auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != g.size() * 8)
    throw ValidationError(path.string() + ": payload holds " + std::to_string(bytes) + " bytes, header implies " +
                          std::to_string(g.size() * 8));
  in.seekg(0);
  std::vector<std::uint64_t> words(g.size());
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw ValidationError("read failed: " + path.string());
  s.values.resize(g.size());
  for (std::size_t k = 0; k < words.size(); ++k) {
    std::uint64_t w = words[k];
    if constexpr (std::endian::native == std::endian::big) w = __builtin_bswap64(w);
    s.values[k] = std::bit_cast<double>(w);
  }
  return s;
}

}  // namespace

Surface read_raster(const fs::path& path) {
  std::string ext = lower(path.extension().string());
  if (ext == ".asc") return read_ascii(path);
  if (ext == ".bin" || ext == ".json") return read_binary(path);
  throw ValidationError(path.string() + ": unknown raster extension (use .asc, .bin or .json)");
}

// ---- contours ----

void write_contours_geojson(const std::vector<ContourSet>& sets, const fs::path& path,
                            const std::string& extra_properties_json) {
  json extra = json::parse(extra_properties_json);
  json features = json::array();
  for (const ContourSet& cs : sets)
    for (std::size_t k = 0; k < cs.polylines.size(); ++k) {
      json coords = json::array();
      for (const Point& p : cs.polylines[k]) coords.push_back({p.x, p.y});
      json props = extra;
      props["level"] = cs.level;
      props["closed"] = static_cast<bool>(cs.closed[k]);
      features.push_back({{"type", "Feature"},
                          {"properties", props},
                          {"geometry", {{"type", "LineString"}, {"coordinates", coords}}}});
    }
  json fc = {{"type", "FeatureCollection"}, {"features", features}};
  std::ofstream out = open_out(path);
  out << fc.dump() << '\n';
  if (!out) throw ValidationError("write failed: " + path.string());
}

std::vector<ContourSet> read_contours_geojson(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<ContourSet> sets;
  try {
    json fc = json::parse(in);
    for (const json& f : fc.at("features")) {
      const json& geom = f.at("geometry");
      if (geom.at("type") != "LineString") continue;
      double level = f.at("properties").value("level", 0.0);
      auto it = std::find_if(sets.begin(), sets.end(), [&](const ContourSet& c) { return c.level == level; });
      if (it == sets.end()) {
        sets.push_back({level, {}, {}});
        it = sets.end() - 1;
      }
      std::vector<Point> line;
      for (const json& c : geom.at("coordinates")) line.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
      it->polylines.push_back(std::move(line));
      it->closed.push_back(f.at("properties").value("closed", false));
    }
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return sets;
}

// ---- images ----

RGBA ramp_colour(double u) {
  static constexpr std::uint8_t stops[5][3] = {
      {0x44, 0x01, 0x54}, {0x3B, 0x52, 0x8B}, {0x21, 0x90, 0x8C}, {0x5D, 0xC8, 0x63}, {0xFD, 0xE7, 0x25}};
  u = std::clamp(u, 0.0, 1.0) * 4.0;
  int k = std::min(3, static_cast<int>(u));
  double w = u - k;
  RGBA c{};
  std::uint8_t* out[3] = {&c.r, &c.g, &c.b};
  for (int ch = 0; ch < 3; ++ch)
    *out[ch] = static_cast<std::uint8_t>(std::lround((1 - w) * stops[k][ch] + w * stops[k + 1][ch]));
  c.a = 255;
  return c;
}

void render_heatmap(const Surface& s, const std::vector<ContourSet>* contours, const fs::path& path,
                    const RenderOptions& opt) {
  const Grid& g = s.grid;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : s.values)
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!std::isfinite(lo)) throw ValidationError("cannot render an all-NaN surface");
  lo = opt.lo.value_or(lo);
  hi = opt.hi.value_or(hi);
  if (hi < lo) throw ValidationError("render range needs lo <= hi");
  const int scale = opt.scale > 0 ? opt.scale : std::max(1, 512 / std::max(g.nx, g.ny));
  const int W = g.nx * scale, H = g.ny * scale;
  std::vector<RGBA> img(static_cast<std::size_t>(W) * H, RGBA{0, 0, 0, 0});
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      double v = s.at(i, j);
      if (std::isnan(v)) continue;
      RGBA c = ramp_colour(hi > lo ? (v - lo) / (hi - lo) : 0.5);
      for (int b = 0; b < scale; ++b)
        for (int a = 0; a < scale; ++a) img[static_cast<std::size_t>((g.ny - 1 - j) * scale + b) * W + i * scale + a] = c;
    }
  if (contours != nullptr) {
    auto to_px = [&](Point p) {
      return std::pair<double, double>{(p.x - g.x0) / g.dx * scale, (g.y1() - p.y) / g.dy * scale};
    };
    auto plot = [&](long x, long y) {
      if (x >= 0 && y >= 0 && x < W && y < H) img[static_cast<std::size_t>(y) * W + x] = RGBA{0, 0, 0, 255};
    };
    for (const ContourSet& cs : *contours)
      for (const auto& line : cs.polylines)
        for (std::size_t k = 1; k < line.size(); ++k) {
          auto [xa, ya] = to_px(line[k - 1]);
          auto [xb, yb] = to_px(line[k]);
          long x0 = std::lround(std::floor(xa)), y0 = std::lround(std::floor(ya));
          long x1 = std::lround(std::floor(xb)), y1 = std::lround(std::floor(yb));
          long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0), sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
          long err = dx + dy;
          for (;;) {
            plot(x0, y0);
            if (x0 == x1 && y0 == y1) break;
            long e2 = 2 * err;
            if (e2 >= dy) {
              err += dy;
              x0 += sx;
            }
            if (e2 <= dx) {
              err += dx;
              y0 += sy;
            }
          }
        }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (fp == nullptr) throw ValidationError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw NumericError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8, PNG_COLOR_TYPE_RGBA,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < H; ++y)
    png_write_row(png, reinterpret_cast<png_const_bytep>(img.data() + static_cast<std::size_t>(y) * W));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) throw ValidationError("write failed: " + path.string());
}

// ---- synthetic data ----

Scenario parse_scenario(const std::string& name) {
  if (name == "gaussian-mix") return Scenario::gaussian_mix;
  if (name == "hotspot-pair") return Scenario::hotspot_pair;
  if (name == "st-drift") return Scenario::st_drift;
  throw ValidationError("unknown scenario '" + name + "' (gaussian-mix, hotspot-pair, st-drift)");
}

const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::gaussian_mix: return "gaussian-mix";
    case Scenario::hotspot_pair: return "hotspot-pair";
    case Scenario::st_drift: return "st-drift";
  }
  return "?";
}

namespace {

struct Component {
  double w, mx, my, sd;
};

// Background shared by every scenario: three Gaussian bumps plus a uniform share.
const std::vector<Component> kBackground = {{0.35, 3.0, 3.0, 1.2}, {0.30, 7.0, 6.0, 0.9}, {0.15, 4.0, 8.0, 0.7}};
constexpr double kUniformShare = 0.20;
constexpr double kSide = 10.0;
constexpr double kTMax = 100.0;

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    rng_.seed(seq);
  }

  double unif(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }

  // Gaussian truncated to the square by rejection.
  Point gauss(double mx, double my, double sd) {
    std::normal_distribution<double> n(0.0, sd);
    for (;;) {
      Point p{mx + n(rng_), my + n(rng_)};
      if (p.x >= 0 && p.x <= kSide && p.y >= 0 && p.y <= kSide) return p;
    }
  }

  Point background() {
    double u = unif(0.0, 1.0);
    for (const Component& c : kBackground) {
      if (u < c.w) return gauss(c.mx, c.my, c.sd);
      u -= c.w;
    }
    return {unif(0.0, kSide), unif(0.0, kSide)};
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

SynthResult synth_generate(Scenario scenario, std::size_t n1, std::size_t n2, std::uint64_t seed,
                           const fs::path& out_dir) {
  if (n1 < 10 || n2 < 10) throw ValidationError("synth needs at least 10 points per group");
  Sampler smp(seed);
  const bool timed = scenario == Scenario::st_drift;
  const double hot_share = 0.15, hot_sd = 0.4;
  const Point case_hot{7.0, 3.0}, control_hot{2.5, 7.5};
  const Point drift_a{2.0, 2.0}, drift_b{8.0, 8.0};
  const double drift_share = 0.25, drift_sd = 0.5;

  std::vector<Point> xy1, xy2;
  std::vector<double> t1, t2;
  for (std::size_t k = 0; k < n1; ++k) {
    switch (scenario) {
      case Scenario::gaussian_mix: xy1.push_back(smp.background()); break;
      case Scenario::hotspot_pair:
        xy1.push_back(smp.unif(0, 1) < hot_share ? smp.gauss(case_hot.x, case_hot.y, hot_sd) : smp.background());
        break;
      case Scenario::st_drift: {
        double t = smp.unif(0.0, kTMax);
        if (smp.unif(0, 1) < drift_share) {
          double a = t / kTMax;
          xy1.push_back(smp.gauss(drift_a.x + a * (drift_b.x - drift_a.x), drift_a.y + a * (drift_b.y - drift_a.y), drift_sd));
        } else {
          xy1.push_back(smp.background());
        }
        t1.push_back(t);
        break;
      }
    }
  }
  for (std::size_t k = 0; k < n2; ++k) {
    if (scenario == Scenario::hotspot_pair && smp.unif(0, 1) < hot_share) {
      xy2.push_back(smp.gauss(control_hot.x, control_hot.y, hot_sd));
    } else {
      xy2.push_back(smp.background());
    }
    if (timed) t2.push_back(smp.unif(0.0, kTMax));
  }

  SynthResult r{out_dir / "cases.csv", out_dir / "controls.csv", out_dir / "points.csv", out_dir / "truth.json"};
  write_point_csv(r.cases, xy1, t1);
  write_point_csv(r.controls, xy2, t2);
  std::vector<Point> all = xy1;
  all.insert(all.end(), xy2.begin(), xy2.end());
  std::vector<double> tall = t1;
  tall.insert(tall.end(), t2.begin(), t2.end());
  std::vector<int> grp(n1, 1);
  grp.resize(n1 + n2, 0);
  write_point_csv(r.combined, all, tall, grp);

  json bg = json::array();
  for (const Component& c : kBackground) bg.push_back({{"weight", c.w}, {"mean", {c.mx, c.my}}, {"sd", c.sd}});
  json truth = {{"scenario", scenario_name(scenario)},
                {"seed", seed},
                {"n_cases", n1},
                {"n_controls", n2},
                {"bbox", {0.0, 0.0, kSide, kSide}},
                {"background", {{"components", bg}, {"uniform_weight", kUniformShare}}}};
  if (scenario == Scenario::hotspot_pair) {
    truth["case_hotspot"] = {{"weight", hot_share}, {"mean", {case_hot.x, case_hot.y}}, {"sd", hot_sd}};
    truth["control_hotspot"] = {{"weight", hot_share}, {"mean", {control_hot.x, control_hot.y}}, {"sd", hot_sd}};
  }
  if (timed) {
    truth["tlim"] = {0.0, kTMax};
    truth["case_hotspot"] = {{"weight", drift_share},
                             {"mean_at_tmin", {drift_a.x, drift_a.y}},
                             {"mean_at_tmax", {drift_b.x, drift_b.y}},
                             {"sd", drift_sd}};
  }
  std::ofstream out = open_out(r.truth);
  out << truth.dump(2) << '\n';
  return r;
}

}  // namespace sprisk::io
