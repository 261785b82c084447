#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sprisk/bandwidth.hpp"
#include "sprisk/errors.hpp"
#include "sprisk/io.hpp"
#include "sprisk/tolerance.hpp"

namespace sprisk::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Resolved configuration and summary of one run.
struct Ctx {
  std::string subcommand;
  ordered_json args = ordered_json::object();
  ordered_json result = ordered_json::object();

  // Records a value the run actually used, dropping options it supersedes.
  void resolve(const std::string& key, double v, std::initializer_list<const char*> drop = {}) {
    args[key] = io::format_double(v);
    for (const char* d : drop) args.erase(d);
  }
  void resolve(const std::string& key, const std::string& v, std::initializer_list<const char*> drop = {}) {
    args[key] = v;
    for (const char* d : drop) args.erase(d);
  }
};

// Every option the subcommand saw or defaulted, keyed by long name.
ordered_json collect_args(const CLI::App* sub) {
  ordered_json a = ordered_json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string& name = opt->get_single_name();
    if (name == "help" || name.empty()) continue;
    const bool flag = opt->get_expected_min() == 0;
    if (opt->count() > 0) {
      if (flag) {
        a[name] = true;
      } else {
        std::string joined;
        for (const std::string& r : opt->results()) joined += (joined.empty() ? "" : ",") + r;
        a[name] = joined;
      }
    } else if (!flag && !opt->get_default_str().empty()) {
      a[name] = opt->get_default_str();
    }
  }
  return a;
}

EdgeCorrection parse_correction(const std::string& s) {
  if (s == "none") return EdgeCorrection::none;
  if (s == "uniform") return EdgeCorrection::uniform;
  if (s == "diggle") return EdgeCorrection::diggle;
  throw ValidationError("unknown correction '" + s + "'");
}

Tail parse_tail(const std::string& s) {
  if (s == "upper") return Tail::upper;
  if (s == "lower") return Tail::lower;
  throw ValidationError("tail must be upper or lower");
}

SearchRange parse_range(const std::string& s) {
  if (s.empty()) return {};
  std::vector<double> v = io::parse_double_list(s);
  if (v.size() != 2 || !(v[0] > 0 && v[1] > v[0])) throw ValidationError("range needs 0 < lo < hi");
  return {v[0], v[1]};
}

std::string three(std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", k);
  return buf;
}

// ---- shared option groups ----

struct WindowOpts {
  std::string bbox;
  std::string window;
  std::string res = "128";

  void add(CLI::App* sub) {
    sub->add_option("--bbox", bbox, "Rectangular window xmin,ymin,xmax,ymax");
    sub->add_option("--window", window, "Window polygon (GeoJSON)");
    sub->add_option("--res", res, "Grid size N or nx,ny")->capture_default_str();
  }

  WindowPtr build() const {
    if (bbox.empty() == window.empty()) throw ValidationError("give exactly one of --bbox and --window");
    Polygon poly = bbox.empty() ? io::read_polygon_geojson(window) : io::parse_bbox(bbox);
    std::vector<double> r = io::parse_double_list(res);
    if (r.size() == 1) r.push_back(r[0]);
    if (r.size() != 2) throw ValidationError("--res takes N or nx,ny");
    for (double v : r)
      if (!(v >= 4 && v <= 8192 && v == std::floor(v))) throw ValidationError("--res values must be integers in [4, 8192]");
    return std::make_shared<const WindowMask>(build_window(poly, static_cast<int>(r[0]), static_cast<int>(r[1])));
  }
};

struct OutOpts {
  std::string out;
  std::string format = "binary";
  bool png = false;

  void add(CLI::App* sub, bool required = true) {
    auto* o = sub->add_option("--out", out, "Output prefix");
    if (required) o->required();
    sub->add_option("--format", format, "Raster format")->check(CLI::IsMember({"binary", "ascii"}))->capture_default_str();
    sub->add_flag("--png", png, "Also write PNG images");
  }
  io::RasterFormat fmt() const { return format == "ascii" ? io::RasterFormat::ascii : io::RasterFormat::binary; }
};

struct Writer {
  const OutOpts& o;
  Ctx& ctx;

  fs::path path(const std::string& suffix) const { return fs::path(o.out + suffix); }

  void raster(const Surface& s, const std::string& suffix, const std::string& key) {
    fs::path p = io::write_raster(s, path(suffix), o.fmt());
    ctx.result["files"][key] = p.string();
  }
  void png(const Surface& s, const std::string& suffix, const std::vector<ContourSet>* c = nullptr,
           io::RenderOptions ro = {}) {
    if (!o.png) return;
    fs::path p = path(suffix + ".png");
    io::render_heatmap(s, c, p, ro);
    ctx.result["files"][suffix.empty() ? "png" : suffix.substr(1) + ".png"] = p.string();
  }
};

// Point inputs: one file, optionally with a group column, or two files.
struct SampleOpts {
  std::string points;
  std::string group = "all";

  void add(CLI::App* sub) {
    sub->add_option("--points", points, "Point CSV (x,y[,t][,group])")->required();
    sub->add_option("--group", group, "Which group to use when the file has one")
        ->check(CLI::IsMember({"all", "case", "control"}))
        ->capture_default_str();
  }

  PointPattern load(const WindowPtr& w) const {
    io::Ingested in = io::ingest_points(points, w);
    if (in.all) {
      if (group != "all") throw ValidationError(points + " has no group column");
      return *in.all;
    }
    if (group == "case") return *in.cases;
    if (group == "control") return *in.controls;
    return pooled(*in.cases, *in.controls);
  }
};

struct TwoSampleOpts {
  std::string cases;
  std::string controls;
  std::string points;

  void add(CLI::App* sub) {
    sub->add_option("--cases", cases, "Case CSV");
    sub->add_option("--controls", controls, "Control CSV");
    sub->add_option("--points", points, "CSV with a group column");
  }

  std::pair<PointPattern, PointPattern> load(const WindowPtr& w) const {
    if (!points.empty()) {
      if (!cases.empty() || !controls.empty()) throw ValidationError("--points excludes --cases/--controls");
      io::Ingested in = io::ingest_points(points, w);
      if (!in.cases) throw ValidationError(points + " needs a group column");
      return {*in.cases, *in.controls};
    }
    if (cases.empty() || controls.empty()) throw ValidationError("give --cases and --controls, or --points");
    io::Ingested a = io::ingest_points(cases, w), b = io::ingest_points(controls, w);
    if (!a.all || !b.all) throw ValidationError("--cases/--controls files must not carry a group column");
    return {*a.all, *b.all};
  }
};

// ---- risk options (risk, tolerance) ----

struct RiskOpts {
  WindowOpts win;
  TwoSampleOpts data;
  OutOpts out;
  std::string correction = "uniform";
  std::optional<double> h;
  std::string h_rule = "os";
  bool adapt = false;
  bool symmetric = false;
  std::optional<double> hp, hp1, hp2;
  double tau = 5.0;

  void add(CLI::App* sub) {
    win.add(sub);
    data.add(sub);
    out.add(sub);
    sub->add_option("--correction", correction)->check(CLI::IsMember({"none", "uniform", "diggle"}))->capture_default_str();
    sub->add_option("--h,--h0", h, "Bandwidth (global h0 when adaptive)");
    sub->add_option("--h-rule", h_rule, "Rule when --h is absent")
        ->check(CLI::IsMember({"ns", "os", "joi1", "joi2", "joi3"}))
        ->capture_default_str();
    sub->add_flag("--adapt", adapt, "Adaptive (Abramson) estimates");
    sub->add_flag("--symmetric", symmetric, "Pooled pilot for both samples");
    sub->add_option("--hp", hp, "Pooled pilot bandwidth (symmetric)");
    sub->add_option("--hp1", hp1, "Case pilot bandwidth (asymmetric)");
    sub->add_option("--hp2", hp2, "Control pilot bandwidth (asymmetric)");
    sub->add_option("--tau", tau, "Bandwidth clip factor")->capture_default_str();
  }

  void validate() const {
    if (symmetric && !adapt) throw ValidationError("--symmetric needs --adapt");
    if (!adapt && (hp || hp1 || hp2)) throw ValidationError("pilot bandwidths need --adapt");
    if (symmetric && (hp1 || hp2)) throw ValidationError("--hp1/--hp2 are for asymmetric estimates; use --hp");
    if (adapt && !symmetric && hp) throw ValidationError("--hp is for symmetric estimates; use --hp1/--hp2");
    if (h && !(*h > 0)) throw ValidationError("--h must be positive");
    if (!(tau >= 1)) throw ValidationError("--tau must be at least 1");
  }

  RiskConfig resolve(Ctx& ctx, const PointPattern& a, const PointPattern& b) const {
    RiskConfig cfg;
    cfg.correction = parse_correction(correction);
    cfg.tau = tau;
    if (h) {
      cfg.h = *h;
    } else if (h_rule == "os") {
      cfg.h = os_pooled(a, b).h;
    } else if (h_rule == "ns") {
      cfg.h = ns_bandwidth(pooled(a, b).coords()).h;
    } else {
      BandwidthResult r = joi_select(a, b, h_rule.back() - '0');
      cfg.h = r.h;
      ctx.result["selector"] = {{"method", r.method}, {"h", r.h}, {"objective", r.objective}};
    }
    ctx.resolve("h", cfg.h, {"h-rule"});
    if (adapt && symmetric) {
      cfg.kind = RiskKind::adaptive_symmetric;
      cfg.hp = hp ? *hp : os_bandwidth(pooled(a, b).coords()).h;
      ctx.resolve("hp", cfg.hp);
    } else if (adapt) {
      cfg.kind = RiskKind::adaptive_asymmetric;
      cfg.hp1 = hp1 ? *hp1 : os_bandwidth(a.coords()).h;
      cfg.hp2 = hp2 ? *hp2 : os_bandwidth(b.coords()).h;
      ctx.resolve("hp1", cfg.hp1);
      ctx.resolve("hp2", cfg.hp2);
    }
    return cfg;
  }
};

void describe_risk(Ctx& ctx, const RiskSurface& r) {
  ctx.result["kind"] = risk_kind_name(r.kind);
  ctx.result["n_cases"] = r.n1;
  ctx.result["n_controls"] = r.n2;
  ctx.result["epsilon"] = r.epsilon;
  ctx.result["floored_f"] = r.floored_f;
  ctx.result["floored_g"] = r.floored_g;
  if (r.bw_f) ctx.result["gamma_f"] = r.bw_f->gamma;
  if (r.bw_g) ctx.result["gamma_g"] = r.bw_g->gamma;
  for (const std::string& w : r.warnings) ctx.result["warnings"].push_back(w);
}

// ---- subcommands ----

struct DensityCmd {
  WindowOpts win;
  SampleOpts data;
  OutOpts out;
  std::string correction = "uniform";
  std::optional<double> h;
  std::string h_rule = "os";
  bool adapt = false;
  std::optional<double> hp;
  double tau = 5.0;
  double delta = 0.0;

  void add(CLI::App* sub) {
    win.add(sub);
    data.add(sub);
    out.add(sub);
    sub->add_option("--correction", correction)->check(CLI::IsMember({"none", "uniform", "diggle"}))->capture_default_str();
    sub->add_option("--h,--h0", h, "Bandwidth (global h0 when adaptive)");
    sub->add_option("--h-rule", h_rule, "Selector when --h is absent")
        ->check(CLI::IsMember({"ns", "os", "lscv", "lik"}))
        ->capture_default_str();
    sub->add_flag("--adapt", adapt, "Adaptive (Abramson) estimate");
    sub->add_option("--hp", hp, "Pilot bandwidth");
    sub->add_option("--tau", tau, "Bandwidth clip factor")->capture_default_str();
    sub->add_option("--delta", delta, "Quantile bin width for the partitioned estimate; 0 is exact")
        ->capture_default_str();
  }

  void run(Ctx& ctx) {
    if (!adapt && hp) throw ValidationError("--hp needs --adapt");
    if (!adapt && delta != 0.0) throw ValidationError("--delta needs --adapt");
    if (!(delta >= 0 && delta < 1)) throw ValidationError("--delta must lie in [0, 1)");
    WindowPtr w = win.build();
    PointPattern pts = data.load(w);
    EdgeCorrection corr = parse_correction(correction);
    double hpv = 0.0;
    if (adapt) {
      hpv = hp ? *hp : os_bandwidth(pts.coords()).h;
      ctx.resolve("hp", hpv);
    }
    double hv = 0.0;
    if (h) {
      hv = *h;
    } else if (h_rule == "ns") {
      hv = ns_bandwidth(pts.coords()).h;
    } else if (h_rule == "os") {
      hv = os_bandwidth(pts.coords()).h;
    } else {
      BandwidthResult r = h_rule == "lscv" ? (adapt ? lscv_adaptive(pts, hpv, tau, corr) : lscv(pts, corr))
                                           : (adapt ? lik_adaptive(pts, hpv, tau, corr) : lik(pts, corr));
      hv = r.h;
      ctx.result["selector"] = {{"method", r.method}, {"h", r.h}, {"objective", r.objective}};
    }
    ctx.resolve("h", hv, {"h-rule"});
    DensitySurface d;
    if (adapt) {
      AdaptiveBandwidths bw = abramson_bandwidths(pts, hv, make_pilot(pts, hpv), tau);
      d = delta > 0 ? kde_adaptive_partitioned(pts, bw, delta, corr) : kde_adaptive_direct(pts, bw, corr);
      ctx.result["gamma"] = bw.gamma;
      ctx.result["clipped"] = bw.clipped;
    } else {
      d = kde_fixed(pts, hv, corr);
    }
    ctx.result["n"] = pts.n();
    ctx.result["integral"] = integrate(d.z, *w);
    ctx.result["q_clamped"] = d.q_clamped;
    Writer wr{out, ctx};
    wr.raster(d.z, "", "density");
    wr.png(d.z, "");
  }
};

struct RiskCmd {
  RiskOpts o;
  void add(CLI::App* sub) { o.add(sub); }

  void run(Ctx& ctx) {
    o.validate();
    WindowPtr w = o.win.build();
    auto [a, b] = o.data.load(w);
    RiskConfig cfg = o.resolve(ctx, a, b);
    RiskSurface r = compute_risk(a, b, cfg);
    describe_risk(ctx, r);
    Writer wr{o.out, ctx};
    wr.raster(r.rho, "", "rho");
    wr.png(r.rho, "");
  }
};

struct ToleranceFlags {
  std::string method = "asy";
  int iter = 99;
  std::uint64_t seed = 1;
  std::string levels = "0.05,0.01";
  std::string tail = "upper";

  void add(CLI::App* sub, bool allow_none = false) {
    std::vector<std::string> methods = {"asy", "mc"};
    if (allow_none) {
      methods.insert(methods.begin(), "none");
      method = "none";
    }
    sub->add_option("--method", method, "p-value method")->check(CLI::IsMember(methods))->capture_default_str();
    sub->add_option("--iter", iter, "Monte Carlo permutations")->capture_default_str();
    sub->add_option("--seed", seed, "Random seed")->capture_default_str();
    sub->add_option("--levels", levels, "Contour levels")->capture_default_str();
    sub->add_option("--tail", tail)->check(CLI::IsMember({"upper", "lower"}))->capture_default_str();
  }

  std::vector<double> level_list() const {
    std::vector<double> v = io::parse_double_list(levels);
    for (double l : v)
      if (!(l > 0 && l < 1)) throw ValidationError("levels must lie in (0, 1)");
    return v;
  }
};

struct ToleranceCmd {
  RiskOpts o;
  ToleranceFlags t;
  void add(CLI::App* sub) {
    o.add(sub);
    t.add(sub);
  }

  void run(Ctx& ctx) {
    o.validate();
    std::vector<double> levels = t.level_list();
    Tail tail = parse_tail(t.tail);
    if (t.method == "mc" && t.iter < 19) throw ValidationError("--iter must be at least 19");
    WindowPtr w = o.win.build();
    auto [a, b] = o.data.load(w);
    RiskConfig cfg = o.resolve(ctx, a, b);
    RiskSurface r = compute_risk(a, b, cfg);
    describe_risk(ctx, r);
    PValueSurface p;
    if (t.method == "mc") {
      p = mc_pvalues(a, b, cfg, t.iter, t.seed, tail);
    } else if (cfg.kind == RiskKind::fixed) {
      p = asy_pvalues_fixed(r, pooled(a, b), tail);
    } else {
      p = asy_pvalues_adaptive(r, tail);
    }
    for (const std::string& s : p.warnings) ctx.result["warnings"].push_back(s);
    ToleranceContours tc = tol_contours(p, levels);
    ordered_json counts = ordered_json::array();
    for (const ContourSet& cs : tc.sets) counts.push_back({{"level", cs.level}, {"polylines", cs.polylines.size()}});
    ctx.result["contours"] = counts;
    Writer wr{o.out, ctx};
    wr.raster(r.rho, ".rho", "rho");
    wr.raster(p.P(), ".P", "P");
    fs::path gj = wr.path(".contours.geojson");
    io::write_contours_geojson(tc.sets, gj, ordered_json{{"tail", t.tail}, {"method", t.method}}.dump());
    ctx.result["files"]["contours"] = gj.string();
    wr.png(r.rho, ".rho", &tc.sets);
    wr.png(p.P(), ".P", nullptr, {0.0, 1.0, 0});
  }
};

struct TimeOpts {
  std::string tlim;
  int tres = 0;
  void add(CLI::App* sub) {
    sub->add_option("--tlim", tlim, "Time interval a,b (default: data range)");
    sub->add_option("--tres", tres, "Number of time-grid points (0: integer times)")->capture_default_str();
  }
  TemporalInterval build(Ctx& ctx, const std::vector<double>& times) const {
    double a = 0, b = 0;
    if (tlim.empty()) {
      if (times.empty()) throw ValidationError("no times to derive --tlim from");
      auto [lo, hi] = std::minmax_element(times.begin(), times.end());
      a = *lo;
      b = *hi;
      ctx.resolve("tlim", io::format_double(a) + "," + io::format_double(b));
    } else {
      std::vector<double> v = io::parse_double_list(tlim);
      if (v.size() != 2) throw ValidationError("--tlim needs a,b");
      a = v[0];
      b = v[1];
    }
    if (!(b > a)) throw ValidationError("--tlim needs b > a");
    if (tres < 0 || tres == 1) throw ValidationError("--tres must be 0 or at least 2");
    for (double t : times)
      if (t < a || t > b) throw ValidationError("time " + io::format_double(t) + " lies outside --tlim");
    return make_interval(a, b, tres);
  }
};

struct STDensityCmd {
  WindowOpts win;
  SampleOpts data;
  OutOpts out;
  TimeOpts time;
  std::string correction = "uniform";
  std::optional<double> h, lambda;
  bool conditional = false;

  void add(CLI::App* sub) {
    win.add(sub);
    data.add(sub);
    out.add(sub);
    time.add(sub);
    sub->add_option("--correction", correction)->check(CLI::IsMember({"none", "uniform"}))->capture_default_str();
    sub->add_option("--h", h, "Spatial bandwidth (default: oversmoothing)");
    sub->add_option("--lambda", lambda, "Temporal bandwidth (default: oversmoothing)");
    sub->add_flag("--conditional", conditional, "Condition each slice on time");
  }

  void run(Ctx& ctx) {
    WindowPtr w = win.build();
    PointPattern pts = data.load(w);
    if (!pts.has_times()) throw ValidationError("st-density needs a t column");
    TemporalInterval tl = time.build(ctx, pts.times());
    double hv = h ? *h : os_bandwidth(pts.coords()).h;
    double lv = lambda ? *lambda : os_temporal(pts.times()).lambda;
    ctx.resolve("h", hv);
    ctx.resolve("lambda", lv);
    STDensity d = kde_st(pts, hv, lv, tl, parse_correction(correction));
    if (conditional) d = condition_on_time(d);
    Writer wr{out, ctx};
    ordered_json slices = ordered_json::array();
    for (std::size_t s = 0; s < d.slices.size(); ++s) {
      std::string suffix = ".t" + three(s);
      fs::path p = io::write_raster(d.slices[s], wr.path(suffix), out.fmt());
      slices.push_back({{"t", tl.t_grid[s]}, {"file", p.string()}});
      if (out.png) io::render_heatmap(d.slices[s], nullptr, wr.path(suffix + ".png"));
    }
    ctx.result["n"] = pts.n();
    ctx.result["slices"] = slices;
    for (const std::string& s : d.warnings) ctx.result["warnings"].push_back(s);
  }
};

// Space-time risk plus optional p-value stacks, shared by st-risk and slice.
struct STRiskOpts {
  WindowOpts win;
  TwoSampleOpts data;
  OutOpts out;
  TimeOpts time;
  ToleranceFlags tol;
  std::string correction = "uniform";
  std::optional<double> h, lambda;
  bool time_constant = false;

  void add(CLI::App* sub) {
    win.add(sub);
    data.add(sub);
    out.add(sub);
    time.add(sub);
    tol.add(sub, true);
    sub->add_option("--correction", correction)->check(CLI::IsMember({"none", "uniform"}))->capture_default_str();
    sub->add_option("--h", h, "Spatial bandwidth (default: pooled oversmoothing)");
    sub->add_option("--lambda", lambda, "Temporal bandwidth (default: pooled oversmoothing)");
    sub->add_flag("--time-constant", time_constant, "Spatial-only control density");
  }

  struct Result {
    STRiskSurface r;
    std::optional<PValueSurface> pj, pc;
    std::vector<double> levels;
  };

  Result compute(Ctx& ctx) const {
    std::vector<double> levels = tol.level_list();
    Tail tail = parse_tail(tol.tail);
    WindowPtr w = win.build();
    auto [a, b] = data.load(w);
    if (!a.has_times()) throw ValidationError("cases need a t column");
    const bool tc = time_constant || !b.has_times();
    if (tc && tol.method == "mc") throw ValidationError("Monte Carlo p-values need time-stamped controls");
    if (tol.method == "mc" && tol.iter < 19) throw ValidationError("--iter must be at least 19");
    std::vector<double> times = a.times();
    if (!tc) times.insert(times.end(), b.times().begin(), b.times().end());
    TemporalInterval tl = time.build(ctx, times);
    const double nstar = std::sqrt(static_cast<double>(a.n()) * static_cast<double>(b.n()));
    std::vector<Point> xy = a.coords();
    xy.insert(xy.end(), b.coords().begin(), b.coords().end());
    double hv = h ? *h : os_bandwidth(xy, nstar).h;
    double lv = lambda ? *lambda : os_temporal(tc ? a.times() : times, tc ? std::nullopt : std::optional(nstar)).lambda;
    ctx.resolve("h", hv);
    ctx.resolve("lambda", lv);
    EdgeCorrection corr = parse_correction(correction);
    Result res;
    res.levels = levels;
    STDensity f = kde_st(a, hv, lv, tl, corr);
    PointPattern bt = tc ? PointPattern(w, b.coords()) : b;
    res.r = tc ? risk_st(f, kde_fixed(bt, hv, corr)) : risk_st(f, kde_st(bt, hv, lv, tl, corr));
    if (tol.method == "asy") {
      PointPattern pool = pooled(a, bt);
      const PointPattern* pp = tc ? nullptr : &pool;
      res.pj = asy_pvalues_st(res.r, STMode::joint, *w, pp, tail);
      res.pc = asy_pvalues_st(res.r, STMode::conditional, *w, pp, tail);
    } else if (tol.method == "mc") {
      STPValues p = mc_pvalues_st(a, bt, hv, lv, tl, tol.iter, tol.seed, tail);
      res.pj = std::move(p.joint);
      res.pc = std::move(p.cond);
    }
    ctx.result["denominator"] = tc ? "time-constant" : "time-varying";
    ctx.result["n_cases"] = a.n();
    ctx.result["n_controls"] = b.n();
    ctx.result["epsilon"] = res.r.epsilon;
    ctx.result["floored"] = res.r.floored;
    for (const std::string& s : res.r.warnings) ctx.result["warnings"].push_back(s);
    return res;
  }
};

struct STRiskCmd {
  STRiskOpts o;
  void add(CLI::App* sub) { o.add(sub); }

  void run(Ctx& ctx) {
    STRiskOpts::Result res = o.compute(ctx);
    const STRiskSurface& r = res.r;
    Writer wr{o.out, ctx};
    ordered_json slices = ordered_json::array();
    for (std::size_t s = 0; s < r.rho_joint.size(); ++s) {
      const std::string tag = ".t" + three(s);
      ordered_json e = {{"t", r.tlim.t_grid[s]}};
      e["joint"] = io::write_raster(r.rho_joint[s], wr.path(".joint" + tag), o.out.fmt()).string();
      e["cond"] = io::write_raster(r.rho_cond[s], wr.path(".cond" + tag), o.out.fmt()).string();
      std::vector<ContourSet> cont;
      if (res.pc) {
        const Surface& pj = res.pj->P_st()[s];
        const Surface& pc = res.pc->P_st()[s];
        e["P_joint"] = io::write_raster(pj, wr.path(".Pjoint" + tag), o.out.fmt()).string();
        e["P_cond"] = io::write_raster(pc, wr.path(".Pcond" + tag), o.out.fmt()).string();
        cont = tol_contours(pc, res.levels, res.pc->tail).sets;
        fs::path gj = wr.path(".cond" + tag + ".contours.geojson");
        io::write_contours_geojson(cont, gj, ordered_json{{"t", r.tlim.t_grid[s]}, {"tail", o.tol.tail}}.dump());
        e["contours"] = gj.string();
      }
      if (o.out.png) io::render_heatmap(r.rho_cond[s], res.pc ? &cont : nullptr, wr.path(".cond" + tag + ".png"));
      slices.push_back(e);
    }
    ctx.result["slices"] = slices;
  }
};

struct SliceCmd {
  STRiskOpts o;
  std::string times;
  void add(CLI::App* sub) {
    o.add(sub);
    sub->add_option("--times", times, "Times to slice at")->required();
  }

  void run(Ctx& ctx) {
    std::vector<double> ts = io::parse_double_list(times);
    STRiskOpts::Result res = o.compute(ctx);
    std::vector<STSlice> sl = st_slice(res.r, ts, res.pj ? &res.pj->P_st() : nullptr, res.pc ? &res.pc->P_st() : nullptr);
    Writer wr{o.out, ctx};
    ordered_json out = ordered_json::array();
    for (std::size_t k = 0; k < sl.size(); ++k) {
      const std::string tag = ".s" + three(k);
      ordered_json e = {{"t", sl[k].t}};
      e["rr"] = io::write_raster(sl[k].rr, wr.path(tag + ".rr"), o.out.fmt()).string();
      e["rr_cond"] = io::write_raster(sl[k].rr_cond, wr.path(tag + ".rr_cond"), o.out.fmt()).string();
      std::vector<ContourSet> cont;
      if (sl[k].P) {
        e["P"] = io::write_raster(*sl[k].P, wr.path(tag + ".P"), o.out.fmt()).string();
        e["P_cond"] = io::write_raster(*sl[k].P_cond, wr.path(tag + ".P_cond"), o.out.fmt()).string();
        cont = tol_contours(*sl[k].P_cond, res.levels, res.pc->tail).sets;
      }
      if (o.out.png) io::render_heatmap(sl[k].rr_cond, sl[k].P ? &cont : nullptr, wr.path(tag + ".png"));
      out.push_back(e);
    }
    ctx.result["slices"] = out;
  }
};

struct BwSelectCmd {
  WindowOpts win;
  std::string points, cases, controls;
  std::string group = "all";
  std::string out;
  std::string method;
  std::string correction = "uniform";
  bool adapt = false, st = false;
  std::optional<double> hp, eta, nu, psi;
  double tau = 5.0;
  std::string range, lambda_range;
  TimeOpts time;
  std::string strategy = "analytic";
  int J = 200;
  std::uint64_t seed = 1;

  void add(CLI::App* sub) {
    win.add(sub);
    time.add(sub);
    sub->add_option("--method", method)
        ->check(CLI::IsMember({"ns", "os", "lscv", "lik", "boot", "joi1", "joi2", "joi3", "joi4"}))
        ->required();
    sub->add_option("--points", points, "Point CSV");
    sub->add_option("--group", group)->check(CLI::IsMember({"all", "case", "control"}))->capture_default_str();
    sub->add_option("--cases", cases, "Case CSV (joi methods)");
    sub->add_option("--controls", controls, "Control CSV (joi methods)");
    sub->add_option("--out", out, "Output prefix for the trace CSV and config");
    sub->add_option("--correction", correction)->check(CLI::IsMember({"none", "uniform", "diggle"}))->capture_default_str();
    sub->add_flag("--adapt", adapt, "Select the global h0 of an adaptive estimate");
    sub->add_flag("--st", st, "Select (h, lambda) for a space-time estimate");
    sub->add_option("--hp", hp, "Pilot bandwidth (adaptive)");
    sub->add_option("--tau", tau)->capture_default_str();
    sub->add_option("--range", range, "Search range lo,hi for h");
    sub->add_option("--lambda-range", lambda_range, "Search range lo,hi for lambda");
    sub->add_option("--boot-strategy", strategy)->check(CLI::IsMember({"analytic", "resample"}))->capture_default_str();
    sub->add_option("--J", J, "Bootstrap resamples")->capture_default_str();
    sub->add_option("--seed", seed)->capture_default_str();
    sub->add_option("--eta", eta, "Bootstrap reference bandwidth");
    sub->add_option("--nu", nu, "Bootstrap temporal reference bandwidth");
    sub->add_option("--psi", psi, "Pilot bandwidth for joi3");
  }

  void run(Ctx& ctx) {
    const bool two = method.rfind("joi", 0) == 0;
    if (adapt && st) throw ValidationError("--adapt and --st are exclusive");
    if (adapt && !(method == "lscv" || method == "lik" || method == "boot"))
      throw ValidationError("--adapt applies to lscv, lik and boot");
    if (st && two) throw ValidationError("--st does not apply to joi methods (joi4 is space-time already)");
    if (psi && method != "joi3") throw ValidationError("--psi applies to joi3 only");
    WindowPtr w = win.build();
    SearchRange hr = parse_range(range), lr = parse_range(lambda_range);
    EdgeCorrection corr = parse_correction(correction);
    BandwidthResult r;
    if (two) {
      std::pair<PointPattern, PointPattern> ab = TwoSampleOpts{cases, controls, points}.load(w);
      PointPattern& a = ab.first;
      PointPattern& b = ab.second;
      if (method == "joi4") {
        if (!a.has_times() || !b.has_times()) throw ValidationError("joi4 needs time-stamped cases and controls");
        std::vector<double> ts = a.times();
        ts.insert(ts.end(), b.times().begin(), b.times().end());
        r = joi4_st(a, b, time.build(ctx, ts), hr, lr);
      } else {
        r = joi_select(a, b, method.back() - '0', psi.value_or(0.0), hr);
      }
    } else {
      if (points.empty()) throw ValidationError("--points is required for " + method);
      PointPattern pts = SampleOpts{points, group}.load(w);
      if (st && !pts.has_times()) throw ValidationError("--st needs a t column");
      double hpv = 0.0;
      if (adapt) {
        hpv = hp ? *hp : os_bandwidth(pts.coords()).h;
        ctx.resolve("hp", hpv);
      }
      BootOptions bo;
      bo.eta = eta.value_or(0.0);
      bo.strategy = strategy == "resample" ? BootStrategy::resample : BootStrategy::analytic;
      bo.J = J;
      bo.seed = seed;
      bo.correction = corr;
      if (method == "ns" || method == "os") {
        r = method == "ns" ? ns_bandwidth(pts.coords()) : os_bandwidth(pts.coords());
        if (st) r.lambda = (method == "ns" ? ns_temporal(pts.times()) : os_temporal(pts.times())).lambda;
      } else if (st) {
        TemporalInterval tl = time.build(ctx, pts.times());
        if (method == "lscv") r = lscv_st(pts, tl, hr, lr);
        if (method == "lik") r = lik_st(pts, tl, hr, lr);
        if (method == "boot") r = boot_st(pts, tl, eta.value_or(0.0), nu.value_or(0.0), hr, lr);
      } else if (adapt) {
        if (method == "lscv") r = lscv_adaptive(pts, hpv, tau, corr, hr);
        if (method == "lik") r = lik_adaptive(pts, hpv, tau, corr, hr);
        if (method == "boot") {
          if (bo.strategy != BootStrategy::resample) throw ValidationError("adaptive boot needs --boot-strategy resample");
          r = boot_adaptive(pts, bo, hpv, tau, hr);
        }
      } else {
        if (method == "lscv") r = lscv(pts, corr, hr);
        if (method == "lik") r = lik(pts, corr, hr);
        if (method == "boot") r = boot_fixed(pts, bo, hr);
      }
    }
    ctx.result["method"] = r.method;
    ctx.result["h"] = r.h;
    if (std::isfinite(r.lambda)) ctx.result["lambda"] = r.lambda;
    if (std::isfinite(r.objective)) ctx.result["objective"] = r.objective;
    if (r.range.set()) ctx.result["range"] = {r.range.lo, r.range.hi};
    if (r.lambda_range.set()) ctx.result["lambda_range"] = {r.lambda_range.lo, r.lambda_range.hi};
    ctx.result["boundary_pinned"] = r.boundary_pinned;
    ctx.result["trace_length"] = r.trace.size();
    for (const std::string& s : r.warnings) ctx.result["warnings"].push_back(s);
    if (!out.empty()) {
      fs::path p = out + ".trace.csv";
      if (p.has_parent_path()) fs::create_directories(p.parent_path());
      std::ofstream f(p);
      if (!f) throw ValidationError("cannot write " + p.string());
      f << "h,lambda,value\n";
      for (const TraceEntry& e : r.trace)
        f << io::format_double(e.h) << ',' << io::format_double(e.lambda) << ',' << io::format_double(e.value) << '\n';
      ctx.result["files"]["trace"] = p.string();
    }
  }
};

struct MultiscaleCmd {
  WindowOpts win;
  SampleOpts data;
  OutOpts out;
  std::string correction = "uniform";
  std::optional<double> h0, hp;
  double tau = 5.0;
  std::string h0fac = "0.25,1.5";
  int planes = 14;
  std::string at;

  void add(CLI::App* sub) {
    win.add(sub);
    data.add(sub);
    out.add(sub);
    sub->add_option("--correction", correction)->check(CLI::IsMember({"none", "uniform"}))->capture_default_str();
    sub->add_option("--h0", h0, "Reference global bandwidth (default: oversmoothing)");
    sub->add_option("--hp", hp, "Pilot bandwidth (default: oversmoothing)");
    sub->add_option("--tau", tau)->capture_default_str();
    sub->add_option("--h0fac", h0fac, "Range of global bandwidths as multiples lo,hi of h0")->capture_default_str();
    sub->add_option("--planes", planes)->capture_default_str();
    sub->add_option("--at", at, "Global bandwidths to slice at")->required();
  }

  void run(Ctx& ctx) {
    std::vector<double> fac = io::parse_double_list(h0fac);
    if (fac.size() != 2 || !(fac[0] > 0 && fac[1] > fac[0])) throw ValidationError("--h0fac needs 0 < lo < hi");
    if (planes < 2) throw ValidationError("--planes must be at least 2");
    std::vector<double> hs = io::parse_double_list(at);
    WindowPtr w = win.build();
    PointPattern pts = data.load(w);
    double h0v = h0 ? *h0 : os_bandwidth(pts.coords()).h;
    double hpv = hp ? *hp : os_bandwidth(pts.coords()).h;
    ctx.resolve("h0", h0v);
    ctx.resolve("hp", hpv);
    AdaptiveBandwidths bw = abramson_bandwidths(pts, h0v, make_pilot(pts, hpv), tau);
    MultiscaleStack stack = multiscale_build(pts, bw, fac[0], fac[1], parse_correction(correction), planes);
    ctx.result["available"] = {stack.h_min(), stack.h_max()};
    Writer wr{out, ctx};
    ordered_json sl = ordered_json::array();
    for (std::size_t k = 0; k < hs.size(); ++k) {
      DensitySurface d = multiscale_slice(stack, hs[k]);
      const std::string tag = ".h" + three(k);
      sl.push_back({{"h0", hs[k]}, {"file", io::write_raster(d.z, wr.path(tag), out.fmt()).string()}});
      if (out.png) io::render_heatmap(d.z, nullptr, wr.path(tag + ".png"));
    }
    ctx.result["slices"] = sl;
  }
};

struct SynthCmd {
  std::string scenario;
  std::size_t n = 0;
  std::optional<std::size_t> n2;
  std::uint64_t seed = 1;
  std::string out;

  void add(CLI::App* sub) {
    sub->add_option("--scenario", scenario)->check(CLI::IsMember({"gaussian-mix", "hotspot-pair", "st-drift"}))->required();
    sub->add_option("--n", n, "Points per group (cases)")->required();
    sub->add_option("--n2", n2, "Controls (default: --n)");
    sub->add_option("--seed", seed)->capture_default_str();
    sub->add_option("--out", out, "Output directory")->required();
  }

  void run(Ctx& ctx) {
    ctx.resolve("n2", std::to_string(n2.value_or(n)));
    io::SynthResult r = io::synth_generate(io::parse_scenario(scenario), n, n2.value_or(n), seed, out);
    ctx.result["files"] = {{"cases", r.cases.string()},
                           {"controls", r.controls.string()},
                           {"points", r.combined.string()},
                           {"truth", r.truth.string()}};
  }
};

struct RenderCmd {
  std::string raster, contours, levels, range, out;
  int scale = 0;

  void add(CLI::App* sub) {
    sub->add_option("--raster", raster, "Input raster (.asc, .bin or .json)")->required();
    sub->add_option("--contours", contours, "Contour GeoJSON to overlay");
    sub->add_option("--levels", levels, "Contour levels computed from the raster");
    sub->add_option("--range", range, "Colour range lo,hi");
    sub->add_option("--scale", scale, "Image pixels per cell (0: automatic)")->capture_default_str();
    sub->add_option("--out", out, "PNG path")->required();
  }

  void run(Ctx& ctx) {
    if (!contours.empty() && !levels.empty()) throw ValidationError("--contours and --levels are exclusive");
    if (scale < 0) throw ValidationError("--scale must be non-negative");
    Surface s = io::read_raster(raster);
    io::RenderOptions ro;
    ro.scale = scale;
    if (!range.empty()) {
      std::vector<double> v = io::parse_double_list(range);
      if (v.size() != 2) throw ValidationError("--range needs lo,hi");
      ro.lo = v[0];
      ro.hi = v[1];
    }
    std::vector<ContourSet> c;
    if (!contours.empty()) c = io::read_contours_geojson(contours);
    if (!levels.empty()) c = extract_contours(s, io::parse_double_list(levels));
    io::render_heatmap(s, c.empty() ? nullptr : &c, out, ro);
    ctx.result["files"]["png"] = out;
  }
};

fs::path config_path(const Ctx& ctx) {
  auto str = [&](const char* k) { return ctx.args.contains(k) ? ctx.args[k].get<std::string>() : std::string(); };
  if (ctx.subcommand == "synth") return fs::path(str("out")) / "config.json";
  if (ctx.subcommand == "render") return fs::path(str("out")).replace_extension(".config.json");
  std::string out = str("out");
  return out.empty() ? fs::path() : fs::path(out + ".config.json");
}

// Rebuilds an argument vector from a config echo.
std::vector<std::string> replay_args(const fs::path& path, const std::string& out_override) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  ordered_json cfg;
  try {
    cfg = ordered_json::parse(in);
  } catch (const ordered_json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (!cfg.contains("subcommand") || !cfg.contains("args")) throw ValidationError(path.string() + " is not a config echo");
  std::vector<std::string> args = {cfg["subcommand"].get<std::string>()};
  bool out_seen = false;
  for (auto& [k, v] : cfg["args"].items()) {
    if (v.is_boolean()) {
      if (v.get<bool>()) args.push_back("--" + k);
      continue;
    }
    args.push_back("--" + k);
    if (k == "out" && !out_override.empty()) {
      args.push_back(out_override);
      out_seen = true;
    } else {
      args.push_back(v.get<std::string>());
    }
  }
  if (!out_override.empty() && !out_seen) throw ValidationError("the replayed run has no --out to override");
  return args;
}

}  // namespace

int run(const std::vector<std::string>& argv_in, std::ostream& out, std::ostream& err) {
  std::vector<std::string> argv = argv_in;
  Ctx ctx;
  try {
    if (!argv.empty() && argv[0] == "replay") {
      if (argv.size() != 2 && !(argv.size() == 4 && argv[2] == "--out")) {
        err << "usage: sprisk replay CONFIG [--out PREFIX]\n";
        return 2;
      }
      argv = replay_args(argv[1], argv.size() == 4 ? argv[3] : "");
    }
    CLI::App app{"Kernel density, relative risk and tolerance surfaces for point patterns", "sprisk"};
    app.require_subcommand(1);
    app.set_help_flag("--help", "Print this help message and exit");
    DensityCmd density;
    RiskCmd risk;
    ToleranceCmd tolerance;
    STDensityCmd st_density;
    STRiskCmd st_risk;
    BwSelectCmd bw_select;
    MultiscaleCmd multiscale;
    SliceCmd slice;
    SynthCmd synth;
    RenderCmd render;
    std::map<std::string, std::function<void(Ctx&)>> handlers;
    auto reg = [&](const char* name, const char* help, auto& cmd) {
      CLI::App* sub = app.add_subcommand(name, help);
      cmd.add(sub);
      handlers[name] = [&cmd](Ctx& c) { cmd.run(c); };
      return sub;
    };
    std::vector<CLI::App*> subs = {
        reg("density", "Fixed or adaptive density surface", density),
        reg("risk", "Log relative risk surface", risk),
        reg("tolerance", "Risk with p-value surface and tolerance contours", tolerance),
        reg("st-density", "Space-time density slices", st_density),
        reg("st-risk", "Space-time relative risk slices", st_risk),
        reg("bw-select", "Bandwidth selection", bw_select),
        reg("multiscale", "Multiscale adaptive density slices", multiscale),
        reg("slice", "Space-time risk at arbitrary times", slice),
        reg("synth", "Synthetic case/control data", synth),
        reg("render", "Heatmap PNG from a raster", render),
    };
    app.add_subcommand("replay", "Re-run a config echo: sprisk replay CONFIG [--out PREFIX]");
    std::vector<std::string> rev(argv.rbegin(), argv.rend());
    try {
      app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp& e) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << '\n';
      return 2;
    }
    for (CLI::App* sub : subs) {
      if (!sub->parsed()) continue;
      ctx.subcommand = sub->get_name();
      ctx.args = collect_args(sub);
      handlers[ctx.subcommand](ctx);
    }
    ordered_json echo = {{"subcommand", ctx.subcommand}, {"args", ctx.args}};
    fs::path cp = config_path(ctx);
    if (!cp.empty()) {
      if (cp.has_parent_path()) fs::create_directories(cp.parent_path());
      std::ofstream f(cp);
      if (!f) throw ValidationError("cannot write " + cp.string());
      f << echo.dump(2) << '\n';
      ctx.result["files"]["config"] = cp.string();
    }
    out << ordered_json{{"config", echo}, {"result", ctx.result}}.dump(2) << '\n';
    return 0;
  } catch (const SelectionError& e) {
    err << "error: " << e.what() << "\ntrace (h,lambda,value):\n";
    for (const TraceEntry& t : e.trace)
      err << io::format_double(t.h) << ',' << io::format_double(t.lambda) << ',' << io::format_double(t.value) << '\n';
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "numeric failure: " << e.what() << "\nconfig: "
        << ordered_json{{"subcommand", ctx.subcommand}, {"args", ctx.args}}.dump() << "\npartial result: "
        << ctx.result.dump() << '\n';
    return 3;
  }
}

}  // namespace sprisk::cli
