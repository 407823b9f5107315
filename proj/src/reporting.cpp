#include "bessplan/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <zlib.h>

namespace bessplan::report {

namespace fs = std::filesystem;
using benders::IterationRecord;

const char* to_string(SizeMode m) {
  switch (m) {
    case SizeMode::centralized: return "centralized";
    case SizeMode::master: return "master";
    case SizeMode::subproblem: return "subproblem";
  }
  return "?";
}

SizeReport model_size(SizeMode mode, const SizeInputs& in) {
  for (long long v : {in.G, in.N, in.L, in.S, in.T, in.D, in.P, in.iterations}) {
    if (v < 0) throw ReportError("model size inputs must be nonnegative");
  }
  if (in.T != in.D * in.P) {
    throw ReportError(fmt::format("inconsistent horizon: T = {} but D * P = {} * {}", in.T, in.D,
                                  in.P));
  }
  SizeReport r;
  r.mode = mode;
  r.inputs = in;
  const long long var_hour = 2 + in.G + 4 * in.N + 6 * in.L;
  const long long con_hour = 7 + 2 * in.G + 8 * in.N + 10 * in.L;
  switch (mode) {
    case SizeMode::centralized:
      r.binary = in.S;
      r.continuous = var_hour * in.T + (2 * in.T + (in.T + 1) + 2) * in.S;
      r.constraints = con_hour * in.T + (2 * in.T + 2 * (in.T + 1) + 6 + 2 * in.D) * in.S;
      break;
    case SizeMode::master:
      r.binary = in.S;
      r.continuous = 2 * in.S + in.D;
      r.constraints = 5 * in.S + in.D * (in.iterations + 1);
      break;
    case SizeMode::subproblem:
      r.continuous = var_hour * in.P + (2 * in.P + (in.P + 1) + 2) * in.S;
      r.constraints = con_hour * in.P + (2 * in.P + 2 * (in.P + 1) + 5) * in.S;
      r.parameters = 2 * in.S;
      break;
  }
  return r;
}

SizeInputs size_inputs(const NetworkModel& net, int days, int hours_per_day, int iterations) {
  SizeInputs in;
  const int slack_gen = net.generators.empty() ? -1 : net.slack_generator();
  in.G = static_cast<long long>(net.generators.size()) - (slack_gen >= 0 ? 1 : 0);
  in.N = net.num_buses();
  in.L = net.num_branches();
  in.S = static_cast<long long>(net.sites.size());
  in.D = days;
  in.P = hours_per_day;
  in.T = static_cast<long long>(days) * hours_per_day;
  in.iterations = iterations;
  return in;
}

// ---- representative days -----------------------------------------------

const char* to_string(Season s) {
  switch (s) {
    case Season::winter: return "DJF";
    case Season::spring: return "MAM";
    case Season::summer: return "JJA";
    case Season::autumn: return "SON";
  }
  return "?";
}

Season season_of(int day_of_year) {
  static const int month_days[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  int d = ((day_of_year % 365) + 365) % 365;
  int month = 0;
  while (d >= month_days[month]) d -= month_days[month++];
  switch (month) {
    case 11: case 0: case 1: return Season::winter;
    case 2: case 3: case 4: return Season::spring;
    case 5: case 6: case 7: return Season::summer;
    default: return Season::autumn;
  }
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

RepresentativeSelection representative_days(const ingest::TimeSeriesData& ts,
                                            const NetworkModel& net, int k_per_season,
                                            int first_day_of_year) {
  std::vector<int> calendar(std::max(ts.days(), 0));
  std::iota(calendar.begin(), calendar.end(), first_day_of_year);
  return representative_days(ts, net, k_per_season, calendar);
}

RepresentativeSelection representative_days(const ingest::TimeSeriesData& ts,
                                            const NetworkModel& net, int k_per_season,
                                            const std::vector<int>& day_of_year) {
  if (static_cast<int>(day_of_year.size()) != ts.days()) {
    throw ReportError("calendar must list one day of year per series day");
  }
  if (k_per_season < 1) throw ReportError("k_per_season must be at least 1");
  if (ts.days() < 4) throw ReportError("representative days need at least 4 days");
  if (ts.load_p.cols() != net.num_buses()) throw ReportError("series does not match the network");
  RepresentativeSelection out;
  double largest = -std::numeric_limits<double>::infinity();
  for (int n = 0; n < net.num_buses(); ++n) {
    if (net.buses[n].kind != BusKind::pq) continue;
    const double total = ts.load_p.col(n).sum();
    if (total > largest) {
      largest = total;
      out.bus = n;
    }
  }
  if (out.bus < 0) throw ReportError("network has no PQ bus");
  const int len = ts.day_length;
  std::vector<std::vector<int>> by_season(4);
  for (int d = 0; d < ts.days(); ++d) {
    by_season[static_cast<int>(season_of(day_of_year[d]))].push_back(d);
  }
  for (int s = 0; s < 4; ++s) {
    const auto& members = by_season[s];
    if (members.empty()) {
      out.warnings.push_back(
          fmt::format("season {} has no days; skipped", to_string(static_cast<Season>(s))));
      continue;
    }
    std::vector<double> median(len);
    for (int h = 0; h < len; ++h) {
      std::vector<double> vals;
      for (int d : members) vals.push_back(ts.load_p(d * len + h, out.bus));
      median[h] = median_of(vals);
    }
    std::vector<RepresentativeDay> scored;
    for (int d : members) {
      double ss = 0.0;
      for (int h = 0; h < len; ++h) {
        const double e = ts.load_p(d * len + h, out.bus) - median[h];
        ss += e * e;
      }
      scored.push_back({static_cast<Season>(s), d, std::sqrt(ss / len)});
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.rmse < b.rmse; });
    const int take = std::min<int>(k_per_season, static_cast<int>(scored.size()));
    out.days.insert(out.days.end(), scored.begin(), scored.begin() + take);
  }
  return out;
}

// ---- tables ------------------------------------------------------------

ScalabilityPoint scalability_point(const benders::BendersState& state, int sites) {
  ScalabilityPoint p;
  p.subproblems = state.cuts.num_days;
  p.sites = sites;
  p.iterations = static_cast<int>(state.trace.size());
  for (const auto& r : state.trace) {
    p.master_seconds += r.master_time;
    p.subproblem_seconds += r.total_subproblem_time;
    p.max_subproblem_seconds = std::max(p.max_subproblem_seconds, r.max_subproblem_time);
    p.stage_wall_seconds += r.stage_wall_time;
  }
  return p;
}

std::vector<int> geometric_counts(int base, int points, int cap) {
  if (base < 2 || points < 0) {
    throw ReportError(fmt::format("geometric sweep needs base >= 2 and points >= 0 (got {}, {})",
                                  base, points));
  }
  std::vector<int> out;
  long long v = 1;
  for (int i = 0; i < points; ++i, v *= base) {
    if ((cap > 0 && v > cap) || v > 1000000) break;
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::vector<opf::DayData> cycle_days(const std::vector<opf::DayData>& source, int n,
                                     std::uint64_t seed, double spread) {
  if (source.empty()) throw ReportError("no source days to cycle");
  if (n < 0) throw ReportError("negative day count");
  if (!(spread >= 0.0 && spread < 1.0)) throw ReportError("spread must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<opf::DayData> out;
  out.reserve(n);
  for (int d = 0; d < n; ++d) {
    opf::DayData day = source[d % source.size()];
    const double f = 1.0 - spread * u(rng);
    day.load_p *= f;
    day.load_q *= f;
    out.push_back(std::move(day));
  }
  return out;
}

namespace {

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double to_double(const std::string& s, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ReportError(fmt::format("line {}: bad number '{}'", line, s));
  }
}

std::vector<std::vector<std::string>> rows_of(const std::string& text, std::size_t width,
                                              const std::string& header) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != header) throw ReportError("unexpected CSV header");
  std::vector<std::vector<std::string>> rows;
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != width) {
      throw ReportError(fmt::format("line {}: expected {} cells, got {}", n, width, cells.size()));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

const char* kConvergenceHeader =
    "iteration,lb,ub,gap,feasible_days,optimality_cuts,feasibility_cuts,master_nodes,"
    "master_time,max_subproblem_time,total_subproblem_time,stage_wall_time";
const char* kDistributionHeader = "quantity,count,min,q05,q25,median,q75,q95,max";

}  // namespace

std::string format_convergence_csv(const std::vector<IterationRecord>& trace) {
  std::string s = std::string(kConvergenceHeader) + "\n";
  for (const auto& r : trace) {
    s += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", r.iteration, num(r.lb),
                     r.ub ? num(*r.ub) : "", r.gap ? num(*r.gap) : "", r.feasible_days,
                     r.optimality_cuts, r.feasibility_cuts, r.master_nodes, num(r.master_time),
                     num(r.max_subproblem_time), num(r.total_subproblem_time),
                     num(r.stage_wall_time));
  }
  return s;
}

std::vector<IterationRecord> parse_convergence_csv(const std::string& text) {
  std::vector<IterationRecord> out;
  int line = 1;
  for (const auto& c : rows_of(text, 12, kConvergenceHeader)) {
    ++line;
    IterationRecord r;
    r.iteration = static_cast<int>(to_double(c[0], line));
    r.lb = to_double(c[1], line);
    if (!c[2].empty()) r.ub = to_double(c[2], line);
    if (!c[3].empty()) r.gap = to_double(c[3], line);
    r.feasible_days = static_cast<int>(to_double(c[4], line));
    r.optimality_cuts = static_cast<int>(to_double(c[5], line));
    r.feasibility_cuts = static_cast<int>(to_double(c[6], line));
    r.master_nodes = static_cast<int>(to_double(c[7], line));
    r.master_time = to_double(c[8], line);
    r.max_subproblem_time = to_double(c[9], line);
    r.total_subproblem_time = to_double(c[10], line);
    r.stage_wall_time = to_double(c[11], line);
    out.push_back(r);
  }
  return out;
}

std::string format_distribution_csv(const std::vector<NamedDistribution>& rows) {
  std::string s = std::string(kDistributionHeader) + "\n";
  for (const auto& [name, d] : rows) {
    if (name.find(',') != std::string::npos) throw ReportError("quantity names cannot hold commas");
    s += fmt::format("{},{},{},{},{},{},{},{},{}\n", name, d.count, num(d.min), num(d.q05),
                     num(d.q25), num(d.median), num(d.q75), num(d.q95), num(d.max));
  }
  return s;
}

std::vector<NamedDistribution> parse_distribution_csv(const std::string& text) {
  std::vector<NamedDistribution> out;
  int line = 1;
  for (const auto& c : rows_of(text, 9, kDistributionHeader)) {
    ++line;
    acpf::Distribution d;
    d.count = static_cast<int>(to_double(c[1], line));
    d.min = to_double(c[2], line);
    d.q05 = to_double(c[3], line);
    d.q25 = to_double(c[4], line);
    d.median = to_double(c[5], line);
    d.q75 = to_double(c[6], line);
    d.q95 = to_double(c[7], line);
    d.max = to_double(c[8], line);
    out.emplace_back(c[0], d);
  }
  return out;
}

std::string format_size_csv(const std::vector<SizeReport>& rows) {
  std::string s = "mode,G,N,L,S,T,D,P,iterations,binary,continuous,constraints,parameters\n";
  for (const auto& r : rows) {
    const auto& i = r.inputs;
    s += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", to_string(r.mode), i.G, i.N, i.L,
                     i.S, i.T, i.D, i.P, i.iterations, r.binary, r.continuous, r.constraints,
                     r.parameters);
  }
  return s;
}

std::string format_timing_table(const std::vector<ScalabilityPoint>& points) {
  std::string head = "days", mp = "MP [s]", sbp = "SBP [s]";
  for (const auto& p : points) {
    head += fmt::format(",{}", p.subproblems);
    mp += fmt::format(",{:.2f}", p.master_seconds);
    sbp += fmt::format(",{:.2f}", p.subproblem_seconds);
  }
  return head + "\n" + mp + "\n" + sbp + "\n";
}

std::string format_scalability_csv(const std::vector<ScalabilityPoint>& points) {
  std::string s =
      "subproblems,sites,iterations,master_seconds,subproblem_seconds,max_subproblem_seconds,"
      "stage_wall_seconds\n";
  for (const auto& p : points) {
    s += fmt::format("{},{},{},{},{},{},{}\n", p.subproblems, p.sites, p.iterations,
                     num(p.master_seconds), num(p.subproblem_seconds),
                     num(p.max_subproblem_seconds), num(p.stage_wall_seconds));
  }
  return s;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ReportError("slope fit needs matching x and y");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0 && y[i] > 0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  const std::size_t n = lx.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxx > 0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

// ---- plots -------------------------------------------------------------

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type,
               const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::vector<std::uint8_t> encode_png(int width, int height, const std::vector<std::uint8_t>& rgb) {
  if (width <= 0 || height <= 0 || rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw ReportError("image buffer does not match its size");
  }
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (width * 3 + 1));
  for (int r = 0; r < height; ++r) {
    raw.push_back(0);
    raw.insert(raw.end(), rgb.begin() + static_cast<std::size_t>(r) * width * 3,
               rgb.begin() + static_cast<std::size_t>(r + 1) * width * 3);
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(len);
  if (compress2(z.data(), &len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw ReportError("zlib compression failed");
  }
  z.resize(len);
  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

void write_line_plot(const std::string& path, const std::vector<PlotSeries>& series, bool log_x,
                     bool log_y, int width, int height) {
  std::vector<std::uint8_t> img(static_cast<std::size_t>(width) * height * 3, 255);
  auto set = [&](int x, int y, const std::array<std::uint8_t, 3>& c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    std::copy(c.begin(), c.end(), img.begin() + (static_cast<std::size_t>(y) * width + x) * 3);
  };
  auto tx = [&](double v) { return log_x ? (v > 0 ? std::log10(v) : NAN) : v; };
  auto ty = [&](double v) { return log_y ? (v > 0 ? std::log10(v) : NAN) : v; };
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      const double a = tx(s.x[i]), b = ty(s.y[i]);
      if (!std::isfinite(a) || !std::isfinite(b)) continue;
      x0 = std::min(x0, a);
      x1 = std::max(x1, a);
      y0 = std::min(y0, b);
      y1 = std::max(y1, b);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x1 = x0 + 1;
  if (y1 - y0 < 1e-12) y1 = y0 + 1;
  const int m = 30;
  const std::array<std::uint8_t, 3> axis{90, 90, 90};
  for (int x = m; x < width - m; ++x) set(x, height - m, axis), set(x, m, axis);
  for (int y = m; y <= height - m; ++y) set(m, y, axis), set(width - m, y, axis);
  auto px = [&](double a) { return m + (a - x0) / (x1 - x0) * (width - 2 * m); };
  auto py = [&](double b) { return height - m - (b - y0) / (y1 - y0) * (height - 2 * m); };
  for (const auto& s : series) {
    bool have = false;
    double lx = 0, ly = 0;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      const double a = tx(s.x[i]), b = ty(s.y[i]);
      if (!std::isfinite(a) || !std::isfinite(b)) {
        have = false;
        continue;
      }
      const double cx = px(a), cy = py(b);
      if (have) {
        const int steps = static_cast<int>(std::max(std::abs(cx - lx), std::abs(cy - ly))) + 1;
        for (int k = 0; k <= steps; ++k) {
          const double f = static_cast<double>(k) / steps;
          set(static_cast<int>(std::lround(lx + f * (cx - lx))),
              static_cast<int>(std::lround(ly + f * (cy - ly))), s.color);
        }
      }
      for (int dx = -2; dx <= 2; ++dx) {
        for (int dy = -2; dy <= 2; ++dy) {
          set(static_cast<int>(std::lround(cx)) + dx, static_cast<int>(std::lround(cy)) + dy,
              s.color);
        }
      }
      have = true;
      lx = cx;
      ly = cy;
    }
  }
  const auto png = encode_png(width, height, img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ReportError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
  if (!out) throw ReportError("cannot write " + path);
}

// ---- bundle ------------------------------------------------------------

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ReportError("cannot write " + path);
  out << text;
  if (!out) throw ReportError("cannot write " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReportError("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> emit_reports(const ReportInputs& in, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw ReportError(fmt::format("cannot create output directory {}: {}", out_dir, ec.message()));
  }
  std::vector<std::string> written;
  auto put = [&](const std::string& name, const std::string& text) {
    write_text((fs::path(out_dir) / name).string(), text);
    written.push_back(name);
  };
  const std::vector<IterationRecord> empty;
  const auto& trace = in.state ? in.state->trace : empty;
  put("convergence.csv", format_convergence_csv(trace));
  std::string jsonl;
  for (const auto& r : trace) jsonl += r.to_json() + "\n";
  put("trace.jsonl", jsonl);
  put("distributions.csv", format_distribution_csv(in.distributions));
  put("sizes.csv", format_size_csv(in.sizes));
  put("timing.csv", format_timing_table(in.scalability));
  put("scalability.csv", format_scalability_csv(in.scalability));

  PlotSeries lb{{}, {}, {31, 119, 180}}, ub{{}, {}, {255, 127, 14}};
  for (const auto& r : trace) {
    lb.x.push_back(r.iteration);
    lb.y.push_back(r.lb);
    if (r.ub) {
      ub.x.push_back(r.iteration);
      ub.y.push_back(*r.ub);
    }
  }
  write_line_plot((fs::path(out_dir) / "convergence.png").string(), {lb, ub});
  written.push_back("convergence.png");

  if (!in.scalability.empty()) {
    PlotSeries mp{{}, {}, {31, 119, 180}}, sbp{{}, {}, {255, 127, 14}},
        mx{{}, {}, {44, 160, 44}}, it{{}, {}, {214, 39, 40}};
    for (const auto& p : in.scalability) {
      const double n = p.subproblems, k = std::max(1, p.iterations);
      mp.x.push_back(n), mp.y.push_back(p.master_seconds / k);
      sbp.x.push_back(n), sbp.y.push_back(p.subproblem_seconds / k);
      mx.x.push_back(n), mx.y.push_back(p.max_subproblem_seconds);
      it.x.push_back(n), it.y.push_back(p.iterations);
    }
    write_line_plot((fs::path(out_dir) / "scalability.png").string(), {mp, sbp, mx, it}, true,
                    true);
    written.push_back("scalability.png");
  }
  return written;
}

}  // namespace bessplan::report
