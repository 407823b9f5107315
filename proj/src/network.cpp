#include "bessplan/network.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <numbers>
#include <queue>
#include <sstream>

#include <fmt/format.h>

namespace bessplan {

const char* to_string(BusKind kind) {
  switch (kind) {
    case BusKind::slack:
      return "slack";
    case BusKind::pv:
      return "pv";
    case BusKind::pq:
      return "pq";
  }
  return "?";
}

BusKind parse_bus_kind(const std::string& s) {
  std::string k = s;
  std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return std::tolower(c); });
  if (k == "slack" || k == "ref") return BusKind::slack;
  if (k == "pv") return BusKind::pv;
  if (k == "pq") return BusKind::pq;
  throw NetworkError("unknown bus kind '" + s + "'");
}

int NetworkModel::bus_position(int id) const {
  for (int i = 0; i < num_buses(); ++i) {
    if (buses[i].id == id) return i;
  }
  throw NetworkError(fmt::format("unknown bus id {}", id));
}

int NetworkModel::slack_bus() const {
  for (int i = 0; i < num_buses(); ++i) {
    if (buses[i].kind == BusKind::slack) return i;
  }
  throw NetworkError("network has no slack bus");
}

int NetworkModel::slack_generator() const {
  const int sb = slack_bus();
  for (int g = 0; g < static_cast<int>(generators.size()); ++g) {
    if (generators[g].bus == sb) return g;
  }
  throw NetworkError("no generator at the slack bus");
}

std::vector<std::vector<int>> connected_components(const NetworkModel& net) {
  const int n = net.num_buses();
  std::vector<std::vector<int>> adj(n);
  for (const auto& br : net.branches) {
    if (br.from < 0 || br.from >= n || br.to < 0 || br.to >= n) continue;
    adj[br.from].push_back(br.to);
    adj[br.to].push_back(br.from);
  }
  std::vector<int> comp(n, -1);
  std::vector<std::vector<int>> out;
  for (int s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    out.emplace_back();
    std::queue<int> q;
    q.push(s);
    comp[s] = static_cast<int>(out.size()) - 1;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      out.back().push_back(u);
      for (int v : adj[u]) {
        if (comp[v] < 0) {
          comp[v] = comp[s];
          q.push(v);
        }
      }
    }
    std::sort(out.back().begin(), out.back().end());
  }
  return out;
}

namespace {

std::string describe_components(const NetworkModel& net,
                                const std::vector<std::vector<int>>& comps) {
  std::string s;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    s += fmt::format("{}{{", c ? " " : "");
    for (std::size_t i = 0; i < comps[c].size(); ++i) {
      s += fmt::format("{}{}", i ? "," : "", net.buses[comps[c][i]].id);
    }
    s += "}";
  }
  return s;
}

void check_branch_endpoints(const NetworkModel& net) {
  for (const auto& br : net.branches) {
    if (br.from < 0 || br.from >= net.num_buses() || br.to < 0 || br.to >= net.num_buses()) {
      throw NetworkError(fmt::format("branch {} has a dangling endpoint", br.id));
    }
  }
}

}  // namespace

void validate(const NetworkModel& net) {
  if (net.buses.empty()) throw NetworkError("network has no buses");
  if (!(net.base_mva > 0.0)) throw NetworkError("base_mva must be positive");
  std::map<int, int> seen;
  for (const auto& b : net.buses) {
    if (seen[b.id]++) throw NetworkError(fmt::format("duplicate bus id {}", b.id));
    if (!(b.v_min > 0.0) || !(b.v_min < b.v_max)) {
      throw NetworkError(fmt::format("bus {}: voltage bounds must satisfy 0 < v_min < v_max", b.id));
    }
    if (!(b.base_kv > 0.0)) throw NetworkError(fmt::format("bus {}: base_kv must be positive", b.id));
    if (!std::isfinite(b.gs) || !std::isfinite(b.bs)) {
      throw NetworkError(fmt::format("bus {}: non-finite shunt", b.id));
    }
  }
  check_branch_endpoints(net);
  for (const auto& br : net.branches) {
    if (br.from == br.to) throw NetworkError(fmt::format("branch {} is a self loop", br.id));
    if (!(br.x > 0.0)) throw NetworkError(fmt::format("branch {}: reactance must be positive", br.id));
    if (!(br.r >= 0.0)) throw NetworkError(fmt::format("branch {}: resistance must be >= 0", br.id));
    if (!(br.theta_max > 0.0 && br.theta_max < std::numbers::pi / 2)) {
      throw NetworkError(fmt::format("branch {}: theta_max must lie in (0, pi/2)", br.id));
    }
    if (!(br.i_max > 0.0)) throw NetworkError(fmt::format("branch {}: ampacity must be positive", br.id));
  }
  for (const auto& g : net.generators) {
    if (g.bus < 0 || g.bus >= net.num_buses()) {
      throw NetworkError(fmt::format("generator {} references an unknown bus", g.id));
    }
    if (!(g.p_min <= g.p_max) || !(g.q_min <= g.q_max)) {
      throw NetworkError(fmt::format("generator {}: inconsistent limits", g.id));
    }
    if (g.is_condenser && (g.p_min != 0.0 || g.p_max != 0.0)) {
      throw NetworkError(fmt::format("generator {}: condensers have zero active limits", g.id));
    }
  }
  for (const auto& s : net.sites) {
    if (s.bus < 0 || s.bus >= net.num_buses()) {
      throw NetworkError(fmt::format("site {} references an unknown bus", s.id));
    }
    if (!(0.0 <= s.w_min && s.w_min <= s.w_max) || !(0.0 <= s.c_min && s.c_min <= s.c_max)) {
      throw NetworkError(fmt::format("site {}: inconsistent size bounds", s.id));
    }
    if (!(0.0 <= s.soe_min && s.soe_min < s.soe_max && s.soe_max <= 1.0)) {
      throw NetworkError(fmt::format("site {}: state-of-energy bounds must satisfy 0 <= min < max <= 1", s.id));
    }
    if (!(s.c_rate > 0.0)) throw NetworkError(fmt::format("site {}: c_rate must be positive", s.id));
  }
  const auto comps = connected_components(net);
  if (comps.size() > 1) {
    throw NetworkError("network is not connected: components " + describe_components(net, comps));
  }
  int slack = 0;
  for (const auto& b : net.buses) slack += b.kind == BusKind::slack;
  if (slack != 1) throw NetworkError(fmt::format("expected exactly one slack bus, found {}", slack));
}

Incidence build_incidence(const NetworkModel& net) {
  check_branch_endpoints(net);
  const int n = net.num_buses(), l = net.num_branches();
  std::vector<Eigen::Triplet<double, int>> ts, tr;
  for (int k = 0; k < l; ++k) {
    ts.emplace_back(k, net.branches[k].from, 1.0);
    tr.emplace_back(k, net.branches[k].to, 1.0);
  }
  Incidence inc;
  inc.a_s.resize(l, n);
  inc.a_r.resize(l, n);
  inc.a_s.setFromTriplets(ts.begin(), ts.end());
  inc.a_r.setFromTriplets(tr.begin(), tr.end());
  inc.a_plus = inc.a_s.transpose();
  inc.a_minus = inc.a_r.transpose();
  return inc;
}

CycleBasis find_cycle_basis(const NetworkModel& net) {
  check_branch_endpoints(net);
  const auto comps = connected_components(net);
  if (comps.size() > 1) {
    throw NetworkError("network is not connected: components " + describe_components(net, comps));
  }
  const int n = net.num_buses();
  struct Edge {
    int to, branch;
  };
  std::vector<std::vector<Edge>> adj(n);
  for (int k = 0; k < net.num_branches(); ++k) {
    adj[net.branches[k].from].push_back({net.branches[k].to, k});
    adj[net.branches[k].to].push_back({net.branches[k].from, k});
  }
  // BFS spanning tree rooted at bus 0.
  std::vector<int> parent(n, -1), parent_branch(n, -1), depth(n, -1);
  std::vector<bool> in_tree(net.num_branches(), false);
  std::queue<int> q;
  if (n > 0) {
    depth[0] = 0;
    q.push(0);
  }
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (const auto& e : adj[u]) {
      if (depth[e.to] >= 0) continue;
      depth[e.to] = depth[u] + 1;
      parent[e.to] = u;
      parent_branch[e.to] = e.branch;
      in_tree[e.branch] = true;
      q.push(e.to);
    }
  }
  auto step = [&](int branch, int from_bus) {
    return CycleBasis::Step{branch, net.branches[branch].from == from_bus ? 1 : -1};
  };
  CycleBasis basis;
  for (int k = 0; k < net.num_branches(); ++k) {
    if (in_tree[k]) continue;
    const int u = net.branches[k].from, v = net.branches[k].to;
    // Walk u -> v over branch k, then v -> lca -> u through the tree.
    std::vector<CycleBasis::Step> up_v, up_u;
    int a = v, b = u;
    while (depth[a] > depth[b]) {
      up_v.push_back(step(parent_branch[a], a));
      a = parent[a];
    }
    while (depth[b] > depth[a]) {
      up_u.push_back(step(parent_branch[b], parent[b]));
      b = parent[b];
    }
    while (a != b) {
      up_v.push_back(step(parent_branch[a], a));
      a = parent[a];
      up_u.push_back(step(parent_branch[b], parent[b]));
      b = parent[b];
    }
    std::vector<CycleBasis::Step> cycle{{k, 1}};
    cycle.insert(cycle.end(), up_v.begin(), up_v.end());
    cycle.insert(cycle.end(), up_u.rbegin(), up_u.rend());
    basis.cycles.push_back(std::move(cycle));
  }
  return basis;
}

NetworkModel to_per_unit(const RawNetwork& raw, double base_mva) {
  if (!(base_mva > 0.0)) throw NetworkError("base_mva must be positive");
  NetworkModel net;
  net.name = raw.name;
  net.base_mva = base_mva;
  std::map<int, int> pos;
  for (const auto& rb : raw.buses) {
    if (!(rb.base_kv > 0.0)) throw NetworkError(fmt::format("bus {}: base_kv must be positive", rb.id));
    Bus b;
    b.id = rb.id;
    b.kind = rb.kind;
    b.gs = rb.gs_mw / base_mva;
    b.bs = rb.bs_mvar / base_mva;
    b.v_min = rb.vm_min * rb.vm_min;
    b.v_max = rb.vm_max * rb.vm_max;
    b.base_kv = rb.base_kv;
    b.v_set = rb.v_set;
    b.pd = rb.pd_mw / base_mva;
    b.qd = rb.qd_mvar / base_mva;
    pos[rb.id] = net.num_buses();
    net.buses.push_back(b);
  }
  auto lookup = [&](int id, const char* what, int owner) {
    auto it = pos.find(id);
    if (it == pos.end()) throw NetworkError(fmt::format("{} {} references unknown bus {}", what, owner, id));
    return it->second;
  };
  for (const auto& rb : raw.branches) {
    Branch br;
    br.id = rb.id;
    br.from = lookup(rb.from_id, "branch", rb.id);
    br.to = lookup(rb.to_id, "branch", rb.id);
    const double kv = net.buses[br.from].base_kv;
    const double z_base = kv * kv / base_mva;
    const double i_base = base_mva / (std::sqrt(3.0) * kv);
    br.r = rb.r_ohm / z_base;
    br.x = rb.x_ohm / z_base;
    br.theta_max = rb.theta_max_deg * std::numbers::pi / 180.0;
    br.i_max = rb.i_max_ka / i_base;
    net.branches.push_back(br);
  }
  for (const auto& rg : raw.generators) {
    Generator g;
    g.id = rg.id;
    g.bus = lookup(rg.bus_id, "generator", rg.id);
    g.p_min = rg.p_min_mw / base_mva;
    g.p_max = rg.p_max_mw / base_mva;
    g.q_min = rg.q_min_mvar / base_mva;
    g.q_max = rg.q_max_mvar / base_mva;
    g.is_condenser = rg.is_condenser;
    g.pg = rg.pg_mw / base_mva;
    g.qg = rg.qg_mvar / base_mva;
    net.generators.push_back(g);
  }
  for (const auto& rs : raw.sites) {
    CandidateSite s;
    s.id = rs.id;
    s.bus = lookup(rs.bus_id, "site", rs.id);
    s.w_min = rs.w_min_mw / base_mva;
    s.w_max = rs.w_max_mw / base_mva;
    s.c_min = rs.c_min_mwh / base_mva;
    s.c_max = rs.c_max_mwh / base_mva;
    s.c_rate = rs.c_rate;
    s.cost_p = rs.cost_per_mw * base_mva;
    s.cost_e = rs.cost_per_mwh * base_mva;
    s.soe_min = rs.soe_min;
    s.soe_max = rs.soe_max;
    net.sites.push_back(s);
  }
  return net;
}

RawNetwork from_per_unit(const NetworkModel& net) {
  if (!(net.base_mva > 0.0)) throw NetworkError("base_mva must be positive");
  const double base = net.base_mva;
  RawNetwork raw;
  raw.name = net.name;
  for (const auto& b : net.buses) {
    if (!(b.base_kv > 0.0)) throw NetworkError(fmt::format("bus {}: base_kv must be positive", b.id));
    raw.buses.push_back({b.id, b.kind, b.gs * base, b.bs * base, std::sqrt(b.v_min),
                         std::sqrt(b.v_max), b.base_kv, b.v_set, b.pd * base, b.qd * base});
  }
  for (const auto& br : net.branches) {
    const double kv = net.buses.at(br.from).base_kv;
    const double z_base = kv * kv / base;
    const double i_base = base / (std::sqrt(3.0) * kv);
    raw.branches.push_back({br.id, net.buses.at(br.from).id, net.buses.at(br.to).id,
                            br.r * z_base, br.x * z_base, br.theta_max * 180.0 / std::numbers::pi,
                            br.i_max * i_base});
  }
  for (const auto& g : net.generators) {
    raw.generators.push_back({g.id, net.buses.at(g.bus).id, g.p_min * base, g.p_max * base,
                              g.q_min * base, g.q_max * base, g.is_condenser, g.pg * base,
                              g.qg * base});
  }
  for (const auto& s : net.sites) {
    raw.sites.push_back({s.id, net.buses.at(s.bus).id, s.w_min * base, s.w_max * base,
                         s.c_min * base, s.c_max * base, s.c_rate, s.cost_p / base,
                         s.cost_e / base, s.soe_min, s.soe_max});
  }
  return raw;
}

// ---------------------------------------------------------------------------
// Case text format

namespace {

std::string strip_comment(const std::string& line, char mark) {
  const auto p = line.find(mark);
  return p == std::string::npos ? line : line.substr(0, p);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_number(const std::string& tok, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size()) throw NetworkError(fmt::format("{}: '{}' is not a number", where, tok));
  return v;
}

int to_int(const std::string& tok, const std::string& where) {
  const double v = to_number(tok, where);
  if (v != std::floor(v)) throw NetworkError(fmt::format("{}: '{}' is not an integer", where, tok));
  return static_cast<int>(v);
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", v);
}

}  // namespace

NetworkModel parse_case(const std::string& text, const std::string& origin) {
  NetworkModel net;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  struct PendingBranch {
    Branch br;
    int from_id, to_id;
  };
  std::vector<PendingBranch> branches;
  std::vector<std::pair<Generator, int>> gens;
  std::vector<std::pair<CandidateSite, int>> sites;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = fmt::format("{}:{}", origin, lineno);
    line = trim(strip_comment(line, '#'));
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = trim(line.substr(1, line.find(']') - 1));
      if (section != "buses" && section != "branches" && section != "generators" &&
          section != "sites") {
        throw NetworkError(fmt::format("{}: unknown section [{}]", where, section));
      }
      continue;
    }
    if (section.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw NetworkError(where + ": expected key = value");
      const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      if (key == "name") {
        net.name = value;
      } else if (key == "base_mva") {
        net.base_mva = to_number(value, where);
      } else {
        throw NetworkError(fmt::format("{}: unknown key '{}'", where, key));
      }
      continue;
    }
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    auto need = [&](std::size_t n) {
      if (tok.size() != n) {
        throw NetworkError(fmt::format("{}: [{}] rows have {} fields, found {}", where, section, n, tok.size()));
      }
    };
    if (section == "buses") {
      need(10);
      Bus b;
      b.id = to_int(tok[0], where);
      try {
        b.kind = parse_bus_kind(tok[1]);
      } catch (const NetworkError& e) {
        throw NetworkError(where + ": " + e.what());
      }
      b.gs = to_number(tok[2], where);
      b.bs = to_number(tok[3], where);
      b.v_min = to_number(tok[4], where);
      b.v_max = to_number(tok[5], where);
      b.base_kv = to_number(tok[6], where);
      b.v_set = to_number(tok[7], where);
      b.pd = to_number(tok[8], where);
      b.qd = to_number(tok[9], where);
      net.buses.push_back(b);
    } else if (section == "branches") {
      need(7);
      Branch br;
      br.id = to_int(tok[0], where);
      br.r = to_number(tok[3], where);
      br.x = to_number(tok[4], where);
      br.theta_max = to_number(tok[5], where);
      br.i_max = to_number(tok[6], where);
      branches.push_back({br, to_int(tok[1], where), to_int(tok[2], where)});
    } else if (section == "generators") {
      need(9);
      Generator g;
      g.id = to_int(tok[0], where);
      g.p_min = to_number(tok[2], where);
      g.p_max = to_number(tok[3], where);
      g.q_min = to_number(tok[4], where);
      g.q_max = to_number(tok[5], where);
      g.is_condenser = to_int(tok[6], where) != 0;
      g.pg = to_number(tok[7], where);
      g.qg = to_number(tok[8], where);
      gens.emplace_back(g, to_int(tok[1], where));
    } else {
      need(11);
      CandidateSite s;
      s.id = to_int(tok[0], where);
      s.w_min = to_number(tok[2], where);
      s.w_max = to_number(tok[3], where);
      s.c_min = to_number(tok[4], where);
      s.c_max = to_number(tok[5], where);
      s.c_rate = to_number(tok[6], where);
      s.cost_p = to_number(tok[7], where);
      s.cost_e = to_number(tok[8], where);
      s.soe_min = to_number(tok[9], where);
      s.soe_max = to_number(tok[10], where);
      sites.emplace_back(s, to_int(tok[1], where));
    }
  }
  auto resolve = [&](int id, const std::string& what) {
    try {
      return net.bus_position(id);
    } catch (const NetworkError&) {
      throw NetworkError(fmt::format("{}: {} references unknown bus {}", origin, what, id));
    }
  };
  for (auto& pb : branches) {
    pb.br.from = resolve(pb.from_id, fmt::format("branch {}", pb.br.id));
    pb.br.to = resolve(pb.to_id, fmt::format("branch {}", pb.br.id));
    net.branches.push_back(pb.br);
  }
  for (auto& [g, bus] : gens) {
    g.bus = resolve(bus, fmt::format("generator {}", g.id));
    net.generators.push_back(g);
  }
  for (auto& [s, bus] : sites) {
    s.bus = resolve(bus, fmt::format("site {}", s.id));
    net.sites.push_back(s);
  }
  validate(net);
  return net;
}

NetworkModel read_case(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw NetworkError("cannot open case file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_case(ss.str(), path);
}

std::string format_case(const NetworkModel& net) {
  std::string s;
  s += fmt::format("name = {}\nbase_mva = {}\n\n", net.name, num(net.base_mva));
  s += "[buses]\n# id kind gs bs v_min v_max base_kv v_set pd qd\n";
  for (const auto& b : net.buses) {
    s += fmt::format("{} {} {} {} {} {} {} {} {} {}\n", b.id, to_string(b.kind), num(b.gs),
                     num(b.bs), num(b.v_min), num(b.v_max), num(b.base_kv), num(b.v_set),
                     num(b.pd), num(b.qd));
  }
  s += "\n[branches]\n# id from to r x theta_max i_max\n";
  for (const auto& br : net.branches) {
    s += fmt::format("{} {} {} {} {} {} {}\n", br.id, net.buses[br.from].id, net.buses[br.to].id,
                     num(br.r), num(br.x), num(br.theta_max), num(br.i_max));
  }
  s += "\n[generators]\n# id bus p_min p_max q_min q_max condenser pg qg\n";
  for (const auto& g : net.generators) {
    s += fmt::format("{} {} {} {} {} {} {} {} {}\n", g.id, net.buses[g.bus].id, num(g.p_min),
                     num(g.p_max), num(g.q_min), num(g.q_max), g.is_condenser ? 1 : 0,
                     num(g.pg), num(g.qg));
  }
  s += "\n[sites]\n# id bus w_min w_max c_min c_max c_rate cost_p cost_e soe_min soe_max\n";
  for (const auto& st : net.sites) {
    s += fmt::format("{} {} {} {} {} {} {} {} {} {} {}\n", st.id, net.buses[st.bus].id,
                     num(st.w_min), num(st.w_max), num(st.c_min), num(st.c_max), num(st.c_rate),
                     num(st.cost_p), num(st.cost_e), num(st.soe_min), num(st.soe_max));
  }
  return s;
}

void write_case(const NetworkModel& net, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw NetworkError("cannot write case file " + path);
  f << format_case(net);
}

// ---------------------------------------------------------------------------
// MATPOWER

namespace {

std::vector<std::vector<double>> matpower_matrix(const std::string& text, const std::string& key,
                                                 const std::string& origin) {
  const std::string tag = "mpc." + key;
  std::size_t p = 0;
  while (true) {
    p = text.find(tag, p);
    if (p == std::string::npos) throw NetworkError(fmt::format("{}: missing {}", origin, tag));
    const std::size_t after = p + tag.size();
    if (after < text.size() && (std::isalnum(static_cast<unsigned char>(text[after])) || text[after] == '_')) {
      p = after;
      continue;
    }
    break;
  }
  const auto open = text.find('[', p);
  const auto close = text.find(']', open);
  if (open == std::string::npos || close == std::string::npos) {
    throw NetworkError(fmt::format("{}: malformed {}", origin, tag));
  }
  std::vector<std::vector<double>> rows;
  std::istringstream body(text.substr(open + 1, close - open - 1));
  std::string line;
  std::vector<double> current;
  while (std::getline(body, line)) {
    line = strip_comment(line, '%');
    std::string cell;
    for (char ch : line + "\n") {
      if (ch == ';' || ch == '\n') {
        std::istringstream ls(cell);
        for (std::string t; ls >> t;) current.push_back(to_number(t, origin + " " + tag));
        cell.clear();
        if (ch == ';' && !current.empty()) {
          rows.push_back(current);
          current.clear();
        }
      } else {
        cell += (ch == ',' || ch == '\t') ? ' ' : ch;
      }
    }
  }
  if (!current.empty()) rows.push_back(current);
  return rows;
}

}  // namespace

NetworkModel parse_matpower(const std::string& text, const std::string& origin) {
  NetworkModel net;
  net.name = origin;
  {
    const auto p = text.find("mpc.baseMVA");
    if (p == std::string::npos) throw NetworkError(origin + ": missing mpc.baseMVA");
    const auto eq = text.find('=', p), semi = text.find(';', p);
    net.base_mva = to_number(trim(text.substr(eq + 1, semi - eq - 1)), origin + " baseMVA");
  }
  const double base = net.base_mva;
  const auto bus = matpower_matrix(text, "bus", origin);
  const auto gen = matpower_matrix(text, "gen", origin);
  const auto branch = matpower_matrix(text, "branch", origin);

  std::map<int, int> pos;
  for (const auto& r : bus) {
    if (r.size() < 13) throw NetworkError(origin + ": bus rows need 13 columns");
    const int type = static_cast<int>(r[1]);
    if (type == 4) continue;
    Bus b;
    b.id = static_cast<int>(r[0]);
    b.kind = type == 3 ? BusKind::slack : (type == 2 ? BusKind::pv : BusKind::pq);
    b.pd = r[2] / base;
    b.qd = r[3] / base;
    b.gs = r[4] / base;
    b.bs = r[5] / base;
    b.v_set = r[7];
    b.base_kv = r[9] > 0.0 ? r[9] : 1.0;
    b.v_max = r[11] * r[11];
    b.v_min = r[12] * r[12];
    pos[b.id] = net.num_buses();
    net.buses.push_back(b);
  }
  int gid = 0;
  for (const auto& r : gen) {
    if (r.size() < 10) throw NetworkError(origin + ": gen rows need 10 columns");
    if (r[7] <= 0.0) continue;
    auto it = pos.find(static_cast<int>(r[0]));
    if (it == pos.end()) throw NetworkError(fmt::format("{}: generator at unknown bus {}", origin, r[0]));
    Generator g;
    g.id = ++gid;
    g.bus = it->second;
    g.pg = r[1] / base;
    g.qg = r[2] / base;
    g.q_max = r[3] / base;
    g.q_min = r[4] / base;
    g.p_max = r[8] / base;
    g.p_min = r[9] / base;
    // Units dispatched at zero active power are treated as synchronous
    // condensers.
    g.is_condenser = r[1] == 0.0 && net.buses[g.bus].kind != BusKind::slack;
    if (g.is_condenser) g.p_min = g.p_max = 0.0;
    if (net.buses[g.bus].kind != BusKind::pq) net.buses[g.bus].v_set = r[5];
    net.generators.push_back(g);
  }
  std::map<std::pair<int, int>, int> pair_index;
  std::vector<std::complex<double>> admittance;
  for (const auto& r : branch) {
    if (r.size() < 11) throw NetworkError(origin + ": branch rows need at least 11 columns");
    if (r[10] <= 0.0) continue;
    const int f = static_cast<int>(r[0]), t = static_cast<int>(r[1]);
    if (!pos.count(f) || !pos.count(t)) {
      throw NetworkError(fmt::format("{}: branch {}-{} references an unknown bus", origin, f, t));
    }
    const int fp = pos[f], tp = pos[t];
    net.buses[fp].bs += 0.5 * r[4];
    net.buses[tp].bs += 0.5 * r[4];
    const std::complex<double> y = 1.0 / std::complex<double>(r[2], r[3]);
    const double i_max = r[5] > 0.0 ? r[5] / base : kUnlimited;
    double theta_max = std::numbers::pi / 3;
    if (r.size() >= 13) {
      const double lim = std::min(std::abs(r[11]), std::abs(r[12]));
      if (lim > 0.0 && lim < 90.0) theta_max = lim * std::numbers::pi / 180.0;
    }
    const auto key = std::minmax(fp, tp);
    auto it = pair_index.find(key);
    if (it == pair_index.end()) {
      Branch br;
      br.id = net.num_branches() + 1;
      br.from = fp;
      br.to = tp;
      br.i_max = i_max;
      br.theta_max = theta_max;
      pair_index[key] = net.num_branches();
      admittance.push_back(y);
      net.branches.push_back(br);
    } else {
      Branch& br = net.branches[it->second];
      admittance[it->second] += y;
      br.i_max += i_max;
      br.theta_max = std::min(br.theta_max, theta_max);
    }
  }
  for (int k = 0; k < net.num_branches(); ++k) {
    const std::complex<double> z = 1.0 / admittance[k];
    net.branches[k].r = z.real();
    net.branches[k].x = z.imag();
  }
  validate(net);
  return net;
}

NetworkModel read_matpower(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw NetworkError("cannot open case file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  auto net = parse_matpower(ss.str(), path);
  const auto slash = path.find_last_of('/');
  net.name = path.substr(slash == std::string::npos ? 0 : slash + 1);
  return net;
}

}  // namespace bessplan
