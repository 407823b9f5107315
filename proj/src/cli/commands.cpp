#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <ostream>

#include <fmt/format.h>
#include <json.hpp>

#include "bessplan/cli.hpp"
#include "bessplan/reporting.hpp"

namespace bessplan::cli {

namespace fs = std::filesystem;
using Eigen::MatrixXd;
using report::read_text;
using report::write_text;

namespace {

const char* kBundleFiles[] = {"network.case", "load_p.csv", "load_q.csv", "fixed_gen_p.csv"};

std::string hex(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::string num(double v) { return fmt::format("{:.17g}", v); }

NetworkModel read_network(const std::string& path) {
  if (fs::path(path).extension() == ".m") return read_matpower(path);
  return read_case(path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw report::ReportError(fmt::format("cannot create {}: {}", dir, ec.message()));
  }
}

// Bus loads plus the storage dispatch, as seen by the refinement power flow.
void loads_with_storage(const NetworkModel& net, const opf::OperatingPoint& op,
                        const opf::DayData& day, MatrixXd& lp, MatrixXd& lq) {
  lp = day.load_p;
  lq = day.load_q;
  for (std::size_t s = 0; s < net.sites.size(); ++s) {
    lp.col(net.sites[s].bus) += op.storage_p.col(static_cast<int>(s));
    lq.col(net.sites[s].bus) += op.storage_q.col(static_cast<int>(s));
  }
}

void append(std::vector<double>& out, const MatrixXd& m) {
  out.insert(out.end(), m.data(), m.data() + m.size());
}

std::vector<report::SizeReport> size_rows(const NetworkModel& net, int days, int hours,
                                          int iterations) {
  const auto in = report::size_inputs(net, days, hours, iterations);
  return {report::model_size(report::SizeMode::centralized, in),
          report::model_size(report::SizeMode::master, in),
          report::model_size(report::SizeMode::subproblem, in)};
}

}  // namespace

std::string decisions_csv(const NetworkModel& net, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& w, const Eigen::VectorXd& c) {
  std::string s = "site,bus,u,w_pu,c_pu,w_mw,c_mwh\n";
  for (std::size_t k = 0; k < net.sites.size(); ++k) {
    const auto& site = net.sites[k];
    const int i = static_cast<int>(k);
    s += fmt::format("{},{},{},{},{},{},{}\n", site.id, net.buses[site.bus].id, num(u[i]),
                     num(w[i]), num(c[i]), num(w[i] * net.base_mva), num(c[i] * net.base_mva));
  }
  return s;
}

std::string bundle_dir(const RunConfig& cfg) { return (fs::path(cfg.out_dir) / "bundle").string(); }

Bundle load_bundle(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::exists(root / "manifest.json")) {
    throw ingest::IngestError(fmt::format("no bundle in {}; run ingest first", dir));
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text((root / "manifest.json").string()));
  } catch (const nlohmann::json::exception& e) {
    throw ingest::IngestError(fmt::format("{}: {}", (root / "manifest.json").string(), e.what()));
  }
  std::uint64_t h = fnv1a("");
  std::vector<std::string> texts;
  for (const char* name : kBundleFiles) {
    texts.push_back(read_text((root / name).string()));
    h = fnv1a(texts.back(), h);
  }
  Bundle b;
  b.hash = hex(h);
  if (manifest.value("hash", std::string()) != b.hash) {
    throw ingest::IngestError(fmt::format("bundle {} does not match its recorded hash", dir));
  }
  const int day_length = manifest.value("day_length", 24);
  b.network = parse_case(texts[0], (root / kBundleFiles[0]).string());
  b.series.day_length = day_length;
  b.series.load_p =
      ingest::parse_timeseries(texts[1], b.network, day_length, kBundleFiles[1]).load_p;
  b.series.load_q =
      ingest::parse_timeseries(texts[2], b.network, day_length, kBundleFiles[2]).load_p;
  b.series.fixed_gen_p =
      ingest::parse_timeseries(texts[3], b.network, day_length, kBundleFiles[3]).load_p;
  return b;
}

int cmd_ingest(const RunConfig& cfg, std::ostream& log) {
  NetworkModel net = read_network(cfg.case_path);
  ingest::TimeSeriesData active;
  if (cfg.timeseries_path.empty()) {
    active = ingest::synthetic_profiles(net, cfg.synthetic);
    log << fmt::format("synthetic profiles: {} days, seed {}\n", active.days(), cfg.seed);
  } else {
    active = ingest::load_timeseries(cfg.timeseries_path, net, cfg.day_length);
    active.fixed_gen_p = MatrixXd::Zero(active.hours(), net.num_buses());
    log << fmt::format("read {} hours from {}\n", active.hours(), cfg.timeseries_path);
  }
  std::vector<int> donors;
  auto ts = ingest::reconstruct_reactive(active, net, ingest::snapshot_of(net), &donors);
  nlohmann::json manifest;
  if (cfg.representative_days) {
    const auto sel =
        report::representative_days(ts, net, 1, cfg.synthetic.first_day_of_year);
    for (const auto& w : sel.warnings) log << "warning: " << w << "\n";
    std::vector<int> picked;
    for (const auto& d : sel.days) {
      picked.push_back(d.day);
      log << fmt::format("representative {}: day {} (rmse {:.4g})\n", report::to_string(d.season),
                         d.day, d.rmse);
    }
    ts = ts.select_days(picked);
    manifest["representative_days"] = picked;
  }
  const std::string dir = bundle_dir(cfg);
  ensure_dir(dir);
  if (cfg.apply_boundary) {
    const auto bc = ingest::generate_boundary_conditions(net, ts, cfg.boundary, cfg.workers);
    std::string s = "branch,from,to,max_current,i_max,tightened\n";
    for (int k = 0; k < bc.network.num_branches(); ++k) {
      const auto& br = bc.network.branches[k];
      const bool t = std::find(bc.tightened.begin(), bc.tightened.end(), k) != bc.tightened.end();
      s += fmt::format("{},{},{},{},{},{}\n", br.id, bc.network.buses[br.from].id,
                       bc.network.buses[br.to].id, num(bc.max_current[k]),
                       std::isfinite(br.i_max) ? num(br.i_max) : "inf", t ? 1 : 0);
    }
    write_text((fs::path(dir) / "boundary.csv").string(), s);
    log << fmt::format("boundary conditions: {} branches tightened to {} of the baseline peak\n",
                       bc.tightened.size(), cfg.boundary.tighten_factor);
    net = bc.network;
  }
  const std::string texts[] = {format_case(net), ingest::format_timeseries(net, ts.load_p),
                               ingest::format_timeseries(net, ts.load_q),
                               ingest::format_timeseries(net, ts.fixed_gen_p)};
  std::uint64_t h = fnv1a("");
  for (int i = 0; i < 4; ++i) {
    write_text((fs::path(dir) / kBundleFiles[i]).string(), texts[i]);
    h = fnv1a(texts[i], h);
  }
  manifest["hash"] = hex(h);
  manifest["day_length"] = ts.day_length;
  manifest["days"] = ts.days();
  manifest["seed"] = cfg.seed;
  manifest["sites"] = net.sites.size();
  write_text((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  log << fmt::format("bundle {} ({} days, {} sites) hash {}\n", dir, ts.days(), net.sites.size(),
                     hex(h));
  return exit_ok;
}

int cmd_plan(const RunConfig& cfg, std::ostream& log) {
  const Bundle b = load_bundle(bundle_dir(cfg));
  const auto& net = b.network;
  const auto days = b.series.all_days();
  auto gcfg = cfg.gbd();
  gcfg.weights.oc.assign(net.num_branches(), cfg.oc);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = benders::run_gbd(net, days, gcfg);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string dir = (fs::path(cfg.out_dir) / "plan").string();
  ensure_dir(dir);

  report::ReportInputs rep;
  rep.state = &r.state;
  rep.sizes = size_rows(net, b.series.days(), b.series.day_length, r.state.iteration);
  std::vector<double> gap, nodal_p, nodal_q, branch, cycle, refined_p, refined_q, times;
  const auto cycles = find_cycle_basis(net);
  const bool dc = cfg.validation == benders::ValidationMode::dc_lp;
  if (r.converged() && !dc) {
    for (std::size_t d = 0; d < r.operating_points.size(); ++d) {
      const auto& op = r.operating_points[d];
      const auto res = acpf::evaluate_residuals(net, op, cycles);
      append(gap, res.cone_gap);
      append(nodal_p, res.nodal_p);
      append(nodal_q, res.nodal_q);
      append(branch, res.branch);
      append(cycle, res.cycle);
      if (d < r.refinement.size()) {
        MatrixXd lp, lq;
        loads_with_storage(net, op, days[d], lp, lq);
        const auto exact = acpf::operating_point_from_states(net, r.refinement[d].states, lp, lq);
        const auto after = acpf::evaluate_residuals(net, exact, cycles);
        append(refined_p, after.nodal_p);
        append(refined_q, after.nodal_q);
        for (const auto& st : r.refinement[d].states) times.push_back(st.solve_time);
      }
    }
    rep.distributions = {{"cone_gap", acpf::summarize(gap)},
                         {"nodal_p", acpf::summarize(nodal_p)},
                         {"nodal_q", acpf::summarize(nodal_q)},
                         {"branch", acpf::summarize(branch)},
                         {"cycle", acpf::summarize(cycle)},
                         {"refined_nodal_p", acpf::summarize(refined_p)},
                         {"refined_nodal_q", acpf::summarize(refined_q)}};
  }
  report::emit_reports(rep, dir);
  if (!times.empty()) {
    write_text((fs::path(dir) / "refinement_times.csv").string(),
               report::format_distribution_csv({{"acpf_seconds", acpf::summarize(times)}}));
  }

  const double capex = r.master.capex;
  std::string costs = "quantity,value\n";
  costs += fmt::format("capex,{}\n", num(capex));
  costs += fmt::format("capex_scaled,{}\n", num(cfg.capex_scale * capex));
  costs += fmt::format("opex_relaxed,{}\n", num(r.day_opex.size() ? r.day_opex.sum() : 0.0));
  costs += fmt::format("opex_refined,{}\n", r.refined ? num(r.refined_opex) : "");
  costs += fmt::format("lower_bound,{}\n", num(r.lb));
  costs += fmt::format("upper_bound,{}\n", r.ub ? num(*r.ub) : "");
  write_text((fs::path(dir) / "costs.csv").string(), costs);
  if (r.master.status == benders::MasterStatus::optimal) {
    write_text((fs::path(dir) / "decisions.csv").string(),
               decisions_csv(net, r.master.u, r.master.w, r.master.c));
  }
  std::string status = fmt::format("status {}\niterations {}\n{}\n", benders::to_string(r.status),
                                   r.state.iteration, r.message);
  bool ok = r.converged();
  if (r.converged() && !dc) {
    status += fmt::format("refinement {}\n", r.refinement_ok() ? "ok" : "failed");
    for (std::size_t d = 0; d < r.refinement.size(); ++d) {
      for (int t : r.refinement[d].failed_hours) status += fmt::format("  day {} hour {}\n", d, t);
    }
    ok = ok && r.refinement_ok();
  } else if (dc) {
    status += "refinement skipped (DC subproblems carry no voltages)\n";
  }
  write_text((fs::path(dir) / "status.txt").string(), status);
  log << status;
  log << fmt::format("wall time {:.2f} s, outputs in {}\n", wall, dir);
  return ok ? exit_ok : exit_failed;
}

int cmd_validate(const RunConfig& cfg, std::ostream& log) {
  const Bundle b = load_bundle(bundle_dir(cfg));
  const auto& net = b.network;
  const auto days = b.series.all_days();
  auto gcfg = cfg.gbd();
  gcfg.weights.oc.assign(net.num_branches(), cfg.oc);
  if (gcfg.mode == benders::ValidationMode::none) {
    gcfg.mode = benders::ValidationMode::relaxed_socp;
  }
  gcfg.refine = false;
  const auto r = benders::run_gbd(net, days, gcfg);
  const auto c = benders::solve_centralized(net, days, gcfg);
  const std::string dir = (fs::path(cfg.out_dir) / "validate").string();
  ensure_dir(dir);
  std::string status = fmt::format("mode {}\ndecomposed {} after {} iterations\ncentralized {}\n",
                                   benders::to_string(gcfg.mode), benders::to_string(r.status),
                                   r.state.iteration, conic::to_string(c.status));
  if (r.master.status == benders::MasterStatus::optimal) {
    write_text((fs::path(dir) / "decisions.csv").string(),
               decisions_csv(net, r.master.u, r.master.w, r.master.c));
  }
  report::ReportInputs rep;
  rep.state = &r.state;
  rep.sizes = size_rows(net, b.series.days(), b.series.day_length, r.state.iteration);
  bool ok = r.converged() && c.status == conic::SolveStatus::optimal;
  if (ok) {
    std::string s = "site,w_decomposed,w_centralized,w_residual,c_decomposed,c_centralized,"
                    "c_residual\n";
    double worst = 0.0;
    for (std::size_t k = 0; k < net.sites.size(); ++k) {
      const int i = static_cast<int>(k);
      const double dw = r.master.w[i] - c.w[i], dcap = r.master.c[i] - c.c[i];
      worst = std::max({worst, std::abs(dw), std::abs(dcap)});
      s += fmt::format("{},{},{},{},{},{},{}\n", net.sites[k].id, num(r.master.w[i]), num(c.w[i]),
                       num(dw), num(r.master.c[i]), num(c.c[i]), num(dcap));
    }
    write_text((fs::path(dir) / "linking.csv").string(), s);
    std::vector<double> dp, dq, dv;
    for (std::size_t d = 0; d < days.size(); ++d) {
      const auto& a = r.operating_points[d];
      const auto& z = c.days[d];
      append(dp, a.p_s - z.p_s);
      append(dq, a.q_s - z.q_s);
      append(dv, a.v - z.v);
    }
    rep.distributions = {{"state_p_s", acpf::summarize(dp)},
                         {"state_q_s", acpf::summarize(dq)},
                         {"state_v", acpf::summarize(dv)}};
    const int feas_cuts = static_cast<int>(r.state.cuts.feasibility.size());
    status += fmt::format("objective decomposed {} centralized {}\n", num(*r.ub), num(c.objective));
    status += fmt::format("max linking residual {:.3e}\nfeasibility cuts {}\n", worst, feas_cuts);
  } else if (c.status != conic::SolveStatus::optimal) {
    status += "centralized solve failed; decomposed result kept\n";
  } else {
    status += r.message + "\n";
  }
  report::emit_reports(rep, dir);
  write_text((fs::path(dir) / "status.txt").string(), status);
  log << status;
  return ok ? exit_ok : exit_failed;
}

int cmd_report(const RunConfig& cfg, std::ostream& log) {
  const Bundle b = load_bundle(bundle_dir(cfg));
  const auto& net = b.network;
  const std::string dir = (fs::path(cfg.out_dir) / "report").string();
  ensure_dir(dir);
  report::ReportInputs rep;
  rep.sizes = size_rows(net, b.series.days(), b.series.day_length, 0);
  auto gcfg = cfg.gbd();
  gcfg.weights.oc.assign(net.num_branches(), cfg.oc);
  gcfg.refine = false;
  const auto source = b.series.all_days();

  auto run = [&](const NetworkModel& model, const std::vector<opf::DayData>& days) {
    const auto r = benders::run_gbd(model, days, gcfg);
    auto point = report::scalability_point(r.state, static_cast<int>(model.sites.size()));
    log << fmt::format(
        "{} days, {} sites: {} after {} iterations, master {:.3f} s, subproblems {:.3f} s\n",
        days.size(), model.sites.size(), benders::to_string(r.status), point.iterations,
        point.master_seconds, point.subproblem_seconds);
    if (!r.converged()) log << "  " << r.message << "\n";
    return point;
  };

  std::vector<double> n, mp_per_iteration;
  for (int count : cfg.sweep_days) {
    const auto point = run(net, report::cycle_days(source, count, cfg.seed, cfg.sweep_spread));
    rep.scalability.push_back(point);
    n.push_back(count);
    mp_per_iteration.push_back(point.master_seconds / std::max(1, point.iterations));
  }
  std::vector<report::ScalabilityPoint> by_sites;
  for (int count : cfg.sweep_sites) {
    if (count > static_cast<int>(net.sites.size())) {
      log << fmt::format("skipping {} sites: the network has {}\n", count, net.sites.size());
      continue;
    }
    NetworkModel sub = net;
    sub.sites.resize(count);
    by_sites.push_back(run(sub, source));
  }
  report::emit_reports(rep, dir);
  if (!by_sites.empty()) {
    write_text((fs::path(dir) / "scalability_sites.csv").string(),
               report::format_scalability_csv(by_sites));
  }
  if (!n.empty()) {
    const double slope = report::loglog_slope(n, mp_per_iteration);
    write_text((fs::path(dir) / "slope.txt").string(),
               fmt::format("master_time_per_iteration_vs_days {}\n", num(slope)));
    log << fmt::format("log-log slope of master time per iteration: {:.3f}\n", slope);
  }
  log << "reports in " << dir << "\n";
  return exit_ok;
}

}  // namespace bessplan::cli
