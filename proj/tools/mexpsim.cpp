// Command-line front end: transient runs (mexp / tr / oracle / all, with a
// runtime comparison report) and synthetic PDN mesh generation.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mexpsim/engine.hpp"
#include "mexpsim/mna.hpp"
#include "mexpsim/netlist.hpp"

namespace {

using namespace mexpsim;

struct ReportRow {
  std::string method;
  RunStats stats;
  std::optional<double> max_dv;  // vs oracle, when the oracle ran
};

std::string with_method_suffix(const std::string& path, const std::string& method, bool all) {
  if (!all) return path;
  std::filesystem::path p(path);
  const std::string stem = p.stem().string();
  const std::string ext = p.extension().string();
  return (p.parent_path() / (stem + "_" + method + ext)).string();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << text;
}

void print_report(std::ostream& os, const std::vector<ReportRow>& rows) {
  char line[256];
  os << "method      DC(s)     LU(s)  total(s)      steps      sum_m   m_avg  m_peak   max|dV|\n";
  double tr_total = 0.0, mexp_total = 0.0;
  for (const auto& r : rows) {
    std::string dv = "-";
    if (r.max_dv) {
      std::snprintf(line, sizeof(line), "%.3e", *r.max_dv);
      dv = line;
    }
    std::snprintf(line, sizeof(line), "%-8s %8.3f  %8.3f  %8.3f  %9ld  %9ld  %6.2f  %6d  %8s\n",
                  r.method.c_str(), r.stats.dc_seconds, r.stats.lu_seconds, r.stats.wall_seconds,
                  r.stats.steps, r.stats.sum_m, r.stats.m_avg(), r.stats.m_peak, dv.c_str());
    os << line;
    if (r.method == "tr") tr_total = r.stats.wall_seconds;
    if (r.method == "mexp") mexp_total = r.stats.wall_seconds;
  }
  if (tr_total > 0.0 && mexp_total > 0.0) {
    std::snprintf(line, sizeof(line), "speedup (tr/mexp): %.2f\n", tr_total / mexp_total);
    os << line;
  }
}

int cmd_run(const std::string& netlist_path, const std::string& method, SimConfig cfg,
            double tmax_override, std::string out_csv, std::string out_json, bool verbose) {
  std::ifstream in(netlist_path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot open '" << netlist_path << "'\n";
    return 1;
  }
  std::stringstream buffer;
  buffer << in.rdbuf();

  Netlist nl;
  MnaSystem sys;
  try {
    nl = parse_netlist(buffer.str());
    sys = build_mna(nl);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 1;
  } catch (const MnaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  if (tmax_override > 0.0)
    cfg.t_end = tmax_override;
  else if (nl.has_tran)
    cfg.t_end = nl.tstop;
  if (!(cfg.t_end > 0.0)) {
    std::cerr << "error: no .tran directive and no --tmax given\n";
    return 1;
  }
  if (cfg.output_dt <= 0.0 && nl.tstep > 0.0) cfg.output_dt = std::min(nl.tstep, cfg.h_max);
  if (verbose) cfg.diagnostics = &std::cerr;

  const std::filesystem::path base(netlist_path);
  if (out_csv.empty()) out_csv = base.stem().string() + ".csv";
  if (out_json.empty()) out_json = base.stem().string() + "_stats.json";

  const bool all = method == "all";
  std::vector<std::pair<std::string, Waveform>> runs;
  std::optional<Waveform> reference;

  auto execute = [&](const std::string& name) -> int {
    try {
      Waveform wf;
      if (name == "mexp")
        wf = mexp_transient(sys, cfg);
      else if (name == "tr")
        wf = trapezoidal_transient(sys, cfg);
      else
        wf = oracle_transient(sys, cfg);
      if (name == "oracle") reference = wf;
      runs.emplace_back(name, std::move(wf));
      return 0;
    } catch (const std::exception& e) {
      if (all && name == "oracle") {
        std::cerr << "note: oracle skipped: " << e.what() << '\n';
        return 0;
      }
      std::cerr << "numerical failure (" << name << "): " << e.what() << '\n';
      return 2;
    }
  };

  if (all) {
    for (const char* name : {"oracle", "tr", "mexp"})
      if (int rc = execute(name); rc != 0) return rc;
  } else {
    if (int rc = execute(method); rc != 0) return rc;
  }

  std::vector<ReportRow> rows;
  for (auto& [name, wf] : runs) {
    std::ostringstream csv, json;
    write_waveform_csv(wf, csv);
    write_stats_json(wf, name, json);
    try {
      write_file(with_method_suffix(out_csv, name, all), csv.str());
      write_file(with_method_suffix(out_json, name, all), json.str());
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
    ReportRow row{name, wf.stats, std::nullopt};
    if (reference && name != "oracle") row.max_dv = max_abs_difference(wf, *reference);
    rows.push_back(std::move(row));
  }
  if (all) print_report(std::cout, rows);
  return 0;
}

int cmd_genmesh(const MeshSpec& spec, const std::string& out_path) {
  Netlist nl;
  try {
    nl = generate_pdn_mesh(spec);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  try {
    write_file(out_path, to_netlist_text(nl));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Power-grid transient simulator (adaptive matrix-exponential method)"};
  app.require_subcommand(1);

  // --- run ---
  auto* run = app.add_subcommand("run", "Simulate a netlist and write waveform CSV + stats JSON");
  std::string netlist_path, method = "mexp", out_csv, out_json;
  SimConfig cfg;
  double tmax = 0.0;
  bool verbose = false;
  run->add_option("netlist", netlist_path, "input netlist file")->required();
  run->add_option("--method", method, "mexp|tr|oracle|all (default mexp)")
      ->check(CLI::IsMember({"mexp", "tr", "oracle", "all"}));
  run->add_option("--gamma", cfg.gamma, "rational shift parameter in seconds (default 1e-10)");
  run->add_option("--tol", cfg.e_tol, "accumulated error tolerance E_Tol (default 1e-4)");
  run->add_option("--tmax", tmax, "simulation span in seconds (overrides .tran)");
  run->add_option("--hmax", cfg.h_max, "maximum step size in seconds (default 1e-9)");
  run->add_option("--tr-h", cfg.tr_h, "fixed trapezoidal step in seconds (default 1e-11)");
  run->add_option("--mmax", cfg.m_max, "Krylov dimension cap (default 30)");
  run->add_option("--out", out_csv, "waveform CSV path (default <netlist>.csv)");
  run->add_option("--stats", out_json, "stats JSON path (default <netlist>_stats.json)");
  run->add_option("--output-dt", cfg.output_dt, "sample spacing (default .tran interval or hmax)");
  run->add_flag("--verbose", verbose, "per-step diagnostics CSV on stderr");

  // --- genmesh ---
  auto* gen = app.add_subcommand("genmesh", "Generate a synthetic RC power-delivery mesh");
  MeshSpec spec;
  spec.rows = 50;
  spec.cols = 50;
  double gmin = 1.09e-2, gmax = 1.00e2;
  spec.c_min = 5.04e-19;
  spec.c_max = 1.00e-15;
  double rise = 1e-11;
  std::string mesh_out, source_kind = "v";
  gen->add_option("--rows", spec.rows, "grid rows (default 50)");
  gen->add_option("--cols", spec.cols, "grid cols (default 50)");
  gen->add_option("--seed", spec.seed, "RNG seed (default 1)");
  gen->add_option("--cmin", spec.c_min, "min node capacitance in F");
  gen->add_option("--cmax", spec.c_max, "max node capacitance in F");
  gen->add_option("--gmin", gmin, "min branch conductance in S");
  gen->add_option("--gmax", gmax, "max branch conductance in S");
  gen->add_option("--rise", rise, "step-input transition time in s (default 10 ps)");
  gen->add_option("--tstop", spec.tstop, "emitted .tran stop time (default 1e-8)");
  gen->add_option("--tstep", spec.tstep, "emitted .tran output interval (default 1e-10)");
  gen->add_option("--source", source_kind, "corner source kind: v|i (default v)")
      ->check(CLI::IsMember({"v", "i"}));
  gen->add_option("--out", mesh_out, "output netlist path")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(netlist_path, method, cfg, tmax, out_csv, out_json, verbose);

  if (!(gmin > 0.0) || gmin > gmax || !(rise > 0.0)) {
    std::cerr << "error: invalid mesh ranges\n";
    return 1;
  }
  spec.r_min = 1.0 / gmax;
  spec.r_max = 1.0 / gmin;
  spec.current_source = source_kind == "i";
  spec.input = PwlWaveform{{{0.0, 0.0}, {rise, 1.0}}};
  return cmd_genmesh(spec, mesh_out);
}
