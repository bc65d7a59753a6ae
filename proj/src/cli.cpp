#include "hybridsens/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "hybridsens/csv.hpp"
#include "hybridsens/ctmc.hpp"
#include "hybridsens/model.hpp"
#include "hybridsens/oracle.hpp"
#include "hybridsens/pdmp.hpp"
#include "hybridsens/scaling.hpp"
#include "hybridsens/sensitivity.hpp"
#include "hybridsens/stats.hpp"

namespace hybridsens {

namespace {

constexpr const char* kVersion = "0.1.0";

// Failures that map to exit code 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string model, scaling, out, method;
  std::string seed_text = "0x5EED000000000001";
  std::size_t paths = 1000;
  double T = 1.0;
  double dt = 0.0;
  std::string observable;
  std::vector<std::string> thetas;
  double h = 1e-2;
  bool absolute_h = false;
  bool central = false;
  bool timing = false;
  bool raw = false;
  std::size_t aux_times = 10;
  std::size_t aux_pairs = 1;
  std::size_t grid = 50;
  std::vector<long> bounds;
  std::vector<std::string> files;
  std::string key = "parameter";
  double z_max = 3.0;
  std::size_t cap = 200'000;
};

std::string hex_seed(std::uint64_t s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%016" PRIx64, s);
  return buf;
}

std::uint64_t parse_seed(const std::string& s) {
  try {
    std::size_t used = 0;
    auto v = std::stoull(s, &used, 0);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw CLI::ValidationError("--seed", "not an integer: " + s);
  }
}

struct Loaded {
  std::optional<ReactionNetwork> net;  // set for CTMC model files
  std::optional<ScalingSpec> scaling;
  std::optional<ReducedPDMP> reduced;  // given directly or derived
};

Loaded load_inputs(const Options& o, bool derive) {
  Loaded l;
  Json doc = read_json_file(o.model);
  if (doc.is_object() && doc.value("kind", "") == "pdmp") {
    if (!o.scaling.empty())
      throw InputError("a reduced model takes no scaling file");
    l.reduced.emplace(parse_reduced(doc));
    return l;
  }
  l.net.emplace(parse_network(doc));
  if (!o.scaling.empty()) {
    l.scaling.emplace(load_scaling(o.scaling, *l.net));
    if (derive) l.reduced.emplace(derive_reduced_model(*l.net, *l.scaling));
  }
  return l;
}

void write_manifest(const Options& o, const std::string& command,
                    const std::vector<std::string>& argv, double wall,
                    const Json& extra = Json::object()) {
  if (o.out.empty()) return;
  Json m = Json::object();
  m["tool"] = "hybridsens";
  m["version"] = kVersion;
  m["command"] = command;
  m["arguments"] = argv;
  m["seed"] = hex_seed(parse_seed(o.seed_text));
  m["threads"] = worker_count();
  m["inputs"] = {{"model", o.model}, {"scaling", o.scaling}};
  m["wall_time_s"] = wall;
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  std::ofstream f(o.out + ".manifest.json");
  f << m.dump(2) << '\n';
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  return f;
}

int cmd_validate(const Options& o, std::ostream& out) {
  Loaded l = load_inputs(o, false);
  if (l.reduced) {
    const auto& m = *l.reduced;
    out << "valid reduced model: " << m.net.num_reactions() << " reactions, "
        << m.net.num_species() << " species (" << m.continuous_species.size()
        << " continuous species, " << m.continuous_reactions.size()
        << " continuous and " << m.discrete_reactions.size()
        << " discrete reactions)\n";
  } else {
    out << "valid: " << l.net->num_reactions() << " reactions, "
        << l.net->num_species() << " species\n";
    if (l.scaling) out << "scaling: valid (N0=" << format_number(l.scaling->N0) << ")\n";
  }
  return kExitOk;
}

std::string name_set(const ReactionNetwork& n, const std::vector<std::size_t>& idx) {
  std::string s = "{";
  for (std::size_t j = 0; j < idx.size(); ++j)
    s += (j ? ", " : "") + n.reactions()[idx[j]].name;
  return s + "}";
}

int cmd_reduce(const Options& o, std::ostream& out) {
  if (o.scaling.empty()) throw CLI::RequiredError("--scaling");
  Loaded l = load_inputs(o, false);
  if (!l.net) throw InputError("reduce needs a CTMC model file");
  const TimescaleReport rep = timescale_report(*l.net, *l.scaling);
  out << rep.to_text(*l.net);
  ReducedPDMP m = derive_reduced_model(*l.net, *l.scaling, rep);
  out << "R_d = " << name_set(m.net, m.discrete_reactions)
      << ", R_c = " << name_set(m.net, m.continuous_reactions) << '\n';
  if (!o.out.empty()) {
    open_out(o.out) << m.to_json().dump(2) << '\n';
    open_out(o.out + ".report.json") << rep.to_json(*l.net).dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  std::string method = o.method;
  if (method.empty()) method = o.scaling.empty() ? "ssa" : "pdmp";
  Loaded l = load_inputs(o, method == "pdmp");
  if (o.method.empty() && l.reduced) method = "pdmp";
  const std::uint64_t seed = parse_seed(o.seed_text);
  std::vector<double> grid;
  for (std::size_t i = 0; i <= o.grid; ++i)
    grid.push_back(i == o.grid ? o.T : o.T * static_cast<double>(i) / o.grid);

  const ReactionNetwork* net = nullptr;
  std::vector<std::vector<std::vector<double>>> paths(o.paths);
  if (method == "pdmp") {
    if (!l.reduced) throw InputError("method pdmp needs a reduced model or a scaling file");
    net = &l.reduced->net;
    PdmpEngine engine(*l.reduced, net->param_values());
    PdmpRunOptions opt;
    opt.record_grid = grid;
    const double dt = StepConfig{o.dt, {}, 100'000'000}.step(o.T);
    parallel_for(o.paths, [&](std::size_t p) {
      RngStream rng(seed, p);
      paths[p] = engine.run(engine.initial_state(), 0, o.T, dt, rng, opt).grid_states;
    });
  } else if (method == "ssa" || method == "nrm") {
    if (!l.net) throw InputError("method " + method + " needs a CTMC model file");
    net = &*l.net;
    if (l.scaling) {
      const Rational g = timescale_report(*net, *l.scaling).gamma;
      parallel_for(o.paths, [&](std::size_t p) {
        RngStream rng(seed, p);
        paths[p] = simulate_scaled(*net, *l.scaling, l.scaling->N0, g,
                                   net->param_values(), o.T, rng, grid);
      });
    } else {
      CtmcSimulator sim(*net, net->param_values());
      CtmcOptions opt;
      opt.grid = grid;
      parallel_for(o.paths, [&](std::size_t p) {
        RngStream rng(seed, p);
        paths[p] = (method == "ssa" ? sim.ssa_direct(net->initial_state(), o.T, rng, opt)
                                    : sim.nrm(net->initial_state(), o.T, rng, opt))
                       .grid_states;
      });
    }
  } else {
    throw CLI::ValidationError("--method", "simulate supports pdmp, ssa or nrm");
  }

  const std::size_t S = net->num_species();
  std::ostringstream csv;
  CsvWriter w(csv);
  w.comment("hybridsens seed=" + hex_seed(seed) + " method=" + method +
            " paths=" + std::to_string(o.paths));
  std::vector<std::string> header{"t", "statistic"};
  for (const auto& s : net->species()) header.push_back(s.name);
  w.row(header);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<std::string> mean{format_number(grid[g]), "mean"};
    std::vector<std::string> se{format_number(grid[g]), "stderr"};
    for (std::size_t i = 0; i < S; ++i) {
      std::vector<double> v(o.paths);
      for (std::size_t p = 0; p < o.paths; ++p) v[p] = paths[p][g][i];
      auto st = SummaryStats::of(v);
      mean.push_back(format_number(st.mean));
      se.push_back(format_number(st.std_error));
    }
    w.row(mean);
    w.row(se);
  }
  if (o.out.empty()) {
    out << csv.str();
  } else {
    open_out(o.out) << csv.str();
    if (o.raw) {
      auto f = open_out(o.out + ".paths.csv");
      CsvWriter r(f);
      r.comment("hybridsens seed=" + hex_seed(seed) + " method=" + method);
      std::vector<std::string> h{"path_id", "t"};
      for (const auto& s : net->species()) h.push_back(s.name);
      r.row(h);
      for (std::size_t p = 0; p < o.paths; ++p)
        for (std::size_t g = 0; g < grid.size(); ++g) {
          std::vector<std::string> row{std::to_string(p), format_number(grid[g])};
          for (double x : paths[p][g]) row.push_back(format_number(x));
          r.row(row);
        }
    }
  }
  return kExitOk;
}

// Ten equal bins over the finite decoupling times; pairs that never split
// are counted separately.
Json tau_histogram(const std::vector<double>& tau) {
  std::vector<double> finite;
  for (double t : tau)
    if (std::isfinite(t)) finite.push_back(t);
  Json j = Json::object();
  j["pairs"] = tau.size();
  j["never_decoupled"] = tau.size() - finite.size();
  if (!finite.empty()) {
    const double hi = *std::max_element(finite.begin(), finite.end());
    std::vector<double> edges;
    for (int b = 0; b <= 10; ++b) edges.push_back(hi > 0.0 ? hi * b / 10.0 : b * 0.1);
    const Histogram hgm = histogram(finite, edges);
    j["edges"] = hgm.edges;
    j["counts"] = hgm.counts;
  }
  return j;
}

int cmd_sens(const Options& o, std::ostream& out, Json& extra) {
  if (o.observable.empty()) throw CLI::RequiredError("--observable");
  if (o.thetas.empty()) throw CLI::RequiredError("--theta");
  const SensMethod method = parse_method(o.method.empty() ? "pdmp-decomposition" : o.method);
  const bool ctmc = method == SensMethod::CfdCtmc || method == SensMethod::IpaCtmc;
  Loaded l = load_inputs(o, !ctmc);
  if (ctmc && !l.net) throw InputError(std::string(to_string(method)) + " needs a CTMC model file");
  if (!ctmc && !l.reduced)
    throw InputError(std::string(to_string(method)) +
                     " needs a reduced model or a scaling file");

  SensitivityRequest req;
  req.observable = o.observable;
  req.T = o.T;
  req.method = method;
  req.paths = o.paths;
  req.h = o.h;
  req.relative_h = !o.absolute_h;
  req.central = o.central;
  req.aux_times = o.aux_times;
  req.aux_pairs = o.aux_pairs;
  req.cfg.dt = o.dt;
  req.seed = parse_seed(o.seed_text);

  std::ostringstream csv;
  CsvWriter w(csv);
  w.comment("hybridsens seed=" + hex_seed(req.seed) + " method=" + to_string(method) +
            " paths=" + std::to_string(o.paths));
  w.row({"parameter", "method", "estimate", "stderr", "n", "part_continuous",
         "part_continuous_stderr", "part_discrete", "part_discrete_stderr",
         "wall_time_s"});
  Json timings = Json::object(), taus = Json::object();
  for (const std::string& theta : o.thetas) {
    req.parameter = theta;
    SensitivityEstimate e;
    CtmcScale scale{l.scaling ? &*l.scaling : nullptr, std::nullopt};
    switch (method) {
      case SensMethod::PdmpDecomposition: e = sens_pdmp_total(*l.reduced, req); break;
      case SensMethod::CfdPdmp: e = cfd_pdmp(*l.reduced, req); break;
      case SensMethod::TiltedFd: e = tilted_fd(*l.reduced, req); break;
      case SensMethod::CfdCtmc: e = cfd_ctmc(*l.net, req, scale); break;
      case SensMethod::IpaCtmc: e = ipa_ctmc(*l.net, req, scale); break;
    }
    auto opt = [](const std::optional<EstimatePart>& p, bool se) {
      if (!p) return std::string();
      return format_number(se ? p->std_error : p->value);
    };
    w.row({theta, to_string(method), format_number(e.value), format_number(e.std_error),
           std::to_string(e.n), opt(e.continuous, false), opt(e.continuous, true),
           opt(e.discrete, false), opt(e.discrete, true),
           format_number(o.timing ? e.wall_time_s : 0.0)});
    timings[theta] = e.wall_time_s;
    if (!e.tau.empty()) taus[theta] = tau_histogram(e.tau);
  }
  extra["wall_time_s_per_parameter"] = timings;
  if (!taus.empty()) extra["decoupling_time_histogram"] = taus;
  if (o.out.empty())
    out << csv.str();
  else
    open_out(o.out) << csv.str();
  return kExitOk;
}

int cmd_compare(const Options& o, std::ostream& out) {
  if (o.files.size() != 2) throw CLI::ValidationError("compare", "needs two CSV files");
  const CsvTable a = read_csv_file(o.files[0]);
  const CsvTable b = read_csv_file(o.files[1]);
  const std::size_t ka = a.column(o.key), kb = b.column(o.key);
  const std::size_t ea = a.column("estimate"), eb = b.column("estimate");
  const std::size_t sa = a.column("stderr"), sb = b.column("stderr");
  std::map<std::string, const std::vector<std::string>*> rows_b;
  for (const auto& r : b.rows) rows_b[r.at(kb)] = &r;
  if (rows_b.size() != a.rows.size())
    throw InputError("compare: the files have different row keys");
  bool ok = true;
  for (const auto& r : a.rows) {
    auto it = rows_b.find(r.at(ka));
    if (it == rows_b.end()) throw InputError("compare: key '" + r.at(ka) + "' missing");
    const auto& rb = *it->second;
    const double z = z_score(std::stod(r.at(ea)), std::stod(r.at(sa)),
                             std::stod(rb.at(eb)), std::stod(rb.at(sb)));
    const bool pass = z <= o.z_max;
    ok &= pass;
    out << r.at(ka) << ": " << r.at(ea) << " vs " << rb.at(eb)
        << " z=" << format_number(z) << (pass ? " ok" : " MISMATCH") << '\n';
  }
  out << (ok ? "agreement" : "disagreement") << '\n';
  return ok ? kExitOk : kExitCompare;
}

int cmd_oracle(const Options& o, std::ostream& out) {
  Loaded l = load_inputs(o, false);
  if (!l.net) throw InputError("oracle-cme needs a CTMC model file");
  const ReactionNetwork& n = *l.net;
  std::vector<long> upper = o.bounds;
  if (upper.size() == 1 && n.num_species() > 1) upper.assign(n.num_species(), o.bounds[0]);
  if (upper.size() != n.num_species())
    throw CLI::ValidationError("--bounds", "needs one bound per species");
  auto space = TruncatedStateSpace::box(upper);
  CmeOptions opt;
  opt.dt = o.dt;
  opt.cap = o.cap;
  auto sol = cme_solve(n, n.param_values(), space, o.T, opt);
  if (!o.observable.empty()) {
    out << "E[" << o.observable << "] = "
        << format_number(cme_expectation(n, n.param_values(), space, sol, o.observable))
        << '\n';
    for (const auto& th : o.thetas)
      out << "d/d" << th << " = "
          << format_number(cme_sensitivity_fd(n, th, o.observable, space, o.T, o.h, opt))
          << '\n';
  }
  out << "tail estimate = " << format_number(sol.tail_estimate) << '\n';
  if (!o.out.empty()) {
    auto f = open_out(o.out);
    CsvWriter w(f);
    w.comment("hybridsens oracle-cme states=" + std::to_string(space.size()));
    std::vector<std::string> h;
    for (const auto& s : n.species()) h.push_back(s.name);
    h.push_back("probability");
    w.row(h);
    for (std::size_t s = 0; s < space.size(); ++s) {
      std::vector<std::string> row;
      for (double x : space.state(s)) row.push_back(format_number(x));
      row.push_back(format_number(sol.p[s]));
      w.row(row);
    }
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulation and sensitivity analysis of multiscale reaction networks"};
  app.set_help_flag("--help", "print this help and exit");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--model", o.model, "model file (JSON)")->required()->check(CLI::ExistingFile);
    c->add_option("--scaling", o.scaling, "scaling file (JSON)")->check(CLI::ExistingFile);
    c->add_option("--out", o.out, "output file");
  };
  auto run_opts = [&](CLI::App* c) {
    c->add_option("--seed", o.seed_text, "root seed (decimal or 0x hex)");
    c->add_option("--paths", o.paths, "number of paths")->check(CLI::PositiveNumber);
    c->add_option("--T", o.T, "final time")->check(CLI::PositiveNumber);
    c->add_option("--dt", o.dt, "Euler step (default T/50000)");
    c->add_option("--method", o.method, "simulation or estimation method");
  };

  auto* validate = app.add_subcommand("validate", "check a model (and scaling) file");
  common(validate);
  auto* reduce = app.add_subcommand("reduce", "derive the reduced hybrid model");
  common(reduce);
  auto* simulate = app.add_subcommand("simulate", "simulate paths and summarise them");
  common(simulate);
  run_opts(simulate);
  simulate->add_option("--grid", o.grid, "number of grid intervals")->check(CLI::PositiveNumber);
  simulate->add_flag("--raw", o.raw, "also write every path to <out>.paths.csv");
  auto* sens = app.add_subcommand("sens", "estimate parameter sensitivities");
  common(sens);
  run_opts(sens);
  sens->add_option("--observable", o.observable, "observable name");
  sens->add_option("--theta", o.thetas, "parameter name (repeatable)");
  sens->add_option("--h", o.h, "finite-difference step (relative unless --absolute-h)");
  sens->add_flag("--absolute-h", o.absolute_h);
  sens->add_flag("--central", o.central, "central instead of forward differences");
  sens->add_option("--aux-times", o.aux_times, "evaluation times per discrete reaction");
  sens->add_option("--aux-pairs", o.aux_pairs, "auxiliary pairs per evaluation time");
  sens->add_flag("--timing", o.timing, "write wall times into the CSV (not reproducible)");
  auto* compare = app.add_subcommand("compare", "compare two sensitivity CSV files");
  compare->add_option("files", o.files, "two CSV files")->required()->expected(2);
  compare->add_option("--key", o.key, "row key column");
  compare->add_option("--z", o.z_max, "largest acceptable z-score");
  auto* oracle = app.add_subcommand("oracle-cme", "solve the truncated master equation");
  common(oracle);
  oracle->add_option("--bounds", o.bounds, "upper bound per species")->required()->delimiter(',');
  oracle->add_option("--T", o.T, "final time")->check(CLI::PositiveNumber);
  oracle->add_option("--dt", o.dt, "RK4 step (default T/1e4)");
  oracle->add_option("--observable", o.observable);
  oracle->add_option("--theta", o.thetas, "parameters for finite-difference sensitivities");
  oracle->add_option("--h", o.h, "absolute finite-difference step");
  oracle->add_option("--cap", o.cap, "largest admissible state count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  try {
    parse_seed(o.seed_text);
    if (*validate) return cmd_validate(o, out);
    if (*reduce) return cmd_reduce(o, out);
    if (*compare) return cmd_compare(o, out);
    if (*oracle) {
      int rc = cmd_oracle(o, out);
      write_manifest(o, "oracle-cme", args, elapsed());
      return rc;
    }
    if (*simulate) {
      int rc = cmd_simulate(o, out);
      write_manifest(o, "simulate", args, elapsed());
      return rc;
    }
    if (*sens) {
      Json extra = Json::object();
      int rc = cmd_sens(o, out, extra);
      write_manifest(o, "sens", args, elapsed(), extra);
      return rc;
    }
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const DerivationError& e) {
    err << "derivation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "schema error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TruncatedPathError& e) {
    err << "simulation failure: " << e.what() << " (partial path discarded)\n";
    return kExitNumeric;
  } catch (const IntegrationFailure& e) {
    err << "integration failure at t=" << format_number(e.time) << ": " << e.what() << '\n';
    return kExitNumeric;
  } catch (const NumericDomainError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"hybridsens"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace hybridsens
