// Command-line front end: predicate, gen, parisi, run, diag, sweep, pipeline.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cspamp/analysis.h"
#include "cspamp/engine.h"
#include "cspamp/experiment.h"
#include "cspamp/instance.h"
#include "cspamp/parallel.h"
#include "cspamp/parisi.h"
#include "cspamp/predicate.h"

using namespace cspamp;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

// Flat "key = value" file; '#' starts a comment. Keys are long option names.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ExitError(kExitBadConfig, "cannot read config file " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ExitError(kExitBadConfig, path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

// Applies file values to options not given on the command line.
void apply_config(CLI::App* sub, const std::string& path) {
  for (const auto& [key, value] : read_config_file(path)) {
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt) throw ExitError(kExitBadConfig, "unknown config key: " + key);
    if (opt->count() == 0) {
      opt->add_result(value);
      opt->run_callback();
    }
  }
}

void add_experiment_options(CLI::App* sub, ExperimentConfig& c) {
  sub->add_option("--predicate", c.predicate, "built-in name or truth-table file")->capture_default_str();
  sub->add_option("--n", c.n, "number of variables")->capture_default_str();
  sub->add_option("--d", c.d, "variable degree")->capture_default_str();
  sub->add_option("--r", c.r, "arity (0: from the predicate)")->capture_default_str();
  sub->add_option("--delta", c.delta, "time step")->capture_default_str();
  sub->add_option("--pieces", c.pieces, "pieces of the order parameter")->capture_default_str();
  sub->add_option("--eta", c.eta, "time cutoff")->capture_default_str();
  sub->add_option("--instance-seed", c.instance_seed)->capture_default_str();
  sub->add_option("--engine-seed", c.engine_seed)->capture_default_str();
  sub->add_option("--rounding-seed", c.rounding_seed)->capture_default_str();
  sub->add_option("--sde-seed", c.sde_seed)->capture_default_str();
  sub->add_option("--sde-paths", c.sde_paths)->capture_default_str();
  sub->add_option("--cache", c.cache_dir, "Parisi cache directory (env CSPAMP_CACHE_DIR)");
  sub->add_option("--out-dir", c.out_dir, "output directory")->capture_default_str();
  sub->add_option("--tag", c.tag, "output file prefix")->capture_default_str();
}

void write_json(const std::string& path, const nlohmann::json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> out;
  std::stringstream s(list);
  std::string item;
  while (std::getline(s, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ExitError(kExitBadConfig, "bad sweep value: " + item);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Message passing for sparse random constraint satisfaction problems"};
  app.require_subcommand(1);
  unsigned threads = 0;
  std::string config_path;
  app.add_option("--threads", threads, "worker threads (env CSPAMP_THREADS; 0 = all cores)");
  app.add_option("--config", config_path, "key = value file; command-line flags take precedence");
  app.set_version_flag("--version", std::string(version()));

  // predicate
  auto* c_pred = app.add_subcommand("predicate", "show the Fourier expansion of a predicate");
  std::string pred_name = "maxcut2", pred_out;
  c_pred->add_option("--predicate", pred_name, "built-in name or truth-table file")->capture_default_str();
  c_pred->add_option("--out", pred_out, "write the predicate in file format");

  // gen
  auto* c_gen = app.add_subcommand("gen", "generate an index-regular instance");
  std::uint32_t gen_n = 1000;
  int gen_d = 4, gen_r = 2, gen_radius = -1;
  double gen_alpha = 0.0;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  c_gen->add_option("--n", gen_n)->capture_default_str();
  c_gen->add_option("--d", gen_d)->capture_default_str();
  c_gen->add_option("--r", gen_r)->capture_default_str();
  c_gen->add_option("--seed", gen_seed)->capture_default_str();
  c_gen->add_option("--alpha", gen_alpha, "sample i.i.d. clauses at this density and regularize instead");
  c_gen->add_option("--radius", gen_radius, "report the treelike fraction at this radius");
  c_gen->add_option("--out", gen_out)->required();

  // parisi
  auto* c_par = app.add_subcommand("parisi", "minimize the Parisi functional and simulate the SDE");
  std::string par_pred = "maxcut2", par_cache, par_out;
  int par_pieces = 3;
  double par_delta = 0.05, par_eta = 0.05;
  std::size_t par_paths = 100000;
  std::uint64_t par_seed = 4;
  c_par->add_option("--predicate", par_pred)->capture_default_str();
  c_par->add_option("--pieces", par_pieces)->capture_default_str();
  c_par->add_option("--delta", par_delta)->capture_default_str();
  c_par->add_option("--eta", par_eta)->capture_default_str();
  c_par->add_option("--paths", par_paths)->capture_default_str();
  c_par->add_option("--seed", par_seed)->capture_default_str();
  c_par->add_option("--cache", par_cache, "cache directory (env CSPAMP_CACHE_DIR)");
  c_par->add_option("--out", par_out, "summary JSON (default stdout)");

  // run
  auto* c_run = app.add_subcommand("run", "run the message-passing algorithm on an instance file");
  std::string run_inst, run_pred = "maxcut2", run_cache, run_out, run_hist;
  double run_delta = 0.05, run_eta = 0.05, run_clamp = 0.0;
  int run_pieces = 3;
  std::uint64_t run_seed = 2, run_rseed = 3, run_sde_seed = 4;
  std::size_t run_paths = 100000;
  c_run->add_option("--instance", run_inst)->required();
  c_run->add_option("--predicate", run_pred)->capture_default_str();
  c_run->add_option("--parisi-cache", run_cache, "cache directory (env CSPAMP_CACHE_DIR)");
  c_run->add_option("--pieces", run_pieces)->capture_default_str();
  c_run->add_option("--delta", run_delta)->capture_default_str();
  c_run->add_option("--eta", run_eta)->capture_default_str();
  c_run->add_option("--seed", run_seed)->capture_default_str();
  c_run->add_option("--rounding-seed", run_rseed)->capture_default_str();
  c_run->add_option("--sde-seed", run_sde_seed)->capture_default_str();
  c_run->add_option("--sde-paths", run_paths)->capture_default_str();
  c_run->add_option("--clamp", run_clamp, "nonlinearity clamp K (0: automatic)")->capture_default_str();
  c_run->add_option("--out", run_out, "result JSON (default stdout)");
  c_run->add_option("--histories", run_hist, "record message histories to this file");

  // diag
  auto* c_diag = app.add_subcommand("diag", "moment report from a recorded run");
  std::string diag_result, diag_hist, diag_out;
  c_diag->add_option("--result", diag_result)->required();
  c_diag->add_option("--histories", diag_hist)->required();
  c_diag->add_option("--out", diag_out, "report JSON (default stdout)");

  // sweep
  auto* c_sweep = app.add_subcommand("sweep", "one pipeline per value of an axis");
  ExperimentConfig sweep_cfg;
  std::string sweep_axis = "d", sweep_values, sweep_out;
  add_experiment_options(c_sweep, sweep_cfg);
  c_sweep->add_option("--axis", sweep_axis, "d, delta or n")->capture_default_str();
  c_sweep->add_option("--values", sweep_values, "comma-separated list")->required();
  c_sweep->add_option("--csv", sweep_out, "CSV output (default stdout)");

  // pipeline
  auto* c_pipe = app.add_subcommand("pipeline", "predicate -> Parisi -> instance -> run -> diagnostics");
  ExperimentConfig pipe_cfg;
  bool dry_run = false;
  add_experiment_options(c_pipe, pipe_cfg);
  c_pipe->add_flag("--dry-run", dry_run, "validate and print the plan only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitBadConfig;
  }

  try {
    if (threads == 0) threads = static_cast<unsigned>(std::stoul(env_or("CSPAMP_THREADS", "0")));
    set_thread_count(threads);
    const std::string env_cache = env_or("CSPAMP_CACHE_DIR", "");
    for (auto* sub : app.get_subcommands()) {
      if (!config_path.empty()) apply_config(sub, config_path);
    }

    if (c_pred->parsed()) {
      const Predicate p = load_predicate(pred_name);
      const auto xi = mixture(p);
      const auto flags = predicate_flags(p);
      nlohmann::json j;
      j["arity"] = p.arity();
      j["mean"] = p.mean();
      nlohmann::json terms = nlohmann::json::array();
      for (const auto& t : p.terms()) {
        std::vector<int> set;
        for (int c = 0; c < p.arity(); ++c) {
          if (t.subset >> c & 1) set.push_back(c + 1);
        }
        terms.push_back({{"subset", set}, {"coefficient", t.coefficient}});
      }
      j["fourier"] = terms;
      j["xi_weights"] = std::vector<double>(xi.weights().begin(), xi.weights().end());
      j["is_even"] = flags.is_even;
      j["has_linear"] = flags.has_linear;
      std::cout << j.dump(2) << '\n';
      if (!pred_out.empty()) {
        std::ofstream out(pred_out);
        write_predicate(out, p);
      }
      return kExitOk;
    }

    if (c_gen->parsed()) {
      nlohmann::json j;
      CspInstance inst;
      if (gen_alpha > 0.0) {
        const auto raw = sample_csp(gen_n, gen_alpha, gen_r, gen_seed);
        auto [reg, st] = index_regularize(raw, gen_radius, gen_seed + 1);
        inst = std::move(reg);
        j["removed_clauses"] = st.removed_clauses;
        j["added_clauses"] = st.added_clauses;
        j["alpha_prime"] = st.alpha_prime;
        if (gen_radius >= 0) {
          j["treelike_fraction_before"] = st.treelike_fraction_before;
          j["treelike_fraction_after"] = st.treelike_fraction_after;
        }
      } else {
        if (gen_r < 2 || gen_d % gen_r != 0) throw ExitError(kExitBadConfig, "d must be a multiple of r >= 2");
        inst = sample_index_regular(gen_n, gen_d, gen_r, gen_seed);
        if (gen_radius >= 0) j["treelike_fraction"] = treelike_fraction(inst, gen_radius);
      }
      std::ofstream out(gen_out);
      if (!out) throw std::runtime_error("cannot write " + gen_out);
      write_instance(out, inst);
      j["n"] = inst.num_variables();
      j["m"] = inst.num_clauses();
      j["d"] = inst.degree().value_or(0);
      j["repeated_variable_clauses"] = inst.repeated_variable_clauses();
      std::cout << j.dump(2) << '\n';
      return kExitOk;
    }

    if (c_par->parsed()) {
      const Predicate p = load_predicate(par_pred);
      if (predicate_flags(p).has_linear) throw ExitError(kExitPredicateRejected, "predicate has a linear part");
      const auto xi = mixture(p);
      if (xi.is_zero()) throw ExitError(kExitPredicateRejected, "predicate has xi = 0");
      const std::string cache = par_cache.empty() ? env_cache : par_cache;
      bool cached = false;
      const auto sol = obtain_parisi(xi, par_pieces, par_eta, par_delta, cache, &cached);
      const auto st = simulate_sde(sol, par_delta, par_paths, par_seed);
      const auto consts = nonlinearity_constants(sol, st, par_delta, p.arity());
      nlohmann::json j;
      j["version"] = version();
      j["alg_estimate"] = sol.functional_value;
      j["converged"] = sol.converged;
      j["from_cache"] = cached;
      j["mu_breakpoints"] = sol.mu.breakpoints();
      j["mu_values"] = sol.mu.values();
      j["alg_energy_estimate"] = alg_energy_estimate(sol, st, par_eta);
      j["normalization_drift"] = normalization_drift(sol, st, par_eta);
      j["nonlinearity_constants"] = consts;
      j["mean_phixx_sq"] = st.mean_phixx_sq;
      j["martingale_sq"] = st.martingale_sq;
      j["final_abs_q99"] = st.final_abs_q99;
      write_json(par_out, j);
      return sol.converged ? kExitOk : kExitParisiNotConverged;
    }

    if (c_run->parsed()) {
      const Predicate p = load_predicate(run_pred);
      if (predicate_flags(p).has_linear) throw ExitError(kExitPredicateRejected, "predicate has a linear part");
      const auto xi = mixture(p);
      if (xi.is_zero()) throw ExitError(kExitPredicateRejected, "predicate has xi = 0");
      std::ifstream in(run_inst);
      if (!in) throw ExitError(kExitBadConfig, "cannot read instance " + run_inst);
      const CspInstance inst = read_instance(in);
      const std::string cache = run_cache.empty() ? env_cache : run_cache;
      const auto sol = obtain_parisi(xi, run_pieces, run_eta, run_delta, cache);
      if (!sol.converged) throw ExitError(kExitParisiNotConverged, "Parisi minimization did not converge");
      const auto st = simulate_sde(sol, run_delta, run_paths, run_sde_seed);
      const auto consts = nonlinearity_constants(sol, st, run_delta, p.arity());
      RunConfig rc;
      rc.delta = run_delta;
      rc.seed = run_seed;
      rc.rounding_seed = run_rseed;
      rc.clamp = run_clamp;
      rc.record_history = !run_hist.empty();
      RunResult res;
      try {
        res = run(inst, p, sol, consts, rc);
      } catch (const NumericalError& e) {
        throw ExitError(kExitEngineNaN, e.what());
      }
      nlohmann::json config = {{"instance", run_inst}, {"predicate", run_pred},   {"pieces", run_pieces},
                               {"delta", run_delta},   {"eta", run_eta},         {"seed", run_seed},
                               {"rounding_seed", run_rseed}, {"sde_seed", run_sde_seed}, {"sde_paths", run_paths},
                               {"clamp", run_clamp}};
      write_json(run_out, result_json(res, config, sol.functional_value));
      if (!run_hist.empty()) write_history(run_hist, res.history);
      return kExitOk;
    }

    if (c_diag->parsed()) {
      std::ifstream in(diag_result);
      if (!in) throw ExitError(kExitBadConfig, "cannot read " + diag_result);
      const auto result = nlohmann::json::parse(in);
      const Predicate p = load_predicate(result.at("config").at("predicate").get<std::string>());
      const auto hist = read_history(diag_hist);
      const auto rep = moment_report(hist, mixture(p), result.at("delta").get<double>(), p.arity());
      auto j = moment_report_json(rep);
      j["version"] = version();
      j["result"] = diag_result;
      write_json(diag_out, j);
      return rep.pass ? kExitOk : kExitFailure;
    }

    if (c_sweep->parsed()) {
      if (sweep_cfg.cache_dir.empty()) sweep_cfg.cache_dir = env_cache;
      const auto values = parse_values(sweep_values);
      const auto out = run_sweep(sweep_cfg, parse_axis(sweep_axis), values, std::cerr);
      if (sweep_out.empty()) {
        std::cout << out.csv;
      } else {
        std::ofstream f(sweep_out);
        f << out.csv;
      }
      return out.failures ? kExitFailure : kExitOk;
    }

    if (c_pipe->parsed()) {
      if (pipe_cfg.cache_dir.empty()) pipe_cfg.cache_dir = env_cache;
      validate(pipe_cfg);
      if (dry_run) {
        std::cout << describe_plan(pipe_cfg);
        return kExitOk;
      }
      const auto out = run_pipeline(pipe_cfg, std::cerr);
      std::cout << csv_header() << '\n' << out.csv_row << '\n';
      return kExitOk;
    }
  } catch (const ExitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}
