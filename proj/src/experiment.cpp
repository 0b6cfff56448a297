#include "cspamp/experiment.h"

#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "cspamp/analysis.h"
#include "cspamp/instance.h"
#include "cspamp/parallel.h"
#include "cspamp/rng.h"

#ifndef CSPAMP_GIT_HASH
#define CSPAMP_GIT_HASH "unknown"
#endif

namespace cspamp {

namespace {
std::atomic<unsigned> g_threads{0};
}

void set_thread_count(unsigned n) { g_threads = n; }

unsigned thread_count() {
  const unsigned n = g_threads;
  if (n) return n;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

const char* version() { return CSPAMP_GIT_HASH; }

void validate(ExperimentConfig& cfg) {
  auto bad = [](const std::string& msg) { throw ExitError(kExitBadConfig, msg); };
  Predicate p = [&] {
    try {
      return load_predicate(cfg.predicate);
    } catch (const std::exception& e) {
      throw ExitError(kExitBadConfig, e.what());
    }
  }();
  if (cfg.r == 0) cfg.r = p.arity();
  if (cfg.r != p.arity()) bad("r does not match the predicate arity");
  if (cfg.n == 0) bad("n must be positive");
  if (cfg.d < 1 || cfg.d % cfg.r != 0) bad("d must be a positive multiple of r");
  if (static_cast<std::uint64_t>(cfg.n) * static_cast<std::uint64_t>(cfg.d) > (std::uint64_t{1} << 31)) {
    bad("n * d too large");
  }
  if (!(cfg.delta > 0.0 && cfg.delta <= 0.5)) bad("delta must be in (0, 0.5]");
  if (cfg.pieces < 0 || cfg.pieces > 200) bad("pieces must be in [0, 200]");
  if (!(cfg.eta > 0.0 && cfg.eta < 1.0)) bad("eta must be in (0, 1)");
  if (cfg.sde_paths < 1000) bad("sde_paths must be at least 1000");
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"predicate", c.predicate},         {"n", c.n},
          {"d", c.d},                         {"r", c.r},
          {"delta", c.delta},                 {"pieces", c.pieces},
          {"eta", c.eta},                     {"instance_seed", c.instance_seed},
          {"engine_seed", c.engine_seed},     {"rounding_seed", c.rounding_seed},
          {"sde_seed", c.sde_seed},           {"sde_paths", c.sde_paths},
          {"cache_dir", c.cache_dir},         {"out_dir", c.out_dir},
          {"tag", c.tag},                     {"threads", c.threads}};
}

MinimizeOptions parisi_options(const MixturePolynomial& xi, int pieces, double eta, double delta) {
  MinimizeOptions o;
  o.pieces = pieces;
  o.eta = eta;
  o.grid = GridConfig::defaults(xi, delta);
  o.use_gradient = pieces > 6;
  return o;
}

ParisiSolution obtain_parisi(const MixturePolynomial& xi, int pieces, double eta, double delta,
                             const std::string& cache_dir, bool* from_cache) {
  const auto opts = parisi_options(xi, pieces, eta, delta);
  if (!cache_dir.empty()) return cached_solution(cache_dir, CacheKey{xi, opts}, from_cache);
  if (from_cache) *from_cache = false;
  const auto res = minimize_alg(xi, opts);
  auto sol = make_solution(xi, res.mu, opts.grid, eta);
  sol.converged = res.converged;
  return sol;
}

nlohmann::json result_json(const RunResult& res, const nlohmann::json& config, double alg_estimate) {
  nlohmann::json j;
  j["version"] = version();
  j["config"] = config;
  j["n"] = res.n;
  j["d"] = res.d;
  j["r"] = res.r;
  j["delta"] = res.delta;
  j["iterations"] = res.iterations;
  j["clamp"] = res.clamp;
  j["E_f"] = res.mean_f;
  j["alg_estimate"] = alg_estimate;
  j["satisfying_fraction"] = res.satisfying_fraction;
  j["predicted_fraction"] = res.mean_f + alg_estimate / std::sqrt(static_cast<double>(res.d) / res.r);
  const auto& s = res.stats;
  nlohmann::json diag;
  std::vector<double> pv, nv, p4, n4;
  for (const auto& m : s.pair_moments) {
    pv.push_back(m[1]);
    p4.push_back(m[3]);
  }
  for (const auto& m : s.node_moments) {
    nv.push_back(m[1]);
    n4.push_back(m[3]);
  }
  diag["pair_u_var"] = pv;
  diag["pair_u_m4"] = p4;
  diag["node_u_var"] = nv;
  diag["node_u_m4"] = n4;
  diag["pair_z_sq"] = s.pair_z_sq;
  diag["node_z_sq"] = s.node_z_sq;
  diag["energy_terms"] = s.energy_terms;
  diag["u_gap_sq"] = s.u_gap_sq;
  diag["a_gap_sq"] = s.a_gap_sq;
  diag["node_a_mean"] = s.node_a_mean;
  diag["node_a_sq"] = s.node_a_sq;
  diag["pair_a_sq"] = s.pair_a_sq;
  diag["clamped"] = s.clamped;
  j["diagnostics"] = diag;
  j["wall_clock_seconds"] = res.seconds;
  return j;
}

namespace {

constexpr char kHistoryMagic[8] = {'C', 'S', 'P', 'A', 'M', 'P', 'H', '1'};

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void put_vec(std::ofstream& out, const std::vector<T>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}
template <typename T>
T get(std::ifstream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("history file truncated");
  return v;
}
template <typename T>
std::vector<T> get_vec(std::ifstream& in, std::size_t n) {
  std::vector<T> v(n);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)))) {
    throw std::runtime_error("history file truncated");
  }
  return v;
}

}  // namespace

void write_history(const std::filesystem::path& path, const RunHistory& h) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kHistoryMagic, sizeof(kHistoryMagic));
  put<std::uint64_t>(out, h.pair_u.size());
  put<std::uint64_t>(out, h.pair_slots.size());
  put<std::uint64_t>(out, h.node_z0.size());
  put_vec(out, h.pair_slots);
  put_vec(out, h.node_z0);
  for (std::size_t l = 0; l < h.pair_u.size(); ++l) {
    put_vec(out, h.pair_u[l]);
    put_vec(out, h.node_u[l]);
    put_vec(out, h.node_a[l]);
  }
}

RunHistory read_history(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kHistoryMagic, 8) != 0) throw std::runtime_error("not a history file");
  RunHistory h;
  const auto steps = get<std::uint64_t>(in);
  const auto pairs = get<std::uint64_t>(in);
  const auto nodes = get<std::uint64_t>(in);
  if (steps > 100000 || pairs > (1u << 30) || nodes > (1u << 30)) throw std::runtime_error("history header corrupt");
  h.pair_slots = get_vec<std::uint32_t>(in, pairs);
  h.node_z0 = get_vec<double>(in, nodes);
  for (std::size_t l = 0; l < steps; ++l) {
    h.pair_u.push_back(get_vec<double>(in, pairs));
    h.node_u.push_back(get_vec<double>(in, nodes));
    h.node_a.push_back(get_vec<double>(in, nodes));
  }
  return h;
}

nlohmann::json moment_report_json(const MomentReport& rep) {
  auto rows = [](const std::vector<MomentRow>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : v) {
      a.push_back({{"ell", r.ell},
                   {"nu", r.nu},
                   {"samples", r.samples},
                   {"moments", r.moments},
                   {"stderrs", r.stderrs},
                   {"predicted", r.predicted},
                   {"variance_ok", r.variance_ok},
                   {"odd_ok", r.odd_ok},
                   {"fourth_ok", r.fourth_ok},
                   {"sixth_ok", r.sixth_ok},
                   {"pass", r.pass}});
    }
    return a;
  };
  const MomentTolerances tol;
  return {{"pairs", rows(rep.pairs)},
          {"nodes", rows(rep.nodes)},
          {"correlation_12", rep.correlation_12},
          {"correlation_stderr", rep.correlation_stderr},
          {"independence_ok", rep.independence_ok},
          {"tolerances",
           {{"variance_rel", tol.variance_rel},
            {"odd_stderr", tol.odd_stderr},
            {"fourth_rel", tol.fourth_rel},
            {"sixth_rel", tol.sixth_rel},
            {"min_samples", tol.min_samples}}},
          {"warnings", rep.warnings},
          {"pass", rep.pass}};
}

std::string csv_header() { return "predicate,n,d,delta,fraction,alg_estimate,E_f"; }

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

// Aggregate per-step comparison against the Gaussian predictions.
nlohmann::json aggregate_diagnostics(const RunResult& res, const MixturePolynomial& xi) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t l = 0; l < res.stats.pair_moments.size(); ++l) {
    const int ell = static_cast<int>(l) + 1;
    const double v = nu(xi, res.delta, ell, res.r);
    const auto& m = res.stats.pair_moments[l];
    rows.push_back({{"ell", ell},
                    {"nu", v},
                    {"pair_var", m[1]},
                    {"pair_var_rel_err", std::abs(m[1] - v) / v},
                    {"pair_m4", m[3]},
                    {"pair_m4_rel_err", std::abs(m[3] - 3 * v * v) / (3 * v * v)},
                    {"pair_z_sq", res.stats.pair_z_sq[l + 1]},
                    {"predicted_z_sq", (ell + 1) * res.delta}});
  }
  return rows;
}

}  // namespace

std::string describe_plan(const ExperimentConfig& cfg) {
  std::ostringstream s;
  s << "predicate " << cfg.predicate << " (r=" << cfg.r << ")\n"
    << "parisi: pieces=" << cfg.pieces << " eta=" << cfg.eta << " cache=" << (cfg.cache_dir.empty() ? "<none>" : cfg.cache_dir)
    << "\n"
    << "sde: paths=" << cfg.sde_paths << " seed=" << cfg.sde_seed << "\n"
    << "instance: index-regular n=" << cfg.n << " d=" << cfg.d << " seed=" << cfg.instance_seed << "\n"
    << "engine: delta=" << cfg.delta << " L=" << iteration_count(cfg.delta) << " seed=" << cfg.engine_seed
    << " rounding_seed=" << cfg.rounding_seed << "\n"
    << "outputs: " << (std::filesystem::path(cfg.out_dir) / (cfg.tag + ".result.json")).string() << ", "
    << (std::filesystem::path(cfg.out_dir) / (cfg.tag + ".diag.json")).string() << "\n";
  return s.str();
}

PipelineOutcome run_pipeline(const ExperimentConfig& cfg_in, std::ostream& log) {
  ExperimentConfig cfg = cfg_in;
  validate(cfg);
  if (cfg.threads) set_thread_count(cfg.threads);
  const Predicate p = load_predicate(cfg.predicate);
  const auto flags = predicate_flags(p);
  if (flags.has_linear) throw ExitError(kExitPredicateRejected, "predicate has a linear Fourier part");
  const MixturePolynomial xi = mixture(p);
  if (xi.is_zero()) throw ExitError(kExitPredicateRejected, "predicate has no noise scale (xi = 0)");

  bool cached = false;
  const ParisiSolution sol = obtain_parisi(xi, cfg.pieces, cfg.eta, cfg.delta, cfg.cache_dir, &cached);
  log << "parisi: value " << fmt(sol.functional_value) << (cached ? " (cached)" : "") << '\n';
  if (!sol.converged) throw ExitError(kExitParisiNotConverged, "Parisi minimization did not converge");

  const SdeStats stats = simulate_sde(sol, cfg.delta, cfg.sde_paths, cfg.sde_seed);
  const auto consts = nonlinearity_constants(sol, stats, cfg.delta, cfg.r);
  const CspInstance inst = sample_index_regular(cfg.n, cfg.d, cfg.r, cfg.instance_seed);

  RunConfig rc;
  rc.delta = cfg.delta;
  rc.seed = cfg.engine_seed;
  rc.rounding_seed = cfg.rounding_seed;
  RunResult res;
  try {
    res = run(inst, p, sol, consts, rc);
  } catch (const NumericalError& e) {
    throw ExitError(kExitEngineNaN, e.what());
  }

  const auto config = to_json(cfg);
  PipelineOutcome out;
  out.fraction = res.satisfying_fraction;
  out.alg_estimate = sol.functional_value;
  out.mean_f = p.mean();
  std::ostringstream row;
  row << cfg.predicate << ',' << cfg.n << ',' << cfg.d << ',' << fmt(cfg.delta) << ',' << fmt(out.fraction) << ','
      << fmt(out.alg_estimate) << ',' << fmt(out.mean_f);
  out.csv_row = row.str();

  std::filesystem::create_directories(cfg.out_dir);
  out.result_path = std::filesystem::path(cfg.out_dir) / (cfg.tag + ".result.json");
  out.diag_path = std::filesystem::path(cfg.out_dir) / (cfg.tag + ".diag.json");
  {
    std::ofstream f(out.result_path);
    f << result_json(res, config, out.alg_estimate).dump(2) << '\n';
  }
  {
    nlohmann::json d;
    d["version"] = version();
    d["config"] = config;
    d["steps"] = aggregate_diagnostics(res, xi);
    d["alg_energy_estimate"] = alg_energy_estimate(sol, stats, cfg.eta);
    d["normalization_drift"] = normalization_drift(sol, stats, cfg.eta);
    std::ofstream f(out.diag_path);
    f << d.dump(2) << '\n';
  }
  {
    std::ofstream f(std::filesystem::path(cfg.out_dir) / (cfg.tag + ".summary.csv"));
    f << csv_header() << '\n' << out.csv_row << '\n';
  }
  log << "fraction " << fmt(out.fraction) << " (E[f] + ALG/sqrt(alpha) = "
      << fmt(out.mean_f + out.alg_estimate / std::sqrt(static_cast<double>(cfg.d) / cfg.r)) << ")\n";
  return out;
}

SweepAxis parse_axis(const std::string& name) {
  if (name == "d") return SweepAxis::kDegree;
  if (name == "delta") return SweepAxis::kDelta;
  if (name == "n") return SweepAxis::kSize;
  throw ExitError(kExitBadConfig, "sweep axis must be one of d, delta, n");
}

SweepOutcome run_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<double>& values,
                       std::ostream& log) {
  if (values.empty()) throw ExitError(kExitBadConfig, "sweep needs at least one value");
  SweepOutcome out;
  std::ostringstream csv;
  csv << csv_header() << ",excess,status\n";
  for (double v : values) {
    ExperimentConfig cfg = base;
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    const std::uint64_t salt = rng::hash(static_cast<std::uint64_t>(axis), bits, 0);
    cfg.instance_seed = rng::mix64(base.instance_seed ^ salt);
    cfg.engine_seed = rng::mix64(base.engine_seed ^ salt);
    cfg.rounding_seed = rng::mix64(base.rounding_seed ^ salt);
    switch (axis) {
      case SweepAxis::kDegree:
        cfg.d = static_cast<int>(v);
        break;
      case SweepAxis::kDelta:
        cfg.delta = v;
        break;
      case SweepAxis::kSize:
        cfg.n = static_cast<std::uint32_t>(v);
        break;
    }
    std::ostringstream tag;
    tag << base.tag << '_' << (axis == SweepAxis::kDegree ? "d" : axis == SweepAxis::kDelta ? "delta" : "n") << v;
    cfg.tag = tag.str();
    log << "sweep row " << cfg.tag << '\n';
    try {
      validate(cfg);
      const auto res = run_pipeline(cfg, log);
      const double excess = (res.fraction - res.mean_f) * std::sqrt(static_cast<double>(cfg.d) / cfg.r);
      csv << res.csv_row << ',' << fmt(excess) << ",ok\n";
    } catch (const std::exception& e) {
      ++out.failures;
      log << "row failed: " << e.what() << '\n';
      csv << cfg.predicate << ',' << cfg.n << ',' << cfg.d << ',' << fmt(cfg.delta) << ",nan,nan,nan,nan,error\n";
    }
  }
  out.csv = csv.str();
  return out;
}

}  // namespace cspamp
