#include "cspamp/engine.h"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <sstream>

#include "cspamp/analysis.h"
#include "cspamp/parallel.h"
#include "cspamp/rng.h"

namespace cspamp {

namespace {

constexpr std::size_t kClauseChunk = 8192;
constexpr std::size_t kVariableChunk = 256;

// Fourier terms of D_c f, per coordinate c: coefficient and the remaining mask.
struct DerivativeTable {
  int r = 0;
  std::vector<std::vector<FourierTerm>> by_coord;

  explicit DerivativeTable(const Predicate& p) : r(p.arity()), by_coord(p.arity()) {
    for (const auto& t : p.terms()) {
      for (int c = 0; c < r; ++c) {
        if (t.subset >> c & 1) by_coord[c].push_back({t.subset & ~(Subset{1} << c), t.coefficient});
      }
    }
  }

  double eval(int c, const double* y) const {
    double total = 0.0;
    for (const auto& t : by_coord[c]) {
      double prod = t.coefficient;
      for (Subset rest = t.subset; rest; rest &= rest - 1) prod *= y[std::countr_zero(rest)];
      total += prod;
    }
    return total;
  }
};

struct ChunkStats {
  std::array<double, 6> pair_pow{}, node_pow{};
  double pair_z_sq = 0, node_z_sq = 0, energy = 0, u_gap = 0, a_gap = 0, node_a = 0, node_a_sq = 0, pair_a_sq = 0;
  std::size_t clamped = 0;
};

void add_powers(std::array<double, 6>& acc, double u) {
  double v = u;
  for (int k = 0; k < 6; ++k) {
    acc[k] += v;
    v *= u;
  }
}

int uniform_degree(const CspInstance& inst) {
  const std::uint32_t n = inst.num_variables();
  if (n == 0) throw std::invalid_argument("instance has no variables");
  const auto d = inst.var_degree(0);
  for (std::uint32_t v = 1; v < n; ++v) {
    if (inst.var_degree(v) != d) throw std::invalid_argument("degree mismatch: variables have unequal degrees");
  }
  if (inst.degree() && static_cast<std::size_t>(*inst.degree()) != d) {
    throw std::invalid_argument("degree mismatch: declared degree differs from the adjacency");
  }
  if (d == 0) throw std::invalid_argument("variables occur in no clause");
  return static_cast<int>(d);
}

std::string fingerprint(const CspInstance& inst, const Predicate& p, const ParisiSolution& sol,
                        std::span<const double> consts, const RunConfig& cfg, int d, double clamp) {
  std::ostringstream s;
  s.precision(17);
  s << "n=" << inst.num_variables() << ";m=" << inst.num_clauses() << ";r=" << inst.arity() << ";d=" << d
    << ";delta=" << cfg.delta << ";K=" << clamp << ";stop=" << cfg.stop_after << ";f=";
  for (auto b : p.lexicographic_table()) s << static_cast<int>(b);
  s << ";mu=";
  for (std::size_t j = 0; j < sol.mu.pieces(); ++j) s << sol.mu.breakpoints()[j] << ':' << sol.mu.values()[j] << ',';
  s << ";c=";
  for (double c : consts) s << c << ',';
  return s.str();
}

}  // namespace

double truncate_spin(double z) { return std::clamp(z, -1.0, 1.0); }

Rounding round(std::span<const double> z, std::uint64_t seed) {
  Rounding out;
  out.truncated.resize(z.size());
  out.assignment.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double t = truncate_spin(z[i]);
    out.truncated[i] = t;
    out.assignment[i] = rng::uniform(seed, rng::kRounding, i) < 0.5 * (1.0 + t) ? 1 : -1;
  }
  return out;
}

RunResult run(const CspInstance& inst, const Predicate& p, const ParisiSolution& sol, std::span<const double> consts,
              const RunConfig& cfg, const Observer& observer) {
  const auto start = std::chrono::steady_clock::now();
  if (!(cfg.delta > 0.0 && cfg.delta <= 0.5)) throw std::invalid_argument("delta must be in (0, 0.5]");
  if (p.arity() != inst.arity()) throw std::invalid_argument("predicate arity differs from the instance arity");
  const MixturePolynomial xi = mixture(p);
  if (xi.is_zero()) throw std::invalid_argument("predicate has no noise scale (xi is identically zero)");
  if (predicate_flags(p).has_linear) throw std::invalid_argument("predicate has a linear Fourier part");
  if (!(sol.xi == xi)) throw std::invalid_argument("Parisi solution was computed for a different mixture");
  const PdeGrid& g = sol.grid;
  if (g.phi_xx.empty() || g.phi_x.empty() || g.nt == 0) throw std::invalid_argument("Parisi table has no grid");
  const int d = uniform_degree(inst);
  const int full = iteration_count(cfg.delta);
  const int L = cfg.stop_after >= 0 ? std::min(cfg.stop_after, full) : full;
  if (consts.size() < static_cast<std::size_t>(L)) throw std::invalid_argument("too few nonlinearity constants");
  const int r = inst.arity();
  const std::uint32_t n = inst.num_variables();
  const std::size_t m = inst.num_clauses();
  const std::size_t slots = inst.num_slots();
  const auto vars = inst.vars();
  const auto signs = inst.signs();

  // Last step whose time lies inside [0, 1 - eta]; later steps reuse its A.
  int last_live = 0;
  for (int l = 0; l < full; ++l) {
    if (cfg.delta * l <= 1.0 - sol.eta + 1e-12) last_live = l;
  }

  std::vector<double> phix, phixx;
  double clamp = cfg.clamp;
  if (clamp <= 0.0) {
    for (int l = 0; l <= std::min(last_live, L - 1); ++l) {
      g.slice(cfg.delta * l, phix, phixx);
      double top = 0.0;
      for (double v : phixx) top = std::max(top, std::abs(v));
      clamp = std::max(clamp, 10.0 * top * consts[l]);
    }
    if (clamp <= 0.0) clamp = 1.0;
  }

  RunResult res;
  res.n = n;
  res.d = d;
  res.r = r;
  res.iterations = L;
  res.delta = cfg.delta;
  res.clamp = clamp;
  res.mean_f = p.mean();
  res.seed = cfg.seed;
  res.rounding_seed = cfg.rounding_seed;
  res.fingerprint = fingerprint(inst, p, sol, consts.first(L), cfg, d, clamp);

  std::vector<double> z_node(n), w_node(n, 0.0), x_node(n, 0.0), a_node(n, 0.0);
  std::vector<double> z_pair(slots), w_pair(slots, 0.0), x_pair(slots, 0.0), a_pair(slots, 0.0), grad(slots);
  const double sd0 = std::sqrt(cfg.delta);
  for (std::uint32_t v = 0; v < n; ++v) z_node[v] = sd0 * rng::normal(cfg.seed, rng::kInitialSpin, v);
  for (std::size_t s = 0; s < slots; ++s) z_pair[s] = z_node[vars[s]];

  auto& st = res.stats;
  auto mean_sq = [](const std::vector<double>& a) {
    double t = 0.0;
    for (double v : a) t += v * v;
    return a.empty() ? 0.0 : t / static_cast<double>(a.size());
  };
  st.pair_z_sq.push_back(mean_sq(z_pair));
  st.node_z_sq.push_back(mean_sq(z_node));

  auto& hist = res.history;
  std::size_t stride = 1;
  if (cfg.record_history) {
    stride = std::max<std::size_t>(1, slots / std::max<std::size_t>(1, cfg.history_pairs));
    for (std::size_t s = 0; s < slots && hist.pair_slots.size() < cfg.history_pairs; s += stride) {
      hist.pair_slots.push_back(static_cast<std::uint32_t>(s));
    }
    hist.node_z0 = z_node;
  }

  const DerivativeTable table(p);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double inv_sqrt_d1 = d > 1 ? 1.0 / std::sqrt(static_cast<double>(d - 1)) : 0.0;
  const double sqrt_r = std::sqrt(static_cast<double>(r));
  const std::size_t var_chunks = chunk_count(n, kVariableChunk);
  std::vector<ChunkStats> partial(var_chunks);

  for (int l = 0; l < L; ++l) {
    const double t = cfg.delta * l;
    g.slice(t, phix, phixx);
    const double drift = xi.d2(t) * sol.mu(t) * cfg.delta;
    auto read = [&](const std::vector<double>& row, double x) { return interpolate_row(row, g.x_max, g.dx, x); };
    const bool live = l <= last_live;
    const double c_l = consts[l];

    for (auto& cs : partial) cs = ChunkStats{};

    // A^l from x^l, frozen after the cutoff.
    if (live) {
      parallel_chunks(n, kVariableChunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
        auto& cs = partial[c];
        auto nonlinearity = [&](double x) {
          const double a = read(phixx, x) * c_l;
          if (a > clamp || a < -clamp) {
            ++cs.clamped;
            return std::clamp(a, -clamp, clamp);
          }
          return a;
        };
        for (std::size_t v = begin; v < end; ++v) {
          a_node[v] = nonlinearity(x_node[v]);
          for (SlotId s : inst.slots_of(static_cast<std::uint32_t>(v))) a_pair[s] = nonlinearity(x_pair[s]);
        }
      });
    }

    if (observer) {
      IterationView view;
      view.ell = l;
      view.inst = &inst;
      view.z_pair = z_pair;
      view.x_pair = x_pair;
      view.a_pair = a_pair;
      view.z_node = z_node;
      view.x_node = x_node;
      view.a_node = a_node;
      observer(view);
    }

    // Clause phase: g_{i,a} = D_{i;a} f at the incoming messages.
    parallel_chunks(m, kClauseChunk, [&](std::size_t, std::size_t begin, std::size_t end) {
      double y[kMaxArity];
      for (std::size_t a = begin; a < end; ++a) {
        const std::size_t base = a * r;
        for (int c = 0; c < r; ++c) y[c] = signs[base + c] * z_pair[base + c];
        for (int c = 0; c < r; ++c) grad[base + c] = signs[base + c] * table.eval(c, y);
      }
    });

    if (cfg.record_history) {
      hist.node_u.emplace_back(n);
      hist.node_a.emplace_back(a_node);
      hist.pair_u.emplace_back(hist.pair_slots.size());
    }

    // Variable phase: new w, u, z, x for every variable and directed pair.
    parallel_chunks(n, kVariableChunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
      auto& cs = partial[c];
      for (std::size_t v = begin; v < end; ++v) {
        const auto my = inst.slots_of(static_cast<std::uint32_t>(v));
        double sum = 0.0;
        for (SlotId s : my) sum += grad[s];
        const double wn = sum * inv_sqrt_d;
        const double u = wn - w_node[v];
        const double av = a_node[v];
        z_node[v] += av * u;
        x_node[v] += drift * read(phix, x_node[v]) + sqrt_r * u;
        w_node[v] = wn;
        add_powers(cs.node_pow, u);
        cs.energy += av * u * u;
        cs.node_a += av;
        cs.node_a_sq += av * av;
        cs.node_z_sq += z_node[v] * z_node[v];
        if (cfg.record_history) hist.node_u[l][v] = u;
        for (SlotId s : my) {
          const double wp = (sum - grad[s]) * inv_sqrt_d1;
          const double up = wp - w_pair[s];
          const double as = a_pair[s];
          z_pair[s] += as * up;
          x_pair[s] += drift * read(phix, x_pair[s]) + sqrt_r * up;
          w_pair[s] = wp;
          add_powers(cs.pair_pow, up);
          cs.u_gap += (u - up) * (u - up);
          cs.a_gap += (av - as) * (av - as);
          cs.pair_a_sq += as * as;
          cs.pair_z_sq += z_pair[s] * z_pair[s];
          if (cfg.record_history && s % stride == 0 && s / stride < hist.pair_slots.size()) {
            hist.pair_u[l][s / stride] = up;
          }
        }
      }
    });

    ChunkStats tot;
    for (const auto& cs : partial) {
      for (int k = 0; k < 6; ++k) {
        tot.pair_pow[k] += cs.pair_pow[k];
        tot.node_pow[k] += cs.node_pow[k];
      }
      tot.pair_z_sq += cs.pair_z_sq;
      tot.node_z_sq += cs.node_z_sq;
      tot.energy += cs.energy;
      tot.u_gap += cs.u_gap;
      tot.a_gap += cs.a_gap;
      tot.node_a += cs.node_a;
      tot.node_a_sq += cs.node_a_sq;
      tot.pair_a_sq += cs.pair_a_sq;
      tot.clamped += cs.clamped;
    }
    const double inv_n = 1.0 / n, inv_s = 1.0 / static_cast<double>(slots);
    std::array<double, 6> pm, nm;
    for (int k = 0; k < 6; ++k) {
      pm[k] = tot.pair_pow[k] * inv_s;
      nm[k] = tot.node_pow[k] * inv_n;
    }
    st.pair_moments.push_back(pm);
    st.node_moments.push_back(nm);
    st.pair_z_sq.push_back(tot.pair_z_sq * inv_s);
    st.node_z_sq.push_back(tot.node_z_sq * inv_n);
    st.energy_terms.push_back(tot.energy * inv_n);
    st.u_gap_sq.push_back(tot.u_gap * inv_s);
    st.a_gap_sq.push_back(tot.a_gap * inv_s);
    st.node_a_mean.push_back(tot.node_a * inv_n);
    st.node_a_sq.push_back(tot.node_a_sq * inv_n);
    st.pair_a_sq.push_back(tot.pair_a_sq * inv_s);
    st.clamped.push_back(tot.clamped);
    if (!std::isfinite(pm[5]) || !std::isfinite(nm[5]) || !std::isfinite(st.node_z_sq.back()) ||
        !std::isfinite(st.pair_z_sq.back())) {
      throw NumericalError("non-finite message state at iteration " + std::to_string(l), l);
    }
  }

  res.z_final = z_node;
  auto rounded = round(res.z_final, cfg.rounding_seed);
  res.truncated = std::move(rounded.truncated);
  res.assignment = std::move(rounded.assignment);
  res.satisfying_fraction = m ? evaluate(inst, p, res.assignment) : 0.0;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

ValueDecomposition value_decomposition(const RunResult& result, const CspInstance& inst, const Predicate& p) {
  if (result.history.node_z0.empty()) throw std::invalid_argument("run was made without history");
  if (result.z_final.size() != inst.num_variables()) throw std::invalid_argument("result does not match instance");
  ValueDecomposition out;
  out.lhs = evaluate_multilinear(inst, p, result.z_final);
  double sum = 0.0;
  const auto& h = result.history;
  for (std::size_t l = 0; l < h.node_u.size(); ++l) {
    double acc = 0.0;
    for (std::size_t v = 0; v < h.node_u[l].size(); ++v) acc += h.node_a[l][v] * h.node_u[l][v] * h.node_u[l][v];
    sum += acc / static_cast<double>(h.node_u[l].size());
  }
  out.rhs = p.mean() + inst.arity() / std::sqrt(static_cast<double>(result.d)) * sum;
  out.gap = std::abs(out.lhs - out.rhs);
  return out;
}

}  // namespace cspamp
