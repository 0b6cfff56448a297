#include "cspamp/analysis.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>

#include "cspamp/engine.h"
#include "cspamp/instance.h"
#include "cspamp/parallel.h"

namespace cspamp {

int iteration_count(double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
  return static_cast<int>(std::floor(1.0 / delta + 1e-9));
}

double nu(const MixturePolynomial& xi, double delta, int ell, int r) {
  if (r < 1) throw std::invalid_argument("arity must be positive");
  const int L = iteration_count(delta);
  if (ell < 1 || ell > L) {
    throw std::out_of_range("nu: step " + std::to_string(ell) + " outside [1, " + std::to_string(L) + "]");
  }
  return (xi.d1(ell * delta) - xi.d1((ell - 1) * delta)) / r;
}

double gaussian_moment(int k, double variance) {
  if (k % 2 == 1) return 0.0;
  double df = 1.0;
  for (int j = k - 1; j > 1; j -= 2) df *= j;
  return df * std::pow(variance, k / 2);
}

MomentRow moment_row(std::span<const double> samples, double nu_value, int ell, const MomentTolerances& tol,
                     std::size_t effective) {
  MomentRow row;
  row.ell = ell;
  row.nu = nu_value;
  row.samples = samples.size();
  if (samples.empty()) return row;
  std::array<double, 12> raw{};
  for (double u : samples) {
    double v = u;
    for (int k = 0; k < 12; ++k) {
      raw[k] += v;
      v *= u;
    }
  }
  const double n = static_cast<double>(samples.size());
  for (auto& v : raw) v /= n;
  const double draws = effective > 0 ? static_cast<double>(std::min(effective, samples.size())) : n;
  for (int k = 0; k < 6; ++k) {
    row.moments[k] = raw[k];
    row.stderrs[k] = std::sqrt(std::max(0.0, raw[2 * k + 1] - raw[k] * raw[k]) / draws);
    row.predicted[k] = gaussian_moment(k + 1, nu_value);
  }
  row.variance_ok = std::abs(row.moments[1] - nu_value) <= tol.variance_rel * nu_value;
  row.odd_ok = true;
  for (int k : {0, 2, 4}) {
    if (std::abs(row.moments[k]) > tol.odd_stderr * row.stderrs[k]) row.odd_ok = false;
  }
  row.fourth_ok = std::abs(row.moments[3] - row.predicted[3]) <= tol.fourth_rel * row.predicted[3];
  row.sixth_ok = std::abs(row.moments[5] - row.predicted[5]) <= tol.sixth_rel * row.predicted[5];
  row.pass = samples.size() >= tol.min_samples && row.variance_ok && row.odd_ok && row.fourth_ok && row.sixth_ok;
  return row;
}

MomentReport moment_report(const RunHistory& history, const MixturePolynomial& xi, double delta, int r, int ell,
                           const MomentTolerances& tol) {
  MomentReport rep;
  if (history.pair_u.empty()) {
    rep.warnings.push_back("no recorded iterations");
    return rep;
  }
  const int steps = static_cast<int>(history.pair_u.size());
  if (ell > steps) throw std::out_of_range("moment_report: step beyond the recorded history");
  rep.pass = true;
  const std::size_t variables = history.node_u.empty() ? 0 : history.node_u[0].size();
  for (int l = 1; l <= steps; ++l) {
    if (ell > 0 && l != ell) continue;
    const double v = nu(xi, delta, l, r);
    rep.pairs.push_back(moment_row(history.pair_u[l - 1], v, l, tol, variables));
    if (l - 1 < static_cast<int>(history.node_u.size())) {
      rep.nodes.push_back(moment_row(history.node_u[l - 1], v, l, tol));
    }
    if (history.pair_u[l - 1].size() < tol.min_samples) {
      rep.warnings.push_back("step " + std::to_string(l) + ": only " + std::to_string(history.pair_u[l - 1].size()) +
                             " samples");
    }
    rep.pass = rep.pass && rep.pairs.back().pass;
  }
  if (steps >= 2 && (ell == 0 || ell <= 2)) {
    const auto& a = history.pair_u[0];
    const auto& b = history.pair_u[1];
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ma += a[i];
      mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
    rep.correlation_12 = saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
    const std::size_t draws = variables > 0 ? std::min(variables, n) : n;
    rep.correlation_stderr = draws > 1 ? 1.0 / std::sqrt(static_cast<double>(draws)) : 1.0;
    rep.independence_ok = std::abs(rep.correlation_12) <= tol.odd_stderr * rep.correlation_stderr;
    rep.pass = rep.pass && rep.independence_ok;
  }
  if (!rep.warnings.empty()) rep.pass = false;
  return rep;
}

namespace {

// Clause-local contribution for each slot: sum over S1, S2 containing the
// slot's coordinate of fhat_b(S1) fhat_b(S2) E[(prod_{S1\i}(y+Au) - prod y)(prod_{S2\i}(y+Au) - prod y)]
// with independent centred u of variance tau^2. The expectation is
// prod_{P xor Q} y * (prod_{P and Q} (y^2 + A^2 tau^2) - prod_{P and Q} y^2).
std::vector<double> clause_terms(const CspInstance& inst, const Predicate& p, std::span<const double> z_pair,
                                 std::span<const double> a_pair, std::span<const double> tau_sq) {
  const int r = inst.arity();
  const auto signs = inst.signs();
  std::vector<std::vector<FourierTerm>> by_coord(r);
  for (const auto& t : p.terms()) {
    for (int c = 0; c < r; ++c) {
      if (t.subset >> c & 1) by_coord[c].push_back({t.subset & ~(Subset{1} << c), t.coefficient});
    }
  }
  std::vector<double> x(inst.num_slots());
  parallel_chunks(inst.num_clauses(), 8192, [&](std::size_t, std::size_t begin, std::size_t end) {
    double y[kMaxArity], y2[kMaxArity], var[kMaxArity];
    for (std::size_t b = begin; b < end; ++b) {
      const std::size_t base = b * r;
      for (int c = 0; c < r; ++c) {
        y[c] = signs[base + c] * z_pair[base + c];
        y2[c] = y[c] * y[c];
        var[c] = a_pair[base + c] * a_pair[base + c] * tau_sq[base + c];
      }
      for (int c = 0; c < r; ++c) {
        double total = 0.0;
        for (const auto& t1 : by_coord[c]) {
          for (const auto& t2 : by_coord[c]) {
            // Clause signs are carried by y; they square away on P and Q's overlap.
            double prod = t1.coefficient * t2.coefficient;
            for (Subset rest = t1.subset ^ t2.subset; rest; rest &= rest - 1) prod *= y[std::countr_zero(rest)];
            double with = 1.0, without = 1.0;
            for (Subset rest = t1.subset & t2.subset; rest; rest &= rest - 1) {
              const int j = std::countr_zero(rest);
              with *= y2[j] + var[j];
              without *= y2[j];
            }
            total += prod * (with - without);
          }
        }
        x[base + c] = total;
      }
    }
  });
  return x;
}

std::vector<double> leave_one_out(const CspInstance& inst, int d, const std::vector<double>& x) {
  std::vector<double> out(x.size(), 0.0);
  if (d <= 1) return out;
  const double inv = 1.0 / (d - 1);
  parallel_chunks(inst.num_variables(), 1024, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t v = begin; v < end; ++v) {
      const auto slots = inst.slots_of(static_cast<std::uint32_t>(v));
      double total = 0.0;
      for (SlotId s : slots) total += x[s];
      for (SlotId s : slots) out[s] = (total - x[s]) * inv;
    }
  });
  return out;
}

}  // namespace

std::vector<double> tau_step(const CspInstance& inst, const Predicate& p, int d, std::span<const double> z_pair,
                             std::span<const double> a_pair, std::span<const double> tau_sq) {
  if (z_pair.size() != inst.num_slots() || a_pair.size() != inst.num_slots() || tau_sq.size() != inst.num_slots()) {
    throw std::invalid_argument("tau_step: arrays must have one entry per slot");
  }
  return leave_one_out(inst, d, clause_terms(inst, p, z_pair, a_pair, tau_sq));
}

std::vector<double> tau_base(const CspInstance& inst, const Predicate& p, int d, double delta) {
  const int r = inst.arity();
  std::vector<double> per_coord(r, 0.0);
  for (const auto& t : p.terms()) {
    const int size = std::popcount(t.subset);
    for (int c = 0; c < r; ++c) {
      if (t.subset >> c & 1) per_coord[c] += t.coefficient * t.coefficient * std::pow(delta, size - 1);
    }
  }
  std::vector<double> x(inst.num_slots());
  for (std::size_t s = 0; s < x.size(); ++s) x[s] = per_coord[s % r];
  return leave_one_out(inst, d, x);
}

TauTracker::TauTracker(const CspInstance& inst, const Predicate& p, double delta)
    : inst_(inst), p_(p), xi_(mixture(p)), delta_(delta), d_(0) {
  if (inst.num_variables() == 0) throw std::invalid_argument("empty instance");
  d_ = static_cast<int>(inst.var_degree(0));
}

void TauTracker::record(int ell) {
  if (ell > iteration_count(delta_)) return;
  const double v = nu(xi_, delta_, ell, inst_.arity());
  double dev = 0.0, mean = 0.0;
  for (double t : tau_sq_) {
    dev += (t - v) * (t - v);
    mean += t;
  }
  const double n = static_cast<double>(tau_sq_.size());
  diag_.ell.push_back(ell);
  diag_.mean_sq_deviation.push_back(dev / n);
  diag_.mean_tau_sq.push_back(mean / n);
  diag_.samples.push_back(tau_sq_.size());
}

void TauTracker::observe(const IterationView& view) {
  if (view.ell == 0) {
    tau_sq_ = tau_base(inst_, p_, d_, delta_);
    latest_ = 1;
    record(1);
  }
  if (latest_ != view.ell + 1) throw std::logic_error("tau recurrence: missing prior-step tau");
  prev_tau_sq_ = tau_sq_;
  tau_sq_ = tau_step(inst_, p_, d_, view.z_pair, view.a_pair, prev_tau_sq_);
  latest_ = view.ell + 2;
  record(latest_);
}

double w1_distance(std::span<const double> samples, double sigma_sq) {
  if (!(sigma_sq > 0.0)) throw std::invalid_argument("w1_distance: variance must be positive");
  if (samples.size() < 100) throw std::invalid_argument("w1_distance: need at least 100 samples");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const double sigma = std::sqrt(sigma_sq);
  const std::size_t n = x.size();
  // G(u) = -sigma phi(Phi^{-1}(u)) is an antiderivative of the Gaussian quantile.
  auto quantile = [&](double u) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u); };
  auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); };
  auto G_at_u = [&](double u) {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    return -sigma * phi(quantile(u));
  };
  double total = 0.0;
  double g_lo = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = static_cast<double>(i) / n, b = static_cast<double>(i + 1) / n;
    const double g_hi = G_at_u(b);
    const double zx = x[i] / sigma;
    const double ustar_raw = 0.5 * std::erfc(-zx / std::numbers::sqrt2);
    double ustar, g_star;
    if (ustar_raw <= a) {
      ustar = a;
      g_star = g_lo;
    } else if (ustar_raw >= b) {
      ustar = b;
      g_star = g_hi;
    } else {
      ustar = ustar_raw;
      g_star = -sigma * phi(zx);
    }
    total += x[i] * (ustar - a) - (g_star - g_lo) + (g_hi - g_star) - x[i] * (b - ustar);
    g_lo = g_hi;
  }
  return total;
}

Concentration seed_concentration(std::span<const double> fractions, std::span<const std::string> fingerprints) {
  if (fractions.size() != fingerprints.size()) throw std::invalid_argument("one fingerprint per result");
  if (fractions.size() < 5) throw std::invalid_argument("seed_concentration needs at least 5 results");
  for (const auto& f : fingerprints) {
    if (f != fingerprints[0]) throw std::invalid_argument("seed_concentration: results have different configs");
  }
  Concentration c;
  c.n = fractions.size();
  for (double f : fractions) c.mean += f;
  c.mean /= c.n;
  double ss = 0.0;
  for (double f : fractions) ss += (f - c.mean) * (f - c.mean);
  c.std = std::sqrt(ss / (c.n - 1));
  return c;
}

Concentration seed_concentration(std::span<const RunResult> results) {
  std::vector<double> f;
  std::vector<std::string> fp;
  for (const auto& r : results) {
    f.push_back(r.satisfying_fraction);
    fp.push_back(r.fingerprint);
  }
  return seed_concentration(f, fp);
}

}  // namespace cspamp
