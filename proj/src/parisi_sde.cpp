#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cspamp/analysis.h"
#include "cspamp/parallel.h"
#include "cspamp/parisi.h"
#include "cspamp/rng.h"

namespace cspamp {

namespace {

constexpr std::size_t kPathChunk = 4096;

struct ChunkSums {
  std::vector<double> phixx, phixx_sq, phix_sq;        // per l < L
  std::vector<double> x, x_sq, z_sq;                   // per l <= L
  std::vector<double> inc, inc_sq;                     // per l < L
};

}  // namespace

SdeStats simulate_sde(const ParisiSolution& sol, double delta, std::size_t n_paths, std::uint64_t seed) {
  if (!(delta > 0.0 && delta <= 0.5)) throw std::invalid_argument("delta must be in (0, 0.5]");
  if (n_paths < 2) throw std::invalid_argument("need at least two paths");
  const PdeGrid& g = sol.grid;
  if (delta < g.dt * (1.0 - 1e-9)) throw std::invalid_argument("delta is finer than the PDE grid's dt");
  const std::size_t L = static_cast<std::size_t>(iteration_count(delta));
  const MixturePolynomial& xi = sol.xi;

  std::vector<std::vector<double>> sx(L), sxx(L);
  std::vector<double> drift(L), scale(L);
  for (std::size_t l = 0; l < L; ++l) {
    const double t = delta * static_cast<double>(l);
    g.slice(t, sx[l], sxx[l]);
    drift[l] = xi.d2(t) * sol.mu(t) * delta;
    scale[l] = std::sqrt(xi.d1(delta * static_cast<double>(l + 1)) - xi.d1(t));
  }
  auto read = [&](const std::vector<double>& row, double x) { return interpolate_row(row, g.x_max, g.dx, x); };
  auto noise = [&](std::size_t path, std::size_t l) { return rng::normal(seed, rng::kSdePath, path * (L + 1) + l); };

  SdeStats st;
  st.delta = delta;
  st.steps = L;
  st.paths = n_paths;
  const double inv = 1.0 / static_cast<double>(n_paths);

  // Pass one: law of X and the moments of Phi_xx along it.
  const std::size_t chunks = chunk_count(n_paths, kPathChunk);
  std::vector<ChunkSums> sums(chunks);
  parallel_chunks(n_paths, kPathChunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
    auto& s = sums[c];
    s.phixx.assign(L, 0.0);
    s.phixx_sq.assign(L, 0.0);
    s.phix_sq.assign(L, 0.0);
    s.x.assign(L + 1, 0.0);
    s.x_sq.assign(L + 1, 0.0);
    for (std::size_t path = begin; path < end; ++path) {
      double x = 0.0;
      for (std::size_t l = 0; l < L; ++l) {
        const double px = read(sx[l], x), pxx = read(sxx[l], x);
        s.phixx[l] += pxx;
        s.phixx_sq[l] += pxx * pxx;
        s.phix_sq[l] += px * px;
        s.x[l] += x;
        s.x_sq[l] += x * x;
        x += drift[l] * px + scale[l] * noise(path, l);
      }
      s.x[L] += x;
      s.x_sq[L] += x * x;
    }
  });
  st.mean_phixx.assign(L, 0.0);
  st.mean_phixx_sq.assign(L, 0.0);
  st.mean_phix_sq.assign(L, 0.0);
  std::vector<double> mx(L + 1, 0.0), mxx(L + 1, 0.0);
  for (const auto& s : sums) {
    for (std::size_t l = 0; l < L; ++l) {
      st.mean_phixx[l] += s.phixx[l];
      st.mean_phixx_sq[l] += s.phixx_sq[l];
      st.mean_phix_sq[l] += s.phix_sq[l];
    }
    for (std::size_t l = 0; l <= L; ++l) {
      mx[l] += s.x[l];
      mxx[l] += s.x_sq[l];
    }
  }
  st.var_x.resize(L + 1);
  for (std::size_t l = 0; l < L; ++l) {
    st.mean_phixx[l] *= inv;
    st.mean_phixx_sq[l] *= inv;
    st.mean_phix_sq[l] *= inv;
  }
  for (std::size_t l = 0; l <= L; ++l) {
    const double m = mx[l] * inv;
    st.var_x[l] = std::max(0.0, mxx[l] * inv - m * m);
  }

  // Pass two: the normalized martingale, replaying the same paths.
  std::vector<double> norm(L);
  for (std::size_t l = 0; l < L; ++l) {
    norm[l] = st.mean_phixx_sq[l] > 0.0 ? std::sqrt(delta / st.mean_phixx_sq[l]) : 0.0;
  }
  std::vector<double> final_abs(n_paths);
  parallel_chunks(n_paths, kPathChunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
    auto& s = sums[c];
    s.z_sq.assign(L + 1, 0.0);
    s.inc.assign(L, 0.0);
    s.inc_sq.assign(L, 0.0);
    for (std::size_t path = begin; path < end; ++path) {
      double x = 0.0;
      double z = std::sqrt(delta) * rng::normal(seed, rng::kSdeMartingale, path);
      for (std::size_t l = 0; l < L; ++l) {
        s.z_sq[l] += z * z;
        const double px = read(sx[l], x), pxx = read(sxx[l], x);
        const double b = noise(path, l);
        const double dz = b * norm[l] * pxx;
        s.inc[l] += dz;
        s.inc_sq[l] += dz * dz;
        z += dz;
        x += drift[l] * px + scale[l] * b;
      }
      s.z_sq[L] += z * z;
      final_abs[path] = std::abs(z);
    }
  });
  st.martingale_sq.assign(L + 1, 0.0);
  st.increment_mean.assign(L, 0.0);
  st.increment_stderr.assign(L, 0.0);
  std::vector<double> inc_sq(L, 0.0);
  for (const auto& s : sums) {
    for (std::size_t l = 0; l <= L; ++l) st.martingale_sq[l] += s.z_sq[l];
    for (std::size_t l = 0; l < L; ++l) {
      st.increment_mean[l] += s.inc[l];
      inc_sq[l] += s.inc_sq[l];
    }
  }
  for (std::size_t l = 0; l <= L; ++l) st.martingale_sq[l] *= inv;
  for (std::size_t l = 0; l < L; ++l) {
    st.increment_mean[l] *= inv;
    const double var = std::max(0.0, inc_sq[l] * inv - st.increment_mean[l] * st.increment_mean[l]);
    st.increment_stderr[l] = std::sqrt(var / static_cast<double>(n_paths - 1));
  }
  const auto q = static_cast<std::size_t>(std::floor(0.99 * static_cast<double>(n_paths - 1)));
  std::nth_element(final_abs.begin(), final_abs.begin() + static_cast<std::ptrdiff_t>(q), final_abs.end());
  st.final_abs_q99 = final_abs[q];
  return st;
}

std::vector<double> nonlinearity_constants(const ParisiSolution& sol, const SdeStats& stats, double delta, int r) {
  if (std::abs(stats.delta - delta) > 1e-12) throw std::invalid_argument("SDE statistics were taken at another delta");
  std::vector<double> c(stats.steps);
  for (std::size_t l = 0; l < stats.steps; ++l) {
    if (!(stats.mean_phixx_sq[l] > 0.0)) {
      throw std::invalid_argument("E[Phi_xx^2] is not positive at step " + std::to_string(l));
    }
    const double v = nu(sol.xi, delta, static_cast<int>(l) + 1, r);
    if (!(v > 0.0)) throw std::invalid_argument("nu is not positive at step " + std::to_string(l + 1));
    c[l] = std::sqrt(delta / (v * stats.mean_phixx_sq[l]));
  }
  return c;
}

namespace {

std::size_t last_in_range(const SdeStats& stats, double eta) {
  // Largest l with delta l <= 1 - eta.
  const double end = 1.0 - eta;
  std::size_t last = 0;
  for (std::size_t l = 0; l < stats.steps; ++l) {
    if (stats.delta * static_cast<double>(l) <= end + 1e-12) last = l;
  }
  return last;
}

}  // namespace

double alg_energy_estimate(const ParisiSolution& sol, const SdeStats& stats, double eta) {
  if (stats.steps == 0) return 0.0;
  const std::size_t last = last_in_range(stats, eta);
  auto f = [&](std::size_t l) { return sol.xi.d2(stats.delta * static_cast<double>(l)) * stats.mean_phixx[l]; };
  double total = 0.0;
  for (std::size_t l = 0; l <= last; ++l) total += f(l);
  total -= 0.5 * (f(0) + f(last));
  return total * stats.delta;
}

double normalization_drift(const ParisiSolution& sol, const SdeStats& stats, double eta) {
  const std::size_t last = last_in_range(stats, eta);
  double worst = 0.0;
  for (std::size_t l = 0; l <= last && l < stats.steps; ++l) {
    const double t = stats.delta * static_cast<double>(l);
    const double ratio = (sol.xi.d1(t + stats.delta) - sol.xi.d1(t)) / stats.delta * stats.mean_phixx_sq[l];
    worst = std::max(worst, std::abs(ratio - 1.0));
  }
  return worst;
}

}  // namespace cspamp
