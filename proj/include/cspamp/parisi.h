#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cspamp/predicate.h"

namespace cspamp {

// Right-continuous piecewise-constant order parameter on [0, 1).
// Piece j covers [breakpoints[j], breakpoints[j+1]) and the last piece runs to 1.
class StepFunction {
 public:
  StepFunction() : StepFunction({0.0}, {0.0}) {}
  StepFunction(std::vector<double> breakpoints, std::vector<double> values);

  static StepFunction constant(double value) { return StepFunction({0.0}, {value}); }
  // k equal pieces on [0, end); the last one also covers [end, 1).
  static StepFunction equispaced(std::vector<double> values, double end);

  double operator()(double t) const;
  std::size_t pieces() const { return values_.size(); }
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<double>& values() const { return values_; }
  double piece_end(std::size_t j) const { return j + 1 < breakpoints_.size() ? breakpoints_[j + 1] : 1.0; }

  StepFunction scaled(double factor) const;

  bool operator==(const StepFunction&) const = default;

 private:
  std::vector<double> breakpoints_;
  std::vector<double> values_;
};

struct GridConfig {
  double dt = 1e-3;
  double dx = 0.0;     // 0: x_max / 2000
  double x_max = 0.0;  // 0: 6 sqrt(xi'(1))

  // Defaults for a given mixture and engine step.
  static GridConfig defaults(const MixturePolynomial& xi, double delta = 0.05);
};

// Phi, Phi_x, Phi_xx on a uniform (t, x) grid; row j is t = j * dt.
struct PdeGrid {
  double dt = 0.0;
  double dx = 0.0;
  double x_max = 0.0;
  std::size_t nt = 0;  // number of time steps; nt + 1 rows
  std::size_t nx = 0;
  std::vector<double> phi;  // may be empty when loaded from a table
  std::vector<double> phi_x;
  std::vector<double> phi_xx;

  double x(std::size_t i) const { return -x_max + static_cast<double>(i) * dx; }
  double t(std::size_t j) const { return static_cast<double>(j) * dt; }
  std::size_t center() const { return nx / 2; }
  std::span<const double> row(const std::vector<double>& a, std::size_t j) const {
    return std::span(a).subspan(j * nx, nx);
  }

  // Bilinear reads; x is clamped to [-x_max, x_max] and t to [0, 1].
  double phi_at(double t, double x) const { return bilinear(phi, t, x); }
  double phi_x_at(double t, double x) const { return bilinear(phi_x, t, x); }
  double phi_xx_at(double t, double x) const { return bilinear(phi_xx, t, x); }

  // Rows of Phi_x and Phi_xx linearly interpolated to time t.
  void slice(double t, std::vector<double>& phi_x_out, std::vector<double>& phi_xx_out) const;

  double bilinear(const std::vector<double>& a, double t, double x) const;
};

// Linear read of a row sampled on the grid's x points, clamped at the ends.
double interpolate_row(std::span<const double> row, double x_max, double dx, double x);

// Cole-Hopf backend: exact Gaussian convolution of exp(m Phi) across each
// sub-interval of constant mu.
PdeGrid solve_pde(const MixturePolynomial& xi, const StepFunction& mu, const GridConfig& cfg);
// Crank-Nicolson finite differences with a Heun treatment of m Phi_x^2.
PdeGrid solve_pde_fd(const MixturePolynomial& xi, const StepFunction& mu, const GridConfig& cfg);

// Phi(0,0) - 1/2 int_0^1 xi''(t) t mu(t) dt.
double functional_value(const PdeGrid& grid, const MixturePolynomial& xi, const StepFunction& mu);
double correction_integral(const MixturePolynomial& xi, const StepFunction& mu);

// Same functional, convolving only across whole pieces of mu. Much cheaper
// than a full grid solve and used inside the minimizer.
double parisi_value(const MixturePolynomial& xi, const StepFunction& mu, const GridConfig& cfg);

struct ParisiGradient {
  double value = 0.0;
  std::vector<double> gradient;  // dP / d(values[j])
  std::vector<double> times;     // grid times
  std::vector<double> mean_phi_x_sq;  // E[Phi_x(t, X_t)^2] under the optimal-control law
};

// Value and exact gradient per piece: 1/2 int over piece j of
// xi''(t) (E[Phi_x(t, X_t)^2] - t) dt, with the law of X_t propagated
// forward on the grid.
ParisiGradient parisi_gradient(const MixturePolynomial& xi, const StepFunction& mu, const GridConfig& cfg);

struct MinimizeOptions {
  int pieces = 3;
  double eta = 0.05;
  GridConfig grid;      // zero fields are filled from GridConfig::defaults
  double mu_max = 50.0;
  int max_iterations = 200;
  double tolerance = 1e-7;  // on the objective change per sweep / projected gradient norm
  bool use_gradient = false;  // projected gradient instead of coordinate search
};

struct MinimizeResult {
  StepFunction mu;
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
};

// Minimizes the functional over step functions with `pieces` equal pieces on
// [0, 1 - eta]. pieces = 0 returns mu = 0.
MinimizeResult minimize_alg(const MixturePolynomial& xi, const MinimizeOptions& opts);

struct ParisiSolution {
  StepFunction mu;
  PdeGrid grid;
  double functional_value = 0.0;
  MixturePolynomial xi;
  double eta = 0.05;
  bool converged = true;
};

ParisiSolution make_solution(const MixturePolynomial& xi, const StepFunction& mu, const GridConfig& cfg,
                             double eta);

struct SdeStats {
  double delta = 0.0;
  std::size_t steps = 0;  // L
  std::size_t paths = 0;
  // Indexed by l = 0..L-1, evaluated at (delta l, X_l).
  std::vector<double> mean_phixx;
  std::vector<double> mean_phixx_sq;
  std::vector<double> mean_phix_sq;
  // Indexed by l = 0..L.
  std::vector<double> var_x;
  std::vector<double> martingale_sq;  // E[Ztilde_l^2]
  // Indexed by l = 0..L-1: Ztilde_{l+1} - Ztilde_l.
  std::vector<double> increment_mean;
  std::vector<double> increment_stderr;
  double final_abs_q99 = 0.0;  // 99th percentile of |Ztilde_L|
};

// Euler scheme of the optimally controlled diffusion with its discrete
// martingale. Paths are seeded by (seed, path) so the result does not depend
// on the thread count.
SdeStats simulate_sde(const ParisiSolution& sol, double delta, std::size_t n_paths, std::uint64_t seed);

// c_l = sqrt(delta / (nu_{l+1} E[Phi_xx^2])), l = 0..L-1.
std::vector<double> nonlinearity_constants(const ParisiSolution& sol, const SdeStats& stats, double delta,
                                           int r);

// Trapezoidal sum of xi''(delta l) E[Phi_xx(delta l, X_l)] delta over delta l <= 1 - eta.
double alg_energy_estimate(const ParisiSolution& sol, const SdeStats& stats, double eta);

// max over delta l <= 1 - eta of |(xi'((l+1)delta) - xi'(l delta)) / delta * E[Phi_xx^2] - 1|.
double normalization_drift(const ParisiSolution& sol, const SdeStats& stats, double eta);

// Binary table: magic, xi coefficients, eta, grid dimensions, mu, value,
// then row-major Phi_x and Phi_xx as little-endian doubles.
void write_table(const std::filesystem::path& path, const ParisiSolution& sol);
ParisiSolution read_table(const std::filesystem::path& path);

struct CacheKey {
  MixturePolynomial xi;
  MinimizeOptions options;
  std::string digest() const;
};

// Loads the solution for `key` from `dir`, or minimizes, solves and stores it.
ParisiSolution cached_solution(const std::filesystem::path& dir, const CacheKey& key, bool* from_cache = nullptr);

}  // namespace cspamp
