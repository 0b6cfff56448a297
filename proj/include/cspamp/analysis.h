#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cspamp/predicate.h"

namespace cspamp {

struct RunHistory;
struct RunResult;
struct IterationView;
class CspInstance;

// L = floor(1/delta), robust to 1/delta landing just below an integer.
int iteration_count(double delta);

// nu_l = (xi'(l delta) - xi'((l-1) delta)) / r for 1 <= l <= floor(1/delta).
double nu(const MixturePolynomial& xi, double delta, int ell, int r);

// (k-1)!! nu^{k/2} for even k, 0 for odd k.
double gaussian_moment(int k, double variance);

struct MomentTolerances {
  double variance_rel = 0.05;
  double odd_stderr = 3.0;
  double fourth_rel = 0.10;
  double sixth_rel = 0.20;
  std::size_t min_samples = 1000;
};

struct MomentRow {
  int ell = 0;
  double nu = 0.0;
  std::size_t samples = 0;
  std::array<double, 6> moments{};
  std::array<double, 6> stderrs{};
  std::array<double, 6> predicted{};
  bool variance_ok = false;
  bool odd_ok = false;
  bool fourth_ok = false;
  bool sixth_ok = false;
  bool pass = false;
};

struct MomentReport {
  std::vector<MomentRow> pairs;
  std::vector<MomentRow> nodes;
  double correlation_12 = 0.0;  // corr(u^1, u^2) over the same directed pairs
  double correlation_stderr = 0.0;
  bool independence_ok = true;
  std::vector<std::string> warnings;
  bool pass = false;
};

// Moments k = 1..6 of `samples` against N(0, nu). Standard errors use
// `effective` independent draws when nonzero, else the sample count.
MomentRow moment_row(std::span<const double> samples, double nu, int ell, const MomentTolerances& tol = {},
                     std::size_t effective = 0);

// Every recorded step of a run with history, or only step `ell` (1-based) if ell > 0.
// Messages leaving one variable nearly coincide, so pair statistics count at
// most one independent draw per variable of the run.
MomentReport moment_report(const RunHistory& history, const MixturePolynomial& xi, double delta, int r,
                           int ell = 0, const MomentTolerances& tol = {});

struct TauDiagnostics {
  std::vector<int> ell;
  std::vector<double> mean_sq_deviation;  // E[(tau^2 - nu_l)^2]
  std::vector<double> mean_tau_sq;
  std::vector<std::size_t> samples;
};

// Tracks the variance parameter tau_{i->a}^l of every directed pair through
// the exact recurrence. Attach observe() as the engine observer: the view of
// step l (z^l, A^l) together with tau^{l+1} yields tau^{l+2}.
class TauTracker {
 public:
  TauTracker(const CspInstance& inst, const Predicate& p, double delta);

  void observe(const IterationView& view);

  // tau^l squared per slot for the latest l computed (l = latest_ell()).
  std::span<const double> tau_sq() const { return tau_sq_; }
  std::span<const double> previous_tau_sq() const { return prev_tau_sq_; }
  int latest_ell() const { return latest_; }
  const TauDiagnostics& diagnostics() const { return diag_; }

 private:
  void record(int ell);

  const CspInstance& inst_;
  Predicate p_;
  MixturePolynomial xi_;
  double delta_;
  int d_;
  std::vector<double> tau_sq_, prev_tau_sq_;
  int latest_ = 0;
  TauDiagnostics diag_;
};

// One recurrence step from explicit arrays, exposed for tests: given z^{l-1},
// A^{l-1} and tau^l per slot, returns tau^{l+1} squared per slot.
std::vector<double> tau_step(const CspInstance& inst, const Predicate& p, int d, std::span<const double> z_pair,
                             std::span<const double> a_pair, std::span<const double> tau_sq);
// tau^1 squared per slot.
std::vector<double> tau_base(const CspInstance& inst, const Predicate& p, int d, double delta);

// W1 between the empirical law of `samples` and N(0, sigma_sq), with the
// quantile coupling integrated exactly over each rank interval.
double w1_distance(std::span<const double> samples, double sigma_sq);

struct Concentration {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

// Cross-seed mean and sample standard deviation of the satisfying fraction.
Concentration seed_concentration(std::span<const RunResult> results);
Concentration seed_concentration(std::span<const double> fractions, std::span<const std::string> fingerprints);

}  // namespace cspamp
