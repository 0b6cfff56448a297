#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

#include "cspamp/instance.h"
#include "cspamp/parisi.h"
#include "cspamp/predicate.h"

namespace cspamp {

struct RunConfig {
  double delta = 0.05;
  std::uint64_t seed = 1;           // initial spins
  std::uint64_t rounding_seed = 2;  // randomized rounding
  double clamp = 0.0;               // K; 0 selects 10 x max |Phi_xx| c_l over the table
  bool record_history = false;
  std::size_t history_pairs = 131072;  // sampled directed pairs kept in the history
  int stop_after = -1;                 // run only this many iterations (diagnostics); -1 runs all L
};

// Non-finite state detected; `iteration` is the step that produced it.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, int iteration) : std::runtime_error(what), iteration(iteration) {}
  int iteration;
};

// Per-iteration aggregates. Entry l describes the step from state l to l + 1.
struct IterationStats {
  // Raw moments E[u^k], k = 1..6, of u^{l+1} over directed pairs / variables.
  std::vector<std::array<double, 6>> pair_moments, node_moments;
  std::vector<double> pair_z_sq;         // E[(z_{i->a}^l)^2], l = 0..L
  std::vector<double> node_z_sq;         // E[(z_i^l)^2], l = 0..L
  std::vector<double> energy_terms;      // (1/n) sum_i A_i^l (u_i^{l+1})^2
  std::vector<double> u_gap_sq;          // mean over pairs (u_i^{l+1} - u_{i->a}^{l+1})^2
  std::vector<double> a_gap_sq;          // mean over pairs (A_i^l - A_{i->a}^l)^2
  std::vector<double> node_a_mean;       // E[A_i^l]
  std::vector<double> node_a_sq;         // E[(A_i^l)^2]
  std::vector<double> pair_a_sq;         // E[(A_{i->a}^l)^2]
  std::vector<std::size_t> clamped;      // number of clamped A values (nodes + pairs)
};

// Stored sequences. Node histories cover every variable; pair histories a
// fixed, evenly spaced sample of directed pairs.
struct RunHistory {
  std::vector<std::uint32_t> pair_slots;
  std::vector<std::vector<double>> pair_u;  // [l][sample], u^{l+1}
  std::vector<std::vector<double>> node_u;  // [l][v], u_v^{l+1}
  std::vector<std::vector<double>> node_a;  // [l][v], A_v^l
  std::vector<double> node_z0;
  bool empty() const { return node_u.empty() && node_z0.empty(); }
};

struct RunResult {
  std::size_t n = 0;
  int d = 0;
  int r = 0;
  int iterations = 0;
  double delta = 0.0;
  double clamp = 0.0;
  double mean_f = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t rounding_seed = 0;
  std::string fingerprint;  // everything but the seeds
  std::vector<double> z_final;
  std::vector<double> truncated;
  std::vector<int> assignment;
  double satisfying_fraction = 0.0;
  IterationStats stats;
  RunHistory history;
  double seconds = 0.0;
};

// Read-only view of the state at the start of iteration l, given to observers.
struct IterationView {
  int ell = 0;
  const CspInstance* inst = nullptr;
  std::span<const double> z_pair, x_pair, a_pair;
  std::span<const double> z_node, x_node, a_node;
};
using Observer = std::function<void(const IterationView&)>;

// Runs the message-passing iteration for L = floor(1/delta) steps and rounds
// the result. consts[l] multiplies Phi_xx(delta l, x) in A^l.
RunResult run(const CspInstance& inst, const Predicate& p, const ParisiSolution& sol, std::span<const double> consts,
              const RunConfig& cfg, const Observer& observer = {});

struct ValueDecomposition {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;
};

// lhs: (1/m) sum_a f(z^L) through the multilinear extension; rhs: E[f] +
// (r / sqrt(d)) sum_l (1/n) sum_i A_i^l (u_i^{l+1})^2 from the node history.
ValueDecomposition value_decomposition(const RunResult& result, const CspInstance& inst, const Predicate& p);

double truncate_spin(double z);

struct Rounding {
  std::vector<double> truncated;
  std::vector<int> assignment;
};

// Entrywise truncation to [-1, 1], then independent rounding to +1 with
// probability (1 + trnc(z)) / 2.
Rounding round(std::span<const double> z, std::uint64_t seed);

}  // namespace cspamp
