#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cspamp/predicate.h"

namespace cspamp {

// Occurrence of a variable in a clause. slot = clause * r + position.
using SlotId = std::uint32_t;

// r-uniform directed hypergraph with per-slot signs. Clause a occupies slots
// [a*r, (a+1)*r); slot s holds variable vars()[s] at coordinate s % r with sign
// signs()[s]. The clause evaluates f(sign_1 x_{v_1}, ..., sign_r x_{v_r}).
class CspInstance {
 public:
  CspInstance() = default;
  // Validates ranges and builds the variable -> slot adjacency. If `degree`
  // is given, the index-regularity invariant is checked and must hold.
  CspInstance(std::uint32_t n, int r, std::vector<std::uint32_t> vars, std::vector<std::int8_t> signs,
              std::optional<int> degree = std::nullopt);

  std::uint32_t num_variables() const { return n_; }
  std::size_t num_clauses() const { return r_ ? vars_.size() / r_ : 0; }
  std::size_t num_slots() const { return vars_.size(); }
  int arity() const { return r_; }
  std::optional<int> degree() const { return degree_; }
  double density() const { return static_cast<double>(num_clauses()) / n_; }

  std::span<const std::uint32_t> vars() const { return vars_; }
  std::span<const std::int8_t> signs() const { return signs_; }
  std::span<const std::uint32_t> clause_vars(std::size_t a) const {
    return std::span(vars_).subspan(a * r_, r_);
  }
  std::span<const std::int8_t> clause_signs(std::size_t a) const {
    return std::span(signs_).subspan(a * r_, r_);
  }

  // Slots in which variable v occurs, by increasing slot id.
  std::span<const SlotId> slots_of(std::uint32_t v) const {
    return std::span(adjacency_).subspan(offsets_[v], offsets_[v + 1] - offsets_[v]);
  }
  std::size_t var_degree(std::uint32_t v) const { return offsets_[v + 1] - offsets_[v]; }

  // Same hypergraph with different signs.
  CspInstance with_signs(std::vector<std::int8_t> signs) const;

  // Count of clauses containing some variable more than once.
  std::size_t repeated_variable_clauses() const;

  // Throws if some variable does not occur exactly d/r times per coordinate.
  void check_index_regular(int d) const;
  bool is_index_regular(int d) const;

  bool operator==(const CspInstance& o) const {
    return n_ == o.n_ && r_ == o.r_ && vars_ == o.vars_ && signs_ == o.signs_ && degree_ == o.degree_;
  }

 private:
  std::uint32_t n_ = 0;
  int r_ = 0;
  std::vector<std::uint32_t> vars_;
  std::vector<std::int8_t> signs_;
  std::optional<int> degree_;
  std::vector<std::uint32_t> offsets_;
  std::vector<SlotId> adjacency_;
};

struct RegularizationStats {
  std::size_t removed_clauses = 0;
  std::size_t added_clauses = 0;
  int alpha_prime = 0;
  int degree = 0;  // r * alpha_prime
  double treelike_fraction_before = 0.0;
  double treelike_fraction_after = 0.0;
};

// m = round(alpha * n) clauses with i.i.d. uniform variables (repeats allowed)
// and i.i.d. uniform signs.
CspInstance sample_csp(std::uint32_t n, double alpha, int r, std::uint64_t seed);

// alpha' = ceil((d + sqrt(d) ln d) / r) with d = r * alpha.
int regularized_alpha(double d, int r);

// Two-phase reduction to an (r alpha')-index-regular instance. Phase one
// drops the highest-id clause at an over-full (variable, coordinate) pair until
// none is over-full; phase two adds clauses, filling each coordinate from the
// residual degrees alpha' - deg(v, coordinate). The treelike fractions in the
// stats are measured at `radius` (skipped when radius < 0). `alpha_prime`
// overrides the per-coordinate target degree.
std::pair<CspInstance, RegularizationStats> index_regularize(const CspInstance& inst, int radius,
                                                             std::uint64_t seed,
                                                             std::optional<int> alpha_prime = std::nullopt);

// Configuration model: a uniform permutation of the n*d/r variable slots per
// coordinate. Exactly d-index-regular by construction.
CspInstance sample_index_regular(std::uint32_t n, int d, int r, std::uint64_t seed);

// Fraction of variables whose factor-graph neighbourhood, explored through the
// clauses of every variable within hypergraph distance `radius`, is a tree
// (no cycle, no vertex reached twice).
double treelike_fraction(const CspInstance& inst, int radius);

// (1/m) sum_a f(sign * x) for an assignment in {+1,-1}^n.
double evaluate(const CspInstance& inst, const Predicate& p, std::span<const int> assignment);
// Same with real spins, through the multilinear extension.
double evaluate_multilinear(const CspInstance& inst, const Predicate& p, std::span<const double> spins);

// Text format: header "n m r d" (d = 0 if irregular), then one line per clause
// with r zero-based variable ids followed by r signs written as + or -.
void write_instance(std::ostream& out, const CspInstance& inst);
CspInstance read_instance(std::istream& in);

}  // namespace cspamp
