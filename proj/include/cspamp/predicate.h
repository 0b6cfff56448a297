#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cspamp {

// Subset of clause coordinates as a bitmask: bit c set <=> coordinate c
// (0-based) is in the subset.
using Subset = std::uint32_t;

inline constexpr int kMinArity = 2;
inline constexpr int kMaxArity = 12;

// One non-zero Fourier coefficient.
struct FourierTerm {
  Subset subset;
  double coefficient;
};

struct PredicateFlags {
  bool is_even = false;
  bool has_linear = false;
};

// Boolean predicate f : {+1,-1}^r -> {0,1} together with its exact Fourier
// expansion f(x) = sum_S fhat(S) prod_{c in S} x_c.
//
// Truth tables are given in lexicographic sign-pattern order: coordinate 1 is
// the most significant position and +1 sorts before -1. Internally the table is
// stored with coordinate c at bit c, which is the natural order for the
// Walsh-Hadamard transform.
class Predicate {
 public:
  // table: 2^r entries in lexicographic order, each 0 or 1.
  Predicate(int arity, std::span<const std::uint8_t> table);

  int arity() const { return arity_; }
  std::size_t table_size() const { return std::size_t{1} << arity_; }
  double mean() const { return fourier_[0]; }

  double coefficient(Subset s) const { return fourier_.at(s); }
  std::span<const double> fourier() const { return fourier_; }
  // Non-zero coefficients, by increasing subset mask.
  const std::vector<FourierTerm>& terms() const { return terms_; }

  // Value at a sign pattern, x[c] in {+1,-1}.
  int value(std::span<const int> x) const;
  // Truth table entry in lexicographic order.
  int table_entry(std::size_t lex_index) const;
  std::vector<std::uint8_t> lexicographic_table() const;

  // Multilinear extension evaluated at an arbitrary real point.
  double evaluate(std::span<const double> point) const;

  const std::string& name() const { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }

 private:
  int arity_;
  std::vector<std::uint8_t> table_;  // internal bit order
  std::vector<double> fourier_;
  std::vector<FourierTerm> terms_;
  std::string name_;
};

// Mixture polynomial xi(s) = sum_{j>=1} w_j s^j, w_j = Fourier weight at degree j.
class MixturePolynomial {
 public:
  MixturePolynomial() = default;
  // weights[j-1] = w_j.
  explicit MixturePolynomial(std::vector<double> weights);

  std::span<const double> weights() const { return weights_; }
  int degree() const { return static_cast<int>(weights_.size()); }

  double operator()(double s) const;
  double d1(double s) const;
  double d2(double s) const;

  bool is_zero() const;

  bool operator==(const MixturePolynomial&) const = default;

 private:
  std::vector<double> weights_;
};

// Fast Walsh-Hadamard transform of a lexicographic truth table.
Predicate fourier_transform(int arity, std::span<const std::uint8_t> table);

MixturePolynomial mixture(const Predicate& p);

// d f / d x_coord at `point` (coord is 0-based). Independent of point[coord].
double partial_derivative(const Predicate& p, int coord, std::span<const double> point);

PredicateFlags predicate_flags(const Predicate& p);

// Built-in predicates: "maxcut2", "nae3", "xor4even".
Predicate named_predicate(const std::string& name);
std::vector<std::string> named_predicate_list();

// Resolves a name, or else reads a predicate file.
Predicate load_predicate(const std::string& name_or_path);

// Text format: first line r, second line 2^r bits in lexicographic order.
Predicate read_predicate(std::istream& in);
void write_predicate(std::ostream& out, const Predicate& p);

}  // namespace cspamp
