#include "cspamp/predicate.h"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace cspamp {

namespace {

// Internal index (coordinate c at bit c) <-> lexicographic index (coordinate
// 0 at the most significant bit). The map is an involution.
std::size_t reverse_bits(std::size_t index, int arity) {
  std::size_t out = 0;
  for (int c = 0; c < arity; ++c) {
    if (index >> c & 1) out |= std::size_t{1} << (arity - 1 - c);
  }
  return out;
}

// Coefficients below this are treated as exact zeros. All coefficients of a
// 0/1 table are multiples of 2^-r, so anything smaller is roundoff.
constexpr double kZeroCoefficient = 1e-14;

}  // namespace

Predicate::Predicate(int arity, std::span<const std::uint8_t> table) : arity_(arity) {
  if (arity < kMinArity || arity > kMaxArity) {
    throw std::invalid_argument("predicate arity must be in [" + std::to_string(kMinArity) + ", " +
                                std::to_string(kMaxArity) + "], got " + std::to_string(arity));
  }
  const std::size_t size = std::size_t{1} << arity;
  if (table.size() != size) {
    throw std::invalid_argument("truth table has " + std::to_string(table.size()) +
                                " entries, expected " + std::to_string(size));
  }
  table_.resize(size);
  for (std::size_t lex = 0; lex < size; ++lex) {
    if (table[lex] > 1) throw std::invalid_argument("truth table entries must be 0 or 1");
    table_[reverse_bits(lex, arity)] = table[lex];
  }

  // In-place butterfly; exact in floating point since all partial sums are
  // small integers.
  fourier_.assign(table_.begin(), table_.end());
  for (std::size_t half = 1; half < size; half <<= 1) {
    for (std::size_t block = 0; block < size; block += 2 * half) {
      for (std::size_t i = block; i < block + half; ++i) {
        const double a = fourier_[i];
        const double b = fourier_[i + half];
        fourier_[i] = a + b;
        fourier_[i + half] = a - b;
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(size);
  for (std::size_t s = 0; s < size; ++s) {
    fourier_[s] *= scale;
    if (std::abs(fourier_[s]) < kZeroCoefficient) fourier_[s] = 0.0;
    if (fourier_[s] != 0.0) terms_.push_back({static_cast<Subset>(s), fourier_[s]});
  }
}

int Predicate::value(std::span<const int> x) const {
  if (x.size() != static_cast<std::size_t>(arity_)) throw std::invalid_argument("wrong point size");
  std::size_t index = 0;
  for (int c = 0; c < arity_; ++c) {
    if (x[c] == -1) {
      index |= std::size_t{1} << c;
    } else if (x[c] != 1) {
      throw std::invalid_argument("sign pattern entries must be +1 or -1");
    }
  }
  return table_[index];
}

int Predicate::table_entry(std::size_t lex_index) const {
  return table_.at(reverse_bits(lex_index, arity_));
}

std::vector<std::uint8_t> Predicate::lexicographic_table() const {
  std::vector<std::uint8_t> out(table_.size());
  for (std::size_t lex = 0; lex < out.size(); ++lex) out[lex] = table_[reverse_bits(lex, arity_)];
  return out;
}

double Predicate::evaluate(std::span<const double> point) const {
  if (point.size() != static_cast<std::size_t>(arity_)) throw std::invalid_argument("wrong point size");
  double total = 0.0;
  for (const auto& term : terms_) {
    double prod = term.coefficient;
    for (Subset rest = term.subset; rest; rest &= rest - 1) prod *= point[std::countr_zero(rest)];
    total += prod;
  }
  return total;
}

MixturePolynomial::MixturePolynomial(std::vector<double> weights) : weights_(std::move(weights)) {
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("mixture weights must be finite and >= 0");
  }
}

double MixturePolynomial::operator()(double s) const {
  double total = 0.0;
  for (int j = degree(); j >= 1; --j) total = (total + weights_[j - 1]) * s;
  return total;
}

double MixturePolynomial::d1(double s) const {
  double total = 0.0;
  for (int j = degree(); j >= 1; --j) total = total * s + j * weights_[j - 1];
  return total;
}

double MixturePolynomial::d2(double s) const {
  double total = 0.0;
  for (int j = degree(); j >= 2; --j) total = total * s + j * (j - 1) * weights_[j - 1];
  return total;
}

bool MixturePolynomial::is_zero() const {
  for (double w : weights_) {
    if (w != 0.0) return false;
  }
  return true;
}

Predicate fourier_transform(int arity, std::span<const std::uint8_t> table) {
  return Predicate(arity, table);
}

MixturePolynomial mixture(const Predicate& p) {
  std::vector<double> weights(p.arity(), 0.0);
  for (const auto& term : p.terms()) {
    const int degree = std::popcount(term.subset);
    if (degree > 0) weights[degree - 1] += term.coefficient * term.coefficient;
  }
  return MixturePolynomial(std::move(weights));
}

double partial_derivative(const Predicate& p, int coord, std::span<const double> point) {
  if (coord < 0 || coord >= p.arity()) {
    throw std::out_of_range("coordinate " + std::to_string(coord) + " out of range for arity " +
                            std::to_string(p.arity()));
  }
  if (point.size() != static_cast<std::size_t>(p.arity())) throw std::invalid_argument("wrong point size");
  const Subset bit = Subset{1} << coord;
  double total = 0.0;
  for (const auto& term : p.terms()) {
    if (!(term.subset & bit)) continue;
    double prod = term.coefficient;
    for (Subset rest = term.subset & ~bit; rest; rest &= rest - 1) prod *= point[std::countr_zero(rest)];
    total += prod;
  }
  return total;
}

PredicateFlags predicate_flags(const Predicate& p) {
  PredicateFlags flags;
  flags.is_even = true;
  for (const auto& term : p.terms()) {
    const int degree = std::popcount(term.subset);
    if (degree % 2 == 1) flags.is_even = false;
    if (degree == 1) flags.has_linear = true;
  }
  return flags;
}

Predicate named_predicate(const std::string& name) {
  std::vector<std::uint8_t> table;
  int arity = 0;
  if (name == "maxcut2") {
    arity = 2;
    table = {0, 1, 1, 0};
  } else if (name == "nae3") {
    arity = 3;
    table = {0, 1, 1, 1, 1, 1, 1, 0};
  } else if (name == "xor4even") {
    arity = 4;
    table.resize(16);
    for (std::size_t i = 0; i < 16; ++i) table[i] = std::popcount(i) % 2 == 0 ? 1 : 0;
  } else {
    throw std::invalid_argument("unknown predicate name: " + name);
  }
  Predicate p(arity, table);
  p.set_name(name);
  return p;
}

std::vector<std::string> named_predicate_list() { return {"maxcut2", "nae3", "xor4even"}; }

Predicate load_predicate(const std::string& name_or_path) {
  for (const auto& name : named_predicate_list()) {
    if (name == name_or_path) return named_predicate(name);
  }
  std::ifstream in(name_or_path);
  if (!in) throw std::invalid_argument("not a predicate name or readable file: " + name_or_path);
  Predicate p = read_predicate(in);
  p.set_name(std::filesystem::path(name_or_path).stem().string());
  return p;
}

Predicate read_predicate(std::istream& in) {
  int arity = 0;
  if (!(in >> arity)) throw std::invalid_argument("predicate file: missing arity");
  if (arity < kMinArity || arity > kMaxArity) {
    throw std::invalid_argument("predicate file: arity out of range");
  }
  std::vector<std::uint8_t> table(std::size_t{1} << arity);
  for (auto& bit : table) {
    int v = -1;
    if (!(in >> v) || (v != 0 && v != 1)) throw std::invalid_argument("predicate file: bad truth table");
    bit = static_cast<std::uint8_t>(v);
  }
  return Predicate(arity, table);
}

void write_predicate(std::ostream& out, const Predicate& p) {
  out << p.arity() << '\n';
  const auto table = p.lexicographic_table();
  for (std::size_t i = 0; i < table.size(); ++i) out << (i ? " " : "") << static_cast<int>(table[i]);
  out << '\n';
}

}  // namespace cspamp
