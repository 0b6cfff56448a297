#include "cspamp/instance.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include "cspamp/rng.h"

namespace cspamp {

namespace {

template <typename T>
void shuffle(std::vector<T>& v, rng::SplitMix& gen) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[gen.below(i)]);
}

void check_clause_count(std::size_t m, int r) {
  if (m > std::numeric_limits<SlotId>::max() / static_cast<std::size_t>(r)) {
    throw std::overflow_error("instance too large: " + std::to_string(m) + " clauses of arity " + std::to_string(r));
  }
}

}  // namespace

CspInstance::CspInstance(std::uint32_t n, int r, std::vector<std::uint32_t> vars, std::vector<std::int8_t> signs,
                         std::optional<int> degree)
    : n_(n), r_(r), vars_(std::move(vars)), signs_(std::move(signs)), degree_(degree) {
  if (r < 1) throw std::invalid_argument("arity must be positive");
  if (n == 0) throw std::invalid_argument("instance needs at least one variable");
  if (vars_.size() % r != 0) throw std::invalid_argument("slot count is not a multiple of the arity");
  if (signs_.size() != vars_.size()) throw std::invalid_argument("sign count does not match slot count");
  check_clause_count(vars_.size() / r, r);
  for (auto v : vars_) {
    if (v >= n) throw std::invalid_argument("variable id " + std::to_string(v) + " out of range");
  }
  for (auto s : signs_) {
    if (s != 1 && s != -1) throw std::invalid_argument("signs must be +1 or -1");
  }

  offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
  for (auto v : vars_) ++offsets_[v + 1];
  for (std::uint32_t v = 0; v < n; ++v) offsets_[v + 1] += offsets_[v];
  adjacency_.resize(vars_.size());
  std::vector<std::uint32_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (std::size_t s = 0; s < vars_.size(); ++s) adjacency_[fill[vars_[s]]++] = static_cast<SlotId>(s);

  if (degree_) check_index_regular(*degree_);
}

CspInstance CspInstance::with_signs(std::vector<std::int8_t> signs) const {
  return CspInstance(n_, r_, vars_, std::move(signs), degree_);
}

std::size_t CspInstance::repeated_variable_clauses() const {
  std::size_t count = 0;
  for (std::size_t a = 0; a < num_clauses(); ++a) {
    auto vs = clause_vars(a);
    bool repeated = false;
    for (int i = 0; i < r_ && !repeated; ++i) {
      for (int j = i + 1; j < r_; ++j) {
        if (vs[i] == vs[j]) {
          repeated = true;
          break;
        }
      }
    }
    count += repeated;
  }
  return count;
}

bool CspInstance::is_index_regular(int d) const {
  if (d <= 0 || d % r_ != 0) return false;
  const std::size_t per_index = static_cast<std::size_t>(d / r_);
  std::vector<std::uint32_t> count(static_cast<std::size_t>(n_) * r_, 0);
  for (std::size_t s = 0; s < vars_.size(); ++s) ++count[static_cast<std::size_t>(vars_[s]) * r_ + s % r_];
  return std::all_of(count.begin(), count.end(), [&](auto c) { return c == per_index; });
}

void CspInstance::check_index_regular(int d) const {
  if (!is_index_regular(d)) {
    throw std::invalid_argument("instance is not " + std::to_string(d) + "-index-regular");
  }
}

CspInstance sample_csp(std::uint32_t n, double alpha, int r, std::uint64_t seed) {
  if (r < 1) throw std::invalid_argument("arity must be positive");
  if (n == 0) throw std::invalid_argument("need at least one variable");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("clause density must be positive");
  const double m_real = std::round(alpha * n);
  if (m_real * r > static_cast<double>(std::numeric_limits<SlotId>::max())) {
    throw std::overflow_error("clause count overflows");
  }
  const auto m = static_cast<std::size_t>(m_real);
  rng::SplitMix gen(seed);
  std::vector<std::uint32_t> vars(m * r);
  std::vector<std::int8_t> signs(m * r);
  for (std::size_t a = 0; a < m; ++a) {
    for (int c = 0; c < r; ++c) vars[a * r + c] = static_cast<std::uint32_t>(gen.below(n));
    for (int c = 0; c < r; ++c) signs[a * r + c] = static_cast<std::int8_t>(gen.sign());
  }
  return CspInstance(n, r, std::move(vars), std::move(signs));
}

int regularized_alpha(double d, int r) {
  if (!(d > 1.0)) throw std::invalid_argument("average degree must exceed 1");
  return static_cast<int>(std::ceil((d + std::sqrt(d) * std::log(d)) / r));
}

std::pair<CspInstance, RegularizationStats> index_regularize(const CspInstance& inst, int radius,
                                                             std::uint64_t seed, std::optional<int> alpha_prime) {
  const std::uint32_t n = inst.num_variables();
  const int r = inst.arity();
  const std::size_t m = inst.num_clauses();
  RegularizationStats stats;
  stats.alpha_prime = alpha_prime ? *alpha_prime : regularized_alpha(static_cast<double>(r) * m / n, r);
  if (stats.alpha_prime < 1) throw std::invalid_argument("target degree per coordinate must be positive");
  stats.degree = r * stats.alpha_prime;
  const auto cap = static_cast<std::uint32_t>(stats.alpha_prime);
  if (radius >= 0) stats.treelike_fraction_before = treelike_fraction(inst, radius);

  // Clause lists per (variable, coordinate), ascending clause id.
  const std::size_t keys = static_cast<std::size_t>(n) * r;
  auto vars = inst.vars();
  std::vector<std::uint32_t> deg(keys, 0);
  for (std::size_t s = 0; s < vars.size(); ++s) ++deg[static_cast<std::size_t>(vars[s]) * r + s % r];
  std::vector<std::size_t> offsets(keys + 1, 0);
  for (std::size_t k = 0; k < keys; ++k) offsets[k + 1] = offsets[k] + deg[k];
  std::vector<std::uint32_t> clauses_at(vars.size());
  {
    std::vector<std::size_t> fill(offsets.begin(), offsets.end() - 1);
    for (std::size_t s = 0; s < vars.size(); ++s) {
      clauses_at[fill[static_cast<std::size_t>(vars[s]) * r + s % r]++] = static_cast<std::uint32_t>(s / r);
    }
  }

  std::vector<char> removed(m, 0);
  for (std::size_t key = 0; key < keys; ++key) {
    std::size_t pos = offsets[key + 1];
    while (deg[key] > cap) {
      const std::uint32_t a = clauses_at[--pos];
      if (removed[a]) continue;
      removed[a] = 1;
      ++stats.removed_clauses;
      for (int c = 0; c < r; ++c) --deg[static_cast<std::size_t>(vars[a * r + c]) * r + c];
    }
  }

  const std::size_t kept = m - stats.removed_clauses;
  const std::size_t target = static_cast<std::size_t>(cap) * n;
  check_clause_count(target, r);
  stats.added_clauses = target - kept;

  rng::SplitMix gen(seed);
  std::vector<std::vector<std::uint32_t>> residual(r);
  for (int c = 0; c < r; ++c) {
    residual[c].reserve(stats.added_clauses);
    for (std::uint32_t v = 0; v < n; ++v) {
      for (auto k = deg[static_cast<std::size_t>(v) * r + c]; k < cap; ++k) residual[c].push_back(v);
    }
    shuffle(residual[c], gen);
  }

  std::vector<std::uint32_t> out_vars;
  std::vector<std::int8_t> out_signs;
  out_vars.reserve(target * r);
  out_signs.reserve(target * r);
  auto signs = inst.signs();
  for (std::size_t a = 0; a < m; ++a) {
    if (removed[a]) continue;
    out_vars.insert(out_vars.end(), vars.begin() + a * r, vars.begin() + (a + 1) * r);
    out_signs.insert(out_signs.end(), signs.begin() + a * r, signs.begin() + (a + 1) * r);
  }
  for (std::size_t j = 0; j < stats.added_clauses; ++j) {
    for (int c = 0; c < r; ++c) out_vars.push_back(residual[c][j]);
    for (int c = 0; c < r; ++c) out_signs.push_back(static_cast<std::int8_t>(gen.sign()));
  }
  CspInstance out(n, r, std::move(out_vars), std::move(out_signs), stats.degree);
  if (radius >= 0) stats.treelike_fraction_after = treelike_fraction(out, radius);
  return {std::move(out), stats};
}

CspInstance sample_index_regular(std::uint32_t n, int d, int r, std::uint64_t seed) {
  if (r < 1 || d < 1) throw std::invalid_argument("degree and arity must be positive");
  if (d % r != 0) throw std::invalid_argument("degree " + std::to_string(d) + " not divisible by arity " + std::to_string(r));
  if (n == 0) throw std::invalid_argument("need at least one variable");
  const std::size_t m = static_cast<std::size_t>(n) * (d / r);
  check_clause_count(m, r);
  rng::SplitMix gen(seed);
  std::vector<std::uint32_t> vars(m * r);
  std::vector<std::uint32_t> column(m);
  for (int c = 0; c < r; ++c) {
    for (std::size_t j = 0; j < m; ++j) column[j] = static_cast<std::uint32_t>(j / (d / r));
    shuffle(column, gen);
    for (std::size_t a = 0; a < m; ++a) vars[a * r + c] = column[a];
  }
  std::vector<std::int8_t> signs(m * r);
  for (auto& s : signs) s = static_cast<std::int8_t>(gen.sign());
  return CspInstance(n, r, std::move(vars), std::move(signs), d);
}

double treelike_fraction(const CspInstance& inst, int radius) {
  if (radius < 0) throw std::invalid_argument("radius must be >= 0");
  const std::uint32_t n = inst.num_variables();
  const int r = inst.arity();
  auto vars = inst.vars();
  constexpr SlotId kNoSlot = std::numeric_limits<SlotId>::max();

  std::vector<std::uint32_t> var_stamp(n, 0);
  std::vector<std::uint32_t> clause_stamp(inst.num_clauses(), 0);
  struct Entry {
    std::uint32_t var;
    int dist;
    SlotId via;
  };
  std::vector<Entry> queue;
  std::size_t treelike = 0;

  for (std::uint32_t root = 0; root < n; ++root) {
    const std::uint32_t stamp = root + 1;
    queue.clear();
    queue.push_back({root, 0, kNoSlot});
    var_stamp[root] = stamp;
    bool tree = true;
    for (std::size_t head = 0; head < queue.size() && tree; ++head) {
      const Entry e = queue[head];
      if (e.dist >= radius + 1) continue;
      for (SlotId s : inst.slots_of(e.var)) {
        if (s == e.via) continue;
        const std::size_t a = s / r;
        if (clause_stamp[a] == stamp) {
          tree = false;
          break;
        }
        clause_stamp[a] = stamp;
        for (int c = 0; c < r; ++c) {
          const SlotId t = static_cast<SlotId>(a * r + c);
          if (t == s) continue;
          const std::uint32_t w = vars[t];
          if (var_stamp[w] == stamp) {
            tree = false;
            break;
          }
          var_stamp[w] = stamp;
          queue.push_back({w, e.dist + 1, t});
        }
        if (!tree) break;
      }
    }
    treelike += tree;
  }
  return static_cast<double>(treelike) / n;
}

double evaluate(const CspInstance& inst, const Predicate& p, std::span<const int> assignment) {
  if (assignment.size() != inst.num_variables()) throw std::invalid_argument("assignment length must equal n");
  for (int x : assignment) {
    if (x != 1 && x != -1) throw std::invalid_argument("assignment entries must be +1 or -1");
  }
  if (p.arity() != inst.arity()) throw std::invalid_argument("predicate arity does not match instance");
  const int r = inst.arity();
  const std::size_t m = inst.num_clauses();
  if (m == 0) return 0.0;
  std::vector<int> x(r);
  std::size_t satisfied = 0;
  for (std::size_t a = 0; a < m; ++a) {
    auto vs = inst.clause_vars(a);
    auto es = inst.clause_signs(a);
    for (int c = 0; c < r; ++c) x[c] = es[c] * assignment[vs[c]];
    satisfied += p.value(x);
  }
  return static_cast<double>(satisfied) / static_cast<double>(m);
}

double evaluate_multilinear(const CspInstance& inst, const Predicate& p, std::span<const double> spins) {
  if (spins.size() != inst.num_variables()) throw std::invalid_argument("spin vector length must equal n");
  const int r = inst.arity();
  const std::size_t m = inst.num_clauses();
  if (m == 0) return 0.0;
  std::vector<double> y(r);
  double total = 0.0;
  for (std::size_t a = 0; a < m; ++a) {
    auto vs = inst.clause_vars(a);
    auto es = inst.clause_signs(a);
    for (int c = 0; c < r; ++c) y[c] = es[c] * spins[vs[c]];
    total += p.evaluate(y);
  }
  return total / static_cast<double>(m);
}

void write_instance(std::ostream& out, const CspInstance& inst) {
  const int r = inst.arity();
  out << inst.num_variables() << ' ' << inst.num_clauses() << ' ' << r << ' ' << inst.degree().value_or(0) << '\n';
  std::string line;
  for (std::size_t a = 0; a < inst.num_clauses(); ++a) {
    line.clear();
    for (auto v : inst.clause_vars(a)) {
      line += std::to_string(v);
      line += ' ';
    }
    auto es = inst.clause_signs(a);
    for (int c = 0; c < r; ++c) {
      line += es[c] > 0 ? '+' : '-';
      line += c + 1 < r ? ' ' : '\n';
    }
    out << line;
  }
}

CspInstance read_instance(std::istream& in) {
  std::uint64_t n = 0, m = 0;
  int r = 0, d = 0;
  if (!(in >> n >> m >> r >> d)) throw std::invalid_argument("instance file: bad header");
  if (n == 0 || n > std::numeric_limits<std::uint32_t>::max() || r < 1 || d < 0) {
    throw std::invalid_argument("instance file: header out of range");
  }
  check_clause_count(m, r);
  std::vector<std::uint32_t> vars(m * r);
  std::vector<std::int8_t> signs(m * r);
  std::string token;
  for (std::size_t a = 0; a < m; ++a) {
    for (int c = 0; c < r; ++c) {
      std::uint64_t v = 0;
      if (!(in >> v) || v >= n) throw std::invalid_argument("instance file: bad variable id in clause " + std::to_string(a));
      vars[a * r + c] = static_cast<std::uint32_t>(v);
    }
    for (int c = 0; c < r; ++c) {
      if (!(in >> token) || (token != "+" && token != "-")) {
        throw std::invalid_argument("instance file: bad sign in clause " + std::to_string(a));
      }
      signs[a * r + c] = token == "+" ? 1 : -1;
    }
  }
  std::optional<int> degree;
  if (d > 0) degree = d;
  return CspInstance(static_cast<std::uint32_t>(n), r, std::move(vars), std::move(signs), degree);
}

}  // namespace cspamp
