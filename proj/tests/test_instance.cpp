#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cspamp/instance.h"

using namespace cspamp;

namespace {

std::string serialize(const CspInstance& inst) {
  std::ostringstream s;
  write_instance(s, inst);
  return s.str();
}

// Per-(variable, index) occurrence counts computed from the clause list alone.
std::vector<std::vector<int>> index_degrees(const CspInstance& inst) {
  std::vector<std::vector<int>> deg(inst.num_variables(), std::vector<int>(inst.arity(), 0));
  for (std::size_t a = 0; a < inst.num_clauses(); ++a) {
    const auto vars = inst.clause_vars(a);
    for (int c = 0; c < inst.arity(); ++c) ++deg[vars[c]][c];
  }
  return deg;
}

}  // namespace

TEST(SampleCsp, SingleVariable) {
  const auto inst = sample_csp(1, 1.0, 2, 5);
  ASSERT_EQ(inst.num_clauses(), 1u);
  EXPECT_EQ(inst.clause_vars(0)[0], 0u);
  EXPECT_EQ(inst.clause_vars(0)[1], 0u);
  EXPECT_EQ(inst.repeated_variable_clauses(), 1u);
}

TEST(SampleCsp, MeanDegreeAndDeterminism) {
  const auto inst = sample_csp(100000, 128.0, 2, 9);
  EXPECT_EQ(inst.num_clauses(), 12800000u);
  const double mean_degree = static_cast<double>(inst.num_slots()) / inst.num_variables();
  EXPECT_NEAR(mean_degree, 256.0, 0.1);
  const auto a = sample_csp(500, 3.0, 3, 42);
  const auto b = sample_csp(500, 3.0, 3, 42);
  const auto c = sample_csp(500, 3.0, 3, 43);
  EXPECT_EQ(serialize(a), serialize(b));
  EXPECT_NE(serialize(a), serialize(c));
}

TEST(SampleCsp, RejectsBadDensity) {
  EXPECT_THROW(sample_csp(10, 0.0, 2, 1), std::invalid_argument);
  EXPECT_THROW(sample_csp(10, -1.0, 2, 1), std::invalid_argument);
  EXPECT_THROW(sample_csp(4000000000u, 1e12, 2, 1), std::overflow_error);
}

TEST(Regularize, AlphaPrimeArithmetic) {
  EXPECT_EQ(regularized_alpha(256.0, 2), 173);
  EXPECT_EQ(static_cast<int>(std::ceil((256.0 + 16.0 * std::log(256.0)) / 2.0)), 173);
}

TEST(Regularize, FixedPoint) {
  const auto inst = sample_index_regular(300, 6, 3, 4);
  auto [out, st] = index_regularize(inst, -1, 8, 2);
  EXPECT_EQ(st.removed_clauses, 0u);
  EXPECT_EQ(st.added_clauses, 0u);
  EXPECT_EQ(serialize(out), serialize(inst));
}

TEST(Regularize, OutputIsIndexRegular) {
  for (int r : {2, 3, 4}) {
    const auto raw = sample_csp(2000, 6.0, r, 100 + r);
    auto [out, st] = index_regularize(raw, -1, 17);
    const int dp = st.degree;
    EXPECT_EQ(dp, r * st.alpha_prime);
    EXPECT_GE(st.alpha_prime, 6);
    EXPECT_LE(st.removed_clauses, raw.num_clauses());
    EXPECT_NO_THROW(out.check_index_regular(dp));
    for (const auto& row : index_degrees(out)) {
      for (int v : row) ASSERT_EQ(v, st.alpha_prime);
    }
    EXPECT_EQ(out.num_clauses(), raw.num_clauses() - st.removed_clauses + st.added_clauses);
  }
}

TEST(Regularize, FewRemovalsAtLargeDensity) {
  const auto raw = sample_csp(100000, 128.0, 2, 77);
  auto [out, st] = index_regularize(raw, -1, 78);
  EXPECT_EQ(st.alpha_prime, 173);
  EXPECT_LE(static_cast<double>(st.removed_clauses) / raw.num_clauses(), 0.01);
  EXPECT_TRUE(out.is_index_regular(346));
}

TEST(IndexRegular, SmallCase) {
  const auto inst = sample_index_regular(2, 2, 2, 1);
  EXPECT_EQ(inst.num_clauses(), 2u);
  for (const auto& row : index_degrees(inst)) {
    EXPECT_EQ(row[0], 1);
    EXPECT_EQ(row[1], 1);
  }
}

TEST(IndexRegular, Invariants) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int r = 2 + trial % 3;
    const int d = r * (1 + static_cast<int>(gen() % 5));
    const auto n = static_cast<std::uint32_t>(10 + gen() % 200);
    const auto inst = sample_index_regular(n, d, r, gen());
    EXPECT_TRUE(inst.is_index_regular(d));
    EXPECT_EQ(inst.degree(), d);
    // adjacency is the transpose of the clause list
    std::size_t total = 0;
    for (std::uint32_t v = 0; v < n; ++v) {
      EXPECT_EQ(inst.var_degree(v), static_cast<std::size_t>(d));
      for (SlotId s : inst.slots_of(v)) EXPECT_EQ(inst.vars()[s], v);
      total += inst.var_degree(v);
    }
    EXPECT_EQ(total, inst.num_slots());
  }
  EXPECT_THROW(sample_index_regular(10, 5, 2, 1), std::invalid_argument);
}

TEST(Treelike, Examples) {
  const CspInstance star(3, 3, {0, 1, 2}, {1, -1, 1});
  for (int L : {0, 1, 4}) EXPECT_DOUBLE_EQ(treelike_fraction(star, L), 1.0);
  const CspInstance triangle(3, 2, {0, 1, 1, 2, 0, 2}, {1, 1, 1, 1, 1, 1});
  EXPECT_DOUBLE_EQ(treelike_fraction(triangle, 1), 0.0);
  EXPECT_DOUBLE_EQ(treelike_fraction(triangle, 0), 1.0);
  EXPECT_THROW(treelike_fraction(star, -1), std::invalid_argument);
}

TEST(Treelike, MonotoneInRadius) {
  const auto inst = sample_index_regular(3000, 4, 2, 12);
  double prev = 1.0;
  for (int L = 0; L <= 4; ++L) {
    const double f = treelike_fraction(inst, L);
    EXPECT_LE(f, prev + 1e-15);
    prev = f;
  }
}

TEST(Treelike, LargeSparseInstance) {
  const auto inst = sample_index_regular(100000, 4, 2, 3);
  EXPECT_GE(treelike_fraction(inst, 2), 0.99);
  const auto wide = sample_index_regular(100000, 8, 4, 3);
  EXPECT_GE(treelike_fraction(wide, 0), 0.99);
}

TEST(Evaluate, Examples) {
  const auto mc = named_predicate("maxcut2");
  const CspInstance one(2, 2, {0, 1}, {1, 1});
  const std::vector<int> x = {1, -1};
  EXPECT_DOUBLE_EQ(evaluate(one, mc, x), 1.0);
  const auto always = fourier_transform(2, std::vector<std::uint8_t>{1, 1, 1, 1});
  const auto inst = sample_csp(1000, 5.0, 2, 2);
  std::vector<int> y(1000, 1);
  EXPECT_DOUBLE_EQ(evaluate(inst, always, y), 1.0);
  y[3] = 0;
  EXPECT_THROW(evaluate(inst, mc, y), std::invalid_argument);
}

TEST(Evaluate, RandomAssignment) {
  const auto inst = sample_csp(10000, 64.0, 2, 8);
  std::mt19937_64 gen(1);
  std::vector<int> x(10000);
  for (auto& v : x) v = gen() & 1 ? 1 : -1;
  EXPECT_NEAR(evaluate(inst, named_predicate("maxcut2"), x), 0.5, 0.02);
}

TEST(Evaluate, GaugeInvariance) {
  const auto p = named_predicate("nae3");
  const auto inst = sample_index_regular(500, 6, 3, 21);
  std::mt19937_64 gen(2);
  std::vector<int> x(500);
  for (auto& v : x) v = gen() & 1 ? 1 : -1;
  const double before = evaluate(inst, p, x);
  std::vector<std::int8_t> signs(inst.signs().begin(), inst.signs().end());
  for (std::uint32_t v = 0; v < 500; v += 3) {
    x[v] = -x[v];
    for (SlotId s : inst.slots_of(v)) signs[s] = static_cast<std::int8_t>(-signs[s]);
  }
  EXPECT_DOUBLE_EQ(evaluate(inst.with_signs(signs), p, x), before);
}

TEST(Evaluate, MultilinearAgreesOnCube) {
  const auto p = named_predicate("xor4even");
  const auto inst = sample_index_regular(64, 8, 4, 6);
  std::mt19937_64 gen(4);
  std::vector<int> x(64);
  for (auto& v : x) v = gen() & 1 ? 1 : -1;
  std::vector<double> xd(x.begin(), x.end());
  EXPECT_NEAR(evaluate_multilinear(inst, p, xd), evaluate(inst, p, x), 1e-14);
}

TEST(InstanceFile, RoundTrip) {
  for (const auto& inst : {sample_csp(50, 2.5, 3, 1), sample_index_regular(40, 8, 4, 2)}) {
    std::stringstream s;
    write_instance(s, inst);
    const auto back = read_instance(s);
    EXPECT_TRUE(back == inst);
  }
  std::stringstream bad("3 1 2 0\n0 7 + -\n");
  EXPECT_THROW(read_instance(bad), std::invalid_argument);
}
