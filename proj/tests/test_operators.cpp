#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "hamopt/operators.hpp"
#include "oracles.hpp"

using namespace hamopt;

namespace {

OperatorSum heisenberg_bond(std::size_t i, std::size_t j, int d, double coeff = 1.0) {
  OperatorSum op("ss_" + std::to_string(i) + "_" + std::to_string(j));
  op.add({{i, spin_x(d)}, {j, spin_x(d)}}, Complex(coeff, 0.0));
  op.add({{i, spin_y(d)}, {j, spin_y(d)}}, Complex(coeff, 0.0));
  op.add({{i, spin_z(d)}, {j, spin_z(d)}}, Complex(coeff, 0.0));
  return op;
}

}  // namespace

TEST_CASE("single-site spin matrices") {
  // spin-1/2: commutator [sx, sy] = i sz, ladder action s+|down> = |up>
  auto sx = spin_x(2), sy = spin_y(2), sz = spin_z(2), sp = spin_plus(2);
  CHECK((sx * sy - sy * sx - Complex(0, 1) * sz).norm() < 1e-14);
  CHECK(std::abs(sp(0, 1) - Complex(1.0, 0.0)) < 1e-14);
  CHECK(std::abs(sz(0, 0) - Complex(0.5, 0.0)) < 1e-14);

  // spin-1 ladder elements are sqrt(2)
  auto sp1 = spin_plus(3);
  CHECK(std::abs(sp1(0, 1) - Complex(std::sqrt(2.0), 0.0)) < 1e-14);
  CHECK(std::abs(sp1(1, 2) - Complex(std::sqrt(2.0), 0.0)) < 1e-14);
  auto sx1 = spin_x(3), sy1 = spin_y(3), sz1 = spin_z(3);
  CHECK((sx1 * sy1 - sy1 * sx1 - Complex(0, 1) * sz1).norm() < 1e-13);
}

TEST_CASE("identity term assembles to identity") {
  auto basis = enumerate_basis(3, 2);
  OperatorSum id("id");
  id.add({}, Complex(1.0, 0.0));
  auto m = assemble_sparse(id, *basis);
  CHECK((m.dense() - Eigen::MatrixXcd::Identity(8, 8)).norm() < 1e-14);
}

TEST_CASE("pauli z on site 0 of a 2-site chain") {
  auto basis = enumerate_basis(2, 2);
  OperatorSum op("pauli_z0");
  op.add({{0, 2.0 * spin_z(2)}}, Complex(1.0, 0.0));
  auto m = assemble_sparse(op, *basis).dense();
  Eigen::VectorXcd diag = m.diagonal();
  CHECK(std::abs(diag[0] - Complex(1, 0)) < 1e-14);
  CHECK(std::abs(diag[1] - Complex(1, 0)) < 1e-14);
  CHECK(std::abs(diag[2] - Complex(-1, 0)) < 1e-14);
  CHECK(std::abs(diag[3] - Complex(-1, 0)) < 1e-14);
  CHECK((m - Eigen::MatrixXcd(diag.asDiagonal())).norm() < 1e-14);
}

TEST_CASE("heisenberg bond spectrum") {
  auto basis = enumerate_basis(2, 2);
  auto op = heisenberg_bond(0, 1, 2);
  auto assembled = assemble_sparse(op, *basis);

  // oracle: dense Kronecker construction, diagonalized independently
  auto dense = oracles::dense_sum(op, 2, 2);
  CHECK((assembled.dense() - dense).norm() < 1e-14);

  auto evals = oracles::sorted_eigenvalues(assembled.dense());
  CHECK(evals[0] == Catch::Approx(-0.75).margin(1e-12));
  CHECK(evals[1] == Catch::Approx(0.25).margin(1e-12));
  CHECK(evals[2] == Catch::Approx(0.25).margin(1e-12));
  CHECK(evals[3] == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("sparse assembly matches dense oracle on random sums") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> n_dist(2, 4);
  std::uniform_int_distribution<int> d_dist(2, 3);
  std::uniform_int_distribution<int> t_dist(1, 3);
  for (int rep = 0; rep < 50; ++rep) {
    int n = n_dist(rng), d = d_dist(rng), nt = t_dist(rng);
    OperatorSum op("rand");
    op.hermitian = false;
    for (int t = 0; t < nt; ++t) {
      std::uniform_int_distribution<std::size_t> site(0, std::size_t(n) - 1);
      std::size_t s1 = site(rng), s2 = site(rng);
      std::vector<OperatorTerm::Factor> fs{{s1, oracles::random_site_matrix(d, rng)}};
      if (s2 != s1) fs.push_back({s2, oracles::random_site_matrix(d, rng)});
      std::normal_distribution<double> g(0.0, 1.0);
      op.add(std::move(fs), Complex(g(rng), g(rng)));
    }
    auto basis = enumerate_basis(n, d);
    auto sparse = assemble_sparse(op, *basis).dense();
    auto dense = oracles::dense_sum(op, std::size_t(n), d);
    REQUIRE((sparse - dense).norm() < 1e-12 * std::max(1.0, dense.norm()));
  }
}

TEST_CASE("sector assembly equals restricted dense oracle") {
  auto sector = enumerate_basis(4, 2, 0.0);
  OperatorSum chain("heisenberg");
  for (std::size_t i = 0; i + 1 < 4; ++i) chain += heisenberg_bond(i, i + 1, 2);
  auto assembled = assemble_sparse(chain, *sector).dense();
  auto oracle = oracles::dense_on_basis(chain, *sector);
  CHECK((assembled - oracle).norm() < 1e-12);

  // spin-1 sector too
  auto sector1 = enumerate_basis(3, 3, 0.0);
  OperatorSum chain1("heisenberg_s1");
  for (std::size_t i = 0; i + 1 < 3; ++i) chain1 += heisenberg_bond(i, i + 1, 3);
  CHECK((assemble_sparse(chain1, *sector1).dense() -
         oracles::dense_on_basis(chain1, *sector1))
            .norm() < 1e-12);
}

TEST_CASE("sector-violating operator is rejected by name") {
  auto sector = enumerate_basis(4, 2, 0.0);
  OperatorSum op("x_field");
  op.add({{0, spin_x(2)}}, Complex(1.0, 0.0));
  CHECK_THROWS_WITH(assemble_sparse(op, *sector),
                    Catch::Matchers::ContainsSubstring("x_field") &&
                        Catch::Matchers::ContainsSubstring("magnetization sector"));
}

TEST_CASE("assembly validation") {
  auto basis = enumerate_basis(2, 2);
  OperatorSum far("far");
  far.add({{5, spin_z(2)}}, Complex(1.0, 0.0));
  CHECK_THROWS_AS(assemble_sparse(far, *basis), DimensionError);

  OperatorSum wrong_d("wrong_d");
  wrong_d.add({{0, spin_z(3)}}, Complex(1.0, 0.0));
  CHECK_THROWS_AS(assemble_sparse(wrong_d, *basis), DimensionError);

  // flagged hermitian but is not
  OperatorSum skew("skew");
  skew.add({{0, spin_plus(2)}}, Complex(1.0, 0.0));
  CHECK_THROWS_AS(assemble_sparse(skew, *basis), ValidationError);
  skew.hermitian = false;
  CHECK_NOTHROW(assemble_sparse(skew, *basis));

  CHECK_THROWS_AS(OperatorTerm({{0, spin_z(2)}, {0, spin_x(2)}}, Complex(1, 0)),
                  ValidationError);
}

TEST_CASE("sparse matrix basics") {
  auto m = SparseMatrix::from_triplets(
      2, 2, {{0, 0, Complex(1, 0)}, {0, 0, Complex(2, 0)}, {1, 0, Complex(0, 1)}});
  CHECK(m.nnz() == 2);  // duplicates summed
  CHECK(std::abs(m.coeff(0, 0) - Complex(3, 0)) < 1e-15);
  CHECK(std::abs(m.coeff(1, 0) - Complex(0, 1)) < 1e-15);
  CHECK(std::abs(m.coeff(1, 1)) == 0.0);

  CHECK_THROWS_AS(SparseMatrix::from_triplets(2, 2, {{2, 0, Complex(1, 0)}}),
                  DimensionError);

  Vector v(2);
  v << Complex(1, 0), Complex(1, 0);
  Vector w = m.apply(v);
  CHECK(std::abs(w[0] - Complex(3, 0)) < 1e-15);
  CHECK(std::abs(w[1] - Complex(0, 1)) < 1e-15);

  Vector bad(3);
  CHECK_THROWS_AS(m.apply(bad), DimensionError);

  auto herm = SparseMatrix::from_triplets(
      2, 2, {{0, 1, Complex(0, 1)}, {1, 0, Complex(0, -1)}});
  CHECK(herm.hermitian_defect() < 1e-15);
  auto nonherm = SparseMatrix::from_triplets(2, 2, {{0, 1, Complex(1, 0)}});
  CHECK(nonherm.hermitian_defect() == Catch::Approx(1.0));
}

TEST_CASE("matvec examples") {
  auto id = SparseMatrix::from_triplets(2, 2, {{0, 0, {1, 0}}, {1, 1, {1, 0}}});
  Vector v(2);
  v << Complex(0.3, 0.1), Complex(-2.0, 0.0);
  CHECK((matvec(id, v) - v).norm() < 1e-15);

  auto diag12 = SparseMatrix::from_triplets(2, 2, {{0, 0, {1, 0}}, {1, 1, {2, 0}}});
  Vector ones(2);
  ones << Complex(1, 0), Complex(1, 0);
  Vector w = matvec(diag12, ones);
  CHECK(std::abs(w[0] - Complex(1, 0)) < 1e-15);
  CHECK(std::abs(w[1] - Complex(2, 0)) < 1e-15);

  // random sparse vs dense product
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    auto dense = oracles::random_dense(64, rng);
    std::vector<Triplet> trips;
    for (Eigen::Index i = 0; i < 64; ++i)
      for (Eigen::Index j = 0; j < 64; ++j)
        if ((i * 7 + j * 13 + rep) % 5 == 0)
          trips.push_back({std::size_t(i), std::size_t(j), dense(i, j)});
        else
          dense(i, j) = Complex(0, 0);
    auto sparse = SparseMatrix::from_triplets(64, 64, std::move(trips));
    Vector x = oracles::random_state(64, rng);
    CHECK((sparse.apply(x) - dense * x).norm() < 1e-12);
  }
}

TEST_CASE("operator basis bookkeeping") {
  OperatorSum a("a"), b("b");
  a.add({{0, spin_z(2)}}, Complex(1, 0));
  b.add({{1, spin_z(2)}}, Complex(1, 0));
  OperatorBasis ops({a, b});
  CHECK(ops.size() == 2);
  CHECK(ops.index_of("b") == 1);
  CHECK_THROWS_AS(ops.index_of("c"), ValidationError);

  OperatorSum dup("a");
  CHECK_THROWS_AS(OperatorBasis({a, dup}), ValidationError);
  CHECK_THROWS_AS(OperatorBasis(std::vector<OperatorSum>{}), ValidationError);
}

TEST_CASE("linear parametrization is the identity") {
  auto pm = ParametrizationMap::linear(3, Box::cube(3, -2.0, 2.0));
  Eigen::VectorXd g(3);
  g << 0.5, -1.0, 2.0;
  CHECK((pm.evaluate(g) - g).norm() == 0.0);
  CHECK(pm.n_params() == 3);

  Eigen::VectorXd nan3 = Eigen::VectorXd::Constant(3, std::nan(""));
  CHECK_THROWS_AS(pm.evaluate(nan3), ValidationError);
  Eigen::VectorXd short2(2);
  short2 << 1.0, 1.0;
  CHECK_THROWS_AS(pm.evaluate(short2), DimensionError);
  CHECK_THROWS_AS(ParametrizationMap::linear(3, Box::cube(2, 0.0, 1.0)),
                  ValidationError);
}

TEST_CASE("polynomial parametrization") {
  // c_0(p) = p_0^2, c_1(p) = 1 + 2 p_0
  std::vector<std::vector<ParametrizationMap::Monomial>> table{
      {{1.0, {2}}},
      {{1.0, {0}}, {2.0, {1}}},
  };
  auto pm = ParametrizationMap::polynomial(1, 2, table, Box::cube(1, -4.0, 4.0));
  Eigen::VectorXd p(1);
  p << 2.0;
  auto c = pm.evaluate(p);
  CHECK(c[0] == Catch::Approx(4.0));
  CHECK(c[1] == Catch::Approx(5.0));
  CHECK(pm.n_params() == 1);
  CHECK(pm.n_coeffs() == 2);
}

TEST_CASE("hamiltonian_at: linear combinations and caching") {
  auto basis = enumerate_basis(2, 2);
  OperatorSum a("zz");
  a.add({{0, spin_z(2)}, {1, spin_z(2)}}, Complex(1, 0));
  OperatorSum b("ss");
  b = heisenberg_bond(0, 1, 2);
  b.name = "ss";
  HamiltonianAnsatz ansatz(OperatorBasis({a, b}),
                           ParametrizationMap::linear(2, Box::cube(2, -2, 2)));

  Eigen::VectorXd e1(2), zero(2), g1(2), g2(2);
  e1 << 1.0, 0.0;
  zero << 0.0, 0.0;
  g1 << 0.3, -1.2;
  g2 << 1.1, 0.7;

  CHECK((hamiltonian_at(ansatz, e1, basis).dense() -
         assemble_sparse(a, *basis).dense())
            .norm() < 1e-14);
  CHECK(hamiltonian_at(ansatz, zero, basis).dense().norm() == 0.0);

  auto h1 = hamiltonian_at(ansatz, g1, basis).dense();
  auto h2 = hamiltonian_at(ansatz, g2, basis).dense();
  auto h12 = hamiltonian_at(ansatz, g1 + g2, basis).dense();
  CHECK((h12 - h1 - h2).norm() < 1e-12);

  // cache: same object on repeat lookups
  const auto& first = ansatz.assembled(basis);
  const auto& second = ansatz.assembled(basis);
  CHECK(&first == &second);
  CHECK(first.pattern == second.pattern);

  // per-operator extraction from the shared pattern
  CHECK((first.single(1).dense() - assemble_sparse(b, *basis).dense()).norm() <
        1e-14);
}

TEST_CASE("hamiltonian_at with polynomial map") {
  auto basis = enumerate_basis(2, 2);
  OperatorSum a("zz");
  a.add({{0, spin_z(2)}, {1, spin_z(2)}}, Complex(1, 0));
  std::vector<std::vector<ParametrizationMap::Monomial>> table{{{1.0, {2}}}};
  HamiltonianAnsatz ansatz(
      OperatorBasis({a}),
      ParametrizationMap::polynomial(1, 1, table, Box::cube(1, -4, 4)));
  Eigen::VectorXd p(1);
  p << 2.0;
  CHECK((hamiltonian_at(ansatz, p, basis).dense() -
         4.0 * assemble_sparse(a, *basis).dense())
            .norm() < 1e-13);

  OperatorSum b("z0");
  b.add({{0, spin_z(2)}}, Complex(1, 0));
  CHECK_THROWS_AS(HamiltonianAnsatz(OperatorBasis({a, b}),
                                    ParametrizationMap::linear(1, Box::cube(1, 0, 1))),
                  ValidationError);
}

TEST_CASE("hermiticity of weighted sums at random gamma") {
  auto basis = enumerate_basis(3, 2);
  OperatorSum a("zz");
  a.add({{0, spin_z(2)}, {1, spin_z(2)}}, Complex(1, 0));
  OperatorSum b = heisenberg_bond(1, 2, 2);
  OperatorSum c("hop");
  c.add({{0, spin_plus(2)}, {2, spin_minus(2)}}, Complex(0.5, 0.0));
  c.add({{0, spin_minus(2)}, {2, spin_plus(2)}}, Complex(0.5, 0.0));
  HamiltonianAnsatz ansatz(OperatorBasis({a, b, c}),
                           ParametrizationMap::linear(3, Box::cube(3, -2, 2)));
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd g(3);
    g << u(rng), u(rng), u(rng);
    CHECK(hamiltonian_at(ansatz, g, basis).hermitian_defect() < 1e-12);
  }
}
