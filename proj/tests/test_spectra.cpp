#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "hamopt/operators.hpp"
#include "hamopt/spectra.hpp"
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

OperatorSum total_sz_squared(std::size_t n, int d) {
  OperatorSum op("sz_tot_sq");
  SiteMatrix sz = spin_z(d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j)
        op.add({{i, SiteMatrix(sz * sz)}}, Complex(1, 0));
      else
        op.add({{i, sz}, {j, sz}}, Complex(1, 0));
    }
  return op;
}

OperatorSum total_spin_casimir(std::size_t n, int d) {
  OperatorSum op("casimir");
  std::vector<SiteMatrix> comps{spin_x(d), spin_y(d), spin_z(d)};
  for (const auto& s : comps)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j)
          op.add({{i, SiteMatrix(s * s)}}, Complex(1, 0));
        else
          op.add({{i, s}, {j, s}}, Complex(1, 0));
      }
  return op;
}

SparseMatrix diag_matrix(const std::vector<double>& d) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < d.size(); ++i)
    t.push_back({i, i, Complex(d[i], 0.0)});
  return SparseMatrix::from_triplets(d.size(), d.size(), std::move(t));
}

std::shared_ptr<const SpinBasis> basis_for_dim(std::size_t dim) {
  int n = 0;
  std::size_t p = 1;
  while (p < dim) {
    p *= 2;
    ++n;
  }
  if (p == dim && n >= 1) return enumerate_basis(n, 2);
  // powers of 3
  n = 0;
  p = 1;
  while (p < dim) {
    p *= 3;
    ++n;
  }
  REQUIRE(p == dim);
  return enumerate_basis(n, 3);
}

/// Banded random real-symmetric matrix as triplets.
SparseMatrix random_banded(std::size_t dim, std::mt19937_64& rng, bool complex_entries) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < dim; ++i) {
    t.push_back({i, i, Complex(g(rng), 0.0)});
    for (std::size_t off = 1; off <= 3; ++off) {
      if (i + off >= dim) continue;
      Complex v = complex_entries ? Complex(g(rng), g(rng)) : Complex(g(rng), 0.0);
      t.push_back({i, i + off, v});
      t.push_back({i + off, i, std::conj(v)});
    }
  }
  return SparseMatrix::from_triplets(dim, dim, std::move(t));
}

}  // namespace

TEST_CASE("diag(0,1,2) lowest two") {
  auto basis = enumerate_basis(1, 3);
  auto h = diag_matrix({0.0, 1.0, 2.0});
  auto rpt = eigs_low(h, 2, basis);
  REQUIRE(rpt.eigenvalues.size() == 2);
  CHECK(rpt.eigenvalues[0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(rpt.eigenvalues[1] == Catch::Approx(1.0).margin(1e-12));
  CHECK(rpt.gap == Catch::Approx(1.0).margin(1e-12));
  CHECK(rpt.gap_resolved);
  CHECK(rpt.ground_degeneracy == 1);
}

TEST_CASE("two-site heisenberg spectrum and gap") {
  auto basis = enumerate_basis(2, 2);
  auto h = assemble_sparse(heisenberg_bond(0, 1, 2), *basis);
  auto rpt = eigs_low(h, 4, basis);
  REQUIRE(rpt.eigenvalues.size() == 4);
  CHECK(rpt.eigenvalues[0] == Catch::Approx(-0.75).margin(1e-12));
  CHECK(rpt.eigenvalues[1] == Catch::Approx(0.25).margin(1e-12));
  CHECK(rpt.eigenvalues[3] == Catch::Approx(0.25).margin(1e-12));
  CHECK(rpt.gap == Catch::Approx(1.0).margin(1e-12));
  CHECK(rpt.ground_degeneracy == 1);
}

TEST_CASE("k=1 still resolves the gap") {
  auto basis = enumerate_basis(1, 3);
  auto h = diag_matrix({0.0, 0.5, 2.0});
  auto rpt = eigs_low(h, 1, basis);
  CHECK(rpt.gap_resolved);
  CHECK(rpt.gap == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("ground multiplet fully resolved") {
  // ferromagnetic bond: triplet ground multiplet below a singlet
  auto basis = enumerate_basis(2, 2);
  auto h = assemble_sparse(heisenberg_bond(0, 1, 2, -1.0), *basis);
  auto rpt = eigs_low(h, 1, basis);
  CHECK(rpt.ground_degeneracy == 3);
  CHECK(rpt.e0 == Catch::Approx(-0.25).margin(1e-12));
  CHECK(rpt.gap == Catch::Approx(1.0).margin(1e-12));
  CHECK(rpt.ground_space().size() == 3);
}

TEST_CASE("fully degenerate spectrum leaves the gap unresolved") {
  auto basis = enumerate_basis(2, 2);
  auto h = diag_matrix({2.0, 2.0, 2.0, 2.0});
  auto rpt = eigs_low(h, 1, basis);
  CHECK(rpt.ground_degeneracy == 4);
  CHECK(!rpt.gap_resolved);
  CHECK(rpt.gap == 0.0);
}

TEST_CASE("returned pairs satisfy the residual contract") {
  auto basis = enumerate_basis(3, 2);
  OperatorSum chain("heisenberg");
  for (std::size_t i = 0; i + 1 < 3; ++i) chain += heisenberg_bond(i, i + 1, 2);
  auto h = assemble_sparse(chain, *basis);
  auto rpt = eigs_low(h, 3, basis);
  for (std::size_t i = 0; i < rpt.eigenvalues.size(); ++i) {
    double r = (h.apply(rpt.eigenvectors[i].amplitudes()) -
                rpt.eigenvalues[i] * rpt.eigenvectors[i].amplitudes())
                   .norm();
    CHECK(r < 1e-9 * std::max(1.0, std::abs(rpt.eigenvalues[i])));
  }
}

TEST_CASE("lanczos agrees with dense on both paths") {
  std::mt19937_64 rng(17);
  auto basis = enumerate_basis(10, 2);  // dim 1024
  auto h = random_banded(1024, rng, true);

  auto dense_rpt = eigs_low(h, 3, basis);
  EigsOptions lopt;
  lopt.dense_threshold = 0;
  auto lanczos_rpt = eigs_low(h, 3, basis, lopt);

  std::size_t n = std::min(dense_rpt.eigenvalues.size(), lanczos_rpt.eigenvalues.size());
  REQUIRE(n >= 3);
  for (std::size_t i = 0; i < n; ++i)
    CHECK(lanczos_rpt.eigenvalues[i] ==
          Catch::Approx(dense_rpt.eigenvalues[i]).margin(1e-8));
}

TEST_CASE("lanczos dense agreement battery") {
  std::mt19937_64 rng(23);
  std::vector<std::size_t> dims;
  for (int i = 0; i < 9; ++i) dims.push_back(512);
  for (int i = 0; i < 6; ++i) dims.push_back(729);
  for (int i = 0; i < 4; ++i) dims.push_back(1024);
  dims.push_back(2048);
  REQUIRE(dims.size() == 20);

  EigsOptions lopt;
  lopt.dense_threshold = 0;
  for (std::size_t dim : dims) {
    auto basis = basis_for_dim(dim);
    auto h = random_banded(dim, rng, false);
    auto dense_rpt = eigs_low(h, 2, basis);
    auto lanczos_rpt = eigs_low(h, 2, basis, lopt);
    std::size_t n =
        std::min(dense_rpt.eigenvalues.size(), lanczos_rpt.eigenvalues.size());
    REQUIRE(n >= 2);
    for (std::size_t i = 0; i < n; ++i)
      REQUIRE(lanczos_rpt.eigenvalues[i] ==
              Catch::Approx(dense_rpt.eigenvalues[i]).margin(1e-8));
  }
}

TEST_CASE("lanczos at dim 4096 with designed spectrum") {
  // bottom eigenvalues planted exactly; the rest crowd far above
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(20.0, 100.0);
  std::vector<double> d(4096);
  for (std::size_t i = 0; i < 10; ++i) d[i] = double(i);
  for (std::size_t i = 10; i < d.size(); ++i) d[i] = u(rng);
  // scatter so the diagonal is not already sorted
  std::shuffle(d.begin(), d.end(), rng);
  auto h = diag_matrix(d);
  auto basis = enumerate_basis(12, 2);
  auto rpt = eigs_low(h, 4, basis);
  REQUIRE(rpt.eigenvalues.size() >= 4);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(rpt.eigenvalues[i] == Catch::Approx(double(i)).margin(1e-8));
  CHECK(rpt.gap == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("lanczos resolves a planted degenerate multiplet") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(10.0, 50.0);
  std::vector<double> d(4096);
  d[0] = d[1] = d[2] = 0.0;  // triple ground multiplet
  d[3] = 3.0;
  for (std::size_t i = 4; i < d.size(); ++i) d[i] = u(rng);
  std::shuffle(d.begin(), d.end(), rng);
  auto h = diag_matrix(d);
  auto rpt = eigs_low(h, 1, enumerate_basis(12, 2));
  CHECK(rpt.ground_degeneracy == 3);
  CHECK(rpt.gap == Catch::Approx(3.0).margin(1e-8));
}

TEST_CASE("expectation examples") {
  auto basis = enumerate_basis(1, 3);
  auto id = diag_matrix({1.0, 1.0, 1.0});
  std::mt19937_64 rng(5);
  WaveFunction psi(basis, oracles::random_state(3, rng));
  CHECK(expectation(id, psi) == Catch::Approx(1.0).margin(1e-12));

  auto h = diag_matrix({0.0, 1.0, 2.0});
  Vector e1 = Vector::Zero(3);
  e1[1] = Complex(1, 0);
  CHECK(expectation(h, WaveFunction(basis, e1)) == Catch::Approx(1.0).margin(1e-12));

  Vector sup = Vector::Zero(3);
  sup[0] = Complex(1, 0);
  sup[2] = Complex(1, 0);
  WaveFunction mix(basis, sup);
  CHECK(expectation(h, mix) == Catch::Approx(1.0).margin(1e-12));
  CHECK(energy_variance(h, mix) == Catch::Approx(1.0).margin(1e-12));

  auto wrong = enumerate_basis(2, 2);
  WaveFunction q(wrong, oracles::random_state(4, rng));
  CHECK_THROWS_AS(expectation(h, q), DimensionError);
}

TEST_CASE("expectation rejects a non-real value") {
  auto basis = enumerate_basis(1, 2);
  auto skew = SparseMatrix::from_triplets(2, 2, {{0, 1, Complex(0, 1)},
                                                 {1, 0, Complex(0, 1)}});
  Vector v(2);
  v << Complex(1, 0), Complex(1, 0);
  CHECK_THROWS_AS(expectation(skew, WaveFunction(basis, v)), NumericalError);
}

TEST_CASE("energy variance on eigenstates and random states") {
  auto basis = enumerate_basis(3, 2);
  OperatorSum chain("heisenberg");
  for (std::size_t i = 0; i + 1 < 3; ++i) chain += heisenberg_bond(i, i + 1, 2);
  auto h = assemble_sparse(chain, *basis);
  auto rpt = eigs_low(h, 4, basis);
  for (const auto& v : rpt.eigenvectors)
    CHECK(energy_variance(h, v) < 1e-12);

  // eigendecomposition oracle on random states
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h.dense());
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    WaveFunction psi(basis, oracles::random_state(8, rng));
    Eigen::VectorXcd c = es.eigenvectors().adjoint() * psi.amplitudes();
    double m1 = 0.0, m2 = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      double w = std::norm(c[i]);
      m1 += w * es.eigenvalues()(i);
      m2 += w * es.eigenvalues()(i) * es.eigenvalues()(i);
    }
    CHECK(energy_variance(h, psi) == Catch::Approx(m2 - m1 * m1).margin(1e-10));
    CHECK(energy_variance(h, psi) >= 0.0);
  }
}

TEST_CASE("relative variance undefined at zero mean energy") {
  auto basis = enumerate_basis(1, 2);
  auto h = diag_matrix({1.0, -1.0});
  Vector v(2);
  v << Complex(1, 0), Complex(1, 0);
  WaveFunction psi(basis, v);
  CHECK(!relative_energy_variance(h, psi).has_value());

  Vector up = Vector::Zero(2);
  up[0] = Complex(1, 0);
  auto rel = relative_energy_variance(h, WaveFunction(basis, up));
  REQUIRE(rel.has_value());
  CHECK(*rel == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("symmetry expectation examples") {
  auto basis = enumerate_basis(2, 2);
  Vector singlet = Vector::Zero(4);
  singlet[1] = Complex(1, 0);
  singlet[2] = Complex(-1, 0);
  WaveFunction s(basis, singlet);

  auto sz2 = assemble_sparse(total_sz_squared(2, 2), *basis);
  CHECK(symmetry_expectation(sz2, s) == Catch::Approx(0.0).margin(1e-12));

  auto casimir = assemble_sparse(total_spin_casimir(2, 2), *basis);
  CHECK(symmetry_expectation(casimir, s) == Catch::Approx(0.0).margin(1e-12));

  auto basis3 = enumerate_basis(3, 2);
  Vector pol = Vector::Zero(8);
  pol[0] = Complex(1, 0);
  WaveFunction p(basis3, pol);
  auto sz2_3 = assemble_sparse(total_sz_squared(3, 2), *basis3);
  CHECK(symmetry_expectation(sz2_3, p) == Catch::Approx(2.25).margin(1e-12));
}

TEST_CASE("variational bound over random states") {
  auto basis = enumerate_basis(4, 2);
  OperatorSum chain("heisenberg");
  for (std::size_t i = 0; i + 1 < 4; ++i) chain += heisenberg_bond(i, i + 1, 2);
  auto h = assemble_sparse(chain, *basis);
  auto rpt = eigs_low(h, 1, basis);
  std::mt19937_64 rng(29);
  for (int rep = 0; rep < 100; ++rep) {
    WaveFunction psi(basis, oracles::random_state(16, rng));
    CHECK(expectation(h, psi) >= rpt.e0 - 1e-9);
  }
}
