#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <set>
#include <vector>

#include "hamopt/models.hpp"
#include "hamopt/spectra.hpp"
#include "oracles.hpp"

using namespace hamopt;

TEST_CASE("pauli string family: composition at default options") {
  auto ops = model_pauli_strings_k_local(8, Boundary::open);
  CHECK(ops.size() == 22);

  std::set<std::string> labels(ops.labels.begin(), ops.labels.end());
  CHECK(labels.size() == ops.size());
  CHECK(labels.count("zz_1") == 1);
  CHECK(labels.count("hop_1") == 1);
  CHECK(labels.count("zz_4") == 1);
  CHECK(labels.count("hop_4") == 1);
  CHECK(labels.count("zzz") == 1);
  CHECK(labels.count("+-z") == 1);
  CHECK(labels.count("++--") == 1);
  CHECK(labels.count("z") == 0);  // field off by default

  PauliStringFamilyOptions with_field;
  with_field.include_z_field = true;
  auto ops_f = model_pauli_strings_k_local(8, Boundary::open, with_field);
  CHECK(ops_f.size() == 23);
}

TEST_CASE("pauli string family: hermitian and sector-preserving") {
  auto basis = enumerate_basis(6, 2, 0.0);
  auto ops = model_pauli_strings_k_local(6, Boundary::open);
  for (const auto& op : ops.operators)
    CHECK_NOTHROW(assemble_sparse(op, *basis));  // hermiticity verified inside
}

TEST_CASE("pauli string family: linearly independent operators") {
  auto basis = enumerate_basis(5, 2);
  auto ops = model_pauli_strings_k_local(5, Boundary::open);
  Eigen::MatrixXcd vec(Eigen::Index(ops.size()), 32 * 32);
  for (std::size_t m = 0; m < ops.size(); ++m) {
    auto dense = assemble_sparse(ops.operators[m], *basis).dense();
    vec.row(Eigen::Index(m)) =
        Eigen::Map<Eigen::VectorXcd>(dense.data(), dense.size()).transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(vec);
  CHECK(svd.singularValues()(Eigen::Index(ops.size() - 1)) > 1e-10);
}

TEST_CASE("pauli string family rejects coinciding periodic ranges") {
  PauliStringFamilyOptions o;
  o.max_range = 4;
  CHECK_THROWS_AS(model_pauli_strings_k_local(6, Boundary::periodic, o), ConfigError);
  CHECK_NOTHROW(model_pauli_strings_k_local(8, Boundary::periodic, o));
}

TEST_CASE("bilinear-biquadratic model matches dense oracle") {
  auto basis = enumerate_basis(3, 3);
  auto ops = model_heisenberg_bilinear_biquadratic(3, Boundary::periodic);
  REQUIRE(ops.size() == 2);
  CHECK(ops.labels[0] == "bilinear");
  CHECK(ops.labels[1] == "biquadratic");
  for (const auto& op : ops.operators) {
    auto sparse = assemble_sparse(op, *basis).dense();
    auto dense = oracles::dense_sum(op, 3, 3);
    CHECK((sparse - dense).norm() < 1e-12);
  }
  auto restricted = model_heisenberg_bilinear_biquadratic(3, Boundary::periodic, false);
  CHECK(restricted.size() == 1);
}

TEST_CASE("j1_j2 and transverse_field_ising assemble against the oracle") {
  auto basis = enumerate_basis(4, 2);
  for (const auto& ops :
       {model_j1_j2(4, Boundary::periodic), model_transverse_field_ising(4, Boundary::open)})
    for (const auto& op : ops.operators)
      CHECK((assemble_sparse(op, *basis).dense() - oracles::dense_sum(op, 4, 2)).norm() <
            1e-12);

  // pauli convention: zz on 2 sites is diag(1,-1,-1,1)
  auto b2 = enumerate_basis(2, 2);
  auto tfi = model_transverse_field_ising(2, Boundary::open);
  auto zz = assemble_sparse(tfi.operators[0], *b2).dense();
  CHECK(std::abs(zz(0, 0) - Complex(1, 0)) < 1e-14);
  CHECK(std::abs(zz(1, 1) - Complex(-1, 0)) < 1e-14);
  CHECK(std::abs(zz(3, 3) - Complex(1, 0)) < 1e-14);
}

TEST_CASE("total spin casimir spectrum on two spin-1 sites") {
  auto basis = enumerate_basis(2, 3);
  auto casimir = assemble_sparse(symmetry_total_spin_casimir(2, 3), *basis);
  auto evals = oracles::sorted_eigenvalues(casimir.dense());
  // S in {0,1,2} -> S(S+1) in {0,2,6} with multiplicities {1,3,5}
  CHECK(evals(0) == Catch::Approx(0.0).margin(1e-10));
  for (int i = 1; i <= 3; ++i) CHECK(evals(i) == Catch::Approx(2.0).margin(1e-10));
  for (int i = 4; i <= 8; ++i) CHECK(evals(i) == Catch::Approx(6.0).margin(1e-10));

  CHECK_THROWS_AS(named_symmetry_operator("nope", 2, 3), ConfigError);
  CHECK_NOTHROW(named_symmetry_operator("total_sz_squared", 2, 3));
}

TEST_CASE("ghz state") {
  auto basis = enumerate_basis(2, 2);
  auto ghz = make_ghz(basis);
  CHECK(std::abs(ghz.amplitudes()[0] - Complex(1 / std::sqrt(2.0), 0)) < 1e-12);
  CHECK(std::abs(ghz.amplitudes()[3] - Complex(1 / std::sqrt(2.0), 0)) < 1e-12);
  CHECK(std::abs(ghz.amplitudes()[1]) < 1e-15);

  CHECK_THROWS_AS(make_ghz(enumerate_basis(4, 2, 0.0)), ConfigError);
  CHECK_THROWS_AS(make_ghz(enumerate_basis(2, 3)), ConfigError);
}

TEST_CASE("majumdar-ghosh dimer is the exact ground state at j2/j1 = 1/2") {
  for (bool use_sector : {false, true}) {
    auto basis = use_sector ? enumerate_basis(6, 2, 0.0) : enumerate_basis(6, 2);
    auto dimer = make_majumdar_ghosh_dimer(basis);

    auto ops = model_j1_j2(6, Boundary::periodic);
    auto assembled = AssembledOperators::build(ops, *basis);
    Eigen::VectorXd gamma(2);
    gamma << 1.0, 0.5;
    auto h = assembled.combine(gamma);

    CHECK(energy_variance(h, dimer) < 1e-12);
    CHECK(expectation(h, dimer) == Catch::Approx(-2.25).margin(1e-10));

    auto rpt = eigs_low(h, 2, basis);
    CHECK(rpt.ground_degeneracy == 2);  // two dimer coverings
    auto ground = rpt.ground_space();
    CHECK(subspace_overlap(dimer, ground) == Catch::Approx(1.0).margin(1e-9));
    CHECK(expectation(h, dimer) == Catch::Approx(rpt.e0).margin(1e-9));
  }

  CHECK_THROWS_AS(make_majumdar_ghosh_dimer(enumerate_basis(5, 2)), ConfigError);
}

TEST_CASE("aklt state is the unique ground state of its parent chain") {
  for (bool use_sector : {false, true}) {
    auto basis = use_sector ? enumerate_basis(6, 3, 0.0) : enumerate_basis(6, 3);
    auto aklt = make_aklt_periodic(basis);

    auto ops = model_heisenberg_bilinear_biquadratic(6, Boundary::periodic);
    auto assembled = AssembledOperators::build(ops, *basis);
    Eigen::VectorXd gamma(2);
    gamma << 1.0, 1.0 / 3.0;
    auto h = assembled.combine(gamma);

    CHECK(energy_variance(h, aklt) < 1e-12);
    // bond operator is 2 P_{S=2} - 2/3: ground energy -2N/3
    CHECK(expectation(h, aklt) == Catch::Approx(-4.0).margin(1e-10));

    auto rpt = eigs_low(h, 1, basis);
    CHECK(rpt.ground_degeneracy == 1);
    CHECK(overlap(aklt, rpt.eigenvectors[0]) == Catch::Approx(1.0).margin(1e-9));

    Vector residual = h.apply(aklt.amplitudes()) + 4.0 * aklt.amplitudes();
    CHECK(residual.norm() < 1e-10);
  }

  CHECK_THROWS_AS(make_aklt_periodic(enumerate_basis(4, 2)), ConfigError);
}

TEST_CASE("reference state dispatch") {
  auto b = enumerate_basis(4, 2);
  CHECK_NOTHROW(make_reference_state("ghz", b));
  CHECK_NOTHROW(make_reference_state("majumdar_ghosh_dimer", b));
  CHECK_THROWS_AS(make_reference_state("unknown", b), ConfigError);
  CHECK_NOTHROW(make_reference_state("aklt_periodic", enumerate_basis(4, 3)));
}
